#include "vabc/tensor.hpp"

#include <cmath>
#include <sstream>

namespace vabc {

static std::size_t shape_product(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_product(shape) != data.size()) {
        throw ShapeError("Tensor: shape " + shape_str() + " does not match data length " +
                         std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
    std::size_t n = shape_product(s);
    return Tensor(std::move(s), std::vector<float>(n, 0.0f));
}

Tensor Tensor::full(std::vector<std::size_t> s, float v) {
    std::size_t n = shape_product(s);
    return Tensor(std::move(s), std::vector<float>(n, v));
}

Tensor Tensor::scalar(float v) { return Tensor({1}, {v}); }

Tensor Tensor::row(std::vector<float> d) {
    std::size_t n = d.size();
    return Tensor({n}, std::move(d));
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<float> d) {
    return Tensor({r, c}, std::move(d));
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void require_finite(const Tensor& t, const std::string& op) {
    if (!t.all_finite()) {
        throw NumericError("non-finite value produced by op '" + op + "'");
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& op) {
    if (!a.same_shape(b)) {
        throw ShapeError(op + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace vabc
