#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vabc/errors.hpp"

namespace vabc {

// Dense row-major float32 array. Most of the code uses rank 1 or 2.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<float> d);

    static Tensor zeros(std::vector<std::size_t> s);
    static Tensor full(std::vector<std::size_t> s, float v);
    static Tensor scalar(float v);
    static Tensor row(std::vector<float> d);                       // shape [n]
    static Tensor matrix(std::size_t r, std::size_t c, std::vector<float> d);

    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }

    // 2-D accessors; rank-1 tensors behave as a single row.
    std::size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
    std::size_t cols() const {
        if (shape.empty()) return 1;
        return shape.size() >= 2 ? shape[1] : shape[0];
    }
    float& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    std::string shape_str() const;
};

// Throws NumericError naming `op` if t contains NaN/Inf.
void require_finite(const Tensor& t, const std::string& op);

// Throws ShapeError naming both shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& op);

}  // namespace vabc
