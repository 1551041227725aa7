#include "vabc/adam.hpp"

#include <cmath>

namespace vabc {

AdamState AdamState::init(const std::vector<Tensor*>& params, float lr) {
    AdamState s;
    s.lr = lr;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.push_back(Tensor::zeros(p->shape));
        s.v.push_back(Tensor::zeros(p->shape));
    }
    return s;
}

void AdamState::update(const std::vector<Tensor*>& params,
                       const std::vector<const Tensor*>& grads) {
    if (params.size() != m.size() || grads.size() != params.size()) {
        throw ShapeError("adam: parameter/gradient/state count mismatch");
    }
    ++step;
    float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step));
    float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        require_same_shape(p, g, "adam");
        require_same_shape(p, m[k], "adam");
        for (std::size_t i = 0; i < p.size(); ++i) {
            float gi = g.data[i];
            m[k].data[i] = beta1 * m[k].data[i] + (1.0f - beta1) * gi;
            v[k].data[i] = beta2 * v[k].data[i] + (1.0f - beta2) * gi * gi;
            float mhat = m[k].data[i] / bc1;
            float vhat = v[k].data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        require_finite(p, "adam");
    }
}

}  // namespace vabc
