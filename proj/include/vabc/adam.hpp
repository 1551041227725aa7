#pragma once

#include <cstdint>
#include <vector>

#include "vabc/tensor.hpp"

namespace vabc {

// Bias-corrected Adam over a fixed set of parameter tensors.
// Defaults follow the usual values: lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8.
struct AdamState {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    std::int64_t step = 0;
    std::vector<Tensor> m;  // first moments, one per parameter
    std::vector<Tensor> v;  // second moments

    static AdamState init(const std::vector<Tensor*>& params, float lr = 1e-3f);

    // In-place update; grads[i] pairs with params[i].
    void update(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);
};

}  // namespace vabc
