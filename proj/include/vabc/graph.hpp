#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "vabc/tensor.hpp"

namespace vabc::ad {

// Define-by-run reverse-mode graph. Values are computed eagerly when a
// node is built; backward() walks the recorded graph once in reverse
// topological order. Graphs are rebuilt per mini-batch.

enum class OpKind {
    Leaf,
    MatMul,
    Add,
    Sub,
    AddRowVec,   // (m,n) + (n) bias broadcast over rows
    Mul,         // Hadamard
    Scale,       // multiply by compile-time constant
    AddConst,
    Relu,
    Sigmoid,
    Exp,
    Log,
    Square,
    Sum,         // full reduce -> scalar
    Mean,        // full reduce -> scalar
    RowSum,      // (m,n) -> (m,1)
    Log1mExp,    // elementwise log(1 - e^{-a}), a > 0
    ClampMin,
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<Var> inputs;
    Tensor value;
    Tensor grad;            // filled by backward()
    bool requires_grad = false;
    float c = 0.0f;         // constant for Scale/AddConst/ClampMin
    std::string name;       // leaves only, for error messages
};

// Leaves. Differentiable leaves receive gradients in backward().
Var leaf(Tensor t, bool requires_grad = false, std::string name = "");
Var constant(Tensor t, std::string name = "");

// Primitives. Each checks shapes up front and finiteness of its result.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_rowvec(const Var& a, const Var& bias);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float c);
Var add_const(const Var& a, float c);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);
Var log1mexp(const Var& a);
Var clamp_min(const Var& a, float floor);

// Scalar value of a node (ContractError if not scalar).
float scalar_value(const Var& v);

// Accumulates d(root)/d(leaf) into every differentiable node's grad.
// Root must be scalar. Returns the differentiable leaves encountered.
std::vector<Var> backward(const Var& root);

}  // namespace vabc::ad
