#include "vabc/graph.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <unordered_set>

namespace vabc::ad {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

static MapC as_mat(const Tensor& t) {
    return MapC(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}
static MapM as_mat(Tensor& t) {
    return MapM(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

static Var make(OpKind k, std::vector<Var> in, Tensor val, float c = 0.0f) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->inputs = std::move(in);
    n->value = std::move(val);
    n->c = c;
    for (const auto& i : n->inputs) n->requires_grad = n->requires_grad || i->requires_grad;
    return n;
}

Var leaf(Tensor t, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->kind = OpKind::Leaf;
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return n;
}

Var constant(Tensor t, std::string name) { return leaf(std::move(t), false, std::move(name)); }

Var matmul(const Var& a, const Var& b) {
    const Tensor& A = a->value;
    const Tensor& B = b->value;
    if (A.cols() != B.rows()) {
        throw ShapeError("matmul: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    }
    Tensor out = Tensor::zeros({A.rows(), B.cols()});
    as_mat(out).noalias() = as_mat(A) * as_mat(B);
    require_finite(out, "matmul");
    return make(OpKind::MatMul, {a, b}, std::move(out));
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
    require_finite(out, "add");
    return make(OpKind::Add, {a, b}, std::move(out));
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
    require_finite(out, "sub");
    return make(OpKind::Sub, {a, b}, std::move(out));
}

Var add_rowvec(const Var& a, const Var& bias) {
    const Tensor& A = a->value;
    const Tensor& B = bias->value;
    if (B.rows() != 1 || A.cols() != B.cols()) {
        throw ShapeError("add_rowvec: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    }
    Tensor out = A;
    std::size_t n = A.cols();
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) out.data[r * n + c] += B.data[c];
    require_finite(out, "add_rowvec");
    return make(OpKind::AddRowVec, {a, bias}, std::move(out));
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
    require_finite(out, "mul");
    return make(OpKind::Mul, {a, b}, std::move(out));
}

Var scale(const Var& a, float c) {
    Tensor out = a->value;
    for (float& v : out.data) v *= c;
    require_finite(out, "scale");
    return make(OpKind::Scale, {a}, std::move(out), c);
}

Var add_const(const Var& a, float c) {
    Tensor out = a->value;
    for (float& v : out.data) v += c;
    require_finite(out, "add_const");
    return make(OpKind::AddConst, {a}, std::move(out), c);
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return make(OpKind::Relu, {a}, std::move(out));
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (float& v : out.data) {
        // split on sign to avoid overflow in exp
        v = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v));
    }
    require_finite(out, "sigmoid");
    return make(OpKind::Sigmoid, {a}, std::move(out));
}

Var exp(const Var& a) {
    Tensor out = a->value;
    for (float& v : out.data) v = std::exp(v);
    require_finite(out, "exp");
    return make(OpKind::Exp, {a}, std::move(out));
}

Var log(const Var& a) {
    Tensor out = a->value;
    for (float& v : out.data) v = std::log(v);
    require_finite(out, "log");
    return make(OpKind::Log, {a}, std::move(out));
}

Var square(const Var& a) {
    Tensor out = a->value;
    for (float& v : out.data) v *= v;
    require_finite(out, "square");
    return make(OpKind::Square, {a}, std::move(out));
}

Var sum(const Var& a) {
    double acc = 0.0;
    for (float v : a->value.data) acc += v;
    Tensor out = Tensor::scalar(static_cast<float>(acc));
    require_finite(out, "sum");
    return make(OpKind::Sum, {a}, std::move(out));
}

Var mean(const Var& a) {
    if (a->value.size() == 0) throw ContractError("mean: empty tensor");
    double acc = 0.0;
    for (float v : a->value.data) acc += v;
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(a->value.size())));
    require_finite(out, "mean");
    return make(OpKind::Mean, {a}, std::move(out));
}

Var row_sum(const Var& a) {
    const Tensor& A = a->value;
    std::size_t m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros({m, 1});
    for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += A.data[r * n + c];
        out.data[r] = static_cast<float>(acc);
    }
    require_finite(out, "row_sum");
    return make(OpKind::RowSum, {a}, std::move(out));
}

// log(1 - e^{-a}) with the standard two-branch evaluation.
static double log1mexp_scalar(double a) {
    if (a <= 0.0) throw DomainError("log1mexp: argument must be positive");
    constexpr double ln2 = 0.6931471805599453;
    return a <= ln2 ? std::log(-std::expm1(-a)) : std::log1p(-std::exp(-a));
}

Var log1mexp(const Var& a) {
    Tensor out = a->value;
    for (float& v : out.data) v = static_cast<float>(log1mexp_scalar(static_cast<double>(v)));
    require_finite(out, "log1mexp");
    return make(OpKind::Log1mExp, {a}, std::move(out));
}

Var clamp_min(const Var& a, float floor) {
    Tensor out = a->value;
    for (float& v : out.data) v = v < floor ? floor : v;
    return make(OpKind::ClampMin, {a}, std::move(out), floor);
}

float scalar_value(const Var& v) {
    if (!v->value.is_scalar()) {
        throw ContractError("scalar_value: tensor has shape " + v->value.shape_str());
    }
    return v->value.data[0];
}

static void topo_sort(const Var& root, std::vector<Node*>& order) {
    // iterative post-order DFS
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* child = node->inputs[idx].get();
            ++idx;
            if (visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

std::vector<Var> backward(const Var& root) {
    if (!root->value.is_scalar()) {
        throw ContractError("backward: root must be scalar, got shape " +
                            root->value.shape_str());
    }
    std::vector<Node*> order;
    topo_sort(root, order);

    for (Node* n : order) n->grad = Tensor::zeros(n->value.shape);
    root->grad.data[0] = 1.0f;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->requires_grad) continue;
        const Tensor& g = n->grad;
        auto in = [&](std::size_t i) -> Node* { return n->inputs[i].get(); };

        switch (n->kind) {
            case OpKind::Leaf:
                break;
            case OpKind::MatMul: {
                Node *a = in(0), *b = in(1);
                if (a->requires_grad)
                    as_mat(a->grad).noalias() += as_mat(g) * as_mat(b->value).transpose();
                if (b->requires_grad)
                    as_mat(b->grad).noalias() += as_mat(a->value).transpose() * as_mat(g);
                break;
            }
            case OpKind::Add:
                for (int k = 0; k < 2; ++k)
                    if (in(k)->requires_grad)
                        for (std::size_t i = 0; i < g.size(); ++i)
                            in(k)->grad.data[i] += g.data[i];
                break;
            case OpKind::Sub:
                if (in(0)->requires_grad)
                    for (std::size_t i = 0; i < g.size(); ++i) in(0)->grad.data[i] += g.data[i];
                if (in(1)->requires_grad)
                    for (std::size_t i = 0; i < g.size(); ++i) in(1)->grad.data[i] -= g.data[i];
                break;
            case OpKind::AddRowVec: {
                Node *a = in(0), *b = in(1);
                std::size_t cols = n->value.cols();
                if (a->requires_grad)
                    for (std::size_t i = 0; i < g.size(); ++i) a->grad.data[i] += g.data[i];
                if (b->requires_grad)
                    for (std::size_t r = 0; r < n->value.rows(); ++r)
                        for (std::size_t c = 0; c < cols; ++c)
                            b->grad.data[c] += g.data[r * cols + c];
                break;
            }
            case OpKind::Mul:
                if (in(0)->requires_grad)
                    for (std::size_t i = 0; i < g.size(); ++i)
                        in(0)->grad.data[i] += g.data[i] * in(1)->value.data[i];
                if (in(1)->requires_grad)
                    for (std::size_t i = 0; i < g.size(); ++i)
                        in(1)->grad.data[i] += g.data[i] * in(0)->value.data[i];
                break;
            case OpKind::Scale:
                for (std::size_t i = 0; i < g.size(); ++i)
                    in(0)->grad.data[i] += g.data[i] * n->c;
                break;
            case OpKind::AddConst:
                for (std::size_t i = 0; i < g.size(); ++i) in(0)->grad.data[i] += g.data[i];
                break;
            case OpKind::Relu:
                // subgradient at 0 is fixed to 0
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (in(0)->value.data[i] > 0.0f) in(0)->grad.data[i] += g.data[i];
                break;
            case OpKind::Sigmoid:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    float s = n->value.data[i];
                    in(0)->grad.data[i] += g.data[i] * s * (1.0f - s);
                }
                break;
            case OpKind::Exp:
                for (std::size_t i = 0; i < g.size(); ++i)
                    in(0)->grad.data[i] += g.data[i] * n->value.data[i];
                break;
            case OpKind::Log:
                for (std::size_t i = 0; i < g.size(); ++i)
                    in(0)->grad.data[i] += g.data[i] / in(0)->value.data[i];
                break;
            case OpKind::Square:
                for (std::size_t i = 0; i < g.size(); ++i)
                    in(0)->grad.data[i] += g.data[i] * 2.0f * in(0)->value.data[i];
                break;
            case OpKind::Sum:
                for (std::size_t i = 0; i < in(0)->grad.size(); ++i)
                    in(0)->grad.data[i] += g.data[0];
                break;
            case OpKind::Mean: {
                float inv = 1.0f / static_cast<float>(in(0)->value.size());
                for (std::size_t i = 0; i < in(0)->grad.size(); ++i)
                    in(0)->grad.data[i] += g.data[0] * inv;
                break;
            }
            case OpKind::RowSum: {
                std::size_t cols = in(0)->value.cols();
                for (std::size_t r = 0; r < in(0)->value.rows(); ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        in(0)->grad.data[r * cols + c] += g.data[r];
                break;
            }
            case OpKind::Log1mExp:
                // d/da log(1-e^{-a}) = e^{-a} / (1 - e^{-a})
                for (std::size_t i = 0; i < g.size(); ++i) {
                    double a = static_cast<double>(in(0)->value.data[i]);
                    double d = std::exp(-a) / (-std::expm1(-a));
                    in(0)->grad.data[i] += g.data[i] * static_cast<float>(d);
                }
                break;
            case OpKind::ClampMin:
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (in(0)->value.data[i] > n->c) in(0)->grad.data[i] += g.data[i];
                break;
        }
    }

    std::vector<Var> leaves;
    // second pass over the shared_ptr graph to return leaf handles
    std::unordered_set<Node*> seen;
    std::vector<Var> stack{root};
    seen.insert(root.get());
    while (!stack.empty()) {
        Var v = stack.back();
        stack.pop_back();
        if (v->kind == OpKind::Leaf && v->requires_grad) leaves.push_back(v);
        for (const auto& i : v->inputs)
            if (seen.insert(i.get()).second) stack.push_back(i);
    }
    return leaves;
}

}  // namespace vabc::ad
