#pragma once

#include <functional>
#include <memory>
#include <unordered_set>

#include "sdfc/nn/tensor.hpp"

namespace sdfc::nn {

/// Node of the dynamic computation graph. Operators create nodes holding the
/// forward value, links to their inputs, and a closure that routes the node's
/// gradient into the inputs' gradient buffers.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool is_param = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (!grad.defined() || !grad.same_shape(value)) grad = Tensor::zeros(value.shape());
        return grad;
    }

    void accumulate(const Tensor& g) {
        Tensor& dst = ensure_grad();
        float* d = dst.data();
        const float* s = g.data();
        for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
    }

    void zero_grad() {
        if (grad.defined()) grad.fill(0.0f);
    }
};

using Var = std::shared_ptr<Node>;

/// Thread-local switch that makes operators skip graph construction entirely
/// (pure inference mode).
inline bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
};

inline Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return n;
}

inline Var parameter(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = true;
    n->is_param = true;
    return n;
}

inline Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (grad_enabled()) {
        for (const Var& p : parents)
            if (p && p->requires_grad) {
                n->requires_grad = true;
                break;
            }
        if (n->requires_grad) {
            n->parents = std::move(parents);
            n->backward_fn = std::move(backward);
        }
    }
    return n;
}

/// Reverse-mode sweep from a scalar root.
inline void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw ShapeMismatch("backward: root must be a scalar, got " +
                            Tensor::shape_str(root->value.shape()));
    if (!root->requires_grad) return;

    // Iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad().fill(1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad.defined()) node->backward_fn(*node);
    }
}

}  // namespace sdfc::nn
