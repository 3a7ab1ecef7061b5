#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <utility>
#include <vector>

#include "igrsr/common.hpp"

namespace igrsr {

// ---------------------------------------------------------------------------
// Tensor: dense n-d array of doubles with an optional gradient buffer. Ops
// (see ops.hpp) record a backward rule on the result node; Tensor itself is a
// cheap shared handle, so the computation graph is just the node DAG.
// ---------------------------------------------------------------------------

struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool backward_ran = false;  // set on the node backward() was called on

    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backward_fn;

    std::size_t numel() const { return data.size(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

namespace detail {
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

// RAII guard: ops executed under the guard record no graph.
struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape) {
        return full(std::move(shape), 0.0);
    }

    static Tensor full(std::vector<std::size_t> shape, double value) {
        auto n = std::make_shared<TensorNode>();
        n->shape = std::move(shape);
        n->data.assign(shape_numel(n->shape), value);
        return Tensor(std::move(n));
    }

    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values) {
        if (shape_numel(shape) != values.size())
            throw DimensionError("tensor data length does not match shape");
        auto n = std::make_shared<TensorNode>();
        n->shape = std::move(shape);
        n->data = std::move(values);
        return Tensor(std::move(n));
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0) {
        auto t = zeros(std::move(shape));
        for (auto& x : t.node_->data) x = rng.normal() * stddev;
        return t;
    }

    bool defined() const { return node_ != nullptr; }

    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.at(1); }

    double* data() { return node_->data.data(); }
    const double* data() const { return node_->data.data(); }
    std::vector<double>& values() { return node_->data; }
    const std::vector<double>& values() const { return node_->data; }

    double& at(std::size_t i) { return node_->data.at(i); }
    double at(std::size_t i) const { return node_->data.at(i); }
    double& at(std::size_t i, std::size_t j) { return node_->data.at(i * cols() + j); }
    double at(std::size_t i, std::size_t j) const { return node_->data.at(i * cols() + j); }

    double item() const {
        if (numel() != 1) throw DimensionError("item() requires a single-element tensor");
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        node_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<double>& grad() const {
        if (node_->grad.empty()) throw GraphError("tensor has no gradient; run backward first");
        return node_->grad;
    }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    // Reverse-mode sweep from a scalar output. Visits every node exactly once
    // in reverse topological order. A second call on the same node without a
    // fresh forward pass is an error; a graph with no grad-requiring leaves is
    // a no-op.
    void backward() {
        if (numel() != 1) throw GraphError("backward() requires a scalar output");
        if (node_->backward_ran) throw GraphError("backward() already ran on this graph");
        if (!node_->requires_grad) return;

        std::vector<TensorNode*> order = topo_order(node_.get());
        node_->backward_ran = true;
        node_->ensure_grad();
        node_->grad[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backward_fn && !(*it)->grad.empty()) (*it)->backward_fn();
        }
    }

    std::shared_ptr<TensorNode> node() const { return node_; }

    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static std::size_t shape_numel(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>());
    }

private:
    // Iterative post-order DFS; recursion would be fragile on deep op chains.
    static std::vector<TensorNode*> topo_order(TensorNode* root) {
        std::vector<TensorNode*> order;
        std::unordered_set<TensorNode*> visited;
        std::vector<std::pair<TensorNode*, std::size_t>> stack;
        stack.emplace_back(root, 0);
        visited.insert(root);
        while (!stack.empty()) {
            auto& [node, next_child] = stack.back();
            if (next_child < node->parents.size()) {
                TensorNode* child = node->parents[next_child++].get();
                if (visited.insert(child).second) stack.emplace_back(child, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        return order;
    }

    std::shared_ptr<TensorNode> node_;
};

namespace detail {

// Creates the result node of an op: forward value plus, when grad mode is on
// and some input requires grad, the recorded backward rule.
inline Tensor make_result(std::vector<std::size_t> shape, std::vector<double> values,
                          std::vector<Tensor> inputs,
                          std::function<void(TensorNode*)> backward) {
    Tensor out = Tensor::from(std::move(shape), std::move(values));
    bool track = false;
    if (grad_mode()) {
        for (const auto& t : inputs)
            if (t.requires_grad()) track = true;
    }
    if (track) {
        auto node = out.node();
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& t : inputs) node->parents.push_back(t.node());
        TensorNode* raw = node.get();
        node->backward_fn = [raw, backward = std::move(backward)]() { backward(raw); };
    }
    return out;
}

inline void accumulate(const std::shared_ptr<TensorNode>& parent,
                       const std::vector<double>& contribution) {
    if (!parent->requires_grad) return;
    parent->ensure_grad();
    for (std::size_t i = 0; i < contribution.size(); ++i)
        parent->grad[i] += contribution[i];
}

}  // namespace detail

}  // namespace igrsr
