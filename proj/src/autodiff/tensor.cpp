// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2d/autodiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace a2d::ad {

std::size_t numel_of(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}

ShapeError::ShapeError(const std::string& op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail) {}

void Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_seq{0};
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

std::uint64_t next_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed) + 1; }

Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->seq = next_seq();
    bool track = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) track = track || p->requires_grad;
    }
    if (track) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(fn);
    }
    return Tensor(std::move(node));
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->data.assign(numel_of(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    node->seq = detail::next_seq();
    return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel_of(shape) != data.size()) {
        throw ShapeError("from", "shape " + shape_str(shape) + " needs " +
                                     std::to_string(numel_of(shape)) + " values, got " +
                                     std::to_string(data.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->seq = detail::next_seq();
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item", "tensor " + shape_str(shape()) + " is not a scalar");
    return node_->data[0];
}

std::span<double> Tensor::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), node_->data, requires_grad); }

Tensor detach(const Tensor& t) { return Tensor::from(t.shape(), std::vector<double>(t.data().begin(), t.data().end())); }

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward", "loss must be a scalar, got " +
                                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    Node* root = loss.node().get();
    if (!root->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root};
    seen.insert(root);
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

    // Interior gradients are per-call scratch; only leaves accumulate.
    for (Node* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    }
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (Node* n : order) {
        if (!n->is_leaf()) {
            for (const auto& p : n->parents) {
                if (p->requires_grad) p->ensure_grad();
            }
            n->backward_fn(*n);
        }
    }
}

}  // namespace a2d::ad
