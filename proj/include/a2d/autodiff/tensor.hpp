// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors with reverse-mode gradient tracking.
//
// A Tensor is a cheap handle onto a shared graph node. Operations on tensors
// that require gradients record a backward closure and their parents; every
// node carries a monotonically increasing sequence number so that backward()
// can replay the graph in exact reverse recording order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2d::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised by any op whose operands have incompatible shapes.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(const std::string& op, const Shape& a, const Shape& b);
    ShapeError(const std::string& op, const std::string& detail);
};

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until populated
    bool requires_grad = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into parents' grads.
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }
    void ensure_grad();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    // Direct write access, for parameter initialization and optimizers.
    std::span<double> mutable_data() { return node_->data; }
    double item() const;
    double at(std::size_t flat_index) const { return node_->data.at(flat_index); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad();
    void zero_grad();
    void clear_grad() { node_->grad.clear(); }

    const std::shared_ptr<Node>& node() const { return node_; }
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    // Deep copy of values into a fresh leaf.
    Tensor clone(bool requires_grad = false) const;

private:
    std::shared_ptr<Node> node_;
};

/// Backpropagates from a scalar loss. Gradients accumulate into every
/// requires_grad leaf reachable from `loss`; call zero_grad() to reset.
void backward(const Tensor& loss);

/// Value-equal tensor that is cut from the graph.
Tensor detach(const Tensor& t);

/// True while gradient recording is enabled on this thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {

std::uint64_t next_seq();

// Creates a result node. When grad recording is on and any parent requires
// grad, the node is wired into the graph with `fn` as its backward closure.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> fn);

}  // namespace detail

}  // namespace a2d::ad
