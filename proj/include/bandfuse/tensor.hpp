// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a dynamic reverse-mode tape.
//
// Every op produces a fresh node that holds shared references to its inputs;
// the graph is rebuilt on each forward pass and freed when the last handle to
// the output goes away. A node carries a gradient buffer iff it requires grad.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bandfuse {

#ifdef BANDFUSE_FLOAT32
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<Scalar> value;
    std::vector<Scalar> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into parents that require grad.
    std::function<void(Node&)> backward;
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, Scalar fill, bool requires_grad = false);
    static Tensor from(std::vector<Scalar> values, Shape shape, bool requires_grad = false);
    static Tensor scalar(Scalar v, bool requires_grad = false);
    static Tensor vector(std::vector<Scalar> values, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<Scalar> values,
                         bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const Scalar> values() const;
    // Mutable view for parameter updates and test fixtures; never call on a
    // tensor whose consumers have already been built.
    std::span<Scalar> mutable_values();
    std::span<const Scalar> grad() const;
    std::span<Scalar> mutable_grad();

    bool requires_grad() const;
    bool is_leaf() const;
    void zero_grad();

    Scalar item() const;
    Scalar operator[](std::size_t i) const { return values()[i]; }
    Scalar at(std::size_t r, std::size_t c) const;

    // Deep copy of the values into a new leaf.
    Tensor clone(bool requires_grad = false) const;

    bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

    detail::Node& node() const;
    std::shared_ptr<detail::Node> node_ptr() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode sweep from a single-element loss. Leaf gradients accumulate
/// across calls; interior gradients are reset at the start of each sweep.
void backward(const Tensor& loss);

/// While alive, results built on this thread record no graph history.
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

bool grad_enabled() noexcept;

using BackwardFn = std::function<void(Node&)>;

/// Builds an op result. Parents and the backward closure are retained only
/// when at least one input requires grad.
Tensor make_result(Shape shape, std::vector<Scalar> value, std::initializer_list<Tensor> inputs,
                   BackwardFn fn);
Tensor make_result(Shape shape, std::vector<Scalar> value, const std::vector<Tensor>& inputs,
                   BackwardFn fn);

}  // namespace detail

}  // namespace bandfuse
