// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "bandfuse/error.hpp"

namespace bandfuse {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

std::shared_ptr<detail::Node> new_leaf(Shape shape, std::vector<Scalar> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->value.size(), Scalar(0));
    return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), Scalar(0), requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar fill, bool requires_grad) {
    std::vector<Scalar> v(shape_numel(shape), fill);
    return Tensor(new_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from(std::vector<Scalar> values, Shape shape, bool requires_grad) {
    return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(Scalar v, bool requires_grad) {
    return from({v}, {1}, requires_grad);
}

Tensor Tensor::vector(std::vector<Scalar> values, bool requires_grad) {
    Shape s{values.size()};
    return from(std::move(values), std::move(s), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<Scalar> values, bool requires_grad) {
    return from(std::move(values), {rows, cols}, requires_grad);
}

detail::Node& Tensor::node() const {
    if (!node_) throw ValidationError("use of an undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return node().value.size(); }

std::span<const Scalar> Tensor::values() const { return node().value; }
std::span<Scalar> Tensor::mutable_values() { return node().value; }
std::span<const Scalar> Tensor::grad() const { return node().grad; }
std::span<Scalar> Tensor::mutable_grad() { return node().grad; }

bool Tensor::requires_grad() const { return node().requires_grad; }
bool Tensor::is_leaf() const { return !node().backward; }

void Tensor::zero_grad() {
    auto& g = node().grad;
    std::fill(g.begin(), g.end(), Scalar(0));
}

Scalar Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node().value[0];
}

Scalar Tensor::at(std::size_t r, std::size_t c) const {
    const auto& s = shape();
    if (s.size() != 2) throw DimensionError("at(r, c) on tensor of shape " + shape_str(s));
    return node().value[r * s[1] + c];
}

Tensor Tensor::clone(bool requires_grad) const {
    return from(node().value, node().shape, requires_grad);
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw DimensionError("backward() needs a single-element loss, got " + shape_str(loss.shape()));
    }
    auto root = loss.node_ptr();
    if (!root->requires_grad) return;

    // Iterative post-order DFS; graphs here can be a few thousand nodes deep.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* n : order) {
        if (n->backward) std::fill(n->grad.begin(), n->grad.end(), Scalar(0));
    }
    root->grad[0] += Scalar(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<Scalar> value, const std::vector<Tensor>& inputs, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& t : inputs) needs = needs || t.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        node->grad.assign(node->value.size(), Scalar(0));
        node->parents.reserve(inputs.size());
        for (const auto& t : inputs) node->parents.push_back(t.node_ptr());
        node->backward = std::move(fn);
    }
    return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<Scalar> value, std::initializer_list<Tensor> inputs, BackwardFn fn) {
    return make_result(std::move(shape), std::move(value), std::vector<Tensor>(inputs), std::move(fn));
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::grad_enabled()) { detail::g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = previous_; }

}  // namespace bandfuse
