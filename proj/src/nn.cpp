// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/nn.hpp"

#include <cmath>

#include "bandfuse/error.hpp"

namespace bandfuse {

Tensor ParameterSet::add(const std::string& name, Shape shape) {
    return add(name, Tensor::zeros(std::move(shape), true));
}

Tensor ParameterSet::add(const std::string& name, Tensor tensor) {
    if (index_.count(name)) throw ParameterError("duplicate parameter name: " + name);
    if (!tensor.requires_grad()) tensor = tensor.clone(true);
    index_.emplace(name, params_.size());
    params_.push_back({name, tensor});
    return tensor;
}

std::size_t ParameterSet::numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParameterError("unknown parameter: " + name);
    return params_[it->second].tensor;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void init_uniform(Tensor& t, Scalar bound, Rng& rng) {
    for (auto& v : t.mutable_values()) v = static_cast<Scalar>(rng.uniform(-bound, bound));
}

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool with_bias)
    : in_(in), out_(out) {
    weight_ = params.add(name + ".weight", {in, out});
    init_uniform(weight_, Scalar(1) / std::sqrt(static_cast<Scalar>(in)), rng);
    if (with_bias) bias_ = params.add(name + ".bias", {out});
}

Tensor Linear::operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight_);
    return bias_.defined() ? add_bias(y, bias_) : y;
}

Mlp::Mlp(ParameterSet& params, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : first_(params, name + ".fc1", in, hidden, rng), second_(params, name + ".fc2", hidden, out, rng) {}

Tensor Mlp::operator()(const Tensor& x) const { return second_(relu(first_(x))); }

}  // namespace bandfuse
