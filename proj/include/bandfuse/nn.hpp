// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "bandfuse/ops.hpp"
#include "bandfuse/rng.hpp"
#include "bandfuse/tensor.hpp"

namespace bandfuse {

struct Parameter {
    std::string name;  // dotted path, e.g. "router.modality.W1"
    Tensor tensor;
};

/// Registry of named trainable tensors. Names are unique; order of
/// registration is the canonical order for checkpoints and optimizers.
class ParameterSet {
public:
    Tensor add(const std::string& name, Shape shape);
    Tensor add(const std::string& name, Tensor tensor);

    const std::vector<Parameter>& items() const noexcept { return params_; }
    std::size_t size() const noexcept { return params_.size(); }
    std::size_t numel() const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;

    void zero_grad();

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// y = x W + b with W stored [in, out]. Weights ~ U(-1/sqrt(in), 1/sqrt(in)), bias 0.
class Linear {
public:
    Linear() = default;
    Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
           bool with_bias = true);

    Tensor operator()(const Tensor& x) const;

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }
    const Tensor& weight() const { return weight_; }
    const Tensor& bias() const { return bias_; }
    bool has_bias() const { return bias_.defined(); }

private:
    std::size_t in_ = 0, out_ = 0;
    Tensor weight_;
    Tensor bias_;
};

/// Two linear layers with a ReLU in between.
class Mlp {
public:
    Mlp() = default;
    Mlp(ParameterSet& params, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

    Tensor operator()(const Tensor& x) const;

    const Linear& first() const { return first_; }
    const Linear& second() const { return second_; }

private:
    Linear first_;
    Linear second_;
};

/// Fills a tensor uniformly in [-bound, bound).
void init_uniform(Tensor& t, Scalar bound, Rng& rng);

}  // namespace bandfuse
