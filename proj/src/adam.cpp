// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/adam.hpp"

#include <cmath>

#include "bandfuse/error.hpp"

namespace bandfuse {

Adam::Adam(const ParameterSet& params, AdamOptions options) : params_(params.items()), options_(options) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), Scalar(0));
        v_.emplace_back(p.tensor.numel(), Scalar(0));
    }
}

void Adam::step() {
    ++t_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto theta = params_[i].tensor.mutable_values();
        const auto g = params_[i].tensor.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m[j] = static_cast<Scalar>(b1 * m[j] + (1.0 - b1) * g[j]);
            v[j] = static_cast<Scalar>(b2 * v[j] + (1.0 - b2) * g[j] * g[j]);
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            theta[j] -= static_cast<Scalar>(options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps));
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::restore(std::uint64_t steps, std::vector<std::vector<Scalar>> m, std::vector<std::vector<Scalar>> v) {
    if (m.size() != params_.size() || v.size() != params_.size()) {
        throw DimensionError("optimizer state has " + std::to_string(m.size()) + " moment buffers, expected " +
                             std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (m[i].size() != params_[i].tensor.numel() || v[i].size() != params_[i].tensor.numel()) {
            throw DimensionError("optimizer moment size mismatch for " + params_[i].name);
        }
    }
    t_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace bandfuse
