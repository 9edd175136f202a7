// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "bandfuse/nn.hpp"

namespace bandfuse {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction: theta -= lr * m_hat / (sqrt(v_hat) + eps).
class Adam {
public:
    Adam(const ParameterSet& params, AdamOptions options = {});

    void step();
    void zero_grad();

    const AdamOptions& options() const noexcept { return options_; }
    std::uint64_t steps() const noexcept { return t_; }

    // Moment buffers in parameter registration order, for checkpointing.
    const std::vector<std::vector<Scalar>>& first_moments() const noexcept { return m_; }
    const std::vector<std::vector<Scalar>>& second_moments() const noexcept { return v_; }
    void restore(std::uint64_t steps, std::vector<std::vector<Scalar>> m, std::vector<std::vector<Scalar>> v);

private:
    std::vector<Parameter> params_;
    AdamOptions options_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<Scalar>> m_;
    std::vector<std::vector<Scalar>> v_;
};

}  // namespace bandfuse
