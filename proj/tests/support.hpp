// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test binaries: random inputs, a finite-difference
// oracle written independently of the library's gradcheck, and small corpora.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bandfuse/data.hpp"
#include "bandfuse/rng.hpp"
#include "bandfuse/tensor.hpp"

namespace testing_support {

using bandfuse::Rng;
using bandfuse::Scalar;
using bandfuse::Shape;
using bandfuse::Tensor;

inline Tensor randn(Shape shape, Rng& rng, bool requires_grad = false, double sd = 1.0) {
    std::vector<Scalar> v(bandfuse::shape_numel(shape));
    for (auto& x : v) x = static_cast<Scalar>(rng.normal(0.0, sd));
    return Tensor::from(std::move(v), std::move(shape), requires_grad);
}

inline std::vector<double> simplex(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    double s = 0;
    for (auto& x : v) {
        x = -std::log(1.0 - rng.uniform());
        s += x;
    }
    for (auto& x : v) x /= s;
    return v;
}

/// Largest elementwise |a - n| / max(|a|, |n|, floor) between backward() and
/// central differences, over every entry of every input.
inline double fd_max_rel_error(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-5,
                               double floor = 1e-8) {
    for (auto& t : inputs) t.zero_grad();
    bandfuse::backward(f());
    double worst = 0;
    for (auto& t : inputs) {
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto v = t.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const Scalar keep = v[i];
            v[i] = keep + static_cast<Scalar>(h);
            const double up = f().item();
            v[i] = keep - static_cast<Scalar>(h);
            const double down = f().item();
            v[i] = keep;
            const double num = (up - down) / (2 * h);
            const double err = std::abs(num - analytic[i]) / std::max({std::abs(num), std::abs(analytic[i]), floor});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

inline double max_abs_diff(std::span<const Scalar> a, std::span<const Scalar> b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i] - b[i])));
    return m;
}

/// Small regression corpus: l and v carry z1, a carries z2; cues in bands 0, 1, 2.
inline bandfuse::GeneratorSpec small_spec(std::uint64_t seed, std::size_t n_train = 16, std::size_t T = 8,
                                          std::size_t dim = 4) {
    bandfuse::GeneratorSpec spec;
    spec.n_train = n_train;
    spec.n_val = 6;
    spec.n_test = 6;
    spec.seed = seed;
    for (std::size_t m = 0; m < 3; ++m) {
        spec.modalities[m].T = T;
        spec.modalities[m].input_dim = dim;
        spec.modalities[m].cue_band = m;
    }
    spec.modalities[2].factor = bandfuse::Latent::Z2;
    return spec;
}

}  // namespace testing_support
