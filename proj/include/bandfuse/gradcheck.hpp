// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of backward() against every trainable
// entry of a parameter set.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bandfuse/nn.hpp"

namespace bandfuse {

struct GradCheckOptions {
    double step = 1e-5;
    /// 2: (f(x+h) - f(x-h)) / 2h.  4: fourth-order stencil using x +- h and x +- 2h.
    int stencil = 2;
    double floor = 1e-8;       // absolute floor in the relative-error denominator
    double tolerance = 1e-4;
};

struct GradCheckReport {
    std::string name;
    std::size_t entries = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst;  // "param[index]"
    double tolerance = 1e-4;
    std::size_t failing_entries = 0;
    double max_abs_error_failing = 0.0;  // largest absolute error among the failing entries

    bool passed() const { return max_rel_error <= tolerance; }
};

/// Compares analytic gradients of `loss` with central differences for every
/// entry of every parameter. `loss` must rebuild the graph on each call.
GradCheckReport check_gradients(const std::string& name, const std::function<Tensor()>& loss, ParameterSet& params,
                                const GradCheckOptions& options = {});

/// Module names accepted by run_gradcheck.
std::vector<std::string> gradcheck_modules();

/// Built-in checks on small random instances; an empty module runs all of them.
std::vector<GradCheckReport> run_gradcheck(const std::string& module, std::uint64_t seed,
                                           const GradCheckOptions& options = {});

}  // namespace bandfuse
