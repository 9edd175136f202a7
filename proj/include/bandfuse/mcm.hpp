// SPDX-License-Identifier: Apache-2.0
//
// Marginal complementarity: leave-one-modality-out prediction branches, the
// detached importance signal they produce, and the router / feature
// supervision built from it.
#pragma once

#include <array>

#include "bandfuse/modality.hpp"
#include "bandfuse/nn.hpp"

namespace bandfuse {

/// One prediction head per excluded modality, fed with the sum of the other two deep features.
class BimodalBranches {
public:
    BimodalBranches() = default;
    BimodalBranches(ParameterSet& params, const std::string& name, std::size_t d, std::size_t hidden, std::size_t out,
                    Rng& rng);

    const Mlp& head(Modality excluded) const { return heads_[index_of(excluded)]; }

private:
    PerModality<Mlp> heads_;
};

Tensor bimodal_predict(const PerModality<Tensor>& deep, Modality excluded, const BimodalBranches& branches);

struct ComplementaritySignal {
    std::array<double, kNumModalities> importance{};  // I_m = L_without_m - L_full
    Tensor target;                                     // softmax(I / tau), detached
    double tau = 1.0;
};

/// All inputs are read as values only; the returned target has no graph history.
ComplementaritySignal complementarity_distribution(const PerModality<Tensor>& excluded_losses, const Tensor& full_loss,
                                                   double tau);

/// KL(P || w) with w clamped inside the log and 0 log 0 := 0.
Tensor kl_routing_loss(const Tensor& p_comp, const Tensor& w);

/// Independent residual MLP per modality: H' = MLP_m(H) + H.
class ModalityRefiners {
public:
    ModalityRefiners() = default;
    ModalityRefiners(ParameterSet& params, const std::string& name, std::size_t d, Rng& rng);

    const Mlp& mlp(Modality m) const { return mlps_[index_of(m)]; }

private:
    PerModality<Mlp> mlps_;
};

Tensor refine_modality(const Tensor& deep, const Mlp& mlp);

struct Teacher {
    Tensor feature;  // detached
};

Teacher build_teacher(const Tensor& w, const PerModality<Tensor>& refined);

/// mean_j (softmax(student)_j - softmax(teacher)_j)^2 over the feature dimension.
Tensor distill_loss(const Tensor& student, const Teacher& teacher);

}  // namespace bandfuse
