// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/mcm.hpp"

#include "bandfuse/error.hpp"

namespace bandfuse {

BimodalBranches::BimodalBranches(ParameterSet& params, const std::string& name, std::size_t d, std::size_t hidden,
                                 std::size_t out, Rng& rng) {
    for (Modality m : kModalities) {
        heads_[index_of(m)] = Mlp(params, name + ".without_" + std::string(modality_name(m)), d, hidden, out, rng);
    }
}

Tensor bimodal_predict(const PerModality<Tensor>& deep, Modality excluded, const BimodalBranches& branches) {
    const std::size_t ex = index_of(excluded);
    if (ex >= kNumModalities) throw ParameterError("invalid excluded modality");
    const std::size_t a = (ex + 1) % kNumModalities;
    const std::size_t b = (ex + 2) % kNumModalities;
    // Keep the summation order fixed (lower index first).
    Tensor sum_rest = a < b ? add(deep[a], deep[b]) : add(deep[b], deep[a]);
    return branches.head(excluded)(sum_rest);
}

ComplementaritySignal complementarity_distribution(const PerModality<Tensor>& excluded_losses, const Tensor& full_loss,
                                                   double tau) {
    if (!(tau > 0.0)) throw ParameterError("complementarity temperature must be positive");
    ComplementaritySignal s;
    s.tau = tau;
    const double full = static_cast<double>(full_loss.item());
    std::vector<Scalar> imp(kNumModalities);
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        s.importance[m] = static_cast<double>(excluded_losses[m].item()) - full;
        imp[m] = static_cast<Scalar>(s.importance[m]);
    }
    s.target = softmax_temp(Tensor::vector(std::move(imp)), static_cast<Scalar>(tau));
    return s;
}

Tensor kl_routing_loss(const Tensor& p_comp, const Tensor& w) {
    if (p_comp.shape() != w.shape()) {
        throw DimensionError("kl_routing_loss: " + shape_str(p_comp.shape()) + " vs " + shape_str(w.shape()));
    }
    Tensor p = stop_gradient(p_comp);
    // sum p log p - sum p log w; xlogx carries the 0 log 0 convention.
    return sub(sum(xlogx(p)), sum(mul(p, log(w))));
}

ModalityRefiners::ModalityRefiners(ParameterSet& params, const std::string& name, std::size_t d, Rng& rng) {
    for (Modality m : kModalities) mlps_[index_of(m)] = Mlp(params, name + "." + std::string(modality_name(m)), d, d, d, rng);
}

Tensor refine_modality(const Tensor& deep, const Mlp& mlp) { return add(mlp(deep), deep); }

Teacher build_teacher(const Tensor& w, const PerModality<Tensor>& refined) {
    return Teacher{stop_gradient(weighted_sum({refined[0], refined[1], refined[2]}, w))};
}

Tensor distill_loss(const Tensor& student, const Teacher& teacher) {
    if (student.shape() != teacher.feature.shape()) {
        throw DimensionError("distill_loss: " + shape_str(student.shape()) + " vs " + shape_str(teacher.feature.shape()));
    }
    return mse(softmax(student), softmax(teacher.feature));
}

}  // namespace bandfuse
