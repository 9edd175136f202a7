// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/routing.hpp"

#include <algorithm>

#include "bandfuse/error.hpp"

namespace bandfuse {

void BandRouterConfig::validate() const {
    if (K < 1) throw ParameterError("band router needs K >= 1");
    if (!(tau > 0.0)) throw ParameterError("band router temperature must be positive");
    if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw ParameterError("mask rate must lie in [0, 1)");
}

BandRouter::BandRouter(ParameterSet& params, const std::string& name, const BandRouterConfig& cfg, Rng& rng)
    : cfg_(cfg), mlp_(params, name, cfg.K * cfg.d, cfg.hidden, cfg.K, rng) {
    cfg_.validate();
}

Tensor BandRouter::weights(const std::vector<Tensor>& components) const {
    if (components.empty()) throw ParameterError("band routing needs at least one component");
    if (components.size() != cfg_.K) {
        throw DimensionError("band router built for K=" + std::to_string(cfg_.K) + ", got " +
                             std::to_string(components.size()) + " components");
    }
    std::vector<Tensor> pooled;
    pooled.reserve(components.size());
    for (const auto& c : components) pooled.push_back(mean_pool_time(c));
    return softmax_temp(mlp_(concat(pooled, 0)), static_cast<Scalar>(cfg_.tau));
}

std::vector<Scalar> sample_band_mask(std::size_t K, double p, Rng& rng) {
    std::vector<Scalar> mask(K, Scalar(1));
    if (p <= 0.0) return mask;
    do {
        for (auto& m : mask) m = rng.bernoulli(p) ? Scalar(0) : Scalar(1);
    } while (std::all_of(mask.begin(), mask.end(), [](Scalar m) { return m == Scalar(0); }));
    return mask;
}

BandRouteResult band_route(const std::vector<Tensor>& components, const BandRouter& router, bool training, Rng& rng) {
    if (components.empty()) throw ParameterError("band routing needs at least one component");
    for (const auto& c : components) {
        if (c.shape() != components.front().shape()) throw DimensionError("band components differ in shape");
    }
    BandRouteResult r;
    r.alpha = router.weights(components);
    if (training && router.config().mask_rate > 0.0) {
        r.mask = sample_band_mask(components.size(), router.config().mask_rate, rng);
        r.alpha_hat = masked_renormalize(r.alpha, r.mask, kMaskEps);
    } else {
        r.mask.assign(components.size(), Scalar(1));
        r.alpha_hat = r.alpha;
    }
    r.enhanced = weighted_sum(components, r.alpha_hat);
    return r;
}

std::string routing_path_name(RoutingPath path) {
    return path == RoutingPath::PreAttention ? "pre_attention" : "post_attention";
}

RoutingPath routing_path_from_name(const std::string& name) {
    if (name == "pre_attention") return RoutingPath::PreAttention;
    if (name == "post_attention") return RoutingPath::PostAttention;
    throw ParameterError("unknown routing path '" + name + "'");
}

ModalityRouter::ModalityRouter(ParameterSet& params, const std::string& name, const ModalityRouterConfig& cfg, Rng& rng)
    : cfg_(cfg),
      w1_(params, name + ".W1", cfg.d_in, cfg.hidden, rng, false),
      w2_(params, name + ".W2", cfg.hidden, kNumModalities, rng, false) {
    if (!(cfg.tau > 0.0)) throw ParameterError("modality router temperature must be positive");
}

Tensor route_modalities(const Tensor& decision, const ModalityRouter& router) {
    if (decision.rank() != 1 || decision.dim(0) != router.config().d_in) {
        throw DimensionError("modality router expects a decision vector of length " +
                             std::to_string(router.config().d_in) + ", got " + shape_str(decision.shape()));
    }
    Tensor z = l2_normalize(router.w1()(decision));
    return softmax_temp(router.w2()(relu(z)), static_cast<Scalar>(router.config().tau));
}

Tensor build_decision_vector(RoutingPath path, const PerModality<Tensor>& pooled_pre, const PerModality<Tensor>& deep) {
    const auto& chosen = path == RoutingPath::PreAttention ? pooled_pre : deep;
    return concat({chosen[0], chosen[1], chosen[2]}, 0);
}

FusionHead::FusionHead(ParameterSet& params, const std::string& name, std::size_t d, std::size_t out, Rng& rng)
    : refine_(params, name + ".refine", d, d, d, rng), head_(params, name + ".head", d, out, rng) {}

FuseResult fuse(const Tensor& w, const PerModality<Tensor>& deep, const FusionHead& head) {
    FuseResult r;
    r.fused = weighted_sum({deep[0], deep[1], deep[2]}, w);
    r.refined = add(head.refine()(r.fused), r.fused);
    r.prediction = head.head()(r.refined);
    return r;
}

}  // namespace bandfuse
