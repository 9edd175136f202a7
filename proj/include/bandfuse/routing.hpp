// SPDX-License-Identifier: Apache-2.0
//
// Band-level and modality-level routing, plus weighted fusion.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bandfuse/modality.hpp"
#include "bandfuse/nn.hpp"

namespace bandfuse {

inline constexpr Scalar kMaskEps = Scalar(1e-8);

struct BandRouterConfig {
    std::size_t K = 3;
    std::size_t d = 32;
    std::size_t hidden = 64;
    double tau = 1.0;
    double mask_rate = 0.15;  // probability that a band is dropped during training

    void validate() const;
};

/// Pools each band component over time, concatenates, and maps to K logits.
class BandRouter {
public:
    BandRouter() = default;
    BandRouter(ParameterSet& params, const std::string& name, const BandRouterConfig& cfg, Rng& rng);

    /// Simplex weights alpha over the bands (no masking).
    Tensor weights(const std::vector<Tensor>& components) const;

    const BandRouterConfig& config() const { return cfg_; }
    const Mlp& mlp() const { return mlp_; }

private:
    BandRouterConfig cfg_;
    Mlp mlp_;
};

struct BandRouteResult {
    Tensor alpha;               // router output on the simplex
    Tensor alpha_hat;           // alpha after masking and renormalization (== alpha at evaluation)
    std::vector<Scalar> mask;   // 1 = kept; all ones at evaluation
    Tensor enhanced;            // sum_k alpha_hat[k] * X^(k)
};

/// Keep-mask with each band dropped independently with probability p,
/// redrawn whenever every band would be dropped.
std::vector<Scalar> sample_band_mask(std::size_t K, double p, Rng& rng);

BandRouteResult band_route(const std::vector<Tensor>& components, const BandRouter& router, bool training, Rng& rng);

enum class RoutingPath { PreAttention, PostAttention };

std::string routing_path_name(RoutingPath path);
RoutingPath routing_path_from_name(const std::string& name);

struct ModalityRouterConfig {
    std::size_t d_in = 96;
    std::size_t hidden = 64;
    double tau = 1.0;
    RoutingPath path = RoutingPath::PostAttention;
};

/// w = softmax(W2 relu(z / ||z||) / tau) with z = W1 Z. Both layers are bias-free,
/// so w depends only on the direction of Z.
class ModalityRouter {
public:
    ModalityRouter() = default;
    ModalityRouter(ParameterSet& params, const std::string& name, const ModalityRouterConfig& cfg, Rng& rng);

    const ModalityRouterConfig& config() const { return cfg_; }
    const Linear& w1() const { return w1_; }
    const Linear& w2() const { return w2_; }

private:
    ModalityRouterConfig cfg_;
    Linear w1_;
    Linear w2_;
};

Tensor route_modalities(const Tensor& decision, const ModalityRouter& router);

/// Concatenates (l, v, a) of the triple selected by `path`.
Tensor build_decision_vector(RoutingPath path, const PerModality<Tensor>& pooled_pre, const PerModality<Tensor>& deep);

/// Residual refinement MLP plus the prediction head.
class FusionHead {
public:
    FusionHead() = default;
    FusionHead(ParameterSet& params, const std::string& name, std::size_t d, std::size_t out, Rng& rng);

    const Mlp& refine() const { return refine_; }
    const Linear& head() const { return head_; }

private:
    Mlp refine_;
    Linear head_;
};

struct FuseResult {
    Tensor fused;       // sum_m w_m H_m
    Tensor refined;     // MLP(fused) + fused
    Tensor prediction;
};

FuseResult fuse(const Tensor& w, const PerModality<Tensor>& deep, const FusionHead& head);

}  // namespace bandfuse
