// SPDX-License-Identifier: Apache-2.0
//
// The full routing model: per-modality projection, spectral band routing,
// shared encoder, modality router and fusion, unimodal and leave-one-out
// heads, and the complementarity supervision built on top of them.
#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "bandfuse/config.hpp"
#include "bandfuse/data.hpp"
#include "bandfuse/encoders.hpp"
#include "bandfuse/losses.hpp"
#include "bandfuse/mcm.hpp"
#include "bandfuse/routing.hpp"
#include "bandfuse/specband.hpp"

namespace bandfuse {

/// Shapes the model is built for; taken from the corpus.
struct ModelInputs {
    PerModality<std::size_t> T{};
    PerModality<std::size_t> input_dim{};
    TaskType task = TaskType::Regression;
    std::size_t num_classes = 1;  // classification only

    static ModelInputs from_spec(const GeneratorSpec& spec);
    std::size_t output_dim() const { return task == TaskType::Regression ? 1 : num_classes; }
};

void to_json(nlohmann::json& j, const ModelInputs& m);
void from_json(const nlohmann::json& j, ModelInputs& m);

/// Everything one sample's forward pass produces.
struct SampleForward {
    PerModality<Tensor> projected;   // X_m
    PerModality<Tensor> alpha;       // band weights before masking (undefined without SBN)
    PerModality<Tensor> alpha_hat;   // after masking
    PerModality<Tensor> enhanced;    // X~_m
    PerModality<Tensor> deep;        // H_m
    Tensor decision;                 // Z_decision
    Tensor w;                        // modality weights
    FuseResult fusion;
    PerModality<Tensor> unimodal;    // predictions from H_m alone
    PerModality<Tensor> bimodal;     // O_without_m (undefined without MCM)
    PerModality<Tensor> refined;     // H'_m
    std::optional<ComplementaritySignal> signal;
    Tensor p_comp;                   // detached routing target actually used
    Tensor kl;                       // per-sample KL(P_comp || w)
    Teacher teacher;
    Tensor distill;                  // per-sample distillation loss
};

/// Detached quantities of one sample, held fixed so finite differences can
/// probe the differentiable part of the complementarity losses.
struct DetachedTargets {
    Tensor p_comp;
    Tensor teacher;
};

struct SampleDiagnostics {
    std::uint64_t sample_id = 0;
    PerModality<std::vector<double>> alpha;  // empty without SBN
    std::array<double, kNumModalities> w{};
    std::array<double, kNumModalities> importance{};
    std::array<double, kNumModalities> p_comp{};
    bool has_signal = false;
    std::vector<double> prediction;  // raw head output
    double label = 0.0;
};

struct BatchForward {
    LossTerms terms;
    Tensor total;
    LossBundle bundle;
    std::vector<SampleForward> samples;
    std::vector<SampleDiagnostics> diagnostics;
};

class Model {
public:
    Model(const RunConfig& config, const ModelInputs& inputs);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const RunConfig& config() const noexcept { return config_; }
    const ModelInputs& inputs() const noexcept { return inputs_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    /// Estimates per-modality energy profiles from the projected training
    /// features and freezes the equal-energy partitions.
    void fit_partitions(std::span<const Sample> train);
    void set_partitions(const PerModality<specband::BandPartition>& partitions);
    bool has_partitions() const noexcept { return static_cast<bool>(projectors_[0]); }
    const specband::BandPartition& partition(Modality m) const;

    /// One sample. `step` selects the masking substream when training.
    /// `frozen` replaces the computed P_comp and teacher feature when given.
    SampleForward forward_sample(const Sample& sample, bool training, std::uint64_t step,
                                 const DetachedTargets* frozen = nullptr) const;

    /// Batch losses (means over samples) and per-sample diagnostics.
    /// `frozen`, when non-null, holds one entry per sample.
    BatchForward forward_pass(std::span<const Sample* const> batch, bool training, std::uint64_t step,
                              const std::vector<DetachedTargets>* frozen = nullptr) const;

    /// Scalar regression value or argmax class id.
    double decode_prediction(const Tensor& prediction) const;

    const EncoderStack& encoder() const { return encoder_; }
    const BandRouter& band_router(Modality m) const { return band_routers_[index_of(m)]; }
    const ModalityRouter& modality_router() const { return modality_router_; }
    const FusionHead& fusion_head() const { return fusion_; }
    const Mlp& unimodal_head(Modality m) const { return unimodal_heads_[index_of(m)]; }
    const BimodalBranches& branches() const { return branches_; }
    const ModalityRefiners& refiners() const { return refiners_; }

private:
    RunConfig config_;
    ModelInputs inputs_;
    LossWeights weights_;
    ParameterSet params_;
    EncoderStack encoder_;
    PerModality<BandRouter> band_routers_;
    ModalityRouter modality_router_;
    FusionHead fusion_;
    PerModality<Mlp> unimodal_heads_;
    BimodalBranches branches_;
    ModalityRefiners refiners_;
    PerModality<std::shared_ptr<const specband::BandProjector>> projectors_;
};

namespace specband {
void to_json(nlohmann::json& j, const BandPartition& p);
void from_json(const nlohmann::json& j, BandPartition& p);
}  // namespace specband

}  // namespace bandfuse
