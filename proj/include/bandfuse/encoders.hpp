// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "bandfuse/modality.hpp"
#include "bandfuse/nn.hpp"

namespace bandfuse {

struct ModalityConfig {
    Modality modality = Modality::L;
    std::size_t input_dim = 1;
    std::size_t T = 2;
    std::size_t conv_kernel = 3;

    void validate() const;
};

struct EncoderConfig {
    std::size_t d = 32;
    std::size_t layers = 1;
    std::size_t heads = 2;
    std::size_t ff_mult = 4;
};

/// Fixed sinusoidal table: PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(...).
Tensor sinusoidal_positions(std::size_t T, std::size_t d);

/// Pre-norm self-attention block: x + MHA(LN(x)), then x + FFN(LN(x)).
class TransformerBlock {
public:
    TransformerBlock() = default;
    TransformerBlock(ParameterSet& params, const std::string& name, const EncoderConfig& cfg, Rng& rng);

    /// When `attention` is non-null, per-head [T, T] attention maps are appended to it.
    Tensor operator()(const Tensor& x, std::vector<Tensor>* attention = nullptr) const;

    const Linear& query() const { return wq_; }
    const Linear& key() const { return wk_; }
    const Linear& value() const { return wv_; }
    const Linear& output() const { return wo_; }
    const Linear& ff_in() const { return ff1_; }
    const Linear& ff_out() const { return ff2_; }

private:
    std::size_t d_ = 0, heads_ = 0;
    Tensor ln1_gamma_, ln1_beta_, ln2_gamma_, ln2_beta_;
    Linear wq_, wk_, wv_, wo_, ff1_, ff2_;
};

/// Per-modality temporal convolutions, one pointwise transform shared by all
/// modalities, and a transformer encoder summarizing each sequence by its
/// final position.
class EncoderStack {
public:
    EncoderStack() = default;
    EncoderStack(ParameterSet& params, const PerModality<ModalityConfig>& modalities, const EncoderConfig& cfg, Rng& rng);

    /// raw [T_m, input_dim] -> X_m [T_m, d].
    Tensor project(const Tensor& raw, Modality m) const;
    /// X~ [T, d] -> H [d], the encoder output at the last time step.
    Tensor encode(const Tensor& x, std::vector<Tensor>* attention = nullptr) const;

    std::size_t d() const { return cfg_.d; }
    const ModalityConfig& modality(Modality m) const { return modalities_[index_of(m)]; }
    const Tensor& conv_weight(Modality m) const { return conv_w_[index_of(m)]; }
    const Tensor& conv_bias(Modality m) const { return conv_b_[index_of(m)]; }
    const Linear& pointwise() const { return pointwise_; }
    const std::vector<TransformerBlock>& blocks() const { return blocks_; }

private:
    PerModality<ModalityConfig> modalities_{};
    EncoderConfig cfg_{};
    PerModality<Tensor> conv_w_, conv_b_;
    Linear pointwise_;
    std::vector<TransformerBlock> blocks_;
};

}  // namespace bandfuse
