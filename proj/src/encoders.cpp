// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/encoders.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "bandfuse/error.hpp"

namespace bandfuse {

void ModalityConfig::validate() const {
    if (input_dim < 1) throw ParameterError("modality input_dim must be >= 1");
    if (T < 2) throw ParameterError("modality sequence length T must be >= 2");
    if (conv_kernel % 2 == 0) throw ParameterError("conv_kernel must be odd");
}

Tensor sinusoidal_positions(std::size_t T, std::size_t d) {
    static std::mutex mu;
    static std::map<std::pair<std::size_t, std::size_t>, Tensor> cache;
    std::lock_guard lock(mu);
    auto it = cache.find({T, d});
    if (it != cache.end()) return it->second;
    std::vector<Scalar> pe(T * d);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < d; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
            const double angle = static_cast<double>(t) * freq;
            pe[t * d + i] = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    Tensor table = Tensor::matrix(T, d, std::move(pe));
    cache.emplace(std::make_pair(T, d), table);
    return table;
}

TransformerBlock::TransformerBlock(ParameterSet& params, const std::string& name, const EncoderConfig& cfg, Rng& rng)
    : d_(cfg.d), heads_(cfg.heads) {
    if (cfg.heads == 0 || cfg.d % cfg.heads != 0) {
        throw ParameterError("model dim " + std::to_string(cfg.d) + " is not divisible by " + std::to_string(cfg.heads) + " heads");
    }
    ln1_gamma_ = params.add(name + ".ln1.gamma", Tensor::full({d_}, 1, true));
    ln1_beta_ = params.add(name + ".ln1.beta", {d_});
    wq_ = Linear(params, name + ".attn.q", d_, d_, rng);
    wk_ = Linear(params, name + ".attn.k", d_, d_, rng, false);
    wv_ = Linear(params, name + ".attn.v", d_, d_, rng);
    wo_ = Linear(params, name + ".attn.o", d_, d_, rng);
    ln2_gamma_ = params.add(name + ".ln2.gamma", Tensor::full({d_}, 1, true));
    ln2_beta_ = params.add(name + ".ln2.beta", {d_});
    ff1_ = Linear(params, name + ".ff.fc1", d_, cfg.ff_mult * d_, rng);
    ff2_ = Linear(params, name + ".ff.fc2", cfg.ff_mult * d_, d_, rng);
}

Tensor TransformerBlock::operator()(const Tensor& x, std::vector<Tensor>* attention) const {
    const std::size_t dh = d_ / heads_;
    const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    Tensor h = layer_norm_rows(x, ln1_gamma_, ln1_beta_);
    Tensor q = wq_(h), k = wk_(h), v = wv_(h);
    std::vector<Tensor> heads;
    heads.reserve(heads_);
    for (std::size_t i = 0; i < heads_; ++i) {
        Tensor qi = slice(q, 1, i * dh, (i + 1) * dh);
        Tensor ki = slice(k, 1, i * dh, (i + 1) * dh);
        Tensor vi = slice(v, 1, i * dh, (i + 1) * dh);
        Tensor attn = softmax_rows(scale(matmul(qi, transpose(ki)), inv_sqrt));
        if (attention) attention->push_back(attn);
        heads.push_back(matmul(attn, vi));
    }
    Tensor mixed = heads.size() == 1 ? heads.front() : concat(heads, 1);
    Tensor y = add(x, wo_(mixed));

    Tensor f = ff2_(relu(ff1_(layer_norm_rows(y, ln2_gamma_, ln2_beta_))));
    return add(y, f);
}

EncoderStack::EncoderStack(ParameterSet& params, const PerModality<ModalityConfig>& modalities, const EncoderConfig& cfg,
                           Rng& rng)
    : modalities_(modalities), cfg_(cfg) {
    for (Modality m : kModalities) {
        const auto& mc = modalities_[index_of(m)];
        mc.validate();
        const std::string prefix = "encoder.conv." + std::string(modality_name(m));
        const std::size_t fan_in = mc.conv_kernel * mc.input_dim;
        conv_w_[index_of(m)] = params.add(prefix + ".weight", {fan_in, cfg.d});
        init_uniform(conv_w_[index_of(m)], Scalar(1) / std::sqrt(static_cast<Scalar>(fan_in)), rng);
        conv_b_[index_of(m)] = params.add(prefix + ".bias", {cfg.d});
    }
    pointwise_ = Linear(params, "encoder.pointwise", cfg.d, cfg.d, rng);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        blocks_.emplace_back(params, "encoder.block" + std::to_string(l), cfg, rng);
    }
}

Tensor EncoderStack::project(const Tensor& raw, Modality m) const {
    const auto& mc = modalities_[index_of(m)];
    if (raw.rank() != 2 || raw.dim(0) != mc.T || raw.dim(1) != mc.input_dim) {
        throw DimensionError("modality " + std::string(modality_name(m)) + " expects raw features [" +
                             std::to_string(mc.T) + "x" + std::to_string(mc.input_dim) + "], got " + shape_str(raw.shape()));
    }
    Tensor conv = conv1d_same(raw, conv_w_[index_of(m)], conv_b_[index_of(m)], mc.conv_kernel);
    return pointwise_(conv);
}

Tensor EncoderStack::encode(const Tensor& x, std::vector<Tensor>* attention) const {
    if (x.rank() != 2 || x.dim(1) != cfg_.d) {
        throw DimensionError("encode expects [T, " + std::to_string(cfg_.d) + "], got " + shape_str(x.shape()));
    }
    Tensor h = add(x, sinusoidal_positions(x.dim(0), cfg_.d));
    for (const auto& block : blocks_) h = block(h, attention);
    return last_row(h);
}

}  // namespace bandfuse
