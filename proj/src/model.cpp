// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/model.hpp"

#include <algorithm>

#include "bandfuse/error.hpp"
#include "bandfuse/ops.hpp"

namespace bandfuse {

namespace {

constexpr std::uint64_t kMaskTag = 0x6d61'736bULL;  // "mask"

std::vector<double> to_doubles(const Tensor& t) {
    const auto v = t.values();
    return {v.begin(), v.end()};
}

}  // namespace

ModelInputs ModelInputs::from_spec(const GeneratorSpec& spec) {
    ModelInputs in;
    for (Modality m : kModalities) {
        in.T[index_of(m)] = spec.modalities[index_of(m)].T;
        in.input_dim[index_of(m)] = spec.modalities[index_of(m)].input_dim;
    }
    in.task = spec.task;
    in.num_classes = spec.task == TaskType::Classification ? spec.num_classes : 1;
    return in;
}

void to_json(nlohmann::json& j, const ModelInputs& m) {
    j = {{"T", m.T}, {"input_dim", m.input_dim}, {"task", task_type_name(m.task)}, {"num_classes", m.num_classes}};
}

void from_json(const nlohmann::json& j, ModelInputs& m) {
    m.T = j.at("T").get<PerModality<std::size_t>>();
    m.input_dim = j.at("input_dim").get<PerModality<std::size_t>>();
    m.task = task_type_from_name(j.at("task").get<std::string>());
    m.num_classes = j.at("num_classes").get<std::size_t>();
}

namespace specband {

void to_json(nlohmann::json& j, const BandPartition& p) {
    j = {{"K", p.K}, {"boundaries", p.boundaries}, {"energy_profile", p.energy_profile}};
}

void from_json(const nlohmann::json& j, BandPartition& p) {
    p.K = j.at("K").get<std::size_t>();
    p.boundaries = j.at("boundaries").get<std::vector<std::size_t>>();
    p.energy_profile = j.value("energy_profile", std::vector<double>{});
    p.validate();
}

}  // namespace specband

Model::Model(const RunConfig& config, const ModelInputs& inputs)
    : config_(config), inputs_(inputs), weights_(config.effective_loss()) {
    config_.validate();
    const auto& mc = config_.model;
    for (Modality m : kModalities) {
        if (inputs_.T[index_of(m)] < mc.K) {
            throw ParameterError("modality " + std::string(modality_name(m)) + " has T=" +
                                 std::to_string(inputs_.T[index_of(m)]) + " < K=" + std::to_string(mc.K));
        }
    }
    if (inputs_.output_dim() == 0) throw ParameterError("model output dimension must be positive");

    Rng rng = Rng(config_.seed).substream("init");
    PerModality<ModalityConfig> mods;
    for (Modality m : kModalities) {
        mods[index_of(m)] = ModalityConfig{m, inputs_.input_dim[index_of(m)], inputs_.T[index_of(m)], mc.conv_kernel};
    }
    encoder_ = EncoderStack(params_, mods, EncoderConfig{mc.d, mc.layers, mc.heads, mc.ff_mult}, rng);
    if (mc.use_sbn) {
        for (Modality m : kModalities) {
            band_routers_[index_of(m)] = BandRouter(params_, "router.band." + std::string(modality_name(m)),
                                                    BandRouterConfig{mc.K, mc.d, mc.hidden, mc.tau_band, mc.mask_rate}, rng);
        }
    }
    modality_router_ = ModalityRouter(params_, "router.modality",
                                      ModalityRouterConfig{kNumModalities * mc.d, mc.hidden, mc.tau_modality, mc.path}, rng);
    fusion_ = FusionHead(params_, "fusion", mc.d, inputs_.output_dim(), rng);
    for (Modality m : kModalities) {
        unimodal_heads_[index_of(m)] =
            Mlp(params_, "unimodal." + std::string(modality_name(m)), mc.d, mc.hidden, inputs_.output_dim(), rng);
    }
    if (mc.use_mcm) {
        branches_ = BimodalBranches(params_, "mcm.branch", mc.d, mc.hidden, inputs_.output_dim(), rng);
        refiners_ = ModalityRefiners(params_, "mcm.refine", mc.d, rng);
    }
}

void Model::fit_partitions(std::span<const Sample> train) {
    if (train.empty()) throw ParameterError("cannot fit band partitions on an empty training split");
    NoGradGuard no_grad;
    PerModality<specband::BandPartition> parts;
    for (Modality m : kModalities) {
        auto basis = specband::BasisCache::global().get(inputs_.T[index_of(m)]);
        specband::EnergyAccumulator acc(basis);
        for (const auto& s : train) acc.add(encoder_.project(s.features[index_of(m)], m));
        parts[index_of(m)] = specband::equal_energy_partition(acc.profile(), config_.model.K);
    }
    set_partitions(parts);
}

void Model::set_partitions(const PerModality<specband::BandPartition>& partitions) {
    for (Modality m : kModalities) {
        const auto& p = partitions[index_of(m)];
        p.validate();
        if (p.K != config_.model.K || p.T() != inputs_.T[index_of(m)]) {
            throw DimensionError("band partition for modality " + std::string(modality_name(m)) +
                                 " does not match K=" + std::to_string(config_.model.K) +
                                 ", T=" + std::to_string(inputs_.T[index_of(m)]));
        }
        projectors_[index_of(m)] = std::make_shared<const specband::BandProjector>(
            specband::BasisCache::global().get(p.T()), p);
    }
}

const specband::BandPartition& Model::partition(Modality m) const {
    if (!has_partitions()) throw ParameterError("band partitions have not been fitted");
    return projectors_[index_of(m)]->partition();
}

SampleForward Model::forward_sample(const Sample& sample, bool training, std::uint64_t step,
                                    const DetachedTargets* frozen) const {
    const auto& mc = config_.model;
    if (mc.use_sbn && !has_partitions()) throw ParameterError("band partitions must be frozen before the forward pass");
    SampleForward f;
    PerModality<Tensor> pooled;
    for (Modality m : kModalities) {
        const auto mi = index_of(m);
        f.projected[mi] = encoder_.project(sample.features[mi], m);
        if (mc.use_sbn) {
            const auto bands = projectors_[mi]->decompose(f.projected[mi]);
            Rng mask_rng = Rng(config_.seed).substream({kMaskTag, step, sample.id, mi});
            auto routed = band_route(bands.components, band_routers_[mi], training, mask_rng);
            f.alpha[mi] = routed.alpha;
            f.alpha_hat[mi] = routed.alpha_hat;
            f.enhanced[mi] = routed.enhanced;
        } else {
            f.enhanced[mi] = f.projected[mi];
        }
        pooled[mi] = mean_pool_time(f.enhanced[mi]);
        f.deep[mi] = encoder_.encode(f.enhanced[mi]);
    }
    f.decision = build_decision_vector(mc.path, pooled, f.deep);
    f.w = route_modalities(f.decision, modality_router_);
    f.fusion = fuse(f.w, f.deep, fusion_);
    for (Modality m : kModalities) f.unimodal[index_of(m)] = unimodal_heads_[index_of(m)](f.deep[index_of(m)]);

    if (mc.use_mcm) {
        PerModality<Tensor> excluded_losses;
        for (Modality m : kModalities) {
            f.bimodal[index_of(m)] = bimodal_predict(f.deep, m, branches_);
            f.refined[index_of(m)] = refine_modality(f.deep[index_of(m)], refiners_.mlp(m));
            excluded_losses[index_of(m)] = criterion(f.bimodal[index_of(m)], sample.label, inputs_.task);
        }
        const Tensor full_loss = criterion(f.fusion.prediction, sample.label, inputs_.task);
        f.signal = complementarity_distribution(excluded_losses, full_loss, mc.tau_comp);
        f.p_comp = frozen ? frozen->p_comp : f.signal->target;
        f.kl = kl_routing_loss(f.p_comp, f.w);
        f.teacher = frozen ? Teacher{frozen->teacher} : build_teacher(f.w, f.refined);
        f.distill = distill_loss(f.fusion.refined, f.teacher);
    }
    return f;
}

BatchForward Model::forward_pass(std::span<const Sample* const> batch, bool training, std::uint64_t step,
                                 const std::vector<DetachedTargets>* frozen) const {
    if (batch.empty()) throw ParameterError("forward_pass on an empty batch");
    if (frozen && frozen->size() != batch.size()) throw DimensionError("frozen targets must match the batch size");
    const auto& mc = config_.model;
    BatchForward out;
    out.samples.reserve(batch.size());
    std::vector<Tensor> pred_multi, w_rows, kl, distill;
    std::vector<PerModality<Tensor>> preds_uni, preds_bi;
    PerModality<std::vector<Tensor>> alpha_rows;
    std::vector<Label> labels;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample* s = batch[i];
        out.samples.push_back(forward_sample(*s, training, step, frozen ? &(*frozen)[i] : nullptr));
        const auto& f = out.samples.back();
        pred_multi.push_back(f.fusion.prediction);
        preds_uni.push_back(f.unimodal);
        if (mc.use_mcm) {
            preds_bi.push_back(f.bimodal);
            kl.push_back(reshape(f.kl, {1}));
            distill.push_back(reshape(f.distill, {1}));
        }
        w_rows.push_back(f.w);
        if (mc.use_sbn) {
            for (std::size_t m = 0; m < kNumModalities; ++m) alpha_rows[m].push_back(f.alpha[m]);
        }
        labels.push_back(s->label);

        SampleDiagnostics d;
        d.sample_id = s->id;
        if (mc.use_sbn) {
            for (std::size_t m = 0; m < kNumModalities; ++m) d.alpha[m] = to_doubles(f.alpha[m]);
        }
        for (std::size_t m = 0; m < kNumModalities; ++m) d.w[m] = static_cast<double>(f.w[m]);
        if (f.signal) {
            d.has_signal = true;
            d.importance = f.signal->importance;
            for (std::size_t m = 0; m < kNumModalities; ++m) d.p_comp[m] = static_cast<double>(f.p_comp[m]);
        }
        d.prediction = to_doubles(f.fusion.prediction);
        d.label = s->label.value;
        out.diagnostics.push_back(std::move(d));
    }

    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch.size());
    out.terms.task = task_loss(pred_multi, preds_uni, preds_bi, labels, inputs_.task, weights_.sub);
    out.terms.ety = entropy_reg(w_rows);
    if (mc.use_sbn) {
        Tensor band = entropy_reg(alpha_rows[0]);
        for (std::size_t m = 1; m < kNumModalities; ++m) band = add(band, entropy_reg(alpha_rows[m]));
        out.terms.band_ety = scale(band, Scalar(1) / Scalar(kNumModalities));
    }
    if (mc.use_mcm) {
        out.terms.mcm = scale(sum(concat(kl, 0)), inv_b);
        out.terms.distill = scale(sum(concat(distill, 0)), inv_b);
    }
    out.total = total_loss(out.terms, weights_);
    out.bundle = summarize(out.terms, out.total);
    return out;
}

double Model::decode_prediction(const Tensor& prediction) const {
    const auto v = prediction.values();
    if (inputs_.task == TaskType::Regression) return static_cast<double>(v[0]);
    return static_cast<double>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

}  // namespace bandfuse
