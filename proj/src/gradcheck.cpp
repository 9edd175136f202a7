// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bandfuse/data.hpp"
#include "bandfuse/encoders.hpp"
#include "bandfuse/error.hpp"
#include "bandfuse/losses.hpp"
#include "bandfuse/mcm.hpp"
#include "bandfuse/model.hpp"
#include "bandfuse/routing.hpp"
#include "bandfuse/specband.hpp"

namespace bandfuse {

GradCheckReport check_gradients(const std::string& name, const std::function<Tensor()>& loss, ParameterSet& params,
                                const GradCheckOptions& options) {
    if (options.stencil != 2 && options.stencil != 4) throw ParameterError("gradcheck stencil must be 2 or 4");
    GradCheckReport report;
    report.name = name;
    report.tolerance = options.tolerance;

    params.zero_grad();
    backward(loss());
    for (const auto& p : params.items()) {
        Tensor t = p.tensor;
        const std::vector<Scalar> analytic(t.grad().begin(), t.grad().end());
        auto values = t.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const Scalar saved = values[i];
            auto at = [&](double offset) {
                values[i] = saved + static_cast<Scalar>(offset);
                return static_cast<double>(loss().item());
            };
            const double h = options.step;
            double numeric = (at(h) - at(-h)) / (2.0 * h);
            if (options.stencil == 4) numeric = (4.0 * numeric - (at(2 * h) - at(-2 * h)) / (4.0 * h)) / 3.0;
            values[i] = saved;
            const double a = static_cast<double>(analytic[i]);
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
            ++report.entries;
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > options.tolerance) {
                ++report.failing_entries;
                report.max_abs_error_failing = std::max(report.max_abs_error_failing, abs_err);
            }
            if (rel > report.max_rel_error || report.worst.empty()) {
                report.max_rel_error = rel;
                report.worst = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    std::vector<Scalar> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<Scalar>(rng.normal(0.0, scale));
    return Tensor::from(std::move(v), std::move(shape));
}

std::vector<GradCheckReport> numcore_checks(std::uint64_t seed, const GradCheckOptions& o) {
    Rng rng = Rng(seed).substream("gradcheck.numcore");
    std::vector<GradCheckReport> out;
    ParameterSet ps;
    Tensor a = ps.add("a", random_tensor({3, 4}, rng));
    Tensor b = ps.add("b", random_tensor({4, 2}, rng));
    Tensor v = ps.add("v", random_tensor({5}, rng));
    Tensor pos = ps.add("pos", Tensor::vector({0.5, 1.5, 0.7, 2.0, 1.1}));
    Tensor g = ps.add("gamma", random_tensor({4}, rng));
    Tensor be = ps.add("beta", random_tensor({4}, rng));
    Tensor cw = ps.add("conv.w", random_tensor({3 * 4, 2}, rng));
    Tensor cb = ps.add("conv.b", random_tensor({2}, rng));

    auto sub_check = [&](const std::string& name, std::function<Tensor()> f) {
        out.push_back(check_gradients("numcore." + name, f, ps, o));
    };
    sub_check("matmul", [&] { return sum(square(matmul(a, b))); });
    sub_check("relu_mean", [&] { return mean(relu(matmul(a, b))); });
    sub_check("transpose_slice_concat", [&] {
        Tensor joined = concat({row(a, 0), row(a, 2)}, 0);
        return add(sum(square(slice(transpose(a), 0, 1, 3))), sum(mul(joined, Tensor::vector({1, 2, 3, 4, 5, 6, 7, 8}))));
    });
    sub_check("axis_reductions", [&] {
        return add(sum(square(sum_axis(a, 0))), sum(square(mean_axis(a, 1))));
    });
    sub_check("pool_last", [&] { return add(sum(square(mean_pool_time(a))), sum(exp(last_row(a)))); });
    sub_check("softmax_temp", [&] { return sum(mul(softmax_temp(v, 0.7), Tensor::vector({1, -2, 3, 0.5, -1}))); });
    sub_check("softmax_rows", [&] { return sum(mul(softmax_rows(a), a)); });
    sub_check("l2_normalize", [&] { return sum(mul(l2_normalize(v), Tensor::vector({1, -2, 3, 0.5, -1}))); });
    sub_check("log_exp_xlogx", [&] { return add(sum(log(pos)), add(sum(xlogx(pos)), mean(exp(v)))); });
    sub_check("layer_norm", [&] { return sum(mul(layer_norm_rows(a, g, be), a)); });
    sub_check("conv1d", [&] { return sum(square(conv1d_same(a, cw, cb, 3))); });
    sub_check("mse", [&] { return mse(v, pos); });
    sub_check("cross_entropy", [&] { return cross_entropy_with_logits(v, 2); });
    sub_check("weighted_mask", [&] {
        Tensor alpha = softmax(slice(v, 0, 0, 3));
        Tensor ah = masked_renormalize(alpha, {1, 0, 1}, Scalar(1e-8));
        return add(sum(square(weighted_sum({row(a, 0), row(a, 1), row(a, 2)}, ah))), sum(square(alpha)));
    });
    return out;
}

std::vector<GradCheckReport> specband_checks(std::uint64_t seed, const GradCheckOptions& o) {
    Rng rng = Rng(seed).substream("gradcheck.specband");
    ParameterSet ps;
    const std::size_t T = 7, d = 3;
    Tensor X = ps.add("X", random_tensor({T, d}, rng));
    auto basis = specband::BasisCache::global().get(T);
    specband::BandProjector proj(basis, specband::equidistant_partition(T, 3));
    Tensor weights = random_tensor({T, d}, rng);
    return {check_gradients(
        "specband.decompose",
        [&] {
            auto bd = proj.decompose(X);
            Tensor loss = sum(mul(bd.components[0], weights));
            loss = add(loss, sum(square(bd.components[1])));
            return add(loss, scale(sum(bd.components[2]), 0.5));
        },
        ps, o)};
}

std::vector<GradCheckReport> encoder_checks(std::uint64_t seed, const GradCheckOptions& o) {
    Rng rng = Rng(seed).substream("gradcheck.encoders");
    ParameterSet ps;
    PerModality<ModalityConfig> mods;
    for (Modality m : kModalities) mods[index_of(m)] = ModalityConfig{m, 3, 6, 3};
    EncoderStack enc(ps, mods, EncoderConfig{8, 1, 2, 2}, rng);
    PerModality<Tensor> raw;
    for (auto& r : raw) r = random_tensor({6, 3}, rng);
    Tensor probe = random_tensor({8}, rng);
    return {check_gradients(
        "encoders.project_encode",
        [&] {
            Tensor loss = Tensor::scalar(0);
            for (Modality m : kModalities) loss = add(loss, sum(mul(enc.encode(enc.project(raw[index_of(m)], m)), probe)));
            return loss;
        },
        ps, o)};
}

std::vector<GradCheckReport> routing_checks(std::uint64_t seed, const GradCheckOptions& o) {
    Rng rng = Rng(seed).substream("gradcheck.routing");
    ParameterSet ps;
    const std::size_t d = 6, T = 6;
    BandRouter router(ps, "band", BandRouterConfig{3, d, 8, 1.0, 0.15}, rng);
    ModalityRouter mrouter(ps, "modality", ModalityRouterConfig{3 * d, 8, 1.0, RoutingPath::PostAttention}, rng);
    FusionHead head(ps, "fusion", d, 1, rng);
    Tensor X = ps.add("X", random_tensor({T, d}, rng));
    PerModality<Tensor> deep;
    for (Modality m : kModalities) deep[index_of(m)] = ps.add("H." + std::string(modality_name(m)), random_tensor({d}, rng));
    specband::BandProjector proj(specband::BasisCache::global().get(T), specband::equidistant_partition(T, 3));
    return {check_gradients(
        "routing.band_modality_fuse",
        [&] {
            Rng mask_rng(seed, 0);
            auto routed = band_route(proj.decompose(X).components, router, false, mask_rng);
            Tensor w = route_modalities(build_decision_vector(RoutingPath::PostAttention, deep, deep), mrouter);
            auto fused = fuse(w, deep, head);
            Tensor loss = add(sum(square(fused.prediction)), mean(mul(routed.enhanced, X)));
            return add(loss, add(sum(square(routed.alpha)), sum(square(w))));
        },
        ps, o)};
}

std::vector<GradCheckReport> mcm_checks(std::uint64_t seed, const GradCheckOptions& o) {
    Rng rng = Rng(seed).substream("gradcheck.mcm");
    ParameterSet ps;
    const std::size_t d = 6;
    BimodalBranches branches(ps, "branch", d, 8, 1, rng);
    ModalityRefiners refiners(ps, "refine", d, rng);
    PerModality<Tensor> deep;
    for (Modality m : kModalities) deep[index_of(m)] = ps.add("H." + std::string(modality_name(m)), random_tensor({d}, rng));
    Tensor logits = ps.add("w_logits", random_tensor({3}, rng));
    Tensor student = ps.add("student", random_tensor({d}, rng));
    const Tensor p_fixed = Tensor::vector({0.5, 0.3, 0.2});
    const Teacher teacher{random_tensor({d}, rng)};
    return {check_gradients(
        "mcm.branches_kl_refine_distill",
        [&] {
            Tensor loss = Tensor::scalar(0);
            for (Modality m : kModalities) {
                loss = add(loss, sum(square(bimodal_predict(deep, m, branches))));
                loss = add(loss, sum(square(refine_modality(deep[index_of(m)], refiners.mlp(m)))));
            }
            loss = add(loss, kl_routing_loss(p_fixed, softmax(logits)));
            return add(loss, distill_loss(student, teacher));
        },
        ps, o)};
}

std::vector<GradCheckReport> losses_checks(std::uint64_t seed, const GradCheckOptions& o) {
    Rng rng = Rng(seed).substream("gradcheck.losses");
    ParameterSet ps;
    std::vector<Tensor> preds, logits;
    std::vector<PerModality<Tensor>> uni, bi;
    std::vector<Label> labels;
    for (std::size_t i = 0; i < 3; ++i) {
        preds.push_back(ps.add("multi." + std::to_string(i), random_tensor({1}, rng)));
        PerModality<Tensor> u, b;
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            u[m] = ps.add("uni." + std::to_string(i) + "." + std::to_string(m), random_tensor({1}, rng));
            b[m] = ps.add("bi." + std::to_string(i) + "." + std::to_string(m), random_tensor({1}, rng));
        }
        uni.push_back(u);
        bi.push_back(b);
        labels.push_back(Label{rng.uniform(-3, 3), 0});
        logits.push_back(ps.add("w." + std::to_string(i), random_tensor({3}, rng)));
    }
    return {check_gradients(
        "losses.task_entropy",
        [&] {
            std::vector<Tensor> rows;
            for (const auto& l : logits) rows.push_back(softmax(l));
            return add(task_loss(preds, uni, bi, labels, TaskType::Regression, 1.0).total, entropy_reg(rows));
        },
        ps, o)};
}

std::vector<GradCheckReport> model_checks(std::uint64_t seed, const GradCheckOptions& o) {
    GeneratorSpec spec;
    spec.n_train = 2;
    spec.n_val = 0;
    spec.n_test = 0;
    spec.seed = seed;
    for (auto& m : spec.modalities) {
        m.T = 6;
        m.input_dim = 3;
    }
    spec.modalities[2].cue_band = 2;
    spec.modalities[2].factor = Latent::Z2;
    const Corpus corpus = generate(spec);

    RunConfig cfg;
    cfg.seed = seed;
    cfg.model.d = 8;
    cfg.model.hidden = 8;
    cfg.model.K = 3;
    cfg.model.layers = 1;
    cfg.model.heads = 2;
    cfg.model.ff_mult = 2;
    Model model(cfg, ModelInputs::from_spec(spec));
    model.fit_partitions(corpus.train);
    // Move off the all-zero bias initialization so no ReLU sits at its kink.
    Rng jitter = Rng(seed).substream("gradcheck.model.jitter");
    for (const auto& p : model.params().items()) {
        if (!p.name.ends_with(".bias") && !p.name.ends_with(".beta")) continue;
        Tensor t = p.tensor;
        for (auto& v : t.mutable_values()) v += static_cast<Scalar>(jitter.normal(0.0, 0.5));
    }
    std::vector<const Sample*> batch;
    for (const auto& s : corpus.train) batch.push_back(&s);

    std::vector<DetachedTargets> frozen;
    {
        NoGradGuard no_grad;
        const auto base = model.forward_pass(batch, false, 0);
        for (const auto& f : base.samples) frozen.push_back(DetachedTargets{f.p_comp, f.teacher.feature});
    }
    auto term = [&](const std::string& name, std::function<Tensor(const BatchForward&)> pick) {
        return check_gradients("model." + name, [&] { return pick(model.forward_pass(batch, false, 0, &frozen)); },
                               model.params(), o);
    };
    return {term("task", [](const BatchForward& b) { return b.terms.task.total; }),
            term("ety", [](const BatchForward& b) { return b.terms.ety; }),
            term("band", [](const BatchForward& b) { return b.terms.band_ety; }),
            term("mcm", [](const BatchForward& b) { return b.terms.mcm; }),
            term("distill", [](const BatchForward& b) { return b.terms.distill; }),
            term("total", [](const BatchForward& b) { return b.total; })};
}

}  // namespace

std::vector<std::string> gradcheck_modules() { return {"numcore", "specband", "encoders", "routing", "mcm", "losses", "model"}; }

std::vector<GradCheckReport> run_gradcheck(const std::string& module, std::uint64_t seed, const GradCheckOptions& options) {
    std::vector<GradCheckReport> out;
    auto append = [&out](std::vector<GradCheckReport> r) { out.insert(out.end(), r.begin(), r.end()); };
    bool matched = false;
    auto want = [&](const char* name) {
        const bool w = module.empty() || module == name;
        matched = matched || w;
        return w;
    };
    if (want("numcore")) append(numcore_checks(seed, options));
    if (want("specband")) append(specband_checks(seed, options));
    if (want("encoders")) append(encoder_checks(seed, options));
    if (want("routing")) append(routing_checks(seed, options));
    if (want("mcm")) append(mcm_checks(seed, options));
    if (want("losses")) append(losses_checks(seed, options));
    if (want("model")) append(model_checks(seed, options));
    if (!matched) throw ParameterError("unknown gradcheck module '" + module + "'");
    return out;
}

}  // namespace bandfuse
