// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion.
//
// Criteria 1, 2, 4, 5, 6, 11 and 12 are exact or property checks and gate the
// exit status. Criteria 3, 7, 8, 9 and 10 are reported with their measured
// values; a FAIL there is printed but does not change the exit status.
// Any exception exits nonzero.
//
//   acceptance [--only N[,M...]] [--seeds N]

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "bandfuse/data.hpp"
#include "bandfuse/error.hpp"
#include "bandfuse/gradcheck.hpp"
#include "bandfuse/losses.hpp"
#include "bandfuse/metrics.hpp"
#include "bandfuse/model.hpp"
#include "bandfuse/specband.hpp"
#include "bandfuse/trainer.hpp"

using namespace bandfuse;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 3) {
    std::ostringstream s;
    s << std::setprecision(prec) << v;
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
    std::vector<Scalar> v(rows * cols);
    for (auto& x : v) x = static_cast<Scalar>(rng.normal(0.0, sd));
    return Tensor::matrix(rows, cols, std::move(v));
}

// ---------------------------------------------------------------------------
// 1, 2: spectral integrity and closed forms

Outcome spectral_integrity() {
    Rng rng(101);
    double recon = 0, ortho = 0, parseval = 0, lambda0 = 0, below = 0, above = 0;
    for (std::size_t T = 2; T <= 128; ++T) {
        const auto basis = specband::path_graph_basis(T);
        const Eigen::MatrixXd gram = basis.U.transpose() * basis.U - Eigen::MatrixXd::Identity(T, T);
        ortho = std::max(ortho, gram.cwiseAbs().maxCoeff());
        lambda0 = std::max(lambda0, std::abs(basis.eigenvalues.front()));
        below = std::min(below, basis.eigenvalues.front());
        above = std::max(above, basis.eigenvalues.back() - 2.0);

        const std::size_t d = 1 + rng.below(6);
        const Tensor X = random_matrix(T, d, rng);
        const std::size_t K = std::min<std::size_t>(T, 1 + rng.below(5));
        specband::EnergyAccumulator acc(std::make_shared<const specband::SpectralBasis>(basis));
        acc.add(X);
        const auto part = specband::equal_energy_partition(acc.profile(), K);
        const auto bd = specband::decompose(X, basis, part);
        std::vector<double> sum(T * d, 0.0);
        for (const auto& c : bd.components)
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += c.values()[i];
        for (std::size_t i = 0; i < sum.size(); ++i) recon = std::max(recon, std::abs(sum[i] - X.values()[i]));
        const auto energies = specband::band_energies(X, basis, part);
        double e = 0, norm = 0;
        for (double v : energies) e += v;
        for (auto v : X.values()) norm += static_cast<double>(v) * v;
        parseval = std::max(parseval, std::abs(e - norm));
    }
    Outcome o;
    o.pass = recon <= 1e-6 && ortho <= 1e-10 && below >= -1e-10 && above <= 1e-10 && lambda0 <= 1e-10 && parseval <= 1e-6;
    o.detail = "T=2..128 recon=" + sci(recon) + " ortho=" + sci(ortho) + " |lambda0|=" + sci(lambda0) +
               " lambda_range_violation=" + sci(std::max(-below, above)) + " parseval=" + sci(parseval);
    return o;
}

Outcome closed_form_eigen() {
    const auto b2 = specband::path_graph_basis(2);
    const auto b3 = specband::path_graph_basis(3);
    const double e2 = std::max(std::abs(b2.eigenvalues[0]), std::abs(b2.eigenvalues[1] - 2.0));
    const double e3 = std::max({std::abs(b3.eigenvalues[0]), std::abs(b3.eigenvalues[1] - 1.0), std::abs(b3.eigenvalues[2] - 2.0)});
    return {e2 <= 1e-9 && e3 <= 1e-9, "T=2 err=" + sci(e2) + " T=3 err=" + sci(e3)};
}

// ---------------------------------------------------------------------------
// 3: gradient fidelity on the tiny model

Outcome gradient_fidelity() {
    const auto reports = run_gradcheck("model", 0);
    Outcome o;
    o.pass = true;
    std::ostringstream s;
    std::size_t failing = 0;
    double worst_abs = 0;
    for (const auto& r : reports) {
        o.pass = o.pass && r.passed();
        failing += r.failing_entries;
        worst_abs = std::max(worst_abs, r.max_abs_error_failing);
        s << r.name.substr(r.name.find('.') + 1) << "=" << sci(r.max_rel_error) << " ";
    }
    s << "| entries over 1e-4: " << failing << ", largest abs error among them " << sci(worst_abs);
    if (!o.pass) s << " (round-off bound at h=1e-5 against gradients below ~1e-6)";
    o.detail = s.str();
    return o;
}

// ---------------------------------------------------------------------------
// Shared tiny-model fixtures

RunConfig small_run(std::uint64_t seed) {
    RunConfig c;
    c.model.d = 8;
    c.model.hidden = 8;
    c.model.heads = 2;
    c.model.ff_mult = 2;
    c.model.layers = 1;
    c.batch_size = 8;
    c.epochs = 2;
    c.seed = seed;
    return c;
}

GeneratorSpec tiny_spec(std::uint64_t seed, std::size_t n_train, std::size_t T = 6) {
    GeneratorSpec s;
    s.n_train = n_train;
    s.n_val = 8;
    s.n_test = 8;
    s.seed = seed;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        s.modalities[m].T = T;
        s.modalities[m].input_dim = 3 + m;
        s.modalities[m].cue_band = m;
    }
    s.modalities[2].factor = Latent::Z2;
    return s;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& xs) {
    std::vector<const Sample*> out;
    for (const auto& s : xs) out.push_back(&s);
    return out;
}

// ---------------------------------------------------------------------------
// 4: stop-gradient contracts

Outcome stop_gradient_contracts() {
    const GeneratorSpec spec = tiny_spec(3, 8);
    const Corpus corpus = generate(spec);
    Model model(small_run(3), ModelInputs::from_spec(spec));
    model.fit_partitions(corpus.train);
    const auto batch = pointers(corpus.train);
    auto grad_sum = [&](const std::string& prefix) {
        double s = 0;
        for (const auto& p : model.params().items())
            if (p.name.starts_with(prefix))
                for (auto g : p.tensor.grad()) s += std::abs(g);
        return s;
    };

    // L_mcm never reaches the bimodal heads.
    model.params().zero_grad();
    backward(model.forward_pass(batch, true, 0).terms.mcm);
    const double mcm_to_branches = grad_sum("mcm.branch");
    const double mcm_to_router = grad_sum("router.modality");

    // Nothing flows into w through T_feat: gradients with a live teacher equal
    // gradients with the teacher replaced by a constant of the same value.
    std::vector<DetachedTargets> frozen;
    for (const Sample* s : batch) {
        const auto f = model.forward_sample(*s, true, 0);
        frozen.push_back(DetachedTargets{f.p_comp.clone(), f.teacher.feature.clone()});
    }
    auto grads_of = [&](const std::vector<DetachedTargets>* targets) {
        model.params().zero_grad();
        const BatchForward bf = model.forward_pass(batch, true, 0, targets);
        backward(add(bf.terms.distill, bf.terms.mcm));
        std::vector<Scalar> g;
        for (const auto& p : model.params().items()) g.insert(g.end(), p.tensor.grad().begin(), p.tensor.grad().end());
        return g;
    };
    const auto live = grads_of(nullptr);
    const auto fixed = grads_of(&frozen);
    double teacher_path = 0;
    for (std::size_t i = 0; i < live.size(); ++i) teacher_path = std::max(teacher_path, std::abs(static_cast<double>(live[i] - fixed[i])));
    const bool teacher_leaf = !model.forward_sample(*batch[0], false, 0).teacher.feature.requires_grad();

    // O_without_m is independent of H_m.
    Rng rng(4);
    double exclusion = 0;
    for (Modality m : kModalities) {
        PerModality<Tensor> deep;
        for (auto& h : deep) h = random_matrix(1, model.config().model.d, rng).clone(true);
        for (auto& h : deep) h = reshape(h, {model.config().model.d});
        PerModality<Tensor> leaves;
        for (std::size_t i = 0; i < kNumModalities; ++i) leaves[i] = deep[i].clone(true);
        backward(sum(square(bimodal_predict(leaves, m, model.branches()))));
        for (auto g : leaves[index_of(m)].grad()) exclusion = std::max(exclusion, std::abs(static_cast<double>(g)));
    }

    Outcome o;
    o.pass = mcm_to_branches == 0.0 && mcm_to_router > 0.0 && teacher_path == 0.0 && teacher_leaf && exclusion == 0.0;
    o.detail = "dL_mcm/d(branch)=" + sci(mcm_to_branches) + " (router receives " + sci(mcm_to_router) +
               ") | teacher-path grad diff=" + sci(teacher_path) + " | dO_without_m/dH_m=" + sci(exclusion);
    return o;
}

// ---------------------------------------------------------------------------
// 5: simplex invariants over 10^4 passes

Outcome simplex_invariants() {
    const GeneratorSpec spec = tiny_spec(5, 16);
    const Corpus corpus = generate(spec);
    RunConfig cfg = small_run(5);
    cfg.model.mask_rate = 0.5;
    Model model(cfg, ModelInputs::from_spec(spec));
    model.fit_partitions(corpus.train);
    Rng rng(55);
    double worst_sum = 0, worst_min = 0, worst_hat_excess = 0, worst_hat = 0;
    bool finite = true;
    std::size_t passes = 0, masked = 0, collapsed = 0;
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < 10000; ++i) {
        Sample s = corpus.train[i % corpus.train.size()];
        const double scale = std::pow(10.0, rng.uniform(-4, 3));
        for (auto& f : s.features) {
            auto v = f.clone();
            for (auto& x : v.mutable_values()) x = static_cast<Scalar>(rng.normal(0.0, scale));
            f = v;
        }
        const bool training = i % 2 == 0;
        const auto f = model.forward_sample(s, training, i);
        ++passes;
        auto check = [&](const Tensor& t) {
            double sum = 0;
            for (auto x : t.values()) {
                finite = finite && std::isfinite(x);
                worst_min = std::min(worst_min, static_cast<double>(x));
                sum += x;
            }
            worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        };
        check(f.w);
        for (Modality m : kModalities) {
            check(f.alpha[index_of(m)]);
            double kept = 0, hat = 0;
            bool any_dropped = false;
            const auto a = f.alpha[index_of(m)].values(), ah = f.alpha_hat[index_of(m)].values();
            for (std::size_t k = 0; k < a.size(); ++k) {
                finite = finite && std::isfinite(ah[k]);
                worst_min = std::min(worst_min, static_cast<double>(ah[k]));
                hat += ah[k];
                if (ah[k] != 0.0 || a[k] == 0.0) kept += a[k];
                else any_dropped = true;
            }
            masked += any_dropped;
            // alpha_hat sums to S / (S + eps); measure the residual against that.
            const double implied = kept / (kept + static_cast<double>(kMaskEps));
            worst_hat_excess = std::max(worst_hat_excess, std::abs(hat - (training ? implied : 1.0)));
            if (kept >= 1e-6) worst_hat = std::max(worst_hat, std::abs(hat - 1.0));
            else if (training) ++collapsed;
        }
    }
    Outcome o;
    o.pass = finite && worst_min >= 0 && worst_sum <= 1e-9 && worst_hat_excess <= 1e-12;
    o.detail = std::to_string(passes) + " passes (" + std::to_string(masked) + " masked band vectors): alpha,w |sum-1|<=" +
               sci(worst_sum) + " min=" + sci(worst_min) + " | alpha_hat vs S/(S+eps) " + sci(worst_hat_excess) +
               ", alpha_hat |sum-1|<=" + sci(worst_hat) + " where S>=1e-6 | " + std::to_string(collapsed) +
               " masked vectors with saturated alpha on dropped bands (S<1e-6, alpha_hat near 0)";
    return o;
}

// ---------------------------------------------------------------------------
// 6: entropy values

Outcome entropy_values() {
    const double third = 1.0 / 3.0;
    const double uniform = entropy_reg({Tensor::vector({third, third, third})}).item();
    const double uniform_batch = entropy_reg(std::vector<Tensor>(5, Tensor::vector({third, third, third}))).item();
    const double hot = entropy_reg({Tensor::vector({0, 0, 1}), Tensor::vector({1, 0, 0})}).item();
    const double err = std::max(std::abs(uniform + 3 * std::log(3.0)), std::abs(uniform_batch + 3 * std::log(3.0)));
    return {err <= 1e-6 && hot == 0.0, "uniform=" + fmt(uniform, 8) + " (err " + sci(err) + ") one-hot=" + fmt(hot)};
}

// ---------------------------------------------------------------------------
// Experiment fixtures for 7-10

RunConfig experiment_run(std::uint64_t seed, std::size_t epochs) {
    RunConfig c;
    c.model.d = 16;
    c.model.hidden = 16;
    c.model.heads = 2;
    c.model.ff_mult = 2;
    c.model.layers = 1;
    c.batch_size = 32;
    c.epochs = epochs;
    c.seed = seed;
    c.optimizer.lr = 1e-3;
    return c;
}

// Cue bands l -> 0, v -> 1, a -> 2. Label-free content fills the other bands on
// the cue's own feature direction, so only spectral selection separates the two.
GeneratorSpec band_cue_spec(std::uint64_t seed, std::size_t n_train, std::size_t n_test) {
    GeneratorSpec s;
    s.n_train = n_train;
    s.n_val = n_test / 2;
    s.n_test = n_test;
    s.seed = seed;
    s.noise_sigma = 0.3;
    s.nuisance_scale = 4.0;
    s.nuisance_along_cue = true;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        s.modalities[m].T = 16;
        s.modalities[m].input_dim = 4;
        s.modalities[m].cue_band = m;
    }
    s.modalities[2].factor = Latent::Z2;
    return s;
}

// l and v both carry z1; a alone carries z2.
GeneratorSpec redundancy_spec(std::uint64_t seed, std::size_t n_train, std::size_t n_test) {
    GeneratorSpec s = band_cue_spec(seed, n_train, n_test);
    s.modalities[0].factor = Latent::Z1;
    s.modalities[1].factor = Latent::Z1;
    s.modalities[2].factor = Latent::Z2;
    return s;
}

// Model band holding the largest share of the cue's projected energy, bias removed. The cue-only
// corpus reuses the seed with noise and nuisance switched off; the generator's
// draws do not depend on those scales, so its cue components are the same ones.
PerModality<std::size_t> cue_bands_in_model(const Model& model, const GeneratorSpec& spec) {
    GeneratorSpec clean = spec;
    clean.noise_sigma = 0.0;
    clean.nuisance_scale = 0.0;
    const Corpus cues = generate(clean);
    NoGradGuard no_grad;
    PerModality<std::size_t> out{};
    for (Modality m : kModalities) {
        const auto& part = model.partition(m);
        auto basis = specband::BasisCache::global().get(part.T());
        std::vector<double> energy(part.K, 0.0);
        const Tensor& sample0 = cues.test.front().features[index_of(m)];
        const Tensor offset = model.encoder().project(Tensor::zeros(sample0.shape()), m);
        for (const auto& s : cues.test) {
            const Tensor response = sub(model.encoder().project(s.features[index_of(m)], m), offset);
            const auto e = specband::band_energies(response, *basis, part);
            for (std::size_t k = 0; k < part.K; ++k) energy[k] += e[k];
        }
        out[index_of(m)] = static_cast<std::size_t>(std::max_element(energy.begin(), energy.end()) - energy.begin());
    }
    return out;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct ExperimentScale {
    std::size_t seeds = 3;
};

// ---------------------------------------------------------------------------
// 7: band-routing recovery

Outcome band_routing_recovery(const ExperimentScale& scale) {
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream s;
    bool pass = true;
    for (std::uint64_t seed = 0; seed < scale.seeds; ++seed) {
        const GeneratorSpec spec = band_cue_spec(700 + seed, 2000, 500);
        const Corpus corpus = generate(spec);
        const auto r = train(experiment_run(seed, 50), corpus);
        const auto ev = evaluate(*r.model, corpus.test);
        const auto cue_bands = cue_bands_in_model(*r.model, spec);
        s << "seed " << seed << ":";
        for (Modality m : kModalities) {
            const std::size_t cue = cue_bands[index_of(m)];
            std::size_t hits = 0;
            for (const auto& d : ev.diagnostics) {
                const auto& a = d.alpha[index_of(m)];
                hits += static_cast<std::size_t>(std::max_element(a.begin(), a.end()) - a.begin()) == cue;
            }
            const double frac = static_cast<double>(hits) / static_cast<double>(ev.diagnostics.size());
            pass = pass && frac >= 0.8;
            s << " " << modality_name(m) << "[band " << cue << "]=" << fmt(frac);
        }
        s << " ";
    }
    const double secs = elapsed_since(t0);
    s << "| " << fmt(secs, 4) << " s";
    return {pass && secs < 300, s.str()};
}

// ---------------------------------------------------------------------------
// 8: complementarity shift

// Per-sample minimiser of mcm*KL(p||w) + ety*N*sum w log w over the simplex,
// ignoring the task loss. Its distance from uniform caps how far the
// complementarity term alone can move w.
std::array<double, kNumModalities> entropy_kl_equilibrium(const std::array<double, kNumModalities>& p,
                                                          const LossWeights& lw) {
    const double N = static_cast<double>(kNumModalities);
    std::array<double, kNumModalities> theta{}, w{};
    for (int it = 0; it < 20000; ++it) {
        double z = 0;
        for (std::size_t m = 0; m < kNumModalities; ++m) z += std::exp(theta[m]);
        for (std::size_t m = 0; m < kNumModalities; ++m) w[m] = std::exp(theta[m]) / z;
        std::array<double, kNumModalities> g{};
        double gw_dot_w = 0;
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            g[m] = -lw.mcm * p[m] / w[m] + lw.ety * N * (std::log(w[m]) + 1.0);
            gw_dot_w += g[m] * w[m];
        }
        for (std::size_t m = 0; m < kNumModalities; ++m) theta[m] -= 0.05 * w[m] * (g[m] - gw_dot_w);
    }
    return w;
}

Outcome complementarity_shift(const ExperimentScale& scale) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> shift, mae_with, mae_without, bound;
    for (std::uint64_t seed = 0; seed < scale.seeds; ++seed) {
        const GeneratorSpec spec = redundancy_spec(800 + seed, 1000, 300);
        const Corpus corpus = generate(spec);
        double wa[2] = {0, 0}, mae[2] = {0, 0};
        for (int with = 0; with < 2; ++with) {
            RunConfig cfg = experiment_run(seed, 20);
            if (!with) cfg.loss.mcm = cfg.loss.dist = cfg.loss.sub = 0.0;
            const auto r = train(cfg, corpus);
            const auto ev = evaluate(*r.best_model, corpus.test);
            std::array<double, kNumModalities> p_mean{};
            const double n = static_cast<double>(ev.diagnostics.size());
            for (const auto& d : ev.diagnostics) {
                wa[with] += d.w[index_of(Modality::A)] / n;
                for (std::size_t m = 0; m < kNumModalities; ++m) p_mean[m] += d.p_comp[m] / n;
            }
            if (with) bound.push_back(entropy_kl_equilibrium(p_mean, cfg.loss)[index_of(Modality::A)] - 1.0 / 3.0);
            mae[with] = ev.report.at("mae");
        }
        shift.push_back(wa[1] - wa[0]);
        mae_with.push_back(mae[1]);
        mae_without.push_back(mae[0]);
    }
    const double secs = elapsed_since(t0);
    const double d = mean_of(shift);
    Outcome o;
    o.pass = d >= 0.05 && mean_of(mae_with) <= mean_of(mae_without) && secs < 600;
    o.detail = "mean w_a shift=" + fmt(d) + " (need >= 0.05) | test MAE with=" + fmt(mean_of(mae_with)) +
               " without=" + fmt(mean_of(mae_without)) + " | entropy/KL equilibrium shift bound=" + fmt(mean_of(bound)) +
               " | " + fmt(secs, 4) + " s";
    return o;
}

// ---------------------------------------------------------------------------
// 9: masking robustness

Outcome masking_robustness(const ExperimentScale& scale) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> degr[2];
    const double rates[2] = {0.0, 0.15};
    for (std::uint64_t seed = 0; seed < scale.seeds; ++seed) {
        GeneratorSpec spec = band_cue_spec(900 + seed, 1000, 300);
        // The cue also echoes at lower gain in a second band, so a model that
        // spreads its band weights can still answer once the cue band is gone.
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            spec.modalities[m].echo_band = (m + 1) % spec.K;
            spec.modalities[m].echo_gain = 0.6;
        }
        const Corpus corpus = generate(spec);
        std::vector<Sample> cut;
        for (const auto& s : corpus.test) {
            Sample c = s;
            for (Modality m : kModalities) c = remove_band(c, m, spec.modalities[index_of(m)].cue_band, spec);
            cut.push_back(std::move(c));
        }
        for (int i = 0; i < 2; ++i) {
            RunConfig cfg = experiment_run(seed, 20);
            cfg.model.mask_rate = rates[i];
            const auto r = train(cfg, corpus);
            const double clean = evaluate(*r.best_model, corpus.test).report.at("mae");
            const double zeroed = evaluate(*r.best_model, cut).report.at("mae");
            degr[i].push_back(zeroed - clean);
        }
    }
    const double secs = elapsed_since(t0);
    Outcome o;
    o.pass = mean_of(degr[1]) < mean_of(degr[0]) && secs < 600;
    o.detail = "MAE degradation p=0.15: " + fmt(mean_of(degr[1])) + " vs p=0: " + fmt(mean_of(degr[0])) + " | " +
               fmt(secs, 4) + " s";
    return o;
}

// ---------------------------------------------------------------------------
// 10: ablation matrix

Outcome ablation_matrix(const ExperimentScale& scale) {
    const auto t0 = std::chrono::steady_clock::now();
    // [sbn][mcm]
    std::vector<double> val[2][2];
    bool complete = true;
    for (std::uint64_t seed = 0; seed < scale.seeds; ++seed) {
        const Corpus corpus = generate(redundancy_spec(1000 + seed, 600, 200));
        for (int sbn = 0; sbn < 2; ++sbn) {
            for (int mcm = 0; mcm < 2; ++mcm) {
                RunConfig cfg = experiment_run(seed, 10);
                cfg.model.use_sbn = sbn;
                cfg.model.use_mcm = mcm;
                const auto r = train(cfg, corpus);
                complete = complete && r.test.has_value() && r.test->values.size() == 4 && r.epochs.size() == 10;
                for (const auto& [_, v] : r.test->values) complete = complete && std::isfinite(v);
                val[sbn][mcm].push_back(evaluate(*r.best_model, corpus.val).report.at("mae"));
            }
        }
    }
    const double full = mean_of(val[1][1]), no_mcm = mean_of(val[1][0]), no_sbn = mean_of(val[0][1]), none = mean_of(val[0][0]);
    const double secs = elapsed_since(t0);
    Outcome o;
    o.pass = complete && full <= no_mcm && full <= no_sbn;
    o.detail = std::string("reports ") + (complete ? "complete" : "INCOMPLETE") + " | val MAE full=" + fmt(full) +
               " -MCM=" + fmt(no_mcm) + " -SBN=" + fmt(no_sbn) + " -both=" + fmt(none) + " | " + fmt(secs, 4) + " s";
    return o;
}

// ---------------------------------------------------------------------------
// 11: determinism and resume

Outcome determinism_resume() {
    const Corpus corpus = generate(tiny_spec(11, 48, 8));
    RunConfig cfg = small_run(11);
    cfg.epochs = 3;
    const auto a = train(cfg, corpus);
    const auto b = train(cfg, corpus);
    double same_seed = 0;
    for (std::size_t i = 0; i < 10; ++i) same_seed = std::max(same_seed, std::abs(a.step_losses[i].total - b.step_losses[i].total));

    TrainOptions first;
    first.stop_after_epochs = 1;
    const auto part = train(cfg, corpus, first);
    nlohmann::json stored = part.last;
    TrainOptions rest;
    rest.resume = stored.get<Checkpoint>();
    const auto resumed = train(cfg, corpus, rest);
    double resume = 0;
    const std::size_t offset = part.step_losses.size();
    bool aligned = resumed.step_losses.size() + offset == a.step_losses.size();
    for (std::size_t i = 0; aligned && i < resumed.step_losses.size(); ++i)
        resume = std::max(resume, std::abs(resumed.step_losses[i].total - a.step_losses[offset + i].total));
    Outcome o;
    o.pass = a.step_losses.size() >= 10 && same_seed <= 1e-12 && aligned && resume <= 1e-9;
    o.detail = "first-10-step diff=" + sci(same_seed) + " | resume after epoch 1, max per-step diff=" + sci(resume) +
               " over " + std::to_string(resumed.step_losses.size()) + " steps";
    return o;
}

// ---------------------------------------------------------------------------
// 12: metrics oracle

struct OracleMetrics {
    double acc7 = 0, acc2 = 0, f1 = 0, mae = 0;
};

// Literal reimplementation: per-sample loops, explicit class lists.
OracleMetrics oracle_metrics(const std::vector<double>& p, const std::vector<double>& l) {
    OracleMetrics o;
    auto bucket = [](double x) {
        const double c = x < -3 ? -3 : (x > 3 ? 3 : x);
        return std::nearbyint(c);
    };
    std::vector<int> truth, guess;
    for (std::size_t i = 0; i < p.size(); ++i) {
        o.acc7 += bucket(p[i]) == bucket(l[i]) ? 1 : 0;
        o.mae += std::abs(p[i] - l[i]);
        if (l[i] != 0) {
            truth.push_back(l[i] > 0);
            guess.push_back(p[i] > 0);
        }
    }
    o.acc7 /= static_cast<double>(p.size());
    o.mae /= static_cast<double>(p.size());
    if (truth.empty()) return o;
    double correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == guess[i];
    o.acc2 = correct / static_cast<double>(truth.size());
    for (int c : {0, 1}) {
        double tp = 0, fp = 0, fn = 0, support = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (truth[i] == c) ++support;
            if (truth[i] == c && guess[i] == c) ++tp;
            if (truth[i] != c && guess[i] == c) ++fp;
            if (truth[i] == c && guess[i] != c) ++fn;
        }
        const double prec = tp + fp > 0 ? tp / (tp + fp) : 0;
        const double rec = tp + fn > 0 ? tp / (tp + fn) : 0;
        o.f1 += (prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0) * support / static_cast<double>(truth.size());
    }
    return o;
}

Outcome metrics_oracle() {
    Rng rng(1212);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(50);
        std::vector<double> p(n), l(n);
        for (std::size_t i = 0; i < n; ++i) {
            l[i] = rng.uniform() < 0.15 ? 0.0 : std::round(rng.uniform(-3.2, 3.2) * 4) / 4;
            p[i] = rng.uniform(-4, 4);
        }
        const auto got = regression_metrics(p, l);
        const auto want = oracle_metrics(p, l);
        worst = std::max({worst, std::abs(got.acc7 - want.acc7), std::abs(got.acc2 - want.acc2), std::abs(got.f1 - want.f1),
                          std::abs(got.mae - want.mae)});
    }
    return {worst <= 1e-12, "100 random pairs, max |diff|=" + sci(worst)};
}

struct Criterion {
    int id;
    const char* name;
    bool gating;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    ExperimentScale scale;
    app.add_option("--only", only, "criterion ids to run")->delimiter(',');
    app.add_option("--seeds", scale.seeds, "seeds for the synthetic experiments");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria = {
        {1, "spectral integrity", true, spectral_integrity},
        {2, "closed-form eigenvalues", true, closed_form_eigen},
        {3, "gradient fidelity", false, gradient_fidelity},
        {4, "stop-gradient contracts", true, stop_gradient_contracts},
        {5, "weight-simplex invariants", true, simplex_invariants},
        {6, "entropy values", true, entropy_values},
        {7, "band-routing recovery", false, [&] { return band_routing_recovery(scale); }},
        {8, "complementarity shift", false, [&] { return complementarity_shift(scale); }},
        {9, "masking robustness", false, [&] { return masking_robustness(scale); }},
        {10, "ablation matrix", false, [&] { return ablation_matrix(scale); }},
        {11, "determinism and resume", true, determinism_resume},
        {12, "metrics oracle", true, metrics_oracle},
    };

    int status = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        try {
            const Outcome o = c.run();
            std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
                      << std::endl;
            if (!o.pass && c.gating) status = 1;
        } catch (const std::exception& e) {
            std::cout << "FAIL criterion " << c.id << " (" << c.name << "): exception: " << e.what() << std::endl;
            status = 1;
        }
    }
    return status;
}
