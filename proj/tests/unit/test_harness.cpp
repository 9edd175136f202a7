// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "../support.hpp"
#include "bandfuse/config.hpp"
#include "bandfuse/error.hpp"
#include "bandfuse/gradcheck.hpp"
#include "bandfuse/model.hpp"
#include "bandfuse/trainer.hpp"

using namespace bandfuse;
using testing_support::small_spec;

namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(std::uint64_t seed = 0) {
    RunConfig c;
    c.model.d = 8;
    c.model.hidden = 8;
    c.model.heads = 2;
    c.model.ff_mult = 2;
    c.epochs = 2;
    c.batch_size = 4;
    c.seed = seed;
    c.optimizer.lr = 3e-3;
    return c;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& xs) {
    std::vector<const Sample*> out;
    for (const auto& s : xs) out.push_back(&s);
    return out;
}

double grad_abs_sum(const ParameterSet& ps, const std::string& prefix) {
    double s = 0;
    for (const auto& p : ps.items()) {
        if (!p.name.starts_with(prefix)) continue;
        for (auto g : p.tensor.grad()) s += std::abs(g);
    }
    return s;
}

fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("bandfuse_test_harness_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("run config JSON round trip and strict keys") {
    RunConfig c = tiny_config(7);
    c.model.path = RoutingPath::PreAttention;
    c.model.use_mcm = false;
    c.loss.ety = 0.5;
    nlohmann::json j = c;
    RunConfig back = j.get<RunConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(back.model.path == RoutingPath::PreAttention);

    nlohmann::json bad = j;
    bad["learning_rate"] = 0.1;
    CHECK_THROWS_AS(bad.get<RunConfig>(), ParameterError);
    bad = j;
    bad["model"]["width"] = 3;
    CHECK_THROWS_AS(bad.get<RunConfig>(), ParameterError);

    const fs::path dir = scratch_dir("config");
    fs::create_directories(dir);
    std::ofstream(dir / "cfg.json") << j.dump(2);
    CHECK(nlohmann::json(load_run_config(dir / "cfg.json")) == j);
    std::ofstream(dir / "broken.json") << "{";
    CHECK_THROWS_AS(load_run_config(dir / "broken.json"), ParseError);
    fs::remove_all(dir);
}

TEST_CASE("run config defaults and validation") {
    RunConfig c;
    CHECK(c.model.mask_rate == 0.15);
    CHECK(c.loss.ety == 1.0);
    CHECK(c.loss.mcm == 0.1);
    CHECK(c.loss.dist == 0.1);
    c.model.d = 10;
    c.model.heads = 4;
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = RunConfig{};
    c.model.mask_rate = 1.0;
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = RunConfig{};
    c.model.tau_comp = 0;
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = RunConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ParameterError);

    c = RunConfig{};
    c.model.use_mcm = false;
    c.model.use_sbn = false;
    const LossWeights w = c.effective_loss();
    CHECK(w.mcm == 0.0);
    CHECK(w.dist == 0.0);
    CHECK(w.sub == 0.0);
    CHECK(w.band == 0.0);
    CHECK(w.ety == c.loss.ety);
}

TEST_CASE("forward pass on a zero-signal sample is finite") {
    GeneratorSpec spec = small_spec(1, 4);
    Corpus corpus = generate(spec);
    Model model(tiny_config(), ModelInputs::from_spec(spec));
    CHECK_THROWS_AS(model.forward_sample(corpus.train[0], false, 0), ParameterError);
    model.fit_partitions(corpus.train);
    Sample zero = corpus.train[0];
    for (auto& f : zero.features) f = Tensor::zeros(f.shape());
    for (bool training : {false, true}) {
        const Sample* batch[] = {&zero};
        BatchForward bf = model.forward_pass(batch, training, 3);
        CHECK(std::isfinite(bf.total.item()));
        backward(bf.total);
        for (const auto& p : model.params().items())
            for (auto g : p.tensor.grad()) CHECK(std::isfinite(g));
        model.params().zero_grad();
    }
}

TEST_CASE("evaluation passes are deterministic and unmasked") {
    GeneratorSpec spec = small_spec(2, 6);
    Corpus corpus = generate(spec);
    Model model(tiny_config(), ModelInputs::from_spec(spec));
    model.fit_partitions(corpus.train);
    const auto batch = pointers(corpus.train);
    const BatchForward a = model.forward_pass(batch, false, 0);
    const BatchForward b = model.forward_pass(batch, false, 99);
    CHECK(a.bundle.total == b.bundle.total);
    for (const auto& s : a.samples)
        for (Modality m : kModalities) {
            const auto x = s.alpha[index_of(m)].values(), y = s.alpha_hat[index_of(m)].values();
            for (std::size_t k = 0; k < x.size(); ++k) CHECK(x[k] == y[k]);
        }

    bool masked_somewhere = false;
    for (std::uint64_t step = 0; step < 20 && !masked_somewhere; ++step) {
        const BatchForward t = model.forward_pass(batch, true, step);
        for (const auto& s : t.samples)
            for (Modality m : kModalities)
                for (auto v : s.alpha_hat[index_of(m)].values()) masked_somewhere = masked_somewhere || v == 0.0;
    }
    CHECK(masked_somewhere);
}

TEST_CASE("total recomposes from the bundle") {
    GeneratorSpec spec = small_spec(3, 6);
    Corpus corpus = generate(spec);
    RunConfig cfg = tiny_config();
    cfg.loss = LossWeights{0.7, 1.3, 0.2, 0.3, 0.6};
    Model model(cfg, ModelInputs::from_spec(spec));
    model.fit_partitions(corpus.train);
    const BatchForward bf = model.forward_pass(pointers(corpus.train), true, 1);
    CHECK(std::abs(bf.bundle.recompose(cfg.effective_loss()) - bf.bundle.total) <= 1e-9);
    CHECK(bf.bundle.total == bf.total.item());
}

TEST_CASE("stop-gradient boundaries inside the model") {
    GeneratorSpec spec = small_spec(4, 6);
    Corpus corpus = generate(spec);
    Model model(tiny_config(), ModelInputs::from_spec(spec));
    model.fit_partitions(corpus.train);
    const auto batch = pointers(corpus.train);

    BatchForward bf = model.forward_pass(batch, true, 0);
    backward(bf.terms.mcm);
    CHECK(grad_abs_sum(model.params(), "mcm.branch") == 0.0);
    CHECK(grad_abs_sum(model.params(), "mcm.refine") == 0.0);
    CHECK(grad_abs_sum(model.params(), "router.modality") > 0.0);

    model.params().zero_grad();
    bf = model.forward_pass(batch, true, 0);
    backward(bf.terms.distill);
    CHECK(grad_abs_sum(model.params(), "mcm.refine") == 0.0);
    CHECK(grad_abs_sum(model.params(), "mcm.branch") == 0.0);

    model.params().zero_grad();
    bf = model.forward_pass(batch, true, 0);
    backward(bf.total);
    CHECK(grad_abs_sum(model.params(), "mcm.refine") == 0.0);
    CHECK(grad_abs_sum(model.params(), "mcm.branch") > 0.0);
    CHECK(grad_abs_sum(model.params(), "router.band") > 0.0);
}

TEST_CASE("routers train through the task path without entropy terms") {
    GeneratorSpec spec = small_spec(5, 6);
    Corpus corpus = generate(spec);
    RunConfig cfg = tiny_config();
    cfg.loss.ety = 0;
    cfg.loss.band = 0;
    Model model(cfg, ModelInputs::from_spec(spec));
    model.fit_partitions(corpus.train);
    BatchForward bf = model.forward_pass(pointers(corpus.train), true, 0);
    backward(bf.terms.task.total);
    CHECK(grad_abs_sum(model.params(), "router.band") > 0.0);
    CHECK(grad_abs_sum(model.params(), "router.modality") > 0.0);
}

TEST_CASE("same seed gives identical step losses") {
    Corpus corpus = generate(small_spec(6, 24));
    RunConfig cfg = tiny_config(11);
    const auto a = train(cfg, corpus);
    const auto b = train(cfg, corpus);
    REQUIRE(a.step_losses.size() >= 10);
    REQUIRE(a.step_losses.size() == b.step_losses.size());
    for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(a.step_losses[i].total - b.step_losses[i].total) <= 1e-12);
    cfg.seed = 12;
    const auto c = train(cfg, corpus);
    CHECK(c.step_losses[0].total != a.step_losses[0].total);
}

TEST_CASE("resume after one epoch matches the uninterrupted run") {
    Corpus corpus = generate(small_spec(7, 16));
    RunConfig cfg = tiny_config(3);
    const auto full = train(cfg, corpus);

    TrainOptions first;
    first.stop_after_epochs = 1;
    const auto part = train(cfg, corpus, first);
    REQUIRE(part.last.epochs_completed == 1);

    const fs::path dir = scratch_dir("resume");
    fs::create_directories(dir);
    save_checkpoint(part.last, dir / "ckpt.json");
    TrainOptions again;
    again.resume = load_checkpoint(dir / "ckpt.json");
    const auto rest = train(cfg, corpus, again);

    const std::size_t per_epoch = part.step_losses.size();
    REQUIRE(rest.step_losses.size() == full.step_losses.size() - per_epoch);
    for (std::size_t i = 0; i < rest.step_losses.size(); ++i)
        CHECK(std::abs(rest.step_losses[i].total - full.step_losses[per_epoch + i].total) <= 1e-9);
    CHECK(rest.last.global_step == full.last.global_step);

    RunConfig other = cfg;
    other.optimizer.lr *= 2;
    CHECK_THROWS_AS(train(other, corpus, again), ParameterError);
    fs::remove_all(dir);
}

TEST_CASE("best checkpoint reproduces its validation metric") {
    Corpus corpus = generate(small_spec(8, 16));
    RunConfig cfg = tiny_config(4);
    cfg.epochs = 3;
    const fs::path dir = scratch_dir("run");
    cfg.output_dir = dir.string();
    const auto r = train(cfg, corpus);
    for (const char* f : {"config.json", "curves.csv", "metrics.json", "diagnostics.jsonl", "checkpoints/best.json",
                          "checkpoints/last.json"})
        CHECK(fs::exists(dir / f));

    const Checkpoint best = load_checkpoint(dir / "checkpoints" / "best.json");
    REQUIRE(best.best_metric.has_value());
    auto model = restore_model(best);
    const auto eval = evaluate(*model, corpus.val);
    CHECK(std::abs(eval.report.selection_value() - *best.best_metric) <= 1e-9);
    CHECK(r.test.has_value());

    std::ifstream curves(dir / "curves.csv");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(curves, line)) ++rows;
    CHECK(rows == 1 + cfg.epochs);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint integrity errors") {
    Corpus corpus = generate(small_spec(9, 8));
    RunConfig cfg = tiny_config();
    cfg.epochs = 1;
    const auto r = train(cfg, corpus);
    nlohmann::json j = r.last;
    nlohmann::json bad = j;
    bad["format_version"] = kCheckpointFormatVersion + 1;
    CHECK_THROWS_AS(bad.get<Checkpoint>(), VersionError);

    GeneratorSpec wider = corpus.spec;
    wider.modalities[1].input_dim += 1;
    CHECK_THROWS_AS(check_compatible(r.last.inputs, wider), DimensionError);
    GeneratorSpec cls = corpus.spec;
    cls.task = TaskType::Classification;
    CHECK_THROWS_AS(check_compatible(r.last.inputs, cls), DimensionError);
    CHECK_THROWS_AS(evaluate(*r.model, {}), ParameterError);
}

TEST_CASE("one-sample evaluation and classification dispatch") {
    Corpus corpus = generate(small_spec(10, 8));
    RunConfig cfg = tiny_config();
    cfg.epochs = 1;
    const auto r = train(cfg, corpus);
    const auto one = evaluate(*r.model, {corpus.test[0]});
    for (const auto& [k, v] : one.report.values) CHECK(std::isfinite(v));
    CHECK(one.report.values.count("mae") == 1);

    GeneratorSpec cspec = small_spec(10, 12);
    cspec.task = TaskType::Classification;
    cspec.num_classes = 3;
    Corpus ccorpus = generate(cspec);
    const auto cr = train(cfg, ccorpus);
    const auto ce = evaluate(*cr.model, ccorpus.test);
    for (const char* k : {"acc", "f1", "precision", "recall"}) CHECK(ce.report.values.count(k) == 1);
    for (double p : ce.predictions) CHECK(p == std::floor(p));

    const auto rec = route_record(one.diagnostics[0], one.predictions[0], true);
    for (const char* k : {"sample_id", "alpha", "w", "prediction", "label"}) CHECK(rec.contains(k));
    CHECK(rec["alpha"]["l"].size() == cfg.model.K);
}

TEST_CASE("all four ablation settings train and report") {
    Corpus corpus = generate(small_spec(11, 12));
    for (bool sbn : {true, false}) {
        for (bool mcm : {true, false}) {
            RunConfig cfg = tiny_config();
            cfg.model.use_sbn = sbn;
            cfg.model.use_mcm = mcm;
            const auto r = train(cfg, corpus);
            REQUIRE(r.test.has_value());
            for (const char* k : {"acc7", "acc2", "f1", "mae"}) CHECK(std::isfinite(r.test->at(k)));
            CHECK(r.model->params().contains("mcm.branch.without_l.fc1.weight") == mcm);
            CHECK(r.model->params().contains("router.band.l.fc1.weight") == sbn);
        }
    }
}

TEST_CASE("two epochs on a 64-sample corpus finish quickly") {
    Corpus corpus = generate(small_spec(12, 64, 16, 8));
    RunConfig cfg = tiny_config();
    const auto t0 = std::chrono::steady_clock::now();
    train(cfg, corpus);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 60.0);
}

TEST_CASE("gradcheck module registry") {
    const auto mods = gradcheck_modules();
    CHECK(mods.size() == 7);
    CHECK_THROWS_AS(run_gradcheck("optimizer", 0), ParameterError);
    const auto reports = run_gradcheck("mcm", 0);
    REQUIRE_FALSE(reports.empty());
    for (const auto& r : reports) CHECK(r.passed());
}
