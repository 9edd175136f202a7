// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/trainer.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "bandfuse/error.hpp"
#include "bandfuse/serialize.hpp"

namespace bandfuse {

namespace {

constexpr std::uint64_t kShuffleTag = 0x7368'7566'666cULL;  // "shuffl"

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

LossBundle& operator+=(LossBundle& a, const LossBundle& b) {
    a.task += b.task;
    a.multi += b.multi;
    a.uni += b.uni;
    a.sub += b.sub;
    a.ety += b.ety;
    a.band_ety += b.band_ety;
    a.mcm += b.mcm;
    a.distill += b.distill;
    a.total += b.total;
    return a;
}

LossBundle scaled(LossBundle b, double s) {
    for (double* v : {&b.task, &b.multi, &b.uni, &b.sub, &b.ety, &b.band_ety, &b.mcm, &b.distill, &b.total}) *v *= s;
    return b;
}

/// Sections of the run config that must agree for a checkpoint to continue a run.
nlohmann::json resume_signature(const RunConfig& c) {
    return {{"model", c.model}, {"loss", c.loss}, {"optimizer", c.optimizer}, {"batch_size", c.batch_size}, {"seed", c.seed}};
}

class RoutingAccumulator {
public:
    explicit RoutingAccumulator(std::size_t K) : K_(K) {
        for (auto& a : sum_.alpha) a.assign(K, 0.0);
    }

    void add(const SampleDiagnostics& d) {
        ++n_;
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            for (std::size_t k = 0; k < d.alpha[m].size() && k < K_; ++k) sum_.alpha[m][k] += d.alpha[m][k];
            sum_.w[m] += d.w[m];
            sum_.importance[m] += d.importance[m];
            sum_.p_comp[m] += d.p_comp[m];
        }
    }

    RoutingSummary mean() const {
        RoutingSummary r = sum_;
        if (n_ == 0) return r;
        const double inv = 1.0 / static_cast<double>(n_);
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            for (auto& a : r.alpha[m]) a *= inv;
            r.w[m] *= inv;
            r.importance[m] *= inv;
            r.p_comp[m] *= inv;
        }
        return r;
    }

private:
    std::size_t K_;
    std::size_t n_ = 0;
    RoutingSummary sum_;
};

nlohmann::json routing_json(const RoutingSummary& r) {
    nlohmann::json alpha = nlohmann::json::object();
    for (Modality m : kModalities) alpha[std::string(modality_name(m))] = r.alpha[index_of(m)];
    return {{"alpha", alpha}, {"w", r.w}, {"importance", r.importance}, {"p_comp", r.p_comp}};
}

class RunWriter {
public:
    RunWriter(const RunConfig& config, bool resuming) : dir_(config.output_dir) {
        if (dir_.empty()) return;
        std::filesystem::create_directories(dir_ / "checkpoints");
        write_json_file(dir_ / "config.json", config);
        const bool append = resuming && std::filesystem::exists(dir_ / "curves.csv");
        curves_.open(dir_ / "curves.csv", append ? std::ios::app : std::ios::trunc);
        diagnostics_.open(dir_ / "diagnostics.jsonl", append ? std::ios::app : std::ios::trunc);
        if (!curves_ || !diagnostics_) throw std::runtime_error("cannot write run outputs under " + dir_.string());
        header_written_ = append;
        curves_ << std::setprecision(17);
    }

    bool enabled() const { return !dir_.empty(); }
    const std::filesystem::path& dir() const { return dir_; }

    void epoch(const EpochRecord& r, std::size_t K) {
        if (!enabled()) return;
        if (!header_written_) {
            curves_ << "epoch,step,total,task,multi,uni,sub,ety,band_ety,mcm,distill";
            for (const auto& [key, _] : r.val.values) curves_ << ",val_" << key;
            for (const char* what : {"I", "P", "w"}) {
                for (Modality m : kModalities) curves_ << ',' << what << '_' << modality_name(m);
            }
            for (Modality m : kModalities) {
                for (std::size_t k = 0; k < K; ++k) curves_ << ",alpha_" << modality_name(m) << '_' << k;
            }
            curves_ << '\n';
            header_written_ = true;
        }
        const auto& t = r.train;
        curves_ << r.epoch + 1 << ',' << r.global_step << ',' << t.total << ',' << t.task << ',' << t.multi << ',' << t.uni
                << ',' << t.sub << ',' << t.ety << ',' << t.band_ety << ',' << t.mcm << ',' << t.distill;
        for (const auto& [_, v] : r.val.values) curves_ << ',' << v;
        for (double v : r.routing.importance) curves_ << ',' << v;
        for (double v : r.routing.p_comp) curves_ << ',' << v;
        for (double v : r.routing.w) curves_ << ',' << v;
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            for (std::size_t k = 0; k < K; ++k) curves_ << ',' << (k < r.routing.alpha[m].size() ? r.routing.alpha[m][k] : 0.0);
        }
        curves_ << '\n';
        curves_.flush();

        nlohmann::json d = {{"epoch", r.epoch + 1}, {"global_step", r.global_step}, {"train", r.train}, {"val", r.val}};
        d["routing"] = routing_json(r.routing);
        diagnostics_ << d.dump() << '\n';
        diagnostics_.flush();
    }

    void checkpoint(const Checkpoint& c, const std::string& name) {
        if (enabled()) save_checkpoint(c, dir_ / "checkpoints" / (name + ".json"));
    }

    void metrics(const nlohmann::json& j) {
        if (enabled()) write_json_file(dir_ / "metrics.json", j);
    }

private:
    std::filesystem::path dir_;
    std::ofstream curves_;
    std::ofstream diagnostics_;
    bool header_written_ = false;
};

}  // namespace

void to_json(nlohmann::json& j, const Checkpoint& c) {
    nlohmann::json parts = nullptr;
    if (c.partitions[0].K > 0) {
        parts = nlohmann::json::object();
        for (Modality m : kModalities) parts[std::string(modality_name(m))] = c.partitions[index_of(m)];
    }
    j = {{"format_version", kCheckpointFormatVersion},
         {"config", c.config},
         {"inputs", c.inputs},
         {"partitions", parts},
         {"parameters", c.parameters},
         {"optimizer", c.optimizer},
         {"rng", rng_to_json(Rng(c.config.seed, c.global_step))},
         {"epochs_completed", c.epochs_completed},
         {"global_step", c.global_step},
         {"best_metric", c.best_metric ? nlohmann::json(*c.best_metric) : nlohmann::json(nullptr)},
         {"best_epoch", c.best_epoch}};
}

void from_json(const nlohmann::json& j, Checkpoint& c) {
    const int version = j.value("format_version", -1);
    if (version != kCheckpointFormatVersion) {
        throw VersionError("checkpoint format version " + std::to_string(version) + " is not supported");
    }
    c.config = j.at("config").get<RunConfig>();
    c.inputs = j.at("inputs").get<ModelInputs>();
    c.partitions = {};
    if (!j.at("partitions").is_null()) {
        for (Modality m : kModalities) {
            c.partitions[index_of(m)] = j.at("partitions").at(std::string(modality_name(m))).get<specband::BandPartition>();
        }
    }
    c.parameters = j.at("parameters");
    c.optimizer = j.at("optimizer");
    c.epochs_completed = j.at("epochs_completed").get<std::size_t>();
    c.global_step = j.at("global_step").get<std::uint64_t>();
    const Rng rng = rng_from_json(j.at("rng"));
    if (rng.seed() != c.config.seed || rng.counter() != c.global_step) {
        throw ValidationError("checkpoint rng state disagrees with its seed and step counter");
    }
    c.best_metric.reset();
    if (!j.at("best_metric").is_null()) c.best_metric = j.at("best_metric").get<double>();
    c.best_epoch = j.at("best_epoch").get<std::size_t>();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return j.get<Checkpoint>();
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) { write_json_file(path, c); }

std::unique_ptr<Model> restore_model(const Checkpoint& c) {
    auto model = std::make_unique<Model>(c.config, c.inputs);
    parameters_from_json(c.parameters, model->params());
    if (c.config.model.use_sbn) {
        if (c.partitions[0].K == 0) throw ValidationError("checkpoint lacks the band partitions its model needs");
        model->set_partitions(c.partitions);
    }
    return model;
}

void check_compatible(const ModelInputs& inputs, const GeneratorSpec& spec) {
    const ModelInputs data = ModelInputs::from_spec(spec);
    for (Modality m : kModalities) {
        const auto mi = index_of(m);
        if (data.T[mi] != inputs.T[mi] || data.input_dim[mi] != inputs.input_dim[mi]) {
            throw DimensionError("modality " + std::string(modality_name(m)) + ": model expects [" +
                                 std::to_string(inputs.T[mi]) + ", " + std::to_string(inputs.input_dim[mi]) +
                                 "] features, corpus has [" + std::to_string(data.T[mi]) + ", " +
                                 std::to_string(data.input_dim[mi]) + "]");
        }
    }
    if (data.task != inputs.task || data.output_dim() != inputs.output_dim()) {
        throw DimensionError("corpus task " + task_type_name(data.task) + " (" + std::to_string(data.output_dim()) +
                             " outputs) does not match the model (" + task_type_name(inputs.task) + ", " +
                             std::to_string(inputs.output_dim()) + " outputs)");
    }
}

EvalResult evaluate(const Model& model, const std::vector<Sample>& samples) {
    if (samples.empty()) throw ParameterError("cannot evaluate on an empty split");
    NoGradGuard no_grad;
    EvalResult r;
    std::vector<double> labels;
    for (const auto& s : samples) {
        const Sample* ptr = &s;
        auto bf = model.forward_pass(std::span<const Sample* const>(&ptr, 1), false, 0);
        r.predictions.push_back(model.decode_prediction(bf.samples.front().fusion.prediction));
        labels.push_back(model.inputs().task == TaskType::Regression ? s.label.value : static_cast<double>(s.label.cls));
        r.diagnostics.push_back(std::move(bf.diagnostics.front()));
    }
    r.report = metrics(r.predictions, labels, model.inputs().task);
    return r;
}

nlohmann::json route_record(const SampleDiagnostics& d, double decoded_prediction, bool with_alpha) {
    nlohmann::json alpha = nullptr;
    if (with_alpha) {
        alpha = nlohmann::json::object();
        for (Modality m : kModalities) alpha[std::string(modality_name(m))] = d.alpha[index_of(m)];
    }
    return {{"sample_id", d.sample_id},
            {"alpha", alpha},
            {"w", d.w},
            {"prediction", decoded_prediction},
            {"output", d.prediction},
            {"label", d.label}};
}

TrainResult train(const RunConfig& config, const Corpus& corpus, const TrainOptions& options) {
    config.validate();
    if (corpus.train.empty()) throw ParameterError("training split is empty");
    if (corpus.val.empty()) throw ParameterError("validation split is empty");
    const ModelInputs inputs = ModelInputs::from_spec(corpus.spec);
    auto log = [&](const std::string& msg) {
        if (options.log) options.log(msg);
    };

    TrainResult result;
    result.model = std::make_unique<Model>(config, inputs);
    Model& model = *result.model;
    Adam adam(model.params(), config.optimizer);

    std::size_t start_epoch = 0;
    std::uint64_t step = 0;
    std::optional<double> best_metric;
    std::size_t best_epoch = 0;
    if (options.resume) {
        const Checkpoint& c = *options.resume;
        if (resume_signature(c.config) != resume_signature(config)) {
            throw ParameterError("checkpoint was written by a run with a different model, loss, optimizer, batch or seed");
        }
        check_compatible(c.inputs, corpus.spec);
        parameters_from_json(c.parameters, model.params());
        optimizer_from_json(c.optimizer, adam, model.params());
        if (config.model.use_sbn) model.set_partitions(c.partitions);
        start_epoch = c.epochs_completed;
        step = c.global_step;
        best_metric = c.best_metric;
        best_epoch = c.best_epoch;
        result.best = c;
        const auto best_path = std::filesystem::path(config.output_dir) / "checkpoints" / "best.json";
        if (!config.output_dir.empty() && std::filesystem::exists(best_path)) {
            Checkpoint stored = load_checkpoint(best_path);
            if (stored.best_epoch == c.best_epoch && stored.epochs_completed == c.best_epoch) result.best = std::move(stored);
        }
        log("resuming after epoch " + std::to_string(start_epoch) + " (step " + std::to_string(step) + ")");
    } else if (config.model.use_sbn) {
        model.fit_partitions(corpus.train);
    }

    RunWriter writer(config, options.resume.has_value());
    auto snapshot = [&](std::size_t epochs_completed) {
        Checkpoint c;
        c.config = config;
        c.inputs = inputs;
        if (config.model.use_sbn) {
            for (Modality m : kModalities) c.partitions[index_of(m)] = model.partition(m);
        }
        c.parameters = parameters_to_json(model.params());
        c.optimizer = optimizer_to_json(adam, model.params());
        c.epochs_completed = epochs_completed;
        c.global_step = step;
        c.best_metric = best_metric;
        c.best_epoch = best_epoch;
        return c;
    };

    const std::size_t n = corpus.train.size();
    const std::size_t end_epoch =
        options.stop_after_epochs > 0 ? std::min(config.epochs, options.stop_after_epochs) : config.epochs;
    const Rng root(config.seed);
    for (std::size_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = root.substream({kShuffleTag, epoch});
        shuffle_rng.shuffle(order);

        LossBundle epoch_sum;
        std::size_t steps_this_epoch = 0;
        RoutingAccumulator routing(config.model.K);
        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            std::vector<const Sample*> batch;
            for (std::size_t i = begin; i < end; ++i) batch.push_back(&corpus.train[order[i]]);
            adam.zero_grad();
            BatchForward bf = model.forward_pass(batch, true, step);
            backward(bf.total);
            adam.step();
            ++step;
            result.step_losses.push_back(bf.bundle);
            epoch_sum += bf.bundle;
            ++steps_this_epoch;
            for (const auto& d : bf.diagnostics) routing.add(d);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.global_step = step;
        rec.train = scaled(epoch_sum, 1.0 / static_cast<double>(steps_this_epoch));
        rec.val = evaluate(model, corpus.val).report;
        rec.routing = routing.mean();
        const bool improved = !best_metric || rec.val.better_than(*best_metric);
        if (improved) {
            best_metric = rec.val.selection_value();
            best_epoch = epoch + 1;
        }
        result.last = snapshot(epoch + 1);
        if (improved) {
            result.best = result.last;
            writer.checkpoint(result.best, "best");
        }
        writer.checkpoint(result.last, "last");
        writer.epoch(rec, config.model.K);

        std::ostringstream msg;
        msg << "epoch " << epoch + 1 << "/" << config.epochs << " loss " << rec.train.total << " val "
            << (inputs.task == TaskType::Regression ? "mae " : "f1 ") << rec.val.selection_value()
            << (improved ? " *" : "");
        log(msg.str());
        result.epochs.push_back(std::move(rec));
    }
    if (result.epochs.empty() && !options.resume) throw ParameterError("no epochs to run");
    if (result.epochs.empty()) result.last = snapshot(start_epoch);

    result.best_model = restore_model(result.best);
    nlohmann::json summary = {{"best_epoch", result.best.best_epoch},
                              {"epochs_completed", result.last.epochs_completed},
                              {"global_step", result.last.global_step},
                              {"val", evaluate(*result.best_model, corpus.val).report}};
    if (!corpus.test.empty()) {
        result.test = evaluate(*result.best_model, corpus.test).report;
        summary["test"] = *result.test;
    }
    writer.metrics(summary);
    return result;
}

}  // namespace bandfuse
