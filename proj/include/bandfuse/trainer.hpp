// SPDX-License-Identifier: Apache-2.0
//
// Training, evaluation, checkpointing and routing inspection.
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bandfuse/adam.hpp"
#include "bandfuse/config.hpp"
#include "bandfuse/data.hpp"
#include "bandfuse/metrics.hpp"
#include "bandfuse/model.hpp"

namespace bandfuse {

inline constexpr int kCheckpointFormatVersion = 1;

/// Per-epoch means of the routing diagnostics over the training split.
struct RoutingSummary {
    PerModality<std::vector<double>> alpha;
    std::array<double, kNumModalities> w{};
    std::array<double, kNumModalities> importance{};
    std::array<double, kNumModalities> p_comp{};
};

struct EpochRecord {
    std::size_t epoch = 0;  // zero-based
    std::uint64_t global_step = 0;
    LossBundle train;       // mean over the epoch's steps
    MetricReport val;
    RoutingSummary routing;
};

/// Complete resumable state.
struct Checkpoint {
    RunConfig config;
    ModelInputs inputs;
    PerModality<specband::BandPartition> partitions;
    nlohmann::json parameters;
    nlohmann::json optimizer;
    std::size_t epochs_completed = 0;
    std::uint64_t global_step = 0;
    std::optional<double> best_metric;
    std::size_t best_epoch = 0;
};

void to_json(nlohmann::json& j, const Checkpoint& c);
void from_json(const nlohmann::json& j, Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);

/// Rebuilds the model (parameters and frozen partitions) stored in a checkpoint.
std::unique_ptr<Model> restore_model(const Checkpoint& c);

struct TrainOptions {
    std::optional<Checkpoint> resume;
    /// Stop after this many completed epochs (0 runs the configured count).
    std::size_t stop_after_epochs = 0;
    std::function<void(const std::string&)> log;
};

struct TrainResult {
    std::unique_ptr<Model> model;       // state after the last epoch
    std::unique_ptr<Model> best_model;  // state at the best validation epoch
    std::vector<LossBundle> step_losses;
    std::vector<EpochRecord> epochs;
    Checkpoint last;
    Checkpoint best;
    std::optional<MetricReport> test;   // best model on the test split
};

TrainResult train(const RunConfig& config, const Corpus& corpus, const TrainOptions& options = {});

struct EvalResult {
    MetricReport report;
    std::vector<double> predictions;
    std::vector<SampleDiagnostics> diagnostics;
};

/// Evaluation-mode forward (no masking, no graph) over `samples`.
EvalResult evaluate(const Model& model, const std::vector<Sample>& samples);

/// Checks that a corpus matches the shapes and task a model was built for.
void check_compatible(const ModelInputs& inputs, const GeneratorSpec& spec);

/// One JSON object per sample: {sample_id, alpha {l,v,a}, w, prediction, label}.
nlohmann::json route_record(const SampleDiagnostics& d, double decoded_prediction, bool with_alpha);

}  // namespace bandfuse
