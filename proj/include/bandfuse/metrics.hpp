// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics.
//
// Regression (sentiment intensity in [-3, 3]):
//   acc7  predictions and labels clipped to [-3, 3] and rounded half-to-even
//         to the nearest integer, then exact-match accuracy;
//   acc2  positive-vs-negative accuracy over samples whose label is nonzero,
//         where "positive" means > 0;
//   f1    support-weighted F1 over the same nonzero subset and classes;
//   mae   mean |pred - label| over all samples.
// With no nonzero labels, acc2 and f1 are reported as 0.
//
// Classification: accuracy plus macro-averaged F1 / precision / recall over the
// classes that occur in either labels or predictions (undefined ratios count as 0).
#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "bandfuse/losses.hpp"

namespace bandfuse {

struct RegressionMetrics {
    double acc7 = 0, acc2 = 0, f1 = 0, mae = 0;
};

struct ClassificationMetrics {
    double acc = 0, f1 = 0, precision = 0, recall = 0;
};

RegressionMetrics regression_metrics(std::span<const double> preds, std::span<const double> labels);
ClassificationMetrics classification_metrics(std::span<const std::size_t> preds, std::span<const std::size_t> labels);

/// Task-dispatched report. For classification, `preds` and `labels` hold class ids as doubles.
struct MetricReport {
    TaskType task = TaskType::Regression;
    std::map<std::string, double> values;

    double at(const std::string& key) const { return values.at(key); }
    /// Model-selection metric: MAE (lower is better) or macro F1 (higher is better).
    double selection_value() const;
    bool better_than(double other) const;
};

MetricReport metrics(std::span<const double> preds, std::span<const double> labels, TaskType task);

void to_json(nlohmann::json& j, const MetricReport& r);

}  // namespace bandfuse
