// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "bandfuse/error.hpp"

namespace bandfuse {

namespace {

void require_pairs(std::size_t a, std::size_t b) {
    if (a != b) throw DimensionError("metrics: " + std::to_string(a) + " predictions vs " + std::to_string(b) + " labels");
    if (a == 0) throw ParameterError("metrics on empty input");
}

double round7(double x) { return std::nearbyint(std::clamp(x, -3.0, 3.0)); }

}  // namespace

RegressionMetrics regression_metrics(std::span<const double> preds, std::span<const double> labels) {
    require_pairs(preds.size(), labels.size());
    RegressionMetrics r;
    std::size_t exact = 0;
    double abs_err = 0;
    // Binary confusion on nonzero labels: [truth][pred], 1 = positive.
    std::size_t conf[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (round7(preds[i]) == round7(labels[i])) ++exact;
        abs_err += std::abs(preds[i] - labels[i]);
        if (labels[i] != 0.0) ++conf[labels[i] > 0.0][preds[i] > 0.0];
    }
    const double n = static_cast<double>(preds.size());
    r.acc7 = static_cast<double>(exact) / n;
    r.mae = abs_err / n;
    const std::size_t nonzero = conf[0][0] + conf[0][1] + conf[1][0] + conf[1][1];
    if (nonzero > 0) {
        r.acc2 = static_cast<double>(conf[0][0] + conf[1][1]) / static_cast<double>(nonzero);
        double f1 = 0;
        for (int c = 0; c < 2; ++c) {
            const double tp = static_cast<double>(conf[c][c]);
            const double fp = static_cast<double>(conf[1 - c][c]);
            const double fn = static_cast<double>(conf[c][1 - c]);
            const double support = tp + fn;
            const double denom = 2 * tp + fp + fn;
            const double fc = denom > 0 ? 2 * tp / denom : 0.0;
            f1 += fc * support;
        }
        r.f1 = f1 / static_cast<double>(nonzero);
    }
    return r;
}

ClassificationMetrics classification_metrics(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
    require_pairs(preds.size(), labels.size());
    std::set<std::size_t> classes(labels.begin(), labels.end());
    classes.insert(preds.begin(), preds.end());
    ClassificationMetrics r;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
    r.acc = static_cast<double>(correct) / static_cast<double>(preds.size());
    for (std::size_t c : classes) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i] == c && labels[i] == c) ++tp;
            else if (preds[i] == c) ++fp;
            else if (labels[i] == c) ++fn;
        }
        const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double rc = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        r.precision += p;
        r.recall += rc;
        r.f1 += p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
    }
    const double k = static_cast<double>(classes.size());
    r.precision /= k;
    r.recall /= k;
    r.f1 /= k;
    return r;
}

double MetricReport::selection_value() const { return task == TaskType::Regression ? values.at("mae") : values.at("f1"); }

bool MetricReport::better_than(double other) const {
    return task == TaskType::Regression ? selection_value() < other : selection_value() > other;
}

MetricReport metrics(std::span<const double> preds, std::span<const double> labels, TaskType task) {
    MetricReport out;
    out.task = task;
    if (task == TaskType::Regression) {
        const auto r = regression_metrics(preds, labels);
        out.values = {{"acc7", r.acc7}, {"acc2", r.acc2}, {"f1", r.f1}, {"mae", r.mae}};
        return out;
    }
    require_pairs(preds.size(), labels.size());
    std::vector<std::size_t> p(preds.size()), l(labels.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] < 0 || labels[i] < 0) throw ParameterError("class ids must be nonnegative");
        p[i] = static_cast<std::size_t>(std::llround(preds[i]));
        l[i] = static_cast<std::size_t>(std::llround(labels[i]));
    }
    const auto r = classification_metrics(p, l);
    out.values = {{"acc", r.acc}, {"f1", r.f1}, {"precision", r.precision}, {"recall", r.recall}};
    return out;
}

void to_json(nlohmann::json& j, const MetricReport& r) {
    j = nlohmann::json::object();
    j["task"] = task_type_name(r.task);
    for (const auto& [k, v] : r.values) j[k] = v;
}

}  // namespace bandfuse
