// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/losses.hpp"

#include <cmath>

#include "bandfuse/error.hpp"
#include "bandfuse/ops.hpp"

namespace bandfuse {

std::string task_type_name(TaskType t) { return t == TaskType::Regression ? "regression" : "classification"; }

TaskType task_type_from_name(const std::string& name) {
    if (name == "regression") return TaskType::Regression;
    if (name == "classification") return TaskType::Classification;
    throw ParameterError("unknown task type '" + name + "'");
}

Tensor criterion(const Tensor& prediction, const Label& label, TaskType task) {
    if (!prediction.defined()) throw ParameterError("missing prediction");
    if (task == TaskType::Regression) {
        if (prediction.numel() != 1) throw DimensionError("regression prediction must be a single value");
        return square(add_scalar(reshape(prediction, {1}), static_cast<Scalar>(-label.value)));
    }
    return cross_entropy_with_logits(reshape(prediction, {prediction.numel()}), label.cls);
}

void LossWeights::validate() const {
    for (double v : {sub, ety, mcm, dist, band}) {
        if (!std::isfinite(v) || v < 0.0) throw ParameterError("loss weights must be finite and nonnegative");
    }
}

void to_json(nlohmann::json& j, const LossWeights& w) {
    j = {{"lambda_sub", w.sub}, {"lambda_ety", w.ety}, {"lambda_mcm", w.mcm}, {"lambda_dist", w.dist}, {"lambda_band", w.band}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
    for (const auto& [key, _] : j.items()) {
        if (key != "lambda_sub" && key != "lambda_ety" && key != "lambda_mcm" && key != "lambda_dist" &&
            key != "lambda_band") {
            throw ParameterError("unknown loss weight key '" + key + "'");
        }
    }
    w.sub = j.value("lambda_sub", w.sub);
    w.ety = j.value("lambda_ety", w.ety);
    w.mcm = j.value("lambda_mcm", w.mcm);
    w.dist = j.value("lambda_dist", w.dist);
    w.band = j.value("lambda_band", w.band);
    w.validate();
}

namespace {

Tensor batch_mean(const std::vector<Tensor>& per_sample) {
    return scale(sum(concat(per_sample, 0)), Scalar(1) / static_cast<Scalar>(per_sample.size()));
}

}  // namespace

TaskLoss task_loss(const std::vector<Tensor>& pred_multi, const std::vector<PerModality<Tensor>>& preds_uni,
                   const std::vector<PerModality<Tensor>>& preds_bi, const std::vector<Label>& labels, TaskType task,
                   double lambda_sub) {
    const std::size_t B = labels.size();
    if (B == 0) throw ParameterError("task_loss on an empty batch");
    if (pred_multi.size() != B || preds_uni.size() != B) throw ParameterError("missing prediction: batch sizes disagree");
    const bool with_bi = !preds_bi.empty();
    if (with_bi && preds_bi.size() != B) throw ParameterError("missing prediction: bimodal batch size disagrees");
    if (!with_bi && lambda_sub != 0.0) throw ParameterError("missing prediction: bimodal branches required when lambda_sub > 0");

    std::vector<Tensor> multi;
    PerModality<std::vector<Tensor>> uni, bi;
    for (std::size_t i = 0; i < B; ++i) {
        multi.push_back(criterion(pred_multi[i], labels[i], task));
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            uni[m].push_back(criterion(preds_uni[i][m], labels[i], task));
            if (with_bi) bi[m].push_back(criterion(preds_bi[i][m], labels[i], task));
        }
    }

    TaskLoss out;
    out.multi = batch_mean(multi);
    for (std::size_t m = 0; m < kNumModalities; ++m) out.unimodal[m] = batch_mean(uni[m]);
    out.uni = scale(add(add(out.unimodal[0], out.unimodal[1]), out.unimodal[2]), Scalar(1) / Scalar(3));
    if (with_bi) {
        for (std::size_t m = 0; m < kNumModalities; ++m) out.bimodal[m] = batch_mean(bi[m]);
        out.sub = scale(add(add(out.bimodal[0], out.bimodal[1]), out.bimodal[2]), Scalar(1) / Scalar(3));
    } else {
        out.sub = Tensor::scalar(0);
    }
    out.total = add(out.multi, out.uni);
    if (lambda_sub != 0.0) out.total = add(out.total, scale(out.sub, static_cast<Scalar>(lambda_sub)));
    return out;
}

Tensor entropy_reg(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ParameterError("entropy_reg on an empty batch");
    const std::size_t N = rows.front().numel();
    for (const auto& r : rows) {
        if (r.numel() != N) throw DimensionError("entropy_reg rows differ in length");
    }
    const Scalar factor = static_cast<Scalar>(N) / static_cast<Scalar>(rows.size());
    return scale(sum(xlogx(concat(rows, 0))), factor);
}

double LossBundle::recompose(const LossWeights& w) const {
    return task + w.ety * ety + w.mcm * mcm + w.dist * distill + w.band * band_ety;
}

void to_json(nlohmann::json& j, const LossBundle& b) {
    j = {{"task", b.task},       {"multi", b.multi}, {"uni", b.uni},         {"sub", b.sub},     {"ety", b.ety},
         {"band_ety", b.band_ety}, {"mcm", b.mcm},   {"distill", b.distill}, {"total", b.total}};
}

Tensor total_loss(const LossTerms& terms, const LossWeights& weights) {
    Tensor total = terms.task.total;
    auto accumulate = [&total](const Tensor& term, double lambda) {
        if (term.defined() && lambda != 0.0) total = add(total, scale(term, static_cast<Scalar>(lambda)));
    };
    accumulate(terms.ety, weights.ety);
    accumulate(terms.mcm, weights.mcm);
    accumulate(terms.distill, weights.dist);
    accumulate(terms.band_ety, weights.band);
    return total;
}

LossBundle summarize(const LossTerms& terms, const Tensor& total) {
    auto val = [](const Tensor& t) { return t.defined() ? static_cast<double>(t.item()) : 0.0; };
    LossBundle b;
    b.task = val(terms.task.total);
    b.multi = val(terms.task.multi);
    b.uni = val(terms.task.uni);
    b.sub = val(terms.task.sub);
    b.ety = val(terms.ety);
    b.band_ety = val(terms.band_ety);
    b.mcm = val(terms.mcm);
    b.distill = val(terms.distill);
    b.total = val(total);
    return b;
}

}  // namespace bandfuse
