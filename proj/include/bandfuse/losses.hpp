// SPDX-License-Identifier: Apache-2.0
//
// Training objective: task loss with unimodal and bimodal auxiliaries, entropy
// regularizers on routing weights, and the weighted total.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bandfuse/modality.hpp"
#include "bandfuse/tensor.hpp"

namespace bandfuse {

enum class TaskType { Regression, Classification };

std::string task_type_name(TaskType t);
TaskType task_type_from_name(const std::string& name);

/// Ground truth for one sample. Classification uses `cls`; regression uses `value`.
struct Label {
    double value = 0.0;
    std::size_t cls = 0;
};

/// Per-sample criterion: squared error (regression) or cross-entropy (classification).
Tensor criterion(const Tensor& prediction, const Label& label, TaskType task);

struct LossWeights {
    double sub = 1.0;
    double ety = 1.0;
    double mcm = 0.1;
    double dist = 0.1;
    double band = 1.0;

    void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

struct TaskLoss {
    Tensor total;  // multi + uni + lambda_sub * sub
    Tensor multi;
    Tensor uni;
    Tensor sub;    // zero constant when no bimodal predictions are supplied
    PerModality<Tensor> unimodal;
    PerModality<Tensor> bimodal;  // undefined when absent
};

/// Batch task loss; each vector holds one entry per sample. `preds_bi` may be
/// empty only when lambda_sub is zero.
TaskLoss task_loss(const std::vector<Tensor>& pred_multi, const std::vector<PerModality<Tensor>>& preds_uni,
                   const std::vector<PerModality<Tensor>>& preds_bi, const std::vector<Label>& labels, TaskType task,
                   double lambda_sub);

/// (N / B) * sum_i sum_n w_in log w_in over B simplex rows of length N.
Tensor entropy_reg(const std::vector<Tensor>& rows);

/// Scalar terms of one batch, as plain numbers.
struct LossBundle {
    double task = 0, multi = 0, uni = 0, sub = 0, ety = 0, band_ety = 0, mcm = 0, distill = 0, total = 0;

    /// task + ety*L_ety + mcm*L_mcm + dist*L_distill + band*L_band.
    double recompose(const LossWeights& w) const;
};

void to_json(nlohmann::json& j, const LossBundle& b);

struct LossTerms {
    TaskLoss task;
    Tensor ety;
    Tensor band_ety;
    Tensor mcm;
    Tensor distill;
};

/// Weighted sum of all terms. Undefined optional terms count as zero.
Tensor total_loss(const LossTerms& terms, const LossWeights& weights);
LossBundle summarize(const LossTerms& terms, const Tensor& total);

}  // namespace bandfuse
