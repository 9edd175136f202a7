// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>

#include "bandfuse/error.hpp"

namespace bandfuse {

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw ParameterError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ParameterError("unknown key '" + key + "' in " + where);
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (d == 0 || hidden == 0 || K == 0 || layers == 0 || heads == 0 || ff_mult == 0) {
        throw ParameterError("model dimensions must be positive");
    }
    if (d % heads != 0) throw ParameterError("d must be divisible by heads");
    if (conv_kernel % 2 == 0) throw ParameterError("conv_kernel must be odd");
    if (!(tau_band > 0) || !(tau_modality > 0) || !(tau_comp > 0)) throw ParameterError("temperatures must be positive");
    if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw ParameterError("mask_rate must lie in [0, 1)");
}

void RunConfig::validate() const {
    model.validate();
    loss.validate();
    if (!(optimizer.lr > 0) || !(optimizer.eps > 0)) throw ParameterError("optimizer lr and eps must be positive");
    if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1) || !(optimizer.beta2 >= 0 && optimizer.beta2 < 1)) {
        throw ParameterError("optimizer betas must lie in [0, 1)");
    }
    if (batch_size == 0) throw ParameterError("batch_size must be positive");
}

LossWeights RunConfig::effective_loss() const {
    LossWeights w = loss;
    if (!model.use_mcm) w.mcm = w.dist = w.sub = 0.0;
    if (!model.use_sbn) w.band = 0.0;
    return w;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"d", c.d},
         {"hidden", c.hidden},
         {"K", c.K},
         {"layers", c.layers},
         {"heads", c.heads},
         {"ff_mult", c.ff_mult},
         {"conv_kernel", c.conv_kernel},
         {"tau_band", c.tau_band},
         {"tau_modality", c.tau_modality},
         {"tau_comp", c.tau_comp},
         {"mask_rate", c.mask_rate},
         {"path", routing_path_name(c.path)},
         {"use_sbn", c.use_sbn},
         {"use_mcm", c.use_mcm}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    reject_unknown(j,
                   {"d", "hidden", "K", "layers", "heads", "ff_mult", "conv_kernel", "tau_band", "tau_modality",
                    "tau_comp", "mask_rate", "path", "use_sbn", "use_mcm"},
                   "model");
    c.d = j.value("d", c.d);
    c.hidden = j.value("hidden", c.hidden);
    c.K = j.value("K", c.K);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.ff_mult = j.value("ff_mult", c.ff_mult);
    c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
    c.tau_band = j.value("tau_band", c.tau_band);
    c.tau_modality = j.value("tau_modality", c.tau_modality);
    c.tau_comp = j.value("tau_comp", c.tau_comp);
    c.mask_rate = j.value("mask_rate", c.mask_rate);
    if (j.contains("path")) c.path = routing_path_from_name(j.at("path").get<std::string>());
    c.use_sbn = j.value("use_sbn", c.use_sbn);
    c.use_mcm = j.value("use_mcm", c.use_mcm);
}

void to_json(nlohmann::json& j, const AdamOptions& o) {
    j = {{"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}};
}

void from_json(const nlohmann::json& j, AdamOptions& o) {
    reject_unknown(j, {"lr", "beta1", "beta2", "eps"}, "optimizer");
    o.lr = j.value("lr", o.lr);
    o.beta1 = j.value("beta1", o.beta1);
    o.beta2 = j.value("beta2", o.beta2);
    o.eps = j.value("eps", o.eps);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"model", c.model},
         {"loss", c.loss},
         {"optimizer", c.optimizer},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"data", c.data},
         {"output_dir", c.output_dir}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    reject_unknown(j, {"model", "loss", "optimizer", "epochs", "batch_size", "seed", "data", "output_dir"}, "run config");
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("loss")) c.loss = j.at("loss").get<LossWeights>();
    if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<AdamOptions>();
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.data = j.value("data", c.data);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return j.get<RunConfig>();
}

}  // namespace bandfuse
