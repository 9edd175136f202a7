// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "bandfuse/adam.hpp"
#include "bandfuse/losses.hpp"
#include "bandfuse/routing.hpp"

namespace bandfuse {

struct ModelConfig {
    std::size_t d = 32;
    std::size_t hidden = 64;  // d_h: router, branch and unimodal head width
    std::size_t K = 3;
    std::size_t layers = 1;
    std::size_t heads = 2;
    std::size_t ff_mult = 4;
    std::size_t conv_kernel = 3;
    double tau_band = 1.0;
    double tau_modality = 1.0;
    double tau_comp = 1.0;
    double mask_rate = 0.15;
    RoutingPath path = RoutingPath::PostAttention;
    bool use_sbn = true;
    bool use_mcm = true;

    void validate() const;
};

struct RunConfig {
    ModelConfig model;
    LossWeights loss;
    AdamOptions optimizer;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::string data;        // corpus directory
    std::string output_dir;  // run directory; empty keeps everything in memory

    void validate() const;
    /// Loss weights with the terms of disabled modules forced to zero.
    LossWeights effective_loss() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const AdamOptions& o);
void from_json(const nlohmann::json& j, AdamOptions& o);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace bandfuse
