// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multimodal corpora with known band placement and cross-modal redundancy.
//
// Each sample draws two independent latents z1, z2 ~ U(-r, r). A modality that
// encodes latent z carries z * c(t) * p, where c is a mixture of path-graph
// eigenvectors restricted to the modality's cue band (a fixed per-corpus
// template plus a small per-sample jitter, rescaled to RMS 1 over time) and p
// is a fixed per-modality direction in feature space. Optional label-free
// nuisance content fills the other bands (on its own feature direction or on the
// cue's), optional "echo" content repeats the
// latent at reduced gain in a second band, and white noise covers everything.
// The generator's bands are equidistant in eigen-index.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bandfuse/losses.hpp"
#include "bandfuse/modality.hpp"
#include "bandfuse/tensor.hpp"

namespace bandfuse {

inline constexpr int kCorpusFormatVersion = 1;

enum class Latent { Z1, Z2 };

struct ModalitySpec {
    std::size_t T = 16;
    std::size_t input_dim = 8;
    std::size_t cue_band = 0;
    Latent factor = Latent::Z1;
    std::optional<std::size_t> echo_band;  // second band carrying the latent
    double echo_gain = 0.0;
};

struct GeneratorSpec {
    std::size_t n_train = 256;
    std::size_t n_val = 64;
    std::size_t n_test = 64;
    std::size_t K = 3;
    TaskType task = TaskType::Regression;
    std::size_t num_classes = 3;
    double label_min = -3.0;
    double label_max = 3.0;
    double latent_range = 1.5;
    double noise_sigma = 0.3;
    double nuisance_scale = 0.0;
    bool nuisance_along_cue = false;  // nuisance shares the cue's feature direction
    double carrier_jitter = 0.3;
    std::uint64_t seed = 0;
    PerModality<ModalitySpec> modalities{};

    void validate() const;
    /// Label (regression value or class id) implied by the latents.
    Label label_for(double z1, double z2) const;
};

void to_json(nlohmann::json& j, const GeneratorSpec& s);
void from_json(const nlohmann::json& j, GeneratorSpec& s);

/// Hash of the canonical (sorted-key) JSON form of a generator spec.
std::string spec_hash(const GeneratorSpec& s);

struct SampleMetadata {
    PerModality<std::size_t> cue_bands{};
    double z1 = 0.0;
    double z2 = 0.0;
};

struct Sample {
    std::uint64_t id = 0;
    Label label;
    SampleMetadata meta;
    PerModality<Tensor> features;  // [T_m, input_dim_m], no gradient
};

enum class Split { Train, Val, Test };
std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct Corpus {
    GeneratorSpec spec;
    std::vector<Sample> train, val, test;

    const std::vector<Sample>& split(Split s) const;
    std::vector<Sample>& split(Split s);
};

Corpus generate(const GeneratorSpec& spec);

/// Writes manifest.json plus one JSON-Lines file per split into `dir` (created if missing).
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct LoadedCorpus {
    Corpus corpus;
    std::vector<std::string> warnings;
};

LoadedCorpus load_corpus(const std::filesystem::path& dir);

/// Copy of the sample with generator band `band` of modality `m` removed from its features.
Sample remove_band(const Sample& s, Modality m, std::size_t band, const GeneratorSpec& spec);

}  // namespace bandfuse
