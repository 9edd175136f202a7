// SPDX-License-Identifier: Apache-2.0
#include "bandfuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bandfuse/error.hpp"
#include "bandfuse/rng.hpp"
#include "bandfuse/specband.hpp"

namespace bandfuse {

namespace {

std::string latent_name(Latent z) { return z == Latent::Z1 ? "z1" : "z2"; }

Latent latent_from_name(const std::string& s) {
    if (s == "z1") return Latent::Z1;
    if (s == "z2") return Latent::Z2;
    throw ParameterError("unknown latent factor '" + s + "' (expected z1 or z2)");
}

constexpr std::uint64_t kTemplateTag = 0x7465'6d70'6c61'7465ULL;  // "template"

// Eigenvector mixture over [b0, b1) with the given coefficients, rescaled to ||c|| = sqrt(T).
std::vector<double> mixture(const specband::SpectralBasis& basis, std::size_t b0, std::span<const double> coeffs) {
    const std::size_t T = basis.T;
    std::vector<double> c(T, 0.0);
    for (std::size_t f = 0; f < coeffs.size(); ++f)
        for (std::size_t t = 0; t < T; ++t) c[t] += coeffs[f] * basis.U(t, b0 + f);
    double norm = 0;
    for (double v : c) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0) {
        const double s = std::sqrt(static_cast<double>(T)) / norm;
        for (double& v : c) v *= s;
    }
    return c;
}

struct ModalityTemplate {
    std::vector<double> cue_coeffs;
    std::vector<double> echo_coeffs;
    std::vector<double> direction;                 // cue / echo feature direction
    std::vector<std::vector<double>> nuisance_dir;  // per band
};

ModalityTemplate make_template(const GeneratorSpec& spec, Modality m, const specband::BandPartition& bands) {
    const auto& ms = spec.modalities[index_of(m)];
    Rng rng = Rng(spec.seed).substream({kTemplateTag, index_of(m)});
    ModalityTemplate tpl;
    tpl.cue_coeffs.resize(bands.width(ms.cue_band));
    for (auto& a : tpl.cue_coeffs) a = rng.normal();
    if (ms.echo_band) {
        tpl.echo_coeffs.resize(bands.width(*ms.echo_band));
        for (auto& a : tpl.echo_coeffs) a = rng.normal();
    }
    tpl.direction.resize(ms.input_dim);
    for (auto& v : tpl.direction) v = rng.normal();
    tpl.nuisance_dir.resize(spec.K);
    for (auto& dir : tpl.nuisance_dir) {
        dir.resize(ms.input_dim);
        for (auto& v : dir) v = rng.normal();
    }
    return tpl;
}

void check_band(std::size_t band, std::size_t K, const char* what) {
    if (band >= K) throw ParameterError(std::string(what) + " " + std::to_string(band) + " must be < K=" + std::to_string(K));
}

}  // namespace

void GeneratorSpec::validate() const {
    if (K < 1) throw ParameterError("generator needs K >= 1");
    if (task == TaskType::Classification && num_classes < 2) throw ParameterError("classification needs >= 2 classes");
    if (!(label_min < label_max)) throw ParameterError("label range must be increasing");
    if (!(latent_range > 0)) throw ParameterError("latent_range must be positive");
    if (noise_sigma < 0 || nuisance_scale < 0 || carrier_jitter < 0) throw ParameterError("noise scales must be nonnegative");
    for (Modality m : kModalities) {
        const auto& ms = modalities[index_of(m)];
        if (ms.T < 2) throw ParameterError("modality T must be >= 2");
        if (ms.T < K) throw ParameterError("modality T must be >= K");
        if (ms.input_dim < 1) throw ParameterError("modality input_dim must be >= 1");
        check_band(ms.cue_band, K, "cue_band");
        if (ms.echo_band) {
            check_band(*ms.echo_band, K, "echo_band");
            if (*ms.echo_band == ms.cue_band) throw ParameterError("echo_band must differ from cue_band");
        }
    }
}

Label GeneratorSpec::label_for(double z1, double z2) const {
    const double y = std::clamp(z1 + z2, label_min, label_max);
    Label l;
    l.value = y;
    if (task == TaskType::Classification) {
        const double lo = -2.0 * latent_range, hi = 2.0 * latent_range;
        const double pos = (z1 + z2 - lo) / (hi - lo) * static_cast<double>(num_classes);
        l.cls = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(num_classes - 1)));
        l.value = static_cast<double>(l.cls);
    }
    return l;
}

void to_json(nlohmann::json& j, const GeneratorSpec& s) {
    nlohmann::json mods = nlohmann::json::object();
    for (Modality m : kModalities) {
        const auto& ms = s.modalities[index_of(m)];
        nlohmann::json mj = {{"T", ms.T},
                             {"input_dim", ms.input_dim},
                             {"cue_band", ms.cue_band},
                             {"factor", latent_name(ms.factor)},
                             {"echo_gain", ms.echo_gain}};
        mj["echo_band"] = ms.echo_band ? nlohmann::json(*ms.echo_band) : nlohmann::json(nullptr);
        mods[std::string(modality_name(m))] = mj;
    }
    j = {{"n_train", s.n_train},
         {"n_val", s.n_val},
         {"n_test", s.n_test},
         {"K", s.K},
         {"task", task_type_name(s.task)},
         {"num_classes", s.num_classes},
         {"label_range", {s.label_min, s.label_max}},
         {"latent_range", s.latent_range},
         {"noise_sigma", s.noise_sigma},
         {"nuisance_scale", s.nuisance_scale},
         {"nuisance_along_cue", s.nuisance_along_cue},
         {"carrier_jitter", s.carrier_jitter},
         {"seed", s.seed},
         {"modalities", mods}};
}

void from_json(const nlohmann::json& j, GeneratorSpec& s) {
    static const std::set<std::string> known = {"n_train",      "n_val",       "n_test",         "K",
                                                 "task",         "num_classes", "label_range",    "latent_range",
                                                 "noise_sigma",  "nuisance_scale", "nuisance_along_cue", "carrier_jitter", "seed",
                                                 "modalities"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ParameterError("unknown generator spec key '" + key + "'");
    }
    s.n_train = j.value("n_train", s.n_train);
    s.n_val = j.value("n_val", s.n_val);
    s.n_test = j.value("n_test", s.n_test);
    s.K = j.value("K", s.K);
    if (j.contains("task")) s.task = task_type_from_name(j.at("task").get<std::string>());
    s.num_classes = j.value("num_classes", s.num_classes);
    if (j.contains("label_range")) {
        const auto r = j.at("label_range").get<std::vector<double>>();
        if (r.size() != 2) throw ParameterError("label_range must have two entries");
        s.label_min = r[0];
        s.label_max = r[1];
    }
    s.latent_range = j.value("latent_range", s.latent_range);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.nuisance_scale = j.value("nuisance_scale", s.nuisance_scale);
    s.nuisance_along_cue = j.value("nuisance_along_cue", s.nuisance_along_cue);
    s.carrier_jitter = j.value("carrier_jitter", s.carrier_jitter);
    s.seed = j.value("seed", s.seed);
    if (j.contains("modalities")) {
        for (const auto& [name, mj] : j.at("modalities").items()) {
            auto& ms = s.modalities[index_of(modality_from_name(name))];
            for (const auto& [key, _] : mj.items()) {
                if (key != "T" && key != "input_dim" && key != "cue_band" && key != "factor" && key != "echo_band" &&
                    key != "echo_gain") {
                    throw ParameterError("unknown modality spec key '" + key + "'");
                }
            }
            ms.T = mj.value("T", ms.T);
            ms.input_dim = mj.value("input_dim", ms.input_dim);
            ms.cue_band = mj.value("cue_band", ms.cue_band);
            if (mj.contains("factor")) ms.factor = latent_from_name(mj.at("factor").get<std::string>());
            if (mj.contains("echo_band")) {
                const auto& e = mj.at("echo_band");
                ms.echo_band = e.is_null() ? std::nullopt : std::optional<std::size_t>(e.get<std::size_t>());
            }
            ms.echo_gain = mj.value("echo_gain", ms.echo_gain);
        }
    }
    s.validate();
}

std::string spec_hash(const GeneratorSpec& s) {
    const nlohmann::json j = s;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw ParameterError("unknown split '" + name + "'");
}

const std::vector<Sample>& Corpus::split(Split s) const {
    return s == Split::Train ? train : (s == Split::Val ? val : test);
}

std::vector<Sample>& Corpus::split(Split s) { return s == Split::Train ? train : (s == Split::Val ? val : test); }

Corpus generate(const GeneratorSpec& spec) {
    spec.validate();
    Corpus corpus;
    corpus.spec = spec;

    PerModality<std::shared_ptr<const specband::SpectralBasis>> bases;
    PerModality<specband::BandPartition> bands;
    PerModality<ModalityTemplate> templates;
    for (Modality m : kModalities) {
        const auto& ms = spec.modalities[index_of(m)];
        bases[index_of(m)] = specband::BasisCache::global().get(ms.T);
        bands[index_of(m)] = specband::equidistant_partition(ms.T, spec.K);
        templates[index_of(m)] = make_template(spec, m, bands[index_of(m)]);
    }

    const std::size_t total = spec.n_train + spec.n_val + spec.n_test;
    for (std::uint64_t id = 0; id < total; ++id) {
        Rng rng = Rng(spec.seed).substream({id});
        Sample s;
        s.id = id;
        s.meta.z1 = rng.uniform(-spec.latent_range, spec.latent_range);
        s.meta.z2 = rng.uniform(-spec.latent_range, spec.latent_range);
        s.label = spec.label_for(s.meta.z1, s.meta.z2);

        for (Modality m : kModalities) {
            const std::size_t mi = index_of(m);
            const auto& ms = spec.modalities[mi];
            const auto& basis = *bases[mi];
            const auto& part = bands[mi];
            const auto& tpl = templates[mi];
            s.meta.cue_bands[mi] = ms.cue_band;
            const double z = ms.factor == Latent::Z1 ? s.meta.z1 : s.meta.z2;

            auto jittered = [&](const std::vector<double>& base) {
                std::vector<double> c(base);
                for (auto& a : c) a += spec.carrier_jitter * rng.normal();
                return c;
            };
            std::vector<double> x(ms.T * ms.input_dim, 0.0);
            auto add_component = [&](const std::vector<double>& carrier, const std::vector<double>& dir, double amp) {
                for (std::size_t t = 0; t < ms.T; ++t)
                    for (std::size_t j = 0; j < ms.input_dim; ++j) x[t * ms.input_dim + j] += amp * carrier[t] * dir[j];
            };

            add_component(mixture(basis, part.boundaries[ms.cue_band], jittered(tpl.cue_coeffs)), tpl.direction, z);
            if (ms.echo_band) {
                add_component(mixture(basis, part.boundaries[*ms.echo_band], jittered(tpl.echo_coeffs)), tpl.direction,
                              ms.echo_gain * z);
            }
            for (std::size_t b = 0; b < spec.K; ++b) {
                // Always draw, so the stream layout does not depend on nuisance_scale.
                std::vector<double> coeffs(part.width(b));
                for (auto& a : coeffs) a = rng.normal();
                const double amp = spec.nuisance_scale * rng.normal();
                if (b == ms.cue_band || (ms.echo_band && b == *ms.echo_band) || spec.nuisance_scale == 0.0) continue;
                add_component(mixture(basis, part.boundaries[b], coeffs),
                              spec.nuisance_along_cue ? tpl.direction : tpl.nuisance_dir[b], amp);
            }
            for (auto& v : x) {
                const double e = rng.normal();
                v += spec.noise_sigma * e;
            }
            std::vector<Scalar> xs(x.begin(), x.end());
            s.features[mi] = Tensor::matrix(ms.T, ms.input_dim, std::move(xs));
        }

        if (id < spec.n_train) corpus.train.push_back(std::move(s));
        else if (id < spec.n_train + spec.n_val) corpus.val.push_back(std::move(s));
        else corpus.test.push_back(std::move(s));
    }
    return corpus;
}

namespace {

nlohmann::json sample_to_json(const Sample& s) {
    nlohmann::json cue = nlohmann::json::object(), feats = nlohmann::json::object();
    for (Modality m : kModalities) {
        const auto mi = index_of(m);
        cue[std::string(modality_name(m))] = s.meta.cue_bands[mi];
        const Tensor& f = s.features[mi];
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t t = 0; t < f.dim(0); ++t) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < f.dim(1); ++j) row.push_back(static_cast<double>(f.at(t, j)));
            rows.push_back(std::move(row));
        }
        feats[std::string(modality_name(m))] = std::move(rows);
    }
    return {{"id", s.id},
            {"label", s.label.value},
            {"class", s.label.cls},
            {"metadata", {{"cue_bands", cue}, {"z1", s.meta.z1}, {"z2", s.meta.z2}}},
            {"features", feats}};
}

Sample sample_from_json(const nlohmann::json& j, const GeneratorSpec& spec) {
    Sample s;
    s.id = j.at("id").get<std::uint64_t>();
    s.label.value = j.at("label").get<double>();
    s.label.cls = j.value("class", std::size_t{0});
    const auto& meta = j.at("metadata");
    s.meta.z1 = meta.at("z1").get<double>();
    s.meta.z2 = meta.at("z2").get<double>();
    for (Modality m : kModalities) {
        const auto mi = index_of(m);
        const std::string name(modality_name(m));
        s.meta.cue_bands[mi] = meta.at("cue_bands").at(name).get<std::size_t>();
        const auto& rows = j.at("features").at(name);
        const auto& ms = spec.modalities[mi];
        if (rows.size() != ms.T) throw ParseError("modality " + name + " has " + std::to_string(rows.size()) + " time steps, spec says " + std::to_string(ms.T));
        std::vector<Scalar> v;
        v.reserve(ms.T * ms.input_dim);
        for (const auto& r : rows) {
            if (r.size() != ms.input_dim) throw ParseError("modality " + name + " feature row has wrong width");
            for (const auto& x : r) v.push_back(static_cast<Scalar>(x.get<double>()));
        }
        s.features[mi] = Tensor::matrix(ms.T, ms.input_dim, std::move(v));
    }
    return s;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {{"format_version", kCorpusFormatVersion},
                               {"spec", corpus.spec},
                               {"spec_hash", spec_hash(corpus.spec)},
                               {"splits", nlohmann::json::object()}};
    for (Split sp : {Split::Train, Split::Val, Split::Test}) {
        const std::string file = split_name(sp) + ".jsonl";
        std::ofstream out(dir / file);
        if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
        for (const auto& s : corpus.split(sp)) out << sample_to_json(s).dump() << '\n';
        manifest["splits"][split_name(sp)] = {{"file", file}, {"count", corpus.split(sp).size()}};
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

LoadedCorpus load_corpus(const std::filesystem::path& dir) {
    LoadedCorpus result;
    std::ifstream min(dir / "manifest.json");
    if (!min) throw std::runtime_error("cannot open corpus manifest " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(min);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest.json: ") + e.what());
    }
    const int version = manifest.value("format_version", -1);
    if (version != kCorpusFormatVersion) {
        throw VersionError("corpus format version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kCorpusFormatVersion) + ")");
    }
    result.corpus.spec = manifest.at("spec").get<GeneratorSpec>();
    const std::string recorded = manifest.value("spec_hash", std::string());
    if (recorded != spec_hash(result.corpus.spec)) {
        result.warnings.push_back("manifest spec_hash " + recorded + " does not match the stored spec (" +
                                  spec_hash(result.corpus.spec) + ")");
    }

    std::set<std::uint64_t> ids;
    for (Split sp : {Split::Train, Split::Val, Split::Test}) {
        const auto& entry = manifest.at("splits").at(split_name(sp));
        const auto path = dir / entry.at("file").get<std::string>();
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open corpus split " + path.string());
        std::string line;
        std::size_t lineno = 0;
        auto& out = result.corpus.split(sp);
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                out.push_back(sample_from_json(nlohmann::json::parse(line), result.corpus.spec));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(path.filename().string() + ": " + e.what(), lineno);
            } catch (const ParseError& e) {
                throw ParseError(path.filename().string() + ": " + e.what(), lineno);
            }
            if (!ids.insert(out.back().id).second) {
                throw ParseError(path.filename().string() + ": duplicate sample id " + std::to_string(out.back().id), lineno);
            }
        }
        const auto expected = entry.value("count", out.size());
        if (expected != out.size()) {
            result.warnings.push_back(split_name(sp) + " split holds " + std::to_string(out.size()) +
                                      " samples, manifest says " + std::to_string(expected));
        }
    }
    return result;
}

Sample remove_band(const Sample& s, Modality m, std::size_t band, const GeneratorSpec& spec) {
    const auto mi = index_of(m);
    const auto& ms = spec.modalities[mi];
    auto basis = specband::BasisCache::global().get(ms.T);
    const auto part = specband::equidistant_partition(ms.T, spec.K);
    check_band(band, spec.K, "band");
    const auto bd = specband::BandProjector(basis, part).decompose(s.features[mi]);
    Sample out = s;
    Tensor kept = Tensor::zeros(s.features[mi].shape());
    auto kv = kept.mutable_values();
    for (std::size_t k = 0; k < spec.K; ++k) {
        if (k == band) continue;
        const auto cv = bd.components[k].values();
        for (std::size_t i = 0; i < kv.size(); ++i) kv[i] += cv[i];
    }
    out.features[mi] = kept;
    return out;
}

}  // namespace bandfuse
