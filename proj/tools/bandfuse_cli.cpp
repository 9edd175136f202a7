// SPDX-License-Identifier: Apache-2.0
//
// bandfuse: command-line front end.
//
//   gen-data       --spec spec.json --out DIR
//   decompose      --input FILE.csv|CORPUS_DIR --out DIR [--K 3] [--split train] [--modality l] [--index 0]
//   train          --config cfg.json [--resume CKPT]
//   eval           --ckpt CKPT --data CORPUS_DIR [--split test] [--out FILE]
//   route-inspect  --ckpt CKPT --data CORPUS_DIR [--split test] [--out FILE]
//   gradcheck      [--module NAME] [--seed N] [--tol X]
//
// BANDFUSE_VERBOSE=0 silences progress messages on stderr.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "bandfuse/data.hpp"
#include "bandfuse/error.hpp"
#include "bandfuse/gradcheck.hpp"
#include "bandfuse/specband.hpp"
#include "bandfuse/trainer.hpp"

using namespace bandfuse;
namespace fs = std::filesystem;

namespace {

bool verbose() {
    const char* v = std::getenv("BANDFUSE_VERBOSE");
    return v == nullptr || std::string(v) != "0";
}

void note(const std::string& msg) {
    if (verbose()) std::cerr << msg << '\n';
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

Corpus load_with_warnings(const fs::path& dir) {
    auto loaded = load_corpus(dir);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
    return std::move(loaded.corpus);
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << text;
}

// Rows are time steps, columns feature dimensions; blank lines and lines starting with '#' are skipped.
specband::Matrix read_csv_matrix(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw ParseError(path.filename().string() + ": not a number '" + cell + "'", lineno);
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError(path.filename().string() + ": ragged row", lineno);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path.filename().string() + ": no data rows");
    specband::Matrix X(rows.size(), rows.front().size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t j = 0; j < rows[t].size(); ++j) X(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = rows[t][j];
    }
    return X;
}

Tensor to_tensor(const specband::Matrix& X) {
    std::vector<Scalar> v;
    for (Eigen::Index t = 0; t < X.rows(); ++t) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) v.push_back(static_cast<Scalar>(X(t, j)));
    }
    return Tensor::matrix(static_cast<std::size_t>(X.rows()), static_cast<std::size_t>(X.cols()), std::move(v));
}

void write_csv(const fs::path& path, const Tensor& X) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(17);
    for (std::size_t t = 0; t < X.dim(0); ++t) {
        for (std::size_t j = 0; j < X.dim(1); ++j) out << (j ? "," : "") << X.at(t, j);
        out << '\n';
    }
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir) {
    const GeneratorSpec spec = read_json(spec_path).get<GeneratorSpec>();
    const Corpus corpus = generate(spec);
    save_corpus(corpus, out_dir);
    note("wrote " + std::to_string(corpus.train.size()) + "/" + std::to_string(corpus.val.size()) + "/" +
         std::to_string(corpus.test.size()) + " train/val/test samples to " + out_dir + " (spec hash " + spec_hash(spec) + ")");
    return 0;
}

int cmd_decompose(const std::string& input, const std::string& out_dir, std::size_t K, const std::string& split,
                  const std::string& modality, std::size_t index) {
    Tensor X;
    std::vector<double> profile;
    if (fs::is_directory(input)) {
        const Corpus corpus = load_with_warnings(input);
        const auto& samples = corpus.split(split_from_name(split));
        if (samples.empty()) throw ParameterError("split '" + split + "' is empty");
        if (index >= samples.size()) throw ParameterError("sample index out of range");
        const Modality m = modality_from_name(modality);
        auto basis = specband::BasisCache::global().get(corpus.spec.modalities[index_of(m)].T);
        specband::EnergyAccumulator acc(basis);
        for (const auto& s : samples) acc.add(s.features[index_of(m)]);
        profile = acc.profile();
        X = samples[index].features[index_of(m)];
    } else {
        X = to_tensor(read_csv_matrix(input));
        auto basis = specband::BasisCache::global().get(X.dim(0));
        specband::EnergyAccumulator acc(basis);
        acc.add(X);
        profile = acc.profile();
    }
    const std::size_t T = X.dim(0);
    auto basis = specband::BasisCache::global().get(T);
    const auto partition = specband::equal_energy_partition(profile, K);
    const auto bd = specband::BandProjector(basis, partition).decompose(X);

    fs::create_directories(out_dir);
    for (std::size_t k = 0; k < K; ++k) write_csv(fs::path(out_dir) / ("band_" + std::to_string(k) + ".csv"), bd.components[k]);
    const auto energies = specband::band_energies(X, *basis, partition);
    nlohmann::json report = {{"T", T},
                             {"d", X.dim(1)},
                             {"K", K},
                             {"eigenvalues", basis->eigenvalues},
                             {"boundaries", partition.boundaries},
                             {"energy_profile", profile},
                             {"band_energy", energies}};
    std::ofstream(fs::path(out_dir) / "report.json") << report.dump(2) << '\n';
    note("wrote " + std::to_string(K) + " band components and report.json to " + out_dir);
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume_path) {
    const RunConfig config = load_run_config(config_path);
    if (config.data.empty()) throw ParameterError("config has no 'data' corpus directory");
    const Corpus corpus = load_with_warnings(config.data);
    TrainOptions options;
    if (!resume_path.empty()) options.resume = load_checkpoint(resume_path);
    options.log = [](const std::string& msg) { note(msg); };
    const TrainResult result = train(config, corpus, options);
    nlohmann::json summary = {{"best_epoch", result.best.best_epoch}, {"val", result.epochs.empty() ? nlohmann::json(nullptr) : nlohmann::json(result.epochs.back().val)}};
    if (result.test) summary["test"] = *result.test;
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& split, const std::string& out) {
    const Checkpoint c = load_checkpoint(ckpt);
    const Corpus corpus = load_with_warnings(data);
    check_compatible(c.inputs, corpus.spec);
    const auto model = restore_model(c);
    const auto result = evaluate(*model, corpus.split(split_from_name(split)));
    nlohmann::json j = result.report;
    j["split"] = split;
    j["samples"] = result.predictions.size();
    emit(out, j.dump(2) + "\n");
    return 0;
}

int cmd_route_inspect(const std::string& ckpt, const std::string& data, const std::string& split, const std::string& out) {
    const Checkpoint c = load_checkpoint(ckpt);
    const Corpus corpus = load_with_warnings(data);
    check_compatible(c.inputs, corpus.spec);
    const auto model = restore_model(c);
    const auto result = evaluate(*model, corpus.split(split_from_name(split)));
    std::ostringstream lines;
    for (std::size_t i = 0; i < result.diagnostics.size(); ++i) {
        lines << route_record(result.diagnostics[i], result.predictions[i], c.config.model.use_sbn).dump() << '\n';
    }
    emit(out, lines.str());
    return 0;
}

int cmd_gradcheck(const std::string& module, std::uint64_t seed, double tol, double step, int stencil) {
    GradCheckOptions options;
    options.tolerance = tol;
    options.step = step;
    options.stencil = stencil;
    bool ok = true;
    for (const auto& r : run_gradcheck(module, seed, options)) {
        std::cout << (r.passed() ? "PASS " : "FAIL ") << r.name << "  entries=" << r.entries
                  << "  max_rel_err=" << std::scientific << std::setprecision(3) << r.max_rel_error
                  << "  max_abs_err=" << r.max_abs_error << "  failing=" << r.failing_entries
                  << "  worst=" << r.worst
                  << std::defaultfloat << '\n';
        ok = ok && r.passed();
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral-band and modality routing for multimodal regression and classification"};
    app.require_subcommand(1);

    std::string spec_path, out_dir;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus from a JSON generator spec");
    gen->add_option("--spec", spec_path, "generator spec JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out_dir, "output corpus directory")->required();

    std::string input, split = "train", modality = "l";
    std::size_t K = 3, index = 0;
    auto* dec = app.add_subcommand("decompose", "Split a feature sequence into equal-energy spectral bands");
    dec->add_option("--input", input, "CSV file (rows = time steps) or corpus directory")->required()->check(CLI::ExistingPath);
    dec->add_option("--out", out_dir, "output directory")->required();
    dec->add_option("--K", K, "number of bands")->check(CLI::PositiveNumber);
    dec->add_option("--split", split, "corpus split");
    dec->add_option("--modality", modality, "corpus modality (l, v or a)");
    dec->add_option("--index", index, "sample index within the split");

    std::string config_path, resume_path;
    auto* tr = app.add_subcommand("train", "Train a model from a run config");
    tr->add_option("--config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);
    tr->add_option("--resume", resume_path, "checkpoint to resume from")->check(CLI::ExistingFile);

    std::string ckpt, data, eval_split = "test", out_file;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus split");
    ev->add_option("--ckpt", ckpt, "checkpoint JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "corpus directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--split", eval_split, "train, val or test");
    ev->add_option("--out", out_file, "write the report here instead of stdout");

    auto* ri = app.add_subcommand("route-inspect", "Dump per-sample band and modality weights");
    ri->add_option("--ckpt", ckpt, "checkpoint JSON")->required()->check(CLI::ExistingFile);
    ri->add_option("--data", data, "corpus directory")->required()->check(CLI::ExistingDirectory);
    ri->add_option("--split", eval_split, "train, val or test");
    ri->add_option("--out", out_file, "write JSON lines here instead of stdout");

    std::string module;
    std::uint64_t seed = 0;
    double tol = 1e-4;
    auto* gc = app.add_subcommand("gradcheck", "Compare backward() with central finite differences");
    gc->add_option("--module", module, "one of numcore, specband, encoders, routing, mcm, losses, model");
    gc->add_option("--seed", seed, "instance seed");
    gc->add_option("--tol", tol, "maximum relative error");
    double step = 1e-5;
    int stencil = 2;
    gc->add_option("--step", step, "finite-difference step");
    gc->add_option("--stencil", stencil, "2 (central) or 4 (fourth order)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_gen_data(spec_path, out_dir);
        if (*dec) return cmd_decompose(input, out_dir, K, split, modality, index);
        if (*tr) return cmd_train(config_path, resume_path);
        if (*ev) return cmd_eval(ckpt, data, eval_split, out_file);
        if (*ri) return cmd_route_inspect(ckpt, data, eval_split, out_file);
        if (*gc) return cmd_gradcheck(module, seed, tol, step, stencil);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
