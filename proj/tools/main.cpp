// vabc: config-driven pipeline runner for the negative-unlabeled VAE lab.
//
// Subcommands: gen-data, train, train-vae, sample, eval, sweep, viz.
// Exit codes: 0 success, 2 config error, 3 numeric failure, 4 evaluator gate.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "vabc/artifacts.hpp"
#include "vabc/config.hpp"
#include "vabc/datasets.hpp"
#include "vabc/evaluation.hpp"
#include "vabc/io.hpp"
#include "vabc/models.hpp"
#include "vabc/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace vabc;

namespace {

struct Folds {
    DataFold train;                    // NU-split training fold
    std::optional<DataFold> validation;  // NU-split held-out fold (MNIST)
    DataFold concept_only;             // concept labels assigned, no NU split
};

Folds build_folds(const RunConfig& cfg) {
    Folds f;
    if (cfg.dataset.kind == "moons") {
        f.concept_only = make_moons(cfg.dataset.n_per_moon, cfg.dataset.noise, cfg.seed);
        f.train = split_nu(f.concept_only, cfg.dataset.p, cfg.seed);
    } else {
        std::string dir = locate_mnist_dir(cfg.paths.data_dir);
        DataFold raw = load_mnist_idx(dir + "/train-images-idx3-ubyte",
                                      dir + "/train-labels-idx1-ubyte");
        DataFold full = assign_concept(raw, cfg.dataset.negative_class);
        if (cfg.dataset.subsample > 0) full = subsample(full, cfg.dataset.subsample, cfg.seed);
        f.concept_only = full;
        f.train = split_nu(full, cfg.dataset.p, cfg.seed);
        DataFold test = assign_concept(load_mnist_idx(dir + "/t10k-images-idx3-ubyte",
                                                      dir + "/t10k-labels-idx1-ubyte"),
                                       cfg.dataset.negative_class);
        f.validation = split_nu(test, cfg.dataset.p, cfg.seed + 1);
    }
    return f;
}

VabcModel fresh_model(const RunConfig& cfg) {
    return VabcModel::init(cfg.model.input_dim, cfg.model.hidden, cfg.model.latent_dim,
                           cfg.model.sigma2, cfg.model.output_activation, cfg.seed);
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const RunConfig& cfg, const std::vector<std::string>& files) {
    json m;
    m["command"] = command;
    m["config"] = cfg.to_json();
    m["seed"] = cfg.seed;
    m["version"] = 1;
    json sums = json::object();
    char buf[16];
    for (const auto& f : files) {
        std::snprintf(buf, sizeof(buf), "%08x", crc32_of_file(out_dir + "/" + f));
        sums[f] = buf;
    }
    m["checksums"] = std::move(sums);
    write_text_file(out_dir + "/manifest.json", m.dump(2) + "\n");
}

// A checkpoint produced by `train` is checked against its manifest before use.
void verify_manifest(const std::string& checkpoint_path) {
    fs::path p(checkpoint_path);
    fs::path manifest = p.parent_path() / "manifest.json";
    if (!fs::exists(manifest)) return;  // hand-supplied checkpoint
    json m = json::parse(read_text_file(manifest.string()));
    std::string name = p.filename().string();
    if (!m.contains("checksums") || !m["checksums"].contains(name)) return;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", crc32_of_file(checkpoint_path));
    if (m["checksums"][name].get<std::string>() != buf) {
        throw FormatError("checkpoint checksum mismatch against manifest: " + checkpoint_path);
    }
}

CnnClassifier get_classifier(const RunConfig& cfg, const std::string& cache_path) {
    if (!cache_path.empty() && fs::exists(cache_path)) {
        CnnClassifier c = CnnClassifier::load(cache_path);
        if (c.gated()) return c;
    }
    std::string dir = locate_mnist_dir(cfg.paths.data_dir);
    DataFold train_set = load_mnist_idx(dir + "/train-images-idx3-ubyte",
                                        dir + "/train-labels-idx1-ubyte");
    DataFold heldout = load_mnist_idx(dir + "/t10k-images-idx3-ubyte",
                                      dir + "/t10k-labels-idx1-ubyte");
    CnnClassifier c = CnnClassifier::train(train_set, heldout, cfg.eval.classifier_seed,
                                           cfg.eval.classifier_budget);
    if (!cache_path.empty()) c.save(cache_path);
    return c;
}

void write_samples_csv(const Tensor& samples, const std::string& path) {
    std::ostringstream out;
    for (std::size_t r = 0; r < samples.rows(); ++r) {
        for (std::size_t c = 0; c < samples.cols(); ++c) {
            if (c) out << ",";
            out << fmt9(samples.at(r, c));
        }
        out << "\n";
    }
    write_text_file(path, out.str());
}

int run(int argc, char** argv) {
    CLI::App app{"V-ABC lab: train and analyze VAEs that avoid unwanted data"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    app.add_option("-c,--config", config_path, "JSON run config")->required();
    app.add_option("--set", overrides, "dotted-path override, e.g. --set train.seed=7");

    auto* cmd_gen = app.add_subcommand("gen-data", "materialize the configured data fold");
    auto* cmd_train = app.add_subcommand("train", "train a V-ABC model");
    auto* cmd_train_vae =
        app.add_subcommand("train-vae", "train the VAE baseline on the unlabeled fold");
    auto* cmd_sample = app.add_subcommand("sample", "draw samples from a checkpoint");
    auto* cmd_eval = app.add_subcommand("eval", "negative generation error of a checkpoint");
    auto* cmd_sweep = app.add_subcommand("sweep", "sensitivity sweep over an axis");
    auto* cmd_viz = app.add_subcommand("viz", "emit diagnostic artifact files");

    std::string checkpoint;
    std::size_t n_samples = 0;
    bool add_noise = false;
    for (auto* c : {cmd_sample, cmd_eval, cmd_viz}) {
        c->add_option("--checkpoint", checkpoint, "checkpoint JSON path")->required();
    }
    cmd_sample->add_option("--n", n_samples, "sample count (default eval.n_samples)");
    cmd_sample->add_flag("--noise", add_noise, "add unit-variance output noise (moons)");

    std::string classifier_path;
    cmd_eval->add_option("--classifier", classifier_path,
                         "classifier cache file (trained if absent)");
    cmd_sweep->add_option("--classifier", classifier_path,
                          "classifier cache file (trained if absent)");

    std::string axis = "p";
    std::vector<double> values;
    std::size_t n_seeds = 3;
    cmd_sweep->add_option("--axis", axis, "p | gamma | seed | unwanted")->required();
    cmd_sweep->add_option("--values", values, "axis values")->required()->delimiter(',');
    cmd_sweep->add_option("--seeds", n_seeds, "number of seeds per value");

    std::string viz_kind = "manifold";
    std::size_t grid_res = 0;
    bool emit_png = false;
    std::size_t n_examples = 12;
    cmd_viz->add_option("--kind", viz_kind, "field | manifold | recon | ellipses")->required();
    cmd_viz->add_option("--grid-res", grid_res, "grid resolution override");
    cmd_viz->add_flag("--png", emit_png, "also render PNGs");
    cmd_viz->add_option("--n-examples", n_examples, "examples in the reconstruction panel");

    app.parse(argc, argv);

    json raw = json::parse(read_text_file(config_path));
    for (const auto& ov : overrides) {
        std::size_t eq = ov.find('=');
        if (eq == std::string::npos) {
            throw FormatError("--set expects key=value, got '" + ov + "'");
        }
        apply_override(raw, ov.substr(0, eq), ov.substr(eq + 1));
    }
    RunConfig cfg = parse_config_json(raw);
    fs::create_directories(cfg.paths.out_dir);
    const std::string& out = cfg.paths.out_dir;

    if (cmd_gen->parsed()) {
        Folds f = build_folds(cfg);
        std::vector<std::string> files;
        if (cfg.dataset.kind == "moons") {
            write_moons_csv(f.train, out + "/moons.csv");
            files.push_back("moons.csv");
        }
        FoldCounts c = f.train.counts();
        json counts = {{"positive", c.positive},
                       {"negative", c.negative},
                       {"unlabeled", c.unlabeled},
                       {"unwanted", c.unwanted}};
        write_text_file(out + "/fold_counts.json", counts.dump(2) + "\n");
        files.push_back("fold_counts.json");
        write_manifest(out, "gen-data", cfg, files);
        std::cout << counts.dump() << "\n";
        return 0;
    }

    if (cmd_train->parsed() || cmd_train_vae->parsed()) {
        Folds f = build_folds(cfg);
        const DataFold* val = f.validation ? &*f.validation : nullptr;
        TrainResult r = cmd_train->parsed()
                            ? train(fresh_model(cfg), f.train, cfg.train, val)
                            : train_vae_baseline(fresh_model(cfg), f.train, cfg.train, val);
        save_checkpoint(r.model, out + "/checkpoint.json");
        write_metrics_csv(r.metrics, out + "/metrics.csv");
        write_manifest(out, cmd_train->parsed() ? "train" : "train-vae", cfg,
                       {"checkpoint.json", "metrics.csv"});
        if (r.metrics.divergence) {
            std::cerr << "error: " << *r.metrics.divergence << "\n";
            return 3;
        }
        std::cout << "trained " << r.metrics.epochs.size() << " epochs -> " << out
                  << "/checkpoint.json\n";
        return 0;
    }

    verify_manifest(checkpoint);
    VabcModel model = load_checkpoint(checkpoint);

    if (cmd_sample->parsed()) {
        std::size_t n = n_samples > 0 ? n_samples : cfg.eval.n_samples;
        Tensor s = sample(model, n, cfg.seed, add_noise);
        write_samples_csv(s, out + "/samples.csv");
        write_manifest(out, "sample", cfg, {"samples.csv"});
        std::cout << "wrote " << n << " samples -> " << out << "/samples.csv\n";
        return 0;
    }

    if (cmd_eval->parsed()) {
        if (cfg.dataset.kind == "moons") {
            KnnOracle oracle = KnnOracle::moons_oracle();
            double rate = moons_negative_rate(model, oracle, cfg.eval.n_samples, cfg.seed);
            json rep = {{"n", cfg.eval.n_samples}, {"negative_rate", rate}, {"seed", cfg.seed}};
            write_text_file(out + "/report.json", rep.dump(2) + "\n");
            std::cout << rep.dump() << "\n";
        } else {
            CnnClassifier clf = get_classifier(cfg, classifier_path);
            GenerationReport rep = negative_generation_error(
                model, clf, cfg.dataset.negative_class, cfg.eval.n_samples, cfg.seed);
            write_report_json(rep, out + "/report.json");
            std::cout << "negative generation error: " << rep.error << "\n";
        }
        write_manifest(out, "eval", cfg, {"report.json"});
        return 0;
    }

    if (cmd_viz->parsed()) {
        std::vector<std::string> files;
        if (viz_kind == "field") {
            GridSpec grid;
            if (grid_res > 0) grid.res_x = grid.res_y = grid_res;
            for (int y : {1, 0}) {
                auto rows = gradient_field(model, grid, y, cfg.train.gamma_end, 1.0f);
                std::string name = "field_y" + std::to_string(y) + ".csv";
                write_field_csv(rows, y, cfg.train.gamma_end, 1.0f, out + "/" + name);
                files.push_back(name);
            }
        } else if (viz_kind == "manifold") {
            std::size_t res = grid_res > 0 ? grid_res : 20;
            ManifoldGrid g = manifold_grid(model, -3.0f, 3.0f, res);
            write_manifold_csv(g, out + "/manifold.csv");
            files.push_back("manifold.csv");
            if (emit_png) {
                write_manifold_png(g, out + "/manifold.png");
                files.push_back("manifold.png");
            }
        } else if (viz_kind == "recon") {
            Folds f = build_folds(cfg);
            std::vector<std::vector<float>> ex;
            for (const auto& e : f.train.examples) {  // unwanted first, then positives
                if (e.y == 0 && ex.size() < n_examples / 2) ex.push_back(e.x);
            }
            for (const auto& e : f.train.examples) {
                if (e.concept_label == Concept::Positive && ex.size() < n_examples)
                    ex.push_back(e.x);
            }
            ReconstructionPanel p = reconstruction_panel(model, ex);
            std::ostringstream os;
            os << "# deterministic encoding: z = mu(x); raw decoder means\n";
            for (std::size_t i = 0; i < p.originals.size(); ++i) {
                for (std::size_t j = 0; j < p.originals[i].size(); ++j)
                    os << (j ? "," : "") << fmt9(p.originals[i][j]);
                os << "\n";
                for (std::size_t j = 0; j < p.reconstructions[i].size(); ++j)
                    os << (j ? "," : "") << fmt9(p.reconstructions[i][j]);
                os << "\n";
            }
            write_text_file(out + "/reconstructions.csv", os.str());
            files.push_back("reconstructions.csv");
        } else if (viz_kind == "ellipses") {
            Folds f = build_folds(cfg);
            DataFold sub = subsample(f.train, 2000, cfg.seed);
            auto rows = latent_ellipses(model, sub);
            write_ellipses_csv(rows, out + "/ellipses.csv");
            files.push_back("ellipses.csv");
        } else {
            throw FormatError("viz: unknown kind '" + viz_kind + "'");
        }
        write_manifest(out, "viz", cfg, files);
        std::cout << "wrote " << files.size() << " artifact file(s) -> " << out << "\n";
        return 0;
    }

    if (cmd_sweep->parsed()) {
        SweepPlan plan;
        if (axis == "p") plan.axis = SweepAxis::P;
        else if (axis == "gamma") plan.axis = SweepAxis::GammaEnd;
        else if (axis == "seed") plan.axis = SweepAxis::Seed;
        else if (axis == "unwanted") plan.axis = SweepAxis::UnwantedSize;
        else throw FormatError("sweep: unknown axis '" + axis + "'");
        plan.values = values;
        for (std::size_t s = 0; s < n_seeds; ++s) plan.seeds.push_back(cfg.seed + s);
        plan.p = cfg.dataset.p;
        plan.negative_class = cfg.dataset.negative_class;
        plan.n_samples = cfg.eval.n_samples;

        Folds f = build_folds(cfg);
        CnnClassifier clf = get_classifier(cfg, classifier_path);
        const DataFold* val = f.validation ? &*f.validation : nullptr;
        auto rows = sweep(f.concept_only, val, cfg.model, cfg.train, clf, plan);
        write_sweep_csv(rows, out + "/sweep.csv");
        write_manifest(out, "sweep", cfg, {"sweep.csv"});
        for (const auto& r : rows) {
            if (!r.error_message.empty()) {
                std::cerr << "warning: run (value=" << r.axis_value << ", seed=" << r.seed
                          << ") failed: " << r.error_message << "\n";
            }
        }
        std::cout << "wrote " << rows.size() << " rows -> " << out << "/sweep.csv\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        try {
            return run(argc, argv);
        } catch (const CLI::ParseError& e) {
            CLI::App dummy;
            int code = dummy.exit(e);
            return code == 0 ? 0 : 2;
        }
    } catch (const EvalGateError& e) {
        std::cerr << "error: evaluator-gate: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    }
}
