#include "vabc/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>

#include "vabc/io.hpp"

namespace vabc {

using json = nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!j.is_object()) throw FormatError("config: '" + where + "' must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) {
            throw FormatError("config: unknown key '" + where + "." + key + "'");
        }
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_preset(RunConfig& c, const std::string& preset) {
    if (preset == "moons") {
        c.dataset.kind = "moons";
        c.dataset.p = 0.8;
        c.dataset.noise = 0.1f;
        c.dataset.n_per_moon = 5000;
        c.model = ModelSpec{2, {20, 20}, 1, 1.0f, OutputActivation::Linear};
        c.train.epochs = 30;
        c.train.e_prime = 10;
        c.train.batch_size = 80;
        c.train.gamma_start = 4.0f;
        c.train.gamma_end = 3.0f;
        c.train.early_stopping.enabled = false;
    } else if (preset == "mnist") {
        c.dataset.kind = "mnist";
        c.dataset.negative_class = 8;
        c.dataset.p = 0.2;
        c.model = ModelSpec{784, {300, 100}, 2, 2.5f, OutputActivation::Sigmoid};
        c.train.epochs = 20;
        c.train.e_prime = 5;
        c.train.batch_size = 80;
        c.train.gamma_start = 4.0f;
        c.train.gamma_end = 0.05f;
        c.train.early_stopping.enabled = true;
        c.train.early_stopping.patience = 5;
    } else {
        throw FormatError("config: model.preset must be 'moons' or 'mnist', got '" +
                          preset + "'");
    }
}

}  // namespace

RunConfig parse_config_json(const json& j) {
    reject_unknown(j, {"seed", "dataset", "model", "train", "eval", "paths"}, "config");
    if (!j.contains("model") || !j.at("model").is_object() ||
        !j.at("model").contains("preset")) {
        throw FormatError("config: model.preset is required ('moons' or 'mnist')");
    }

    RunConfig c;
    c.preset = j.at("model").at("preset").get<std::string>();
    apply_preset(c, c.preset);

    get_if(j, "seed", c.seed);
    c.train.seed = c.seed;

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        reject_unknown(d, {"kind", "negative_class", "p", "noise", "n_per_moon", "subsample"},
                       "dataset");
        get_if(d, "kind", c.dataset.kind);
        get_if(d, "negative_class", c.dataset.negative_class);
        get_if(d, "p", c.dataset.p);
        get_if(d, "noise", c.dataset.noise);
        get_if(d, "n_per_moon", c.dataset.n_per_moon);
        get_if(d, "subsample", c.dataset.subsample);
    }
    {
        const json& m = j.at("model");
        reject_unknown(m, {"preset", "hidden", "latent_dim", "sigma2", "output_activation"},
                       "model");
        get_if(m, "hidden", c.model.hidden);
        get_if(m, "latent_dim", c.model.latent_dim);
        get_if(m, "sigma2", c.model.sigma2);
        if (m.contains("output_activation")) {
            std::string act = m.at("output_activation").get<std::string>();
            if (act == "linear") {
                c.model.output_activation = OutputActivation::Linear;
            } else if (act == "sigmoid") {
                c.model.output_activation = OutputActivation::Sigmoid;
            } else {
                throw FormatError("config: model.output_activation must be linear|sigmoid");
            }
        }
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t,
                       {"epochs", "e_prime", "batch_size", "gamma_start", "gamma_end", "lr",
                        "seed", "early_stopping"},
                       "train");
        get_if(t, "epochs", c.train.epochs);
        get_if(t, "e_prime", c.train.e_prime);
        get_if(t, "batch_size", c.train.batch_size);
        get_if(t, "gamma_start", c.train.gamma_start);
        get_if(t, "gamma_end", c.train.gamma_end);
        get_if(t, "lr", c.train.lr);
        get_if(t, "seed", c.train.seed);
        if (t.contains("early_stopping")) {
            const json& es = t.at("early_stopping");
            reject_unknown(es, {"enabled", "patience"}, "train.early_stopping");
            get_if(es, "enabled", c.train.early_stopping.enabled);
            get_if(es, "patience", c.train.early_stopping.patience);
        }
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        reject_unknown(e, {"n_samples", "classifier_seed", "classifier_budget"}, "eval");
        get_if(e, "n_samples", c.eval.n_samples);
        get_if(e, "classifier_seed", c.eval.classifier_seed);
        get_if(e, "classifier_budget", c.eval.classifier_budget);
    }
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        reject_unknown(p, {"data_dir", "out_dir"}, "paths");
        get_if(p, "data_dir", c.paths.data_dir);
        get_if(p, "out_dir", c.paths.out_dir);
    }

    if (c.dataset.kind != "moons" && c.dataset.kind != "mnist") {
        throw FormatError("config: dataset.kind must be 'moons' or 'mnist'");
    }
    if (c.dataset.p < 0.0 || c.dataset.p > 1.0) {
        throw FormatError("config: dataset.p must be in [0,1]");
    }
    if (c.dataset.kind == "mnist" &&
        (c.dataset.negative_class < 0 || c.dataset.negative_class > 9)) {
        throw FormatError("config: dataset.negative_class must be a digit 0..9");
    }
    c.train.validate();
    c.model.input_dim = c.dataset.kind == "moons" ? 2 : 784;
    return c;
}

RunConfig parse_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError("config parse error in " + path + ": " + e.what());
    }
    return parse_config_json(j);
}

void apply_override(json& j, const std::string& dotted_path, const std::string& value) {
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        std::size_t dot = dotted_path.find('.', start);
        std::string key = dotted_path.substr(start, dot - start);
        if (key.empty()) throw FormatError("override: empty path segment in " + dotted_path);
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
            (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

nlohmann::json RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["dataset"] = {{"kind", dataset.kind},
                    {"negative_class", dataset.negative_class},
                    {"p", dataset.p},
                    {"noise", dataset.noise},
                    {"n_per_moon", dataset.n_per_moon},
                    {"subsample", dataset.subsample}};
    j["model"] = {{"preset", preset},
                  {"hidden", model.hidden},
                  {"latent_dim", model.latent_dim},
                  {"sigma2", model.sigma2},
                  {"output_activation",
                   model.output_activation == OutputActivation::Sigmoid ? "sigmoid"
                                                                        : "linear"}};
    j["train"] = {{"epochs", train.epochs},
                  {"e_prime", train.e_prime},
                  {"batch_size", train.batch_size},
                  {"gamma_start", train.gamma_start},
                  {"gamma_end", train.gamma_end},
                  {"lr", train.lr},
                  {"seed", train.seed},
                  {"early_stopping",
                   {{"enabled", train.early_stopping.enabled},
                    {"patience", train.early_stopping.patience}}}};
    j["eval"] = {{"n_samples", eval.n_samples},
                 {"classifier_seed", eval.classifier_seed},
                 {"classifier_budget", eval.classifier_budget}};
    j["paths"] = {{"data_dir", paths.data_dir}, {"out_dir", paths.out_dir}};
    return j;
}

std::string locate_mnist_dir(const std::string& configured) {
    namespace fs = std::filesystem;
    auto has_files = [](const fs::path& dir) {
        return fs::exists(dir / "train-images-idx3-ubyte") &&
               fs::exists(dir / "train-labels-idx1-ubyte");
    };
    std::vector<fs::path> candidates;
    if (!configured.empty()) candidates.emplace_back(configured);
    if (const char* env = std::getenv("VABC_DATA_DIR")) candidates.emplace_back(env);
    candidates.emplace_back("data/mnist");
    candidates.emplace_back("../data/mnist");
    candidates.emplace_back("/root/data/mnist");
    for (const auto& dir : candidates) {
        if (has_files(dir)) return dir.string();
    }
    throw FormatError(
        "MNIST IDX files not found; set paths.data_dir or VABC_DATA_DIR to a directory "
        "containing train-images-idx3-ubyte / train-labels-idx1-ubyte");
}

}  // namespace vabc
