#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "vabc/evaluation.hpp"
#include "vabc/training.hpp"

namespace vabc {

struct DatasetConfig {
    std::string kind;            // "moons" | "mnist"
    int negative_class = 8;      // mnist
    double p = 0.2;
    float noise = 0.1f;          // moons
    std::size_t n_per_moon = 5000;
    std::size_t subsample = 0;   // 0 = full data set
};

struct EvalConfig {
    std::size_t n_samples = 10000;
    std::uint64_t classifier_seed = 1;
    std::size_t classifier_budget = 20;
};

struct PathsConfig {
    std::string data_dir;        // empty = resolve via env / defaults
    std::string out_dir = "out";
};

struct RunConfig {
    std::string preset;          // "moons" | "mnist"
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    ModelSpec model;
    TrainConfig train;
    EvalConfig eval;
    PathsConfig paths;

    nlohmann::json to_json() const;
};

// Parses and validates a config file. Presets populate every field;
// explicit keys override preset values. Unknown keys are rejected.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_json(const nlohmann::json& j);

// Applies a dotted-path override like ("train.seed", "7") onto raw JSON.
void apply_override(nlohmann::json& j, const std::string& dotted_path,
                    const std::string& value);

// MNIST directory resolution order: explicit config path, $VABC_DATA_DIR,
// ./data/mnist, ../data/mnist, /root/data/mnist.
std::string locate_mnist_dir(const std::string& configured);

}  // namespace vabc
