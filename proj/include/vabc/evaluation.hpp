#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vabc/datasets.hpp"
#include "vabc/models.hpp"
#include "vabc/training.hpp"

namespace vabc {

// Small fixed image classifier used to score generated MNIST samples:
// 3x3 conv (8 ch) -> relu -> 2x2 maxpool -> 3x3 conv (16 ch) -> relu ->
// 2x2 maxpool -> dense 400 -> 10. Trained on ground-truth digit labels only.
class CnnClassifier {
public:
    static constexpr double kAccuracyGate = 0.97;

    // Trains until the held-out accuracy gate is met; EvalGateError if the
    // 20-epoch budget runs out first.
    static CnnClassifier train(const DataFold& labeled, const DataFold& heldout,
                               std::uint64_t seed, std::size_t epoch_budget = 20);

    std::vector<int> classify(const Tensor& images) const;  // (B,784) -> argmax labels
    double heldout_accuracy() const { return accuracy_; }
    bool gated() const { return accuracy_ >= kAccuracyGate; }

    void save(const std::string& path) const;
    static CnnClassifier load(const std::string& path);

private:
    CnnClassifier() = default;
    Tensor w1_, b1_, w2_, b2_, w3_, b3_;
    double accuracy_ = 0.0;
    friend struct CnnTrainerImpl;
};

// 2-D nearest-neighbor oracle over clean labeled moons.
class KnnOracle {
public:
    // Dense noiseless moons, n points per moon.
    static KnnOracle moons_oracle(std::size_t n_per_moon = 10000);
    static KnnOracle from_fold(const DataFold& fold);

    // Majority concept among the k nearest points.
    Concept predict(float x1, float x2, std::size_t k = 1) const;
    double self_accuracy(std::size_t k) const;  // on its own training points
    bool relabeled() const { return swapped_; }
    KnnOracle swapped() const;  // concepts inverted

private:
    std::vector<std::array<float, 2>> points_;
    std::vector<Concept> concepts_;
    bool swapped_ = false;
};

struct GenerationReport {
    std::size_t n = 0;
    double error = 0.0;  // fraction classified as the negative class
    std::vector<std::size_t> histogram;  // per class, sums to n
    std::uint64_t seed = 0;
    double classifier_accuracy = 0.0;
};

// Draws n decoder-mean samples and reports the fraction the gated
// classifier assigns to negative_class. Refuses ungated classifiers.
GenerationReport negative_generation_error(const VabcModel& model,
                                           const CnnClassifier& classifier,
                                           int negative_class, std::size_t n,
                                           std::uint64_t seed);

void write_report_json(const GenerationReport& r, const std::string& path);

// Fraction of n decoder-mean samples whose nearest oracle point is
// negative-concept.
double moons_negative_rate(const VabcModel& model, const KnnOracle& oracle, std::size_t n,
                           std::uint64_t seed);

// ---- sweeps (Fig. 8 style sensitivity runs) ----

enum class SweepAxis { P, GammaEnd, Seed, UnwantedSize };

struct ModelSpec {
    std::size_t input_dim;
    std::vector<std::size_t> hidden;
    std::size_t latent_dim;
    float sigma2;
    OutputActivation output_activation;
};

struct SweepRow {
    double axis_value;
    std::uint64_t seed;
    double neg_gen_error;  // NaN when the individual run failed
    std::string error_message;
};

struct SweepPlan {
    SweepAxis axis;
    std::vector<double> values;
    std::vector<std::uint64_t> seeds;
    double p = 0.2;  // used when the axis is not P/UnwantedSize
    int negative_class = 8;
    std::size_t n_samples = 10000;
};

// Trains one model per (value, seed) and evaluates it; failures are
// recorded per row and the sweep continues.
std::vector<SweepRow> sweep(const DataFold& concept_fold, const DataFold* validation_fold,
                            const ModelSpec& spec, const TrainConfig& base_config,
                            const CnnClassifier& classifier, const SweepPlan& plan);

// Long-format CSV: axis_value,seed,neg_gen_error
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace vabc
