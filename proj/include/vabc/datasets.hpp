#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vabc/errors.hpp"
#include "vabc/rng.hpp"

namespace vabc {

enum class Concept : std::uint8_t { Positive = 0, Negative = 1, Unset = 2 };

struct LabeledExample {
    std::vector<float> x;
    Concept concept_label = Concept::Unset;  // ground truth, evaluation only
    int y = 1;                         // 1 = unlabeled, 0 = unwanted
    int digit = -1;                    // MNIST class label, -1 otherwise
};

struct FoldCounts {
    std::size_t positive = 0;
    std::size_t negative = 0;
    std::size_t unlabeled = 0;
    std::size_t unwanted = 0;
};

struct DataFold {
    std::string name;
    std::vector<LabeledExample> examples;

    FoldCounts counts() const;
    std::size_t feature_dim() const { return examples.empty() ? 0 : examples[0].x.size(); }
};

// Two interleaving half circles. Upper moon (cos t, sin t) is the negative
// concept; lower moon (1 - cos t, 0.5 - sin t) is positive. t on a uniform
// grid over [0, pi]. All y start at 1 until split_nu.
DataFold make_moons(std::size_t n_per_moon, float noise_stddev, std::uint64_t seed);

// Each negative-concept example independently becomes unwanted (y=0) with
// probability p; positives always stay unlabeled.
DataFold split_nu(const DataFold& fold, double p, std::uint64_t seed);

// IDX loader; pixels scaled to [0,1]; concept left unset, digit labels kept.
DataFold load_mnist_idx(const std::string& images_path, const std::string& labels_path);

DataFold assign_concept(const DataFold& fold, int negative_class);

// Class-stratified subsample without replacement (desk-scale MNIST runs).
DataFold subsample(const DataFold& fold, std::size_t n, std::uint64_t seed);

struct Batch {
    std::vector<std::size_t> indices;  // into fold.examples
};

// Mini-batch sampler that pairs batch_size/2 unlabeled with batch_size/2
// unwanted examples per batch. Epoch length = ceil(#unlabeled / (bs/2));
// the smaller pool is resampled with replacement.
class BalancedBatcher {
public:
    BalancedBatcher(const DataFold& fold, std::size_t batch_size, std::uint64_t seed);
    std::size_t batches_per_epoch() const;
    std::vector<Batch> epoch(std::size_t epoch_index) const;

private:
    std::vector<std::size_t> unlabeled_;
    std::vector<std::size_t> unwanted_;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

// Plain shuffled batches over the given indices (VAE baseline training).
std::vector<Batch> shuffled_batches(std::size_t n_examples, std::size_t batch_size,
                                    std::uint64_t seed, std::size_t epoch_index);

// CSV export: header x1,x2,concept,y; floats at 9 significant digits.
void write_moons_csv(const DataFold& fold, const std::string& path);

}  // namespace vabc
