#include "vabc/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

namespace vabc {

FoldCounts DataFold::counts() const {
    FoldCounts c;
    for (const auto& e : examples) {
        if (e.concept_label == Concept::Positive) ++c.positive;
        if (e.concept_label == Concept::Negative) ++c.negative;
        if (e.y == 1) ++c.unlabeled;
        if (e.y == 0) ++c.unwanted;
    }
    return c;
}

DataFold make_moons(std::size_t n_per_moon, float noise_stddev, std::uint64_t seed) {
    if (n_per_moon == 0) throw ContractError("make_moons: n_per_moon must be >= 1");
    if (noise_stddev < 0.0f) throw ContractError("make_moons: noise stddev must be >= 0");
    DataFold fold;
    fold.name = "moons";
    fold.examples.reserve(2 * n_per_moon);
    RngStream noise(seed, "moons-noise");
    const float pi = std::numbers::pi_v<float>;
    // grid includes both endpoints; for n=1, t=0
    for (std::size_t i = 0; i < n_per_moon; ++i) {
        float t = n_per_moon == 1
                      ? 0.0f
                      : pi * static_cast<float>(i) / static_cast<float>(n_per_moon - 1);
        LabeledExample upper;
        upper.x = {std::cos(t), std::sin(t)};
        upper.concept_label = Concept::Negative;
        LabeledExample lower;
        lower.x = {1.0f - std::cos(t), 0.5f - std::sin(t)};
        lower.concept_label = Concept::Positive;
        if (noise_stddev > 0.0f) {
            for (float& v : upper.x) v += noise_stddev * noise.normal();
            for (float& v : lower.x) v += noise_stddev * noise.normal();
        }
        fold.examples.push_back(std::move(upper));
        fold.examples.push_back(std::move(lower));
    }
    return fold;
}

DataFold split_nu(const DataFold& fold, double p, std::uint64_t seed) {
    if (p < 0.0 || p > 1.0) throw ContractError("split_nu: p must be in [0,1]");
    for (const auto& e : fold.examples) {
        if (e.concept_label == Concept::Unset)
            throw ContractError("split_nu: concept labels must be assigned first");
    }
    DataFold out = fold;
    RngStream rng(seed, "nu-split");
    for (auto& e : out.examples) {
        e.y = (e.concept_label == Concept::Negative && rng.bernoulli(p)) ? 0 : 1;
    }
    return out;
}

static std::uint32_t read_be32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw FormatError("IDX file truncated: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

DataFold load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open IDX images file: " + images_path);
    std::uint32_t magic = read_be32(img, images_path);
    if (magic != 2051) {
        throw FormatError("IDX images magic: expected 2051, found " + std::to_string(magic));
    }
    std::uint32_t count = read_be32(img, images_path);
    std::uint32_t rows = read_be32(img, images_path);
    std::uint32_t cols = read_be32(img, images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open IDX labels file: " + labels_path);
    std::uint32_t lmagic = read_be32(lab, labels_path);
    if (lmagic != 2049) {
        throw FormatError("IDX labels magic: expected 2049, found " + std::to_string(lmagic));
    }
    std::uint32_t lcount = read_be32(lab, labels_path);
    if (lcount != count) {
        throw FormatError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                          std::to_string(lcount) + " labels");
    }

    std::size_t dim = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> pixels(dim);
    std::vector<unsigned char> labels(count);
    lab.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count));
    if (!lab || lab.gcount() != static_cast<std::streamsize>(count)) {
        throw FormatError("IDX labels file truncated: " + labels_path);
    }

    DataFold fold;
    fold.name = "mnist";
    fold.examples.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(dim));
        if (!img || img.gcount() != static_cast<std::streamsize>(dim)) {
            throw FormatError("IDX images file truncated: " + images_path);
        }
        auto& e = fold.examples[i];
        e.x.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) e.x[j] = static_cast<float>(pixels[j]) / 255.0f;
        e.digit = static_cast<int>(labels[i]);
    }
    return fold;
}

DataFold assign_concept(const DataFold& fold, int negative_class) {
    for (const auto& e : fold.examples) {
        if (e.digit < 0) throw ContractError("assign_concept: digit labels missing");
    }
    DataFold out = fold;
    for (auto& e : out.examples) {
        e.concept_label = (e.digit == negative_class) ? Concept::Negative : Concept::Positive;
    }
    return out;
}

DataFold subsample(const DataFold& fold, std::size_t n, std::uint64_t seed) {
    if (n >= fold.examples.size()) return fold;
    // group per digit (or per concept when digits are absent) and take a
    // proportional share of each, largest remainders absorbing the slack
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < fold.examples.size(); ++i) {
        int key = fold.examples[i].digit >= 0 ? fold.examples[i].digit
                                              : static_cast<int>(fold.examples[i].concept_label);
        groups[key].push_back(i);
    }
    RngStream rng(seed, "subsample");
    double ratio = static_cast<double>(n) / static_cast<double>(fold.examples.size());
    std::vector<std::size_t> chosen;
    for (auto& [key, idx] : groups) {
        rng.shuffle(idx);
        std::size_t take = static_cast<std::size_t>(std::llround(ratio * idx.size()));
        take = std::min(take, idx.size());
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + take);
    }
    std::sort(chosen.begin(), chosen.end());
    DataFold out;
    out.name = fold.name + "-sub" + std::to_string(n);
    out.examples.reserve(chosen.size());
    for (std::size_t i : chosen) out.examples.push_back(fold.examples[i]);
    return out;
}

BalancedBatcher::BalancedBatcher(const DataFold& fold, std::size_t batch_size,
                                 std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
    if (batch_size == 0 || batch_size % 2 != 0) {
        throw ContractError("balanced_batches: batch size must be a positive even integer");
    }
    for (std::size_t i = 0; i < fold.examples.size(); ++i) {
        (fold.examples[i].y == 1 ? unlabeled_ : unwanted_).push_back(i);
    }
    if (unwanted_.empty()) {
        throw SamplerError(
            "balanced_batches: fold has no unwanted examples; use plain shuffled batches");
    }
    if (unlabeled_.empty()) {
        throw SamplerError("balanced_batches: fold has no unlabeled examples");
    }
}

std::size_t BalancedBatcher::batches_per_epoch() const {
    std::size_t half = batch_size_ / 2;
    return (unlabeled_.size() + half - 1) / half;
}

std::vector<Batch> BalancedBatcher::epoch(std::size_t epoch_index) const {
    std::size_t half = batch_size_ / 2;
    RngStream rng(seed_ + epoch_index, "balanced-batches");
    std::vector<std::size_t> ul = unlabeled_;
    rng.shuffle(ul);
    std::vector<Batch> batches;
    std::size_t nb = batches_per_epoch();
    batches.reserve(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        Batch batch;
        batch.indices.reserve(batch_size_);
        for (std::size_t k = 0; k < half; ++k) {
            // tail of the last batch wraps onto resampled unlabeled examples
            std::size_t pos = b * half + k;
            batch.indices.push_back(pos < ul.size() ? ul[pos]
                                                    : ul[rng.integer(ul.size())]);
        }
        for (std::size_t k = 0; k < half; ++k) {
            batch.indices.push_back(unwanted_[rng.integer(unwanted_.size())]);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

std::vector<Batch> shuffled_batches(std::size_t n_examples, std::size_t batch_size,
                                    std::uint64_t seed, std::size_t epoch_index) {
    if (batch_size == 0) throw ContractError("shuffled_batches: batch size must be positive");
    std::vector<std::size_t> order(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) order[i] = i;
    RngStream rng(seed + epoch_index, "plain-batches");
    rng.shuffle(order);
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < n_examples; start += batch_size) {
        Batch b;
        std::size_t end = std::min(start + batch_size, n_examples);
        b.indices.assign(order.begin() + start, order.begin() + end);
        batches.push_back(std::move(b));
    }
    return batches;
}

void write_moons_csv(const DataFold& fold, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << "x1,x2,concept,y\n";
    char buf[64];
    for (const auto& e : fold.examples) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,", e.x[0], e.x[1]);
        out << buf << (e.concept_label == Concept::Positive ? "positive" : "negative") << ","
            << e.y << "\n";
    }
}

}  // namespace vabc
