#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vabc/datasets.hpp"
#include "vabc/models.hpp"

namespace vabc {

// Sigmoidal annealing over the first e_prime epochs, hard clamp after.
// value(e) = end + (start - end) * logistic(-k (e - e_prime/2)), k = 12/e_prime.
struct AnnealSchedule {
    float start = 0.0f;
    float end = 0.0f;
    std::size_t e_prime = 0;
    float steepness = 0.0f;  // 0 -> default 12/e_prime

    float value(double epoch) const;
};

struct EarlyStopping {
    bool enabled = false;
    std::size_t patience = 5;
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t e_prime = 10;
    std::size_t batch_size = 80;
    float gamma_start = 4.0f;
    float gamma_end = 3.0f;
    float lr = 1e-3f;
    std::uint64_t seed = 0;
    EarlyStopping early_stopping;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    float gamma = 0.0f;
    float beta = 0.0f;
    float train_total = 0.0f;
    float train_kl = 0.0f;
    float train_recon = 0.0f;
    float train_penalty = 0.0f;
    std::optional<float> val_loss;
};

struct RunMetrics {
    std::vector<EpochRecord> epochs;
    std::optional<std::size_t> best_epoch;  // index with minimal validation loss
    std::optional<std::string> divergence;  // set when training aborted on non-finite loss
    float final_negative_generation_error = -1.0f;  // filled by evaluation, if run
};

struct TrainResult {
    VabcModel model;
    RunMetrics metrics;
};

// V-ABC training: balanced batches, per-epoch gamma/beta annealing, fresh
// eps per batch, Adam; optional early stopping against a validation fold
// evaluated at the final gamma/beta values with best-parameter restore.
TrainResult train(VabcModel model, const DataFold& fold, const TrainConfig& config,
                  const DataFold* validation_fold = nullptr);

// Plain VAE baseline: unlabeled examples only, shuffled batches,
// loss = beta*KL + L_VAE (same beta schedule as train).
TrainResult train_vae_baseline(VabcModel model, const DataFold& fold,
                               const TrainConfig& config,
                               const DataFold* validation_fold = nullptr);

// CSV: epoch,gamma,beta,train_total,train_kl,train_recon,train_penalty,val_loss
void write_metrics_csv(const RunMetrics& metrics, const std::string& path);

}  // namespace vabc
