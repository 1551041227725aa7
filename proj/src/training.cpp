#include "vabc/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include "vabc/adam.hpp"
#include "vabc/graph.hpp"
#include "vabc/io.hpp"
#include "vabc/rng.hpp"

namespace vabc {

float AnnealSchedule::value(double epoch) const {
    if (epoch < 0.0) throw ContractError("schedule_value: epoch must be >= 0");
    if (e_prime == 0 || epoch >= static_cast<double>(e_prime)) return end;
    double k = steepness > 0.0f ? steepness : 12.0 / static_cast<double>(e_prime);
    double t = -k * (epoch - static_cast<double>(e_prime) / 2.0);
    double s = 1.0 / (1.0 + std::exp(-t));
    return static_cast<float>(end + (static_cast<double>(start) - end) * s);
}

void TrainConfig::validate() const {
    if (e_prime > epochs && epochs > 0) {
        throw ContractError("TrainConfig: e_prime must not exceed epochs");
    }
    if (batch_size == 0 || batch_size % 2 != 0) {
        throw ContractError("TrainConfig: batch_size must be a positive even integer");
    }
    if (gamma_end <= 0.0f) throw ContractError("TrainConfig: gamma_end must be positive");
    if (gamma_start < gamma_end) {
        throw ContractError("TrainConfig: gamma_start must be >= gamma_end");
    }
}

namespace {

struct BatchTensors {
    Tensor x;
    Tensor y;
};

BatchTensors gather(const DataFold& fold, const std::vector<std::size_t>& indices) {
    std::size_t dim = fold.feature_dim();
    BatchTensors b;
    b.x = Tensor::zeros({indices.size(), dim});
    b.y = Tensor::zeros({indices.size(), 1});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& e = fold.examples[indices[r]];
        std::copy(e.x.begin(), e.x.end(), b.x.data.begin() + r * dim);
        b.y.data[r] = static_cast<float>(e.y);
    }
    return b;
}

Tensor fresh_eps(std::size_t rows, std::size_t cols, RngStream& rng) {
    Tensor eps = Tensor::zeros({rows, cols});
    for (float& v : eps.data) v = rng.normal();
    return eps;
}

std::vector<Tensor> snapshot(const VabcModel& m) {
    std::vector<Tensor> s;
    for (const Tensor* p : m.params()) s.push_back(*p);
    return s;
}

void restore(VabcModel& m, const std::vector<Tensor>& s) {
    auto params = m.params();
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = s[i];
}

// mean total loss over a fold at fixed gamma/beta with a fixed eps draw,
// so epochs are compared on a stationary metric
float validation_loss(const VabcModel& m, const DataFold& fold, const Tensor& eps_all,
                      float gamma, float beta) {
    std::size_t n = fold.examples.size();
    std::size_t bs = 512;
    double acc = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
        std::size_t end = std::min(start + bs, n);
        std::vector<std::size_t> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        BatchTensors b = gather(fold, idx);
        Tensor eps = Tensor::zeros({end - start, m.latent_dim});
        std::copy(eps_all.data.begin() + start * m.latent_dim,
                  eps_all.data.begin() + end * m.latent_dim, eps.data.begin());
        LossBreakdown lb = eval_vabc_loss(m, b.x, b.y, eps, gamma, beta);
        acc += static_cast<double>(lb.total) * static_cast<double>(end - start);
    }
    return static_cast<float>(acc / static_cast<double>(n));
}

TrainResult run_training(VabcModel model, const DataFold& fold, const TrainConfig& config,
                         const DataFold* validation_fold, bool balanced) {
    config.validate();
    TrainResult result;
    if (config.epochs == 0) {
        result.model = std::move(model);
        return result;
    }

    AnnealSchedule gamma_sched{config.gamma_start, config.gamma_end, config.e_prime};
    AnnealSchedule beta_sched{0.0f, 1.0f, config.e_prime};

    // VAE baseline trains over the unlabeled fold only
    std::vector<std::size_t> unlabeled;
    for (std::size_t i = 0; i < fold.examples.size(); ++i) {
        if (fold.examples[i].y == 1) unlabeled.push_back(i);
    }

    std::unique_ptr<BalancedBatcher> batcher;
    if (balanced) {
        batcher = std::make_unique<BalancedBatcher>(fold, config.batch_size, config.seed);
    }

    RngStream eps_rng(config.seed, "eps");
    auto params = model.params();
    AdamState adam = AdamState::init(params, config.lr);

    Tensor val_eps;
    if (validation_fold != nullptr) {
        RngStream val_rng(config.seed, "val-eps");
        val_eps = fresh_eps(validation_fold->examples.size(), model.latent_dim, val_rng);
    }

    std::vector<Tensor> best_params;
    float best_val = std::numeric_limits<float>::infinity();
    std::size_t epochs_since_best = 0;
    std::vector<Tensor> last_good = snapshot(model);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        float gamma = gamma_sched.value(static_cast<double>(epoch));
        float beta = beta_sched.value(static_cast<double>(epoch));

        std::vector<Batch> batches =
            balanced ? batcher->epoch(epoch)
                     : shuffled_batches(unlabeled.size(), config.batch_size, config.seed, epoch);
        if (!balanced) {
            for (auto& b : batches)
                for (auto& i : b.indices) i = unlabeled[i];
        }

        double sum_total = 0.0, sum_kl = 0.0, sum_recon = 0.0, sum_penalty = 0.0;
        std::size_t n_batches = 0;
        try {
            for (const Batch& batch : batches) {
                BatchTensors b = gather(fold, batch.indices);
                Tensor eps = fresh_eps(b.x.rows(), model.latent_dim, eps_rng);
                LossGraph g = build_vabc_loss(model, b.x, b.y, eps, gamma, beta);
                ad::backward(g.total);
                std::vector<const Tensor*> grads;
                grads.reserve(g.param_leaves.size());
                for (const auto& leaf : g.param_leaves) grads.push_back(&leaf->grad);
                adam.update(params, grads);
                sum_total += g.breakdown.total;
                sum_kl += g.breakdown.kl;
                sum_recon += g.breakdown.recon;
                sum_penalty += g.breakdown.penalty;
                ++n_batches;
            }
        } catch (const NumericError& e) {
            restore(model, last_good);
            result.metrics.divergence = "diverged at epoch " + std::to_string(epoch) + ": " +
                                        e.what() + " (restored last finite epoch)";
            break;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.gamma = gamma;
        rec.beta = beta;
        rec.train_total = static_cast<float>(sum_total / n_batches);
        rec.train_kl = static_cast<float>(sum_kl / n_batches);
        rec.train_recon = static_cast<float>(sum_recon / n_batches);
        rec.train_penalty = static_cast<float>(sum_penalty / n_batches);

        if (validation_fold != nullptr) {
            rec.val_loss = validation_loss(model, *validation_fold, val_eps,
                                           config.gamma_end, 1.0f);
            if (*rec.val_loss < best_val) {
                best_val = *rec.val_loss;
                best_params = snapshot(model);
                result.metrics.best_epoch = epoch;
                epochs_since_best = 0;
            } else {
                ++epochs_since_best;
            }
        }

        result.metrics.epochs.push_back(rec);
        last_good = snapshot(model);

        if (config.early_stopping.enabled && validation_fold != nullptr &&
            epochs_since_best >= config.early_stopping.patience) {
            break;
        }
    }

    if (config.early_stopping.enabled && !best_params.empty()) {
        restore(model, best_params);
    }

    model.train_meta.seed = config.seed;
    model.train_meta.epochs_completed = result.metrics.epochs.size();
    model.train_meta.final_gamma = config.gamma_end;
    model.train_meta.final_beta = 1.0f;
    result.model = std::move(model);
    return result;
}

}  // namespace

TrainResult train(VabcModel model, const DataFold& fold, const TrainConfig& config,
                  const DataFold* validation_fold) {
    return run_training(std::move(model), fold, config, validation_fold, true);
}

TrainResult train_vae_baseline(VabcModel model, const DataFold& fold,
                               const TrainConfig& config, const DataFold* validation_fold) {
    return run_training(std::move(model), fold, config, validation_fold, false);
}

void write_metrics_csv(const RunMetrics& metrics, const std::string& path) {
    std::ostringstream out;
    out << "epoch,gamma,beta,train_total,train_kl,train_recon,train_penalty,val_loss\n";
    for (const auto& r : metrics.epochs) {
        out << r.epoch << "," << fmt9(r.gamma) << "," << fmt9(r.beta) << ","
            << fmt9(r.train_total) << "," << fmt9(r.train_kl) << "," << fmt9(r.train_recon)
            << "," << fmt9(r.train_penalty) << ","
            << (r.val_loss ? fmt9(*r.val_loss) : std::string()) << "\n";
    }
    write_text_file(path, out.str());
}

}  // namespace vabc
