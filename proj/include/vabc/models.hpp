#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vabc/graph.hpp"
#include "vabc/tensor.hpp"

namespace vabc {

enum class OutputActivation { Linear, Sigmoid };

struct Dense {
    Tensor W;  // (in, out)
    Tensor b;  // (out)
};

// Gaussian-posterior VAE with the anomaly reconstruction penalty.
// Encoder MLP with two linear heads (mu, log-variance); decoder mirrors
// the encoder hidden widths.
struct VabcModel {
    std::size_t input_dim = 0;
    std::size_t latent_dim = 0;
    std::vector<std::size_t> hidden;
    float sigma2 = 1.0f;
    OutputActivation output_activation = OutputActivation::Linear;

    std::vector<Dense> enc;
    Dense enc_mu, enc_logvar;
    std::vector<Dense> dec;
    Dense dec_out;

    struct TrainMeta {
        std::uint64_t seed = 0;
        std::size_t epochs_completed = 0;
        float final_gamma = 0.0f;
        float final_beta = 0.0f;
    } train_meta;

    // Glorot-uniform weights, zero biases, drawn from the "init" stream.
    static VabcModel init(std::size_t input_dim, std::vector<std::size_t> hidden,
                          std::size_t latent_dim, float sigma2, OutputActivation act,
                          std::uint64_t seed);

    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
    std::vector<std::string> param_names() const;
};

// ---- plain (non-graph) forward paths, used by sampling/eval/artifacts ----

// Returns (mu, sigma), each (B, latent_dim); sigma = exp(0.5 * logvar).
std::pair<Tensor, Tensor> encode(const VabcModel& m, const Tensor& x_batch);

// Decoder mean for a batch of latents.
Tensor decode_mean(const VabcModel& m, const Tensor& z_batch);

// z = mu + eps ⊙ sigma.
Tensor reparameterize(const Tensor& mu, const Tensor& sigma, const Tensor& eps);

// Per-example 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2); shape (B, 1).
Tensor kl_gauss(const Tensor& mu, const Tensor& sigma);

// Per-example (1 / 2 sigma2) * ||x - xt||^2; shape (B, 1).
Tensor recon_loss_vae(float sigma2, const Tensor& x, const Tensor& xt);

// Baseline autoencoding-binary-classifier loss on an l2 reconstruction error.
double abc_loss(double l_ae, int y);

// log(1 - e^{-a}) for a > 0, evaluated without cancellation on either side
// of a = ln 2.
double stable_log1mexp(double a);

// n decoder-mean samples from the prior; optional unit-variance output noise
// (moons visualization). Shape (n, input_dim).
Tensor sample(const VabcModel& m, std::size_t n, std::uint64_t seed, bool add_output_noise);

// ---- loss graph ----

struct LossBreakdown {
    float kl = 0.0f;        // beta-weighted KL batch mean
    float recon = 0.0f;     // y=1 reconstruction term batch mean
    float penalty = 0.0f;   // y=0 anomaly penalty batch mean
    float total = 0.0f;     // kl + recon + penalty
    float gamma_used = 0.0f;
    float beta_used = 1.0f;
    std::size_t clamp_events = 0;  // unwanted examples that hit the penalty floor
};

struct LossGraph {
    ad::Var total;                     // scalar root
    LossBreakdown breakdown;
    std::vector<ad::Var> param_leaves; // aligned with VabcModel::params()
    ad::Var x_leaf;
};

inline constexpr float kPenaltyFloor = 1e-6f;  // floor on gamma * L_VAE

// Batch-mean loss: beta*KL + y*L_VAE - (1-y)*log(1 - e^{-gamma L_VAE}).
// y and eps are (B,1)/(B,latent) tensors supplied by the caller; when
// deterministic_z is set the stochastic step is skipped (z = mu) and eps
// is ignored, as the gradient-field diagnostics require.
LossGraph build_vabc_loss(const VabcModel& m, const Tensor& x_batch, const Tensor& y_batch,
                          const Tensor& eps_batch, float gamma, float beta,
                          bool x_requires_grad = false, bool deterministic_z = false);

// Batch-mean loss without graph construction (validation / reporting).
LossBreakdown eval_vabc_loss(const VabcModel& m, const Tensor& x_batch, const Tensor& y_batch,
                             const Tensor& eps_batch, float gamma, float beta);

// ---- checkpoint persistence (JSON, bit-exact round trip) ----

void save_checkpoint(const VabcModel& m, const std::string& path);
VabcModel load_checkpoint(const std::string& path);

}  // namespace vabc
