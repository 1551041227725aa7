#include "vabc/models.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>

#include "vabc/io.hpp"
#include "vabc/rng.hpp"

namespace vabc {

using json = nlohmann::json;
using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

static Dense glorot_dense(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
    Dense d;
    d.W = Tensor::zeros({fan_in, fan_out});
    d.b = Tensor::zeros({1, fan_out});
    float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    for (float& w : d.W.data) w = (2.0f * rng.uniform() - 1.0f) * limit;
    return d;
}

VabcModel VabcModel::init(std::size_t input_dim, std::vector<std::size_t> hidden,
                          std::size_t latent_dim, float sigma2, OutputActivation act,
                          std::uint64_t seed) {
    if (sigma2 <= 0.0f) throw ContractError("VabcModel: sigma2 must be positive");
    if (latent_dim == 0) throw ContractError("VabcModel: latent_dim must be >= 1");
    VabcModel m;
    m.input_dim = input_dim;
    m.latent_dim = latent_dim;
    m.hidden = std::move(hidden);
    m.sigma2 = sigma2;
    m.output_activation = act;
    m.train_meta.seed = seed;

    RngStream rng(seed, "init");
    std::size_t w = input_dim;
    for (std::size_t h : m.hidden) {
        m.enc.push_back(glorot_dense(w, h, rng));
        w = h;
    }
    m.enc_mu = glorot_dense(w, latent_dim, rng);
    m.enc_logvar = glorot_dense(w, latent_dim, rng);
    w = latent_dim;
    for (auto it = m.hidden.rbegin(); it != m.hidden.rend(); ++it) {
        m.dec.push_back(glorot_dense(w, *it, rng));
        w = *it;
    }
    m.dec_out = glorot_dense(w, input_dim, rng);
    return m;
}

std::vector<Tensor*> VabcModel::params() {
    std::vector<Tensor*> p;
    for (auto& d : enc) { p.push_back(&d.W); p.push_back(&d.b); }
    p.push_back(&enc_mu.W); p.push_back(&enc_mu.b);
    p.push_back(&enc_logvar.W); p.push_back(&enc_logvar.b);
    for (auto& d : dec) { p.push_back(&d.W); p.push_back(&d.b); }
    p.push_back(&dec_out.W); p.push_back(&dec_out.b);
    return p;
}

std::vector<const Tensor*> VabcModel::params() const {
    auto p = const_cast<VabcModel*>(this)->params();
    return {p.begin(), p.end()};
}

std::vector<std::string> VabcModel::param_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < enc.size(); ++i) {
        names.push_back("enc" + std::to_string(i) + ".W");
        names.push_back("enc" + std::to_string(i) + ".b");
    }
    names.insert(names.end(), {"enc_mu.W", "enc_mu.b", "enc_logvar.W", "enc_logvar.b"});
    for (std::size_t i = 0; i < dec.size(); ++i) {
        names.push_back("dec" + std::to_string(i) + ".W");
        names.push_back("dec" + std::to_string(i) + ".b");
    }
    names.insert(names.end(), {"dec_out.W", "dec_out.b"});
    return names;
}

// plain dense layer: out = act(x W + b)
static Tensor dense_forward(const Tensor& x, const Dense& d, bool relu_act) {
    if (x.cols() != d.W.rows()) {
        throw ShapeError("dense: shape mismatch " + x.shape_str() + " vs " + d.W.shape_str());
    }
    Tensor out = Tensor::zeros({x.rows(), d.W.cols()});
    Eigen::Map<MatRM> O(out.data.data(), out.rows(), out.cols());
    O.noalias() = Eigen::Map<const MatRM>(x.data.data(), x.rows(), x.cols()) *
                  Eigen::Map<const MatRM>(d.W.data.data(), d.W.rows(), d.W.cols());
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) {
            float v = out.at(r, c) + d.b.data[c];
            out.at(r, c) = relu_act && v < 0.0f ? 0.0f : v;
        }
    return out;
}

std::pair<Tensor, Tensor> encode(const VabcModel& m, const Tensor& x_batch) {
    if (x_batch.cols() != m.input_dim) {
        throw ShapeError("encode: input width " + std::to_string(x_batch.cols()) +
                         " does not match model input dim " + std::to_string(m.input_dim));
    }
    Tensor h = x_batch;
    for (const auto& d : m.enc) h = dense_forward(h, d, true);
    Tensor mu = dense_forward(h, m.enc_mu, false);
    Tensor logvar = dense_forward(h, m.enc_logvar, false);
    Tensor sigma = logvar;
    for (float& v : sigma.data) v = std::exp(0.5f * v);
    require_finite(mu, "encode");
    require_finite(sigma, "encode");
    return {std::move(mu), std::move(sigma)};
}

Tensor decode_mean(const VabcModel& m, const Tensor& z_batch) {
    Tensor h = z_batch;
    for (const auto& d : m.dec) h = dense_forward(h, d, true);
    Tensor out = dense_forward(h, m.dec_out, false);
    if (m.output_activation == OutputActivation::Sigmoid) {
        for (float& v : out.data)
            v = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v));
    }
    require_finite(out, "decode");
    return out;
}

Tensor reparameterize(const Tensor& mu, const Tensor& sigma, const Tensor& eps) {
    require_same_shape(mu, sigma, "reparameterize");
    require_same_shape(mu, eps, "reparameterize");
    Tensor z = mu;
    for (std::size_t i = 0; i < z.size(); ++i) z.data[i] += eps.data[i] * sigma.data[i];
    return z;
}

Tensor kl_gauss(const Tensor& mu, const Tensor& sigma) {
    require_same_shape(mu, sigma, "kl_gauss");
    Tensor out = Tensor::zeros({mu.rows(), 1});
    std::size_t d = mu.cols();
    for (std::size_t r = 0; r < mu.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double mv = mu.at(r, c);
            double sv = sigma.at(r, c);
            if (sv <= 0.0) throw DomainError("kl_gauss: sigma must be positive");
            acc += mv * mv + sv * sv - 1.0 - 2.0 * std::log(sv);
        }
        out.data[r] = static_cast<float>(0.5 * acc);
    }
    return out;
}

Tensor recon_loss_vae(float sigma2, const Tensor& x, const Tensor& xt) {
    require_same_shape(x, xt, "recon_loss_vae");
    Tensor out = Tensor::zeros({x.rows(), 1});
    std::size_t d = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double diff = static_cast<double>(x.at(r, c)) - xt.at(r, c);
            acc += diff * diff;
        }
        out.data[r] = static_cast<float>(acc / (2.0 * sigma2));
    }
    return out;
}

double stable_log1mexp(double a) {
    if (a <= 0.0) throw DomainError("stable_log1mexp: argument must be positive");
    constexpr double ln2 = 0.6931471805599453;
    return a <= ln2 ? std::log(-std::expm1(-a)) : std::log1p(-std::exp(-a));
}

double abc_loss(double l_ae, int y) {
    if (l_ae < 0.0) throw DomainError("abc_loss: reconstruction error must be >= 0");
    if (y == 1) return l_ae;
    double a = l_ae < kPenaltyFloor ? kPenaltyFloor : l_ae;  // clamped, see diagnostics
    return -stable_log1mexp(a);
}

Tensor sample(const VabcModel& m, std::size_t n, std::uint64_t seed, bool add_output_noise) {
    Tensor z = Tensor::zeros({n, m.latent_dim});
    RngStream rng(seed, "sampling");
    for (float& v : z.data) v = rng.normal();
    if (n == 0) return Tensor::zeros({0, m.input_dim});
    Tensor out = decode_mean(m, z);
    if (add_output_noise) {
        for (float& v : out.data) v += rng.normal();
    }
    return out;
}

LossGraph build_vabc_loss(const VabcModel& m, const Tensor& x_batch, const Tensor& y_batch,
                          const Tensor& eps_batch, float gamma, float beta,
                          bool x_requires_grad, bool deterministic_z) {
    if (gamma <= 0.0f) throw ContractError("vabc_loss: gamma must be positive");
    if (beta < 0.0f || beta > 1.0f) throw ContractError("vabc_loss: beta must be in [0,1]");
    std::size_t B = x_batch.rows();
    if (B == 0) throw ContractError("vabc_loss: empty batch");
    if (y_batch.rows() != B || y_batch.cols() != 1) {
        throw ShapeError("vabc_loss: y batch must be (B,1), got " + y_batch.shape_str());
    }

    using namespace ad;
    LossGraph g;
    g.x_leaf = leaf(x_batch, x_requires_grad, "x");

    auto model_params = m.params();
    auto names = m.param_names();
    g.param_leaves.reserve(model_params.size());
    for (std::size_t i = 0; i < model_params.size(); ++i) {
        g.param_leaves.push_back(leaf(*model_params[i], true, names[i]));
    }
    std::size_t pi = 0;
    auto next_dense = [&]() {
        Var W = g.param_leaves[pi++];
        Var b = g.param_leaves[pi++];
        return std::pair<Var, Var>{W, b};
    };

    Var h = g.x_leaf;
    for (std::size_t i = 0; i < m.enc.size(); ++i) {
        auto [W, b] = next_dense();
        h = relu(add_rowvec(matmul(h, W), b));
    }
    auto [Wm, bm] = next_dense();
    Var mu = add_rowvec(matmul(h, Wm), bm);
    auto [Wl, bl] = next_dense();
    Var logvar = add_rowvec(matmul(h, Wl), bl);
    Var sigma = ad::exp(scale(logvar, 0.5f));

    Var z;
    if (deterministic_z) {
        z = mu;
    } else {
        if (!(eps_batch.rows() == B && eps_batch.cols() == m.latent_dim)) {
            throw ShapeError("vabc_loss: eps batch must be (B,latent), got " +
                             eps_batch.shape_str());
        }
        z = add(mu, mul(constant(eps_batch, "eps"), sigma));
    }

    Var d = z;
    for (std::size_t i = 0; i < m.dec.size(); ++i) {
        auto [W, b] = next_dense();
        d = relu(add_rowvec(matmul(d, W), b));
    }
    auto [Wo, bo] = next_dense();
    Var xt = add_rowvec(matmul(d, Wo), bo);
    if (m.output_activation == OutputActivation::Sigmoid) xt = ad::sigmoid(xt);

    // KL per example: 0.5 * sum_d(mu^2 + sigma^2 - 1 - logvar)
    Var kl = scale(row_sum(sub(add(square(mu), square(sigma)),
                               add_const(logvar, 1.0f))),
                   0.5f);

    // L_VAE per example
    Var lvae = scale(row_sum(square(sub(g.x_leaf, xt))), 1.0f / (2.0f * m.sigma2));

    Var ycol = constant(y_batch, "y");
    Tensor one_minus_y = y_batch;
    for (float& v : one_minus_y.data) v = 1.0f - v;
    Var ycomp = constant(one_minus_y, "1-y");

    Var recon = mul(ycol, lvae);
    Var clamped = clamp_min(scale(lvae, gamma), kPenaltyFloor);
    Var penalty = scale(mul(ycomp, log1mexp(clamped)), -1.0f);

    Var per_example = add(add(scale(kl, beta), recon), penalty);
    g.total = mean(per_example);

    auto batch_mean = [B](const Var& v) {
        double acc = 0.0;
        for (float x : v->value.data) acc += x;
        return static_cast<float>(acc / static_cast<double>(B));
    };
    g.breakdown.kl = beta * batch_mean(kl);
    g.breakdown.recon = batch_mean(recon);
    g.breakdown.penalty = batch_mean(penalty);
    g.breakdown.total = scalar_value(g.total);
    g.breakdown.gamma_used = gamma;
    g.breakdown.beta_used = beta;
    for (std::size_t r = 0; r < B; ++r) {
        if (y_batch.data[r] == 0.0f && gamma * lvae->value.data[r] < kPenaltyFloor) {
            ++g.breakdown.clamp_events;
        }
    }
    return g;
}

LossBreakdown eval_vabc_loss(const VabcModel& m, const Tensor& x_batch, const Tensor& y_batch,
                             const Tensor& eps_batch, float gamma, float beta) {
    return build_vabc_loss(m, x_batch, y_batch, eps_batch, gamma, beta).breakdown;
}

void save_checkpoint(const VabcModel& m, const std::string& path) {
    json j;
    j["format_version"] = 1;
    j["config"] = {
        {"input_dim", m.input_dim},
        {"hidden", m.hidden},
        {"latent_dim", m.latent_dim},
        {"sigma2", m.sigma2},
        {"output_activation",
         m.output_activation == OutputActivation::Sigmoid ? "sigmoid" : "linear"},
    };
    json tensors = json::object();
    auto names = m.param_names();
    auto params = m.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        tensors[names[i]] = {{"shape", params[i]->shape},
                             {"data", floats_to_base64(params[i]->data)}};
    }
    j["tensors"] = std::move(tensors);
    j["train_meta"] = {
        {"seed", m.train_meta.seed},
        {"epochs_completed", m.train_meta.epochs_completed},
        {"final_gamma", m.train_meta.final_gamma},
        {"final_beta", m.train_meta.final_beta},
    };
    write_text_file(path, j.dump(2) + "\n");
}

VabcModel load_checkpoint(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError("checkpoint parse error: " + std::string(e.what()));
    }
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
        throw FormatError("checkpoint: unsupported format_version");
    }
    const json& cfg = j.at("config");
    VabcModel m;
    m.input_dim = cfg.at("input_dim").get<std::size_t>();
    m.hidden = cfg.at("hidden").get<std::vector<std::size_t>>();
    m.latent_dim = cfg.at("latent_dim").get<std::size_t>();
    m.sigma2 = cfg.at("sigma2").get<float>();
    m.output_activation = cfg.at("output_activation").get<std::string>() == "sigmoid"
                              ? OutputActivation::Sigmoid
                              : OutputActivation::Linear;
    // build layer containers with the right shapes, then fill
    VabcModel shaped = VabcModel::init(m.input_dim, m.hidden, m.latent_dim, m.sigma2,
                                       m.output_activation, 0);
    auto params = shaped.params();
    auto names = shaped.param_names();
    const json& tensors = j.at("tensors");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const json& t = tensors.at(names[i]);
        auto shape = t.at("shape").get<std::vector<std::size_t>>();
        auto data = base64_to_floats(t.at("data").get<std::string>());
        Tensor loaded(shape, std::move(data));
        if (!loaded.same_shape(*params[i])) {
            throw FormatError("checkpoint tensor '" + names[i] + "' has shape " +
                              loaded.shape_str() + ", expected " + params[i]->shape_str());
        }
        *params[i] = std::move(loaded);
    }
    const json& tm = j.at("train_meta");
    shaped.train_meta.seed = tm.at("seed").get<std::uint64_t>();
    shaped.train_meta.epochs_completed = tm.at("epochs_completed").get<std::size_t>();
    shaped.train_meta.final_gamma = tm.at("final_gamma").get<float>();
    shaped.train_meta.final_beta = tm.at("final_beta").get<float>();
    return shaped;
}

}  // namespace vabc
