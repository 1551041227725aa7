#include "vabc/evaluation.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "vabc/adam.hpp"
#include "vabc/io.hpp"
#include "vabc/rng.hpp"

namespace vabc {

using json = nlohmann::json;
using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

namespace {

// fixed classifier geometry
constexpr int kImg = 28;
constexpr int kC1 = 26, kP1 = 13;   // conv1 out, pool1 out
constexpr int kC2 = 11, kP2 = 5;    // conv2 out, pool2 out
constexpr int kCh1 = 8, kCh2 = 16;
constexpr int kFcIn = kCh2 * kP2 * kP2;  // 400
constexpr int kClasses = 10;

MapC mat(const Tensor& t) { return MapC(t.data.data(), t.rows(), t.cols()); }
MapM mat(Tensor& t) { return MapM(t.data.data(), t.rows(), t.cols()); }

void im2col1(const Tensor& x, std::size_t B, std::vector<float>& cols) {
    cols.resize(B * kC1 * kC1 * 9);
    for (std::size_t b = 0; b < B; ++b) {
        const float* img = x.data.data() + b * kImg * kImg;
        float* dst = cols.data() + b * kC1 * kC1 * 9;
        for (int r = 0; r < kC1; ++r)
            for (int c = 0; c < kC1; ++c) {
                float* row = dst + (r * kC1 + c) * 9;
                for (int kr = 0; kr < 3; ++kr)
                    for (int kc = 0; kc < 3; ++kc)
                        row[kr * 3 + kc] = img[(r + kr) * kImg + (c + kc)];
            }
    }
}

// pool1 rows: (B*169, 8); col index ch*9 + kr*3 + kc
void im2col2(const Tensor& pool1, std::size_t B, std::vector<float>& cols) {
    cols.resize(B * kC2 * kC2 * kCh1 * 9);
    for (std::size_t b = 0; b < B; ++b) {
        const float* p = pool1.data.data() + b * kP1 * kP1 * kCh1;
        float* dst = cols.data() + b * kC2 * kC2 * kCh1 * 9;
        for (int r = 0; r < kC2; ++r)
            for (int c = 0; c < kC2; ++c) {
                float* row = dst + (r * kC2 + c) * kCh1 * 9;
                for (int ch = 0; ch < kCh1; ++ch)
                    for (int kr = 0; kr < 3; ++kr)
                        for (int kc = 0; kc < 3; ++kc)
                            row[ch * 9 + kr * 3 + kc] =
                                p[((r + kr) * kP1 + (c + kc)) * kCh1 + ch];
            }
    }
}

// 2x2 max pool over (B*in*in, ch) conv activations
void maxpool(const Tensor& z, std::size_t B, int in, int out, int ch, Tensor& pooled,
             std::vector<int>& argmax) {
    pooled = Tensor::zeros({B * out * out, static_cast<std::size_t>(ch)});
    argmax.assign(B * out * out * ch, 0);
    for (std::size_t b = 0; b < B; ++b)
        for (int pr = 0; pr < out; ++pr)
            for (int pc = 0; pc < out; ++pc) {
                std::size_t orow = b * out * out + pr * out + pc;
                for (int c = 0; c < ch; ++c) {
                    float best = -std::numeric_limits<float>::infinity();
                    int best_row = 0;
                    for (int dr = 0; dr < 2; ++dr)
                        for (int dc = 0; dc < 2; ++dc) {
                            std::size_t zrow =
                                b * in * in + (2 * pr + dr) * in + (2 * pc + dc);
                            float v = z.data[zrow * ch + c];
                            if (v > best) {
                                best = v;
                                best_row = static_cast<int>(zrow);
                            }
                        }
                    pooled.data[orow * ch + c] = best;
                    argmax[orow * ch + c] = best_row;
                }
            }
}

struct ConvActivations {
    std::vector<float> cols1, cols2;
    Tensor z1, pool1, z2, pool2, xfc, logits;
    std::vector<int> arg1, arg2;
};

}  // namespace

struct CnnTrainerImpl {
    static void forward(const CnnClassifier& c, const Tensor& x, ConvActivations& a) {
        std::size_t B = x.rows();
        if (x.cols() != kImg * kImg) {
            throw ShapeError("classifier: expected 784 features, got " +
                             std::to_string(x.cols()));
        }
        im2col1(x, B, a.cols1);
        a.z1 = Tensor::zeros({B * kC1 * kC1, kCh1});
        mat(a.z1).noalias() =
            MapC(a.cols1.data(), B * kC1 * kC1, 9) * mat(c.w1_);
        for (std::size_t r = 0; r < a.z1.rows(); ++r)
            for (int ch = 0; ch < kCh1; ++ch) {
                float v = a.z1.data[r * kCh1 + ch] + c.b1_.data[ch];
                a.z1.data[r * kCh1 + ch] = v > 0.0f ? v : 0.0f;
            }
        maxpool(a.z1, B, kC1, kP1, kCh1, a.pool1, a.arg1);

        im2col2(a.pool1, B, a.cols2);
        a.z2 = Tensor::zeros({B * kC2 * kC2, kCh2});
        mat(a.z2).noalias() =
            MapC(a.cols2.data(), B * kC2 * kC2, kCh1 * 9) * mat(c.w2_);
        for (std::size_t r = 0; r < a.z2.rows(); ++r)
            for (int ch = 0; ch < kCh2; ++ch) {
                float v = a.z2.data[r * kCh2 + ch] + c.b2_.data[ch];
                a.z2.data[r * kCh2 + ch] = v > 0.0f ? v : 0.0f;
            }
        maxpool(a.z2, B, kC2, kP2, kCh2, a.pool2, a.arg2);

        // pool2 rows of one image are contiguous: straight copy into (B, 400)
        a.xfc = Tensor(std::vector<std::size_t>{B, kFcIn}, a.pool2.data);
        a.logits = Tensor::zeros({B, kClasses});
        mat(a.logits).noalias() = mat(a.xfc) * mat(c.w3_);
        for (std::size_t r = 0; r < B; ++r)
            for (int k = 0; k < kClasses; ++k) a.logits.data[r * kClasses + k] += c.b3_.data[k];
    }

    // returns mean CE loss; fills gradients
    static double backward(CnnClassifier& c, const ConvActivations& a,
                           const std::vector<int>& labels, Tensor& gw1, Tensor& gb1,
                           Tensor& gw2, Tensor& gb2, Tensor& gw3, Tensor& gb3) {
        std::size_t B = a.logits.rows();
        Tensor dlogits = Tensor::zeros({B, kClasses});
        double loss = 0.0;
        for (std::size_t r = 0; r < B; ++r) {
            const float* row = a.logits.data.data() + r * kClasses;
            float mx = *std::max_element(row, row + kClasses);
            double denom = 0.0;
            for (int k = 0; k < kClasses; ++k) denom += std::exp(double(row[k]) - mx);
            for (int k = 0; k < kClasses; ++k) {
                double p = std::exp(double(row[k]) - mx) / denom;
                dlogits.data[r * kClasses + k] =
                    static_cast<float>((p - (k == labels[r] ? 1.0 : 0.0)) / double(B));
                if (k == labels[r]) loss -= std::log(std::max(p, 1e-12));
            }
        }
        loss /= double(B);

        mat(gw3).noalias() = mat(a.xfc).transpose() * mat(dlogits);
        mat(gb3).noalias() = mat(dlogits).colwise().sum();
        Tensor dxfc = Tensor::zeros({B, kFcIn});
        mat(dxfc).noalias() = mat(dlogits) * mat(c.w3_).transpose();

        // unpool2 (+ relu mask on z2)
        Tensor dz2 = Tensor::zeros(a.z2.shape);
        for (std::size_t orow = 0; orow < B * kP2 * kP2; ++orow)
            for (int ch = 0; ch < kCh2; ++ch) {
                int zrow = a.arg2[orow * kCh2 + ch];
                if (a.z2.data[std::size_t(zrow) * kCh2 + ch] > 0.0f)
                    dz2.data[std::size_t(zrow) * kCh2 + ch] += dxfc.data[orow * kCh2 + ch];
            }

        mat(gw2).noalias() =
            MapC(a.cols2.data(), B * kC2 * kC2, kCh1 * 9).transpose() * mat(dz2);
        mat(gb2).noalias() = mat(dz2).colwise().sum();

        std::vector<float> dcols2(a.cols2.size());
        MapM(dcols2.data(), B * kC2 * kC2, kCh1 * 9).noalias() =
            mat(dz2) * mat(c.w2_).transpose();

        // scatter cols2 gradient back onto pool1 cells
        Tensor dpool1 = Tensor::zeros(a.pool1.shape);
        for (std::size_t b = 0; b < B; ++b) {
            float* dp = dpool1.data.data() + b * kP1 * kP1 * kCh1;
            const float* dc = dcols2.data() + b * kC2 * kC2 * kCh1 * 9;
            for (int r = 0; r < kC2; ++r)
                for (int cc = 0; cc < kC2; ++cc) {
                    const float* row = dc + (r * kC2 + cc) * kCh1 * 9;
                    for (int ch = 0; ch < kCh1; ++ch)
                        for (int kr = 0; kr < 3; ++kr)
                            for (int kc = 0; kc < 3; ++kc)
                                dp[((r + kr) * kP1 + (cc + kc)) * kCh1 + ch] +=
                                    row[ch * 9 + kr * 3 + kc];
                }
        }

        Tensor dz1 = Tensor::zeros(a.z1.shape);
        for (std::size_t orow = 0; orow < B * kP1 * kP1; ++orow)
            for (int ch = 0; ch < kCh1; ++ch) {
                int zrow = a.arg1[orow * kCh1 + ch];
                if (a.z1.data[std::size_t(zrow) * kCh1 + ch] > 0.0f)
                    dz1.data[std::size_t(zrow) * kCh1 + ch] += dpool1.data[orow * kCh1 + ch];
            }

        mat(gw1).noalias() =
            MapC(a.cols1.data(), B * kC1 * kC1, 9).transpose() * mat(dz1);
        mat(gb1).noalias() = mat(dz1).colwise().sum();
        return loss;
    }

    static double accuracy(const CnnClassifier& c, const DataFold& fold) {
        std::size_t correct = 0;
        std::size_t bs = 512;
        for (std::size_t start = 0; start < fold.examples.size(); start += bs) {
            std::size_t end = std::min(start + bs, fold.examples.size());
            Tensor x = Tensor::zeros({end - start, std::size_t(kImg * kImg)});
            for (std::size_t i = start; i < end; ++i)
                std::copy(fold.examples[i].x.begin(), fold.examples[i].x.end(),
                          x.data.begin() + (i - start) * kImg * kImg);
            std::vector<int> pred = c.classify(x);
            for (std::size_t i = start; i < end; ++i)
                if (pred[i - start] == fold.examples[i].digit) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(fold.examples.size());
    }
};

CnnClassifier CnnClassifier::train(const DataFold& labeled, const DataFold& heldout,
                                   std::uint64_t seed, std::size_t epoch_budget) {
    if (labeled.examples.empty()) {
        throw EvalGateError("classifier: cannot train on an empty set");
    }
    CnnClassifier c;
    RngStream rng(seed, "cnn-init");
    auto glorot = [&rng](std::size_t in, std::size_t out) {
        Tensor t = Tensor::zeros({in, out});
        float lim = std::sqrt(6.0f / float(in + out));
        for (float& v : t.data) v = (2.0f * rng.uniform() - 1.0f) * lim;
        return t;
    };
    c.w1_ = glorot(9, kCh1);
    c.b1_ = Tensor::zeros({1, kCh1});
    c.w2_ = glorot(kCh1 * 9, kCh2);
    c.b2_ = Tensor::zeros({1, kCh2});
    c.w3_ = glorot(kFcIn, kClasses);
    c.b3_ = Tensor::zeros({1, kClasses});

    std::vector<Tensor*> params{&c.w1_, &c.b1_, &c.w2_, &c.b2_, &c.w3_, &c.b3_};
    AdamState adam = AdamState::init(params);
    Tensor gw1 = Tensor::zeros(c.w1_.shape), gb1 = Tensor::zeros(c.b1_.shape);
    Tensor gw2 = Tensor::zeros(c.w2_.shape), gb2 = Tensor::zeros(c.b2_.shape);
    Tensor gw3 = Tensor::zeros(c.w3_.shape), gb3 = Tensor::zeros(c.b3_.shape);
    std::vector<const Tensor*> grads{&gw1, &gb1, &gw2, &gb2, &gw3, &gb3};

    const std::size_t bs = 128;
    ConvActivations acts;
    CnnClassifier best;
    float best_acc = -1.0f;
    std::size_t stale = 0;
    for (std::size_t epoch = 0; epoch < epoch_budget; ++epoch) {
        auto batches = shuffled_batches(labeled.examples.size(), bs, seed + 1000, epoch);
        for (const Batch& b : batches) {
            Tensor x = Tensor::zeros({b.indices.size(), std::size_t(kImg * kImg)});
            std::vector<int> labels(b.indices.size());
            for (std::size_t i = 0; i < b.indices.size(); ++i) {
                const auto& e = labeled.examples[b.indices[i]];
                std::copy(e.x.begin(), e.x.end(), x.data.begin() + i * kImg * kImg);
                labels[i] = e.digit;
            }
            CnnTrainerImpl::forward(c, x, acts);
            CnnTrainerImpl::backward(c, acts, labels, gw1, gb1, gw2, gb2, gw3, gb3);
            adam.update(params, grads);
        }
        c.accuracy_ = CnnTrainerImpl::accuracy(c, heldout);
        if (c.accuracy_ > best_acc) {
            best_acc = c.accuracy_;
            best = c;
            stale = 0;
        } else if (++stale >= 3 && best_acc >= kAccuracyGate) {
            break;
        }
    }
    if (best_acc >= kAccuracyGate) return best;
    throw EvalGateError("classifier: held-out accuracy " + std::to_string(best_acc) +
                        " below gate " + std::to_string(kAccuracyGate) + " after " +
                        std::to_string(epoch_budget) + " epochs");
}

std::vector<int> CnnClassifier::classify(const Tensor& images) const {
    std::vector<int> out(images.rows());
    std::size_t bs = 512;
    ConvActivations acts;
    for (std::size_t start = 0; start < images.rows(); start += bs) {
        std::size_t end = std::min(start + bs, images.rows());
        Tensor x = Tensor::zeros({end - start, images.cols()});
        std::copy(images.data.begin() + start * images.cols(),
                  images.data.begin() + end * images.cols(), x.data.begin());
        CnnTrainerImpl::forward(*this, x, acts);
        for (std::size_t r = 0; r < end - start; ++r) {
            const float* row = acts.logits.data.data() + r * kClasses;
            out[start + r] =
                static_cast<int>(std::max_element(row, row + kClasses) - row);
        }
    }
    return out;
}

void CnnClassifier::save(const std::string& path) const {
    json j;
    j["format_version"] = 1;
    j["kind"] = "cnn-classifier";
    j["accuracy"] = accuracy_;
    auto put = [&j](const char* name, const Tensor& t) {
        j["tensors"][name] = {{"shape", t.shape}, {"data", floats_to_base64(t.data)}};
    };
    put("w1", w1_); put("b1", b1_);
    put("w2", w2_); put("b2", b2_);
    put("w3", w3_); put("b3", b3_);
    write_text_file(path, j.dump(2) + "\n");
}

CnnClassifier CnnClassifier::load(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError("classifier parse error: " + std::string(e.what()));
    }
    if (j.value("kind", "") != "cnn-classifier") {
        throw FormatError("classifier file: wrong kind");
    }
    CnnClassifier c;
    auto get = [&j](const char* name) {
        const json& t = j.at("tensors").at(name);
        return Tensor(t.at("shape").get<std::vector<std::size_t>>(),
                      base64_to_floats(t.at("data").get<std::string>()));
    };
    c.w1_ = get("w1"); c.b1_ = get("b1");
    c.w2_ = get("w2"); c.b2_ = get("b2");
    c.w3_ = get("w3"); c.b3_ = get("b3");
    c.accuracy_ = j.at("accuracy").get<double>();
    return c;
}

KnnOracle KnnOracle::moons_oracle(std::size_t n_per_moon) {
    return from_fold(make_moons(n_per_moon, 0.0f, 0));
}

KnnOracle KnnOracle::from_fold(const DataFold& fold) {
    KnnOracle o;
    o.points_.reserve(fold.examples.size());
    o.concepts_.reserve(fold.examples.size());
    for (const auto& e : fold.examples) {
        if (e.x.size() != 2) throw ContractError("KnnOracle: expects 2-D examples");
        o.points_.push_back({e.x[0], e.x[1]});
        o.concepts_.push_back(e.concept_label);
    }
    return o;
}

Concept KnnOracle::predict(float x1, float x2, std::size_t k) const {
    if (k == 0 || points_.empty()) throw ContractError("KnnOracle: bad query");
    if (k == 1) {
        float best = std::numeric_limits<float>::infinity();
        std::size_t bi = 0;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            float dx = points_[i][0] - x1, dy = points_[i][1] - x2;
            float d = dx * dx + dy * dy;
            if (d < best) {
                best = d;
                bi = i;
            }
        }
        return concepts_[bi];
    }
    std::vector<std::pair<float, std::size_t>> dist(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
        float dx = points_[i][0] - x1, dy = points_[i][1] - x2;
        dist[i] = {dx * dx + dy * dy, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::size_t neg = 0;
    for (std::size_t i = 0; i < k; ++i)
        if (concepts_[dist[i].second] == Concept::Negative) ++neg;
    return neg * 2 > k ? Concept::Negative : Concept::Positive;
}

double KnnOracle::self_accuracy(std::size_t k) const {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (predict(points_[i][0], points_[i][1], k) == concepts_[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(points_.size());
}

KnnOracle KnnOracle::swapped() const {
    KnnOracle o = *this;
    o.swapped_ = !swapped_;
    for (auto& c : o.concepts_) {
        c = c == Concept::Negative ? Concept::Positive : Concept::Negative;
    }
    return o;
}

GenerationReport negative_generation_error(const VabcModel& model,
                                           const CnnClassifier& classifier,
                                           int negative_class, std::size_t n,
                                           std::uint64_t seed) {
    if (!classifier.gated()) {
        throw EvalGateError("negative_generation_error: classifier accuracy " +
                            std::to_string(classifier.heldout_accuracy()) +
                            " is below the 0.97 gate");
    }
    if (n == 0) throw ContractError("negative_generation_error: n must be >= 1");
    Tensor samples = sample(model, n, seed, /*add_output_noise=*/false);
    std::vector<int> labels = classifier.classify(samples);
    GenerationReport r;
    r.n = n;
    r.seed = seed;
    r.classifier_accuracy = classifier.heldout_accuracy();
    r.histogram.assign(10, 0);
    for (int l : labels) ++r.histogram[static_cast<std::size_t>(l)];
    r.error = static_cast<double>(r.histogram[static_cast<std::size_t>(negative_class)]) /
              static_cast<double>(n);
    return r;
}

void write_report_json(const GenerationReport& r, const std::string& path) {
    json j;
    j["n"] = r.n;
    j["error"] = r.error;
    j["histogram"] = r.histogram;
    j["seed"] = r.seed;
    j["classifier_accuracy"] = r.classifier_accuracy;
    write_text_file(path, j.dump(2) + "\n");
}

double moons_negative_rate(const VabcModel& model, const KnnOracle& oracle, std::size_t n,
                           std::uint64_t seed) {
    Tensor samples = sample(model, n, seed, /*add_output_noise=*/false);
    std::size_t neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (oracle.predict(samples.at(i, 0), samples.at(i, 1), 1) == Concept::Negative) ++neg;
    }
    return static_cast<double>(neg) / static_cast<double>(n);
}

std::vector<SweepRow> sweep(const DataFold& concept_fold, const DataFold* validation_fold,
                            const ModelSpec& spec, const TrainConfig& base_config,
                            const CnnClassifier& classifier, const SweepPlan& plan) {
    std::vector<SweepRow> rows;
    std::size_t n_negative = concept_fold.counts().negative;
    for (double value : plan.values) {
        for (std::uint64_t seed : plan.seeds) {
            SweepRow row{value, seed, std::numeric_limits<double>::quiet_NaN(), ""};
            try {
                TrainConfig cfg = base_config;
                cfg.seed = seed;
                double p = plan.p;
                switch (plan.axis) {
                    case SweepAxis::P: p = value; break;
                    case SweepAxis::GammaEnd:
                        cfg.gamma_end = static_cast<float>(value);
                        if (cfg.gamma_start < cfg.gamma_end) cfg.gamma_start = cfg.gamma_end;
                        break;
                    case SweepAxis::Seed: cfg.seed = static_cast<std::uint64_t>(value); break;
                    case SweepAxis::UnwantedSize:
                        p = n_negative > 0 ? value / static_cast<double>(n_negative) : 0.0;
                        break;
                }
                DataFold nu = split_nu(concept_fold, p, cfg.seed);
                DataFold val_nu;
                const DataFold* val_ptr = nullptr;
                if (validation_fold != nullptr) {
                    val_nu = split_nu(*validation_fold, p, cfg.seed + 1);
                    val_ptr = &val_nu;
                }
                VabcModel model =
                    VabcModel::init(spec.input_dim, spec.hidden, spec.latent_dim, spec.sigma2,
                                    spec.output_activation, cfg.seed);
                TrainResult tr = train(std::move(model), nu, cfg, val_ptr);
                if (tr.metrics.divergence) throw NumericError(*tr.metrics.divergence);
                GenerationReport rep = negative_generation_error(
                    tr.model, classifier, plan.negative_class, plan.n_samples, cfg.seed);
                row.neg_gen_error = rep.error;
            } catch (const std::exception& e) {
                row.error_message = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ostringstream out;
    out << "axis_value,seed,neg_gen_error\n";
    for (const auto& r : rows) {
        out << fmt9(r.axis_value) << "," << r.seed << ","
            << (std::isnan(r.neg_gen_error) ? std::string("nan") : fmt9(r.neg_gen_error))
            << "\n";
    }
    write_text_file(path, out.str());
}

}  // namespace vabc
