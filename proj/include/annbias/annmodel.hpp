#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "annbias/errors.hpp"
#include "annbias/losses.hpp"
#include "annbias/nncore.hpp"
#include "annbias/rng.hpp"

// The four-network adversarial composite: Base and Prediction networks learn
// the click signal, a Bypass network models the confounding position-CTR value
// b separately and linearly in the pre-sigmoid sum, and a Bias network tries to
// recover b from the shared representation Z_A. Training alternates two
// competing losses on each minibatch.

namespace annbias {

enum class Variant { WithBypass, NoBypass };

inline const char* variant_name(Variant v) {
    return v == Variant::WithBypass ? "with_bypass" : "no_bypass";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "with_bypass") return Variant::WithBypass;
    if (s == "no_bypass") return Variant::NoBypass;
    throw ConfigError("unknown variant: " + s);
}

struct TrainConfig {
    double lambda = 0.0;
    double learning_rate = 0.01;
    int minibatch_size = 100;
    int epochs = 100;
    int probe_epochs = 100;
    std::vector<int> base_widths = {10};
    std::vector<int> prediction_widths = {10};
    std::vector<int> bias_widths = {10};
    std::vector<int> bypass_widths = {1};
    Variant variant = Variant::WithBypass;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 1.0))
            throw ConfigError("TrainConfig: lambda must lie in [0, 1]");
        if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
        if (minibatch_size < 2) throw ConfigError("TrainConfig: minibatch_size must be >= 2");
        if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
        if (probe_epochs < 0) throw ConfigError("TrainConfig: probe_epochs must be >= 0");
        for (const auto* widths : {&base_widths, &prediction_widths, &bias_widths, &bypass_widths}) {
            if (widths->empty()) throw ConfigError("TrainConfig: each network needs >= 1 hidden width");
            for (int w : *widths)
                if (w <= 0) throw ConfigError("TrainConfig: hidden widths must be positive");
        }
    }
};

// Parameters of the composite. The prediction, bias and bypass networks end in
// linear scalar layers; the final sigmoid of the click head is applied by
// ann_forward on the sum of the prediction and bypass outputs, so the
// prediction net's last layer holds W_Y and the offset c, and the bypass net's
// last layer holds W_BY.
struct AnnParams {
    Network base;
    Network prediction;
    Network bias;
    Network bypass;  // unused in the NoBypass variant
    Variant variant = Variant::WithBypass;

    Eigen::Index feature_dim() const { return base.input_dim(); }
};

struct AnnPrediction {
    Vector y_hat;  // sigmoid click predictions, one per row
    Vector b_hat;  // Bias-network outputs, one per row
    Matrix z_a;    // shared representation, batch x base-output
};

namespace detail {

inline std::vector<int> chain_dims(int input, const std::vector<int>& widths, int output) {
    std::vector<int> dims;
    dims.push_back(input);
    dims.insert(dims.end(), widths.begin(), widths.end());
    if (output > 0) dims.push_back(output);
    return dims;
}

inline std::vector<Activation> tanh_then_linear(std::size_t n_layers) {
    std::vector<Activation> acts(n_layers, Activation::Tanh);
    acts.back() = Activation::Linear;
    return acts;
}

}  // namespace detail

// Builds the composite from the config. Each sub-network draws from its own
// seed stream, so the Base/Prediction/Bias initializations of a given seed are
// identical whether or not the bypass exists.
inline AnnParams make_ann(int n_features, const TrainConfig& cfg) {
    cfg.validate();
    if (n_features <= 0) throw ConfigError("make_ann: n_features must be positive");
    AnnParams params;
    params.variant = cfg.variant;

    auto base_dims = detail::chain_dims(n_features, cfg.base_widths, 0);
    params.base = init_network(base_dims,
                               std::vector<Activation>(base_dims.size() - 1, Activation::Tanh),
                               derive_seed(cfg.rng_seed, 1));

    const int z_a_dim = cfg.base_widths.back();
    auto pred_dims = detail::chain_dims(z_a_dim, cfg.prediction_widths, 1);
    params.prediction = init_network(pred_dims, detail::tanh_then_linear(pred_dims.size() - 1),
                                     derive_seed(cfg.rng_seed, 2));

    auto bias_dims = detail::chain_dims(z_a_dim, cfg.bias_widths, 1);
    params.bias = init_network(bias_dims, detail::tanh_then_linear(bias_dims.size() - 1),
                               derive_seed(cfg.rng_seed, 3));

    if (cfg.variant == Variant::WithBypass) {
        auto byp_dims = detail::chain_dims(1, cfg.bypass_widths, 1);
        params.bypass = init_network(byp_dims, detail::tanh_then_linear(byp_dims.size() - 1),
                                     derive_seed(cfg.rng_seed, 4));
    }
    return params;
}

namespace detail {

struct AnnForwardPass {
    AnnPrediction pred;
    ForwardTrace base_trace;
    ForwardTrace prediction_trace;
    ForwardTrace bias_trace;
    ForwardTrace bypass_trace;  // only filled for WithBypass
};

inline AnnForwardPass ann_forward_traced(const AnnParams& params, const Matrix& X,
                                         const Vector& b) {
    if (X.cols() != params.feature_dim())
        throw InputError("ann_forward: X has " + std::to_string(X.cols())
                         + " features, model expects " + std::to_string(params.feature_dim()));
    if (b.size() != X.rows())
        throw InputError("ann_forward: b length does not match batch size");

    AnnForwardPass fp;
    auto [z_a, base_trace] = forward(params.base, X);
    auto [u_pred, pred_trace] = forward(params.prediction, z_a);
    Vector logits = u_pred.col(0);
    if (params.variant == Variant::WithBypass) {
        auto [u_byp, byp_trace] = forward(params.bypass, b);
        logits += u_byp.col(0);
        fp.bypass_trace = std::move(byp_trace);
    }
    auto [b_hat, bias_trace] = forward(params.bias, z_a);

    fp.pred.y_hat = 1.0 / (1.0 + (-logits.array()).exp());
    fp.pred.b_hat = b_hat.col(0);
    fp.pred.z_a = std::move(z_a);
    fp.base_trace = std::move(base_trace);
    fp.prediction_trace = std::move(pred_trace);
    fp.bias_trace = std::move(bias_trace);
    return fp;
}

}  // namespace detail

// Eq.-1-style forward: y_hat = sigmoid(W_Y Z_Y + W_BY Z_BY + c), b_hat = Bias(Z_A).
// In the NoBypass variant the bypass term is dropped.
inline AnnPrediction ann_forward(const AnnParams& params, const Matrix& X, const Vector& b) {
    return detail::ann_forward_traced(params, X, b).pred;
}

struct NoisyStep {
    double loss_n = 0.0;
    double bce = 0.0;
    double sq_cov = 0.0;
    NetGrads base;
    NetGrads prediction;
    NetGrads bypass;
};

struct BiasStep {
    double loss_b = 0.0;
    NetGrads bias;
};

// Gradients of Loss_N w.r.t. theta_A, theta_Y, theta_BY with theta_B frozen.
// The Cov^2 gradient on b_hat flows through the Bias network's input gradient
// into Z_A and on into the Base network.
inline NoisyStep ann_backward_noisy(const AnnParams& params, const Matrix& X, const Vector& y,
                                    const Vector& b, double lambda) {
    auto fp = detail::ann_forward_traced(params, X, b);
    NoisyLossValue loss = noisy_loss(y, fp.pred.y_hat, b, fp.pred.b_hat, lambda);

    // Chain through the head sigmoid: dL/du = dL/dy_hat * y_hat * (1 - y_hat).
    Matrix d_logits =
        (loss.grad_y_hat.array() * fp.pred.y_hat.array() * (1.0 - fp.pred.y_hat.array()))
            .matrix();

    NoisyStep step;
    step.loss_n = loss.value;
    step.bce = loss.bce;
    step.sq_cov = loss.sq_cov;

    auto [pred_grads, d_za_pred] = backward(params.prediction, fp.prediction_trace, d_logits);
    step.prediction = std::move(pred_grads);

    Matrix d_za = std::move(d_za_pred);
    if (lambda > 0.0) {
        Matrix d_bhat = loss.grad_b_hat;
        auto [bias_grads, d_za_bias] = backward(params.bias, fp.bias_trace, d_bhat);
        (void)bias_grads;  // theta_B frozen in this step
        d_za += d_za_bias;
    }
    auto [base_grads, d_input] = backward(params.base, fp.base_trace, d_za);
    (void)d_input;
    step.base = std::move(base_grads);

    if (params.variant == Variant::WithBypass) {
        auto [byp_grads, d_b] = backward(params.bypass, fp.bypass_trace, d_logits);
        (void)d_b;
        step.bypass = std::move(byp_grads);
    }
    return step;
}

// Gradient of Loss_B w.r.t. theta_B only, against the current Base network.
inline BiasStep ann_backward_bias(const AnnParams& params, const Matrix& X, const Vector& b) {
    Matrix z_a = forward_value(params.base, X);
    auto [b_hat_col, bias_trace] = forward(params.bias, z_a);
    LossValue loss = bias_mse_loss(b, b_hat_col.col(0));
    Matrix d_bhat = loss.grad;
    auto [bias_grads, d_za] = backward(params.bias, bias_trace, d_bhat);
    (void)d_za;
    BiasStep step;
    step.loss_b = loss.value;
    step.bias = std::move(bias_grads);
    return step;
}

// One alternating update on a single minibatch: (i) Loss_N updates theta_A,
// theta_Y, theta_BY with theta_B frozen; (ii) forward is recomputed and Loss_B
// updates theta_B against the just-updated Base network. Returns the loss
// values seen before the respective updates.
inline std::pair<double, double> train_step(AnnParams& params, const Matrix& X, const Vector& y,
                                            const Vector& b, const TrainConfig& cfg) {
    if (X.rows() < 2) throw InputError("train_step: minibatch must hold >= 2 examples");
    NoisyStep noisy = ann_backward_noisy(params, X, y, b, cfg.lambda);
    sgd_step(params.base, noisy.base, cfg.learning_rate);
    sgd_step(params.prediction, noisy.prediction, cfg.learning_rate);
    if (params.variant == Variant::WithBypass)
        sgd_step(params.bypass, noisy.bypass, cfg.learning_rate);

    BiasStep bias = ann_backward_bias(params, X, b);
    sgd_step(params.bias, bias.bias, cfg.learning_rate);
    return {noisy.loss_n, bias.loss_b};
}

struct TrainingLog {
    std::vector<double> loss_n_per_epoch;
    std::vector<double> loss_b_per_epoch;
};

namespace detail {

// Seeded minibatch partition. The trailing batch may be short but never a
// singleton: a leftover of one example is merged into the previous batch so
// the covariance term stays defined.
inline std::vector<std::vector<int>> make_minibatches(int n, int batch_size, Rng& rng) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        int end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    if (batches.size() >= 2 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }
    return batches;
}

inline void gather_batch(const Matrix& X, const Vector& y, const Vector& b,
                         const std::vector<int>& idx, Matrix& Xb, Vector& yb, Vector& bb) {
    const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
    Xb.resize(m, X.cols());
    yb.resize(m);
    bb.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        Xb.row(i) = X.row(idx[static_cast<std::size_t>(i)]);
        yb[i] = y[idx[static_cast<std::size_t>(i)]];
        bb[i] = b[idx[static_cast<std::size_t>(i)]];
    }
}

}  // namespace detail

// Alternating adversarial trainer over shuffled minibatches.
inline TrainingLog train(AnnParams& params, const Matrix& X, const Vector& y, const Vector& b,
                         const TrainConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(X.rows());
    if (n == 0) throw InputError("train: dataset is empty");
    if (n < 2) throw InputError("train: need >= 2 examples for the covariance term");
    if (y.size() != n || b.size() != n) throw InputError("train: X/y/b row counts disagree");

    Rng shuffle_rng(derive_seed(cfg.rng_seed, 0xA11CE));
    TrainingLog log;
    Matrix Xb;
    Vector yb, bb;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto batches = detail::make_minibatches(n, cfg.minibatch_size, shuffle_rng);
        double sum_n = 0.0, sum_b = 0.0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            detail::gather_batch(X, y, b, batches[bi], Xb, yb, bb);
            try {
                auto [loss_n, loss_b] = train_step(params, Xb, yb, bb, cfg);
                sum_n += loss_n;
                sum_b += loss_b;
            } catch (const TrainingError& e) {
                throw TrainingError("epoch " + std::to_string(epoch) + ", minibatch "
                                    + std::to_string(bi) + ": " + e.what());
            }
        }
        log.loss_n_per_epoch.push_back(sum_n / static_cast<double>(batches.size()));
        log.loss_b_per_epoch.push_back(sum_b / static_cast<double>(batches.size()));
    }
    return log;
}

// Post-training bias probe: trains only theta_B for probe_epochs, everything
// else frozen, then returns the dataset-level MSE of b_hat against b. This is
// the MSE reported on the sweep panels.
inline double probe_bias(AnnParams& params, const Matrix& X, const Vector& b,
                         const TrainConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(X.rows());
    if (n == 0) throw InputError("probe_bias: dataset is empty");
    if (b.size() != n) throw InputError("probe_bias: X/b row counts disagree");

    Rng shuffle_rng(derive_seed(cfg.rng_seed, 0xB1A5));
    Matrix Xb;
    Vector bb;
    for (int epoch = 0; epoch < cfg.probe_epochs; ++epoch) {
        auto batches = detail::make_minibatches(n, cfg.minibatch_size, shuffle_rng);
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& idx = batches[bi];
            const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
            Xb.resize(m, X.cols());
            bb.resize(m);
            for (Eigen::Index i = 0; i < m; ++i) {
                Xb.row(i) = X.row(idx[static_cast<std::size_t>(i)]);
                bb[i] = b[idx[static_cast<std::size_t>(i)]];
            }
            try {
                BiasStep step = ann_backward_bias(params, Xb, bb);
                sgd_step(params.bias, step.bias, cfg.learning_rate);
            } catch (const TrainingError& e) {
                throw TrainingError("probe epoch " + std::to_string(epoch) + ", minibatch "
                                    + std::to_string(bi) + ": " + e.what());
            }
        }
    }
    Matrix z_a = forward_value(params.base, X);
    Vector b_hat = forward_value(params.bias, z_a).col(0);
    return (b_hat - b).squaredNorm() / static_cast<double>(n);
}

// Online-inference bias policy: either the per-row b values are given, or a
// single scalar (the Position 1 CTR convention) is used for every row.
using BPolicy = std::variant<Vector, double>;

// Inference ignores the Bias network. In the NoBypass variant the policy is
// irrelevant by construction.
inline Vector infer(const AnnParams& params, const Matrix& X, const BPolicy& b_policy) {
    Vector b;
    if (std::holds_alternative<double>(b_policy)) {
        b = Vector::Constant(X.rows(), std::get<double>(b_policy));
    } else {
        b = std::get<Vector>(b_policy);
        if (b.size() != X.rows())
            throw InputError("infer: given b length does not match batch size");
    }
    return ann_forward(params, X, b).y_hat;
}

// Mean |y_hat(b1) - y_hat(b2)| over rows; exactly 0 for the NoBypass variant.
inline double bypass_prediction_diff(const AnnParams& params, const Matrix& X, double b1,
                                     double b2) {
    if (params.variant == Variant::NoBypass) return 0.0;
    Vector y1 = infer(params, X, b1);
    Vector y2 = infer(params, X, b2);
    return (y1 - y2).cwiseAbs().mean();
}

// ---------------------------------------------------------------------------
// Checkpoint format: versioned JSON, round-trip exact for 64-bit values
// (nlohmann emits shortest-round-trip decimal for doubles).

inline constexpr const char* kModelFormatName = "annbias-model";
inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::ordered_json network_to_json(const Network& net) {
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const DenseLayer& layer : net.layers) {
        nlohmann::ordered_json jl;
        jl["in_dim"] = layer.in_dim();
        jl["out_dim"] = layer.out_dim();
        jl["activation"] = activation_name(layer.activation);
        std::vector<double> w(layer.weights.size());
        for (Eigen::Index i = 0; i < layer.out_dim(); ++i)
            for (Eigen::Index j = 0; j < layer.in_dim(); ++j)
                w[static_cast<std::size_t>(i * layer.in_dim() + j)] = layer.weights(i, j);
        jl["weights"] = w;
        jl["biases"] = std::vector<double>(layer.biases.data(),
                                           layer.biases.data() + layer.biases.size());
        layers.push_back(std::move(jl));
    }
    return layers;
}

inline Network network_from_json(const nlohmann::json& layers) {
    Network net;
    for (const auto& jl : layers) {
        DenseLayer layer;
        const Eigen::Index in = jl.at("in_dim").get<Eigen::Index>();
        const Eigen::Index out = jl.at("out_dim").get<Eigen::Index>();
        layer.activation = activation_from_name(jl.at("activation").get<std::string>());
        const auto w = jl.at("weights").get<std::vector<double>>();
        const auto bias = jl.at("biases").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != in * out
            || static_cast<Eigen::Index>(bias.size()) != out)
            throw ParseError("model checkpoint: layer size fields disagree with data");
        layer.weights.resize(out, in);
        for (Eigen::Index i = 0; i < out; ++i)
            for (Eigen::Index j = 0; j < in; ++j)
                layer.weights(i, j) = w[static_cast<std::size_t>(i * in + j)];
        layer.biases = Eigen::Map<const Vector>(bias.data(), out);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

}  // namespace detail

inline nlohmann::ordered_json model_to_json(const AnnParams& params) {
    nlohmann::ordered_json j;
    j["format"] = kModelFormatName;
    j["version"] = kModelFormatVersion;
    j["variant"] = variant_name(params.variant);
    j["base"] = detail::network_to_json(params.base);
    j["prediction"] = detail::network_to_json(params.prediction);
    j["bias"] = detail::network_to_json(params.bias);
    if (params.variant == Variant::WithBypass)
        j["bypass"] = detail::network_to_json(params.bypass);
    return j;
}

inline AnnParams model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != kModelFormatName)
        throw ParseError("model checkpoint: unexpected format field");
    if (j.value("version", -1) != kModelFormatVersion)
        throw ParseError("model checkpoint: unsupported version");
    AnnParams params;
    params.variant = variant_from_name(j.at("variant").get<std::string>());
    params.base = detail::network_from_json(j.at("base"));
    params.prediction = detail::network_from_json(j.at("prediction"));
    params.bias = detail::network_from_json(j.at("bias"));
    if (params.variant == Variant::WithBypass)
        params.bypass = detail::network_from_json(j.at("bypass"));
    return params;
}

inline void save_model(const AnnParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_model: cannot open " + path);
    out << model_to_json(params).dump(2) << "\n";
    if (!out) throw IoError("save_model: write failed for " + path);
}

inline AnnParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_model: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_model: " + std::string(e.what()));
    }
    return model_from_json(j);
}

}  // namespace annbias
