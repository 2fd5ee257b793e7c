#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "annbias/errors.hpp"
#include "annbias/rng.hpp"

// Minimal dense feed-forward engine with explicit forward/backward passes and
// plain SGD. Batches are row-major: one example per row.

namespace annbias {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Tanh, Sigmoid, Linear };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Linear: return "linear";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "linear") return Activation::Linear;
    throw ConfigError("unknown activation: " + s);
}

struct DenseLayer {
    Matrix weights;  // out_dim x in_dim
    Vector biases;   // out_dim
    Activation activation = Activation::Linear;

    Eigen::Index in_dim() const { return weights.cols(); }
    Eigen::Index out_dim() const { return weights.rows(); }
};

struct Network {
    std::vector<DenseLayer> layers;

    Eigen::Index input_dim() const { return layers.front().in_dim(); }
    Eigen::Index output_dim() const { return layers.back().out_dim(); }
    bool empty() const { return layers.empty(); }
};

// Per-layer pre-activations and activations for one minibatch, kept for backprop.
struct ForwardTrace {
    Matrix input;                      // batch x in_dim
    std::vector<Matrix> pre_acts;      // batch x out_dim per layer
    std::vector<Matrix> activations;   // batch x out_dim per layer
};

struct LayerGrads {
    Matrix d_weights;
    Vector d_biases;
};

struct NetGrads {
    std::vector<LayerGrads> layers;
};

inline Matrix apply_activation(Activation act, const Matrix& z) {
    switch (act) {
        case Activation::Tanh: return z.array().tanh();
        case Activation::Sigmoid: return (1.0 / (1.0 + (-z.array()).exp()));
        case Activation::Linear: return z;
    }
    return z;
}

// Derivative expressed through the activation value a = f(z).
inline Matrix activation_grad_from_value(Activation act, const Matrix& a) {
    switch (act) {
        case Activation::Tanh: return 1.0 - a.array().square();
        case Activation::Sigmoid: return a.array() * (1.0 - a.array());
        case Activation::Linear: return Matrix::Ones(a.rows(), a.cols());
    }
    return Matrix::Ones(a.rows(), a.cols());
}

// Weights uniform in [-1/sqrt(in_dim), +1/sqrt(in_dim)], biases zero.
inline Network init_network(const std::vector<int>& layer_dims,
                            const std::vector<Activation>& activations,
                            std::uint64_t rng_seed) {
    if (layer_dims.size() < 2)
        throw ConfigError("init_network: need at least input and output dimensions");
    if (activations.size() != layer_dims.size() - 1)
        throw ConfigError("init_network: expected one activation per layer ("
                          + std::to_string(layer_dims.size() - 1) + " layers, got "
                          + std::to_string(activations.size()) + " activations)");
    for (int d : layer_dims)
        if (d <= 0) throw ConfigError("init_network: layer dimensions must be positive");

    Rng rng(rng_seed);
    Network net;
    net.layers.reserve(activations.size());
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        DenseLayer layer;
        const int in = layer_dims[l];
        const int out = layer_dims[l + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        layer.weights.resize(out, in);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j)
                layer.weights(i, j) = rng.uniform(-scale, scale);
        layer.biases = Vector::Zero(out);
        layer.activation = activations[l];
        net.layers.push_back(std::move(layer));
    }
    return net;
}

inline std::pair<Matrix, ForwardTrace> forward(const Network& net, const Matrix& X) {
    if (net.empty()) throw InputError("forward: network has no layers");
    if (X.cols() != net.input_dim())
        throw InputError("forward: input has " + std::to_string(X.cols())
                         + " columns, network expects " + std::to_string(net.input_dim()));
    ForwardTrace trace;
    trace.input = X;
    trace.pre_acts.reserve(net.layers.size());
    trace.activations.reserve(net.layers.size());
    const Matrix* current = &X;
    for (const DenseLayer& layer : net.layers) {
        Matrix z = (*current * layer.weights.transpose()).rowwise() + layer.biases.transpose();
        trace.activations.push_back(apply_activation(layer.activation, z));
        trace.pre_acts.push_back(std::move(z));
        current = &trace.activations.back();
    }
    return {trace.activations.back(), std::move(trace)};
}

inline Matrix forward_value(const Network& net, const Matrix& X) {
    return forward(net, X).first;
}

// Backpropagates dL/d(output) through the network. Returns gradients for every
// weight/bias and the gradient w.r.t. the network input (needed to chain the
// Bias network's gradient into the Base network).
inline std::pair<NetGrads, Matrix> backward(const Network& net, const ForwardTrace& trace,
                                            const Matrix& output_grad) {
    const std::size_t depth = net.layers.size();
    if (trace.activations.size() != depth || trace.pre_acts.size() != depth)
        throw TrainingError("backward: trace depth does not match network depth");
    if (output_grad.rows() != trace.input.rows()
        || output_grad.cols() != net.layers.back().out_dim())
        throw TrainingError("backward: output_grad shape mismatch");

    NetGrads grads;
    grads.layers.resize(depth);
    Matrix d_act = output_grad;
    for (std::size_t l = depth; l-- > 0;) {
        const DenseLayer& layer = net.layers[l];
        Matrix d_pre =
            d_act.array() * activation_grad_from_value(layer.activation,
                                                       trace.activations[l]).array();
        const Matrix& prev = (l == 0) ? trace.input : trace.activations[l - 1];
        grads.layers[l].d_weights = d_pre.transpose() * prev;
        grads.layers[l].d_biases = d_pre.colwise().sum();
        d_act = d_pre * layer.weights;
    }
    return {std::move(grads), std::move(d_act)};
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void sgd_step(Network& net, const NetGrads& grads, double learning_rate) {
    if (grads.layers.size() != net.layers.size())
        throw TrainingError("sgd_step: gradient/network layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        DenseLayer& layer = net.layers[l];
        const LayerGrads& g = grads.layers[l];
        if (g.d_weights.rows() != layer.weights.rows() || g.d_weights.cols() != layer.weights.cols()
            || g.d_biases.size() != layer.biases.size())
            throw TrainingError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
        if (!g.d_weights.allFinite() || !g.d_biases.allFinite())
            throw TrainingError("sgd_step: non-finite gradient at layer " + std::to_string(l));
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        net.layers[l].weights -= learning_rate * grads.layers[l].d_weights;
        net.layers[l].biases -= learning_rate * grads.layers[l].d_biases;
    }
}

}  // namespace annbias
