// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shallow decoder networks with explicit forward/backward passes, the
// frequency encoding of directions, per-frame embeddings, and ADAM.
//
// Activations are batched column-wise: an input of shape (in x N) holds N
// samples.

#include "fastsurf/common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fastsurf {

/// A trainable tensor viewed as flat value/gradient arrays.
struct ParamRef {
    std::span<double> value;
    std::span<double> grad;
};

inline ParamRef param_ref(MatX &value, MatX &grad) {
    return {{value.data(), static_cast<std::size_t>(value.size())}, {grad.data(), static_cast<std::size_t>(grad.size())}};
}
inline ParamRef param_ref(VecX &value, VecX &grad) {
    return {{value.data(), static_cast<std::size_t>(value.size())}, {grad.data(), static_cast<std::size_t>(grad.size())}};
}
inline ParamRef param_ref(std::vector<double> &value, std::vector<double> &grad) { return {value, grad}; }

enum class Activation { None, Relu, Sigmoid };

struct DenseLayer {
    MatX weight;
    VecX bias;
    MatX weight_grad;
    VecX bias_grad;
};

struct Mlp {
    std::vector<DenseLayer> layers;
    Activation hidden_activation = Activation::Relu;
    Activation output_activation = Activation::None;

    /// Xavier-uniform weights, hidden biases uniform in +-1/sqrt(fan_in), zero output bias.
    static Mlp create(int input_dim, const std::vector<int> &hidden, int output_dim, Activation hidden_act,
                      Activation output_act, std::mt19937_64 &rng) {
        Mlp net;
        net.hidden_activation = hidden_act;
        net.output_activation = output_act;
        std::vector<int> sizes{input_dim};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(output_dim);
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            const int fan_in = sizes[l], fan_out = sizes[l + 1];
            DenseLayer layer;
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> uw(-limit, limit);
            layer.weight.resize(fan_out, fan_in);
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = uw(rng);
            }
            layer.bias = VecX::Zero(fan_out);
            if (l + 2 < sizes.size()) {
                const double bl = 1.0 / std::sqrt(static_cast<double>(fan_in));
                std::uniform_real_distribution<double> ub(-bl, bl);
                for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = ub(rng);
            }
            layer.weight_grad = MatX::Zero(fan_out, fan_in);
            layer.bias_grad = VecX::Zero(fan_out);
            net.layers.push_back(std::move(layer));
        }
        return net;
    }

    int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto &l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    void zero_grads() {
        for (auto &l : layers) {
            l.weight_grad.setZero();
            l.bias_grad.setZero();
        }
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        for (auto &l : layers) {
            out.push_back(param_ref(l.weight, l.weight_grad));
            out.push_back(param_ref(l.bias, l.bias_grad));
        }
        return out;
    }

    /// Zeroes the last layer so the network outputs exactly zero.
    void zero_output_layer() {
        layers.back().weight.setZero();
        layers.back().bias.setZero();
    }
};

namespace detail {

inline void apply_activation(Activation a, MatX &x) {
    switch (a) {
    case Activation::None: break;
    case Activation::Relu: x = x.cwiseMax(0.0); break;
    case Activation::Sigmoid: x = (1.0 + (-x.array()).exp()).inverse().matrix(); break;
    }
}

} // namespace detail

/// Activations retained by a forward pass. A tape feeds exactly one backward.
struct MlpTape {
    std::vector<MatX> inputs; // input to each layer
    std::vector<MatX> pre;    // pre-activation of each layer
    MatX output;
    bool consumed = false;
};

inline MatX mlp_eval(const Mlp &net, const MatX &x) {
    if (x.rows() != net.input_dim()) {
        throw DimensionError("mlp: input has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(net.input_dim()));
    }
    MatX h = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        MatX z = net.layers[l].weight * h;
        z.colwise() += net.layers[l].bias;
        detail::apply_activation(l + 1 == net.layers.size() ? net.output_activation : net.hidden_activation, z);
        h.swap(z);
    }
    return h;
}

inline MlpTape mlp_forward(const Mlp &net, const MatX &x) {
    if (x.rows() != net.input_dim()) {
        throw DimensionError("mlp: input has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(net.input_dim()));
    }
    MlpTape tape;
    tape.inputs.reserve(net.layers.size());
    tape.pre.reserve(net.layers.size());
    MatX h = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        MatX z = net.layers[l].weight * h;
        z.colwise() += net.layers[l].bias;
        tape.inputs.push_back(std::move(h));
        tape.pre.push_back(z);
        detail::apply_activation(l + 1 == net.layers.size() ? net.output_activation : net.hidden_activation, z);
        h = std::move(z);
    }
    tape.output = std::move(h);
    return tape;
}

/// Accumulates parameter gradients into the net and returns d loss / d input.
inline MatX mlp_backward(Mlp &net, MlpTape &tape, const MatX &upstream) {
    if (tape.consumed) throw Error("mlp_backward: tape already consumed");
    if (tape.inputs.size() != net.layers.size()) throw DimensionError("mlp_backward: tape does not match network");
    if (upstream.rows() != tape.output.rows() || upstream.cols() != tape.output.cols()) {
        throw DimensionError("mlp_backward: upstream shape does not match forward output");
    }
    tape.consumed = true;
    MatX delta = upstream;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        DenseLayer &layer = net.layers[li];
        const Activation act = li + 1 == net.layers.size() ? net.output_activation : net.hidden_activation;
        switch (act) {
        case Activation::None: break;
        case Activation::Relu: delta.array() *= (tape.pre[li].array() > 0.0).cast<double>(); break;
        case Activation::Sigmoid: delta.array() *= tape.output.array() * (1.0 - tape.output.array()); break;
        }
        layer.weight_grad.noalias() += delta * tape.inputs[li].transpose();
        layer.bias_grad += delta.rowwise().sum();
        MatX next = layer.weight.transpose() * delta;
        delta.swap(next);
    }
    tape.inputs.clear();
    tape.pre.clear();
    return delta;
}

/// Sets the output bias so that net(0) == target exactly.
inline void calibrate_zero_input_output(Mlp &net, double target) {
    net.layers.back().bias.setZero();
    const MatX out0 = mlp_eval(net, MatX::Zero(net.input_dim(), 1));
    net.layers.back().bias.array() = target - out0.col(0).array();
}

struct ScalarForward {
    double value;
    MlpTape tape;
};

inline ScalarForward mlp_sdf_forward(const Mlp &net, const VecX &feature) {
    if (net.output_dim() != 1) throw DimensionError("mlp_sdf_forward: decoder must have a single output");
    MlpTape tape = mlp_forward(net, feature);
    const double v = tape.output(0, 0);
    return {v, std::move(tape)};
}

struct ColorForward {
    Vec3 rgb;
    MlpTape tape;
};

inline VecX concat(std::initializer_list<const VecX *> parts) {
    Eigen::Index n = 0;
    for (const VecX *p : parts) n += p->size();
    VecX out(n);
    Eigen::Index o = 0;
    for (const VecX *p : parts) {
        out.segment(o, p->size()) = *p;
        o += p->size();
    }
    return out;
}

inline ColorForward mlp_color_forward(const Mlp &net, const VecX &feature, const VecX &encoded_dir, const VecX &embedding) {
    if (net.output_dim() != 3) throw DimensionError("mlp_color_forward: decoder must have 3 outputs");
    const VecX x = concat({&feature, &encoded_dir, &embedding});
    MlpTape tape = mlp_forward(net, x);
    const Vec3 rgb = tape.output.col(0);
    return {rgb, std::move(tape)};
}

inline constexpr int encoded_length(int levels, int dims = 3) { return dims + dims * 2 * levels; }

struct Encoding {
    VecX values;
    bool renormalized = false;
};

/// [d, sin(2^k pi d), cos(2^k pi d) for k = 0..levels-1]. Non-unit input is
/// normalized first and flagged.
inline Encoding positional_encode(const Vec3 &d, int levels = 4) {
    Encoding enc;
    Vec3 u = d;
    const double n = d.norm();
    if (std::abs(n - 1.0) > 1e-6) {
        if (!(n > 0.0)) throw InvalidParameterError("positional_encode: zero direction");
        u = d / n;
        enc.renormalized = true;
    }
    enc.values.resize(encoded_length(levels));
    enc.values.head<3>() = u;
    for (int k = 0; k < levels; ++k) {
        const double f = std::ldexp(std::numbers::pi, k);
        for (int a = 0; a < 3; ++a) {
            enc.values[3 + 6 * k + a] = std::sin(f * u[a]);
            enc.values[3 + 6 * k + 3 + a] = std::cos(f * u[a]);
        }
    }
    return enc;
}

/// Generic frequency encoding of an arbitrary-length vector (no normalization).
inline VecX frequency_encode(const VecX &x, int levels) {
    const auto n = x.size();
    VecX out(n + n * 2 * levels);
    out.head(n) = x;
    for (int k = 0; k < levels; ++k) {
        const double f = std::ldexp(std::numbers::pi, k);
        for (Eigen::Index a = 0; a < n; ++a) {
            out[n + 2 * n * k + a] = std::sin(f * x[a]);
            out[n + 2 * n * k + n + a] = std::cos(f * x[a]);
        }
    }
    return out;
}

/// upstream^T * d encode(x) / d x for frequency_encode / positional_encode (unit input).
inline VecX frequency_encode_backward(const VecX &x, int levels, const VecX &upstream) {
    const auto n = x.size();
    VecX g = upstream.head(n);
    for (int k = 0; k < levels; ++k) {
        const double f = std::ldexp(std::numbers::pi, k);
        for (Eigen::Index a = 0; a < n; ++a) {
            g[a] += upstream[n + 2 * n * k + a] * f * std::cos(f * x[a]);
            g[a] -= upstream[n + 2 * n * k + n + a] * f * std::sin(f * x[a]);
        }
    }
    return g;
}

/// One latent vector per frame, stored as columns.
struct EmbeddingTable {
    MatX values;
    MatX grads;

    static EmbeddingTable create(int dim, std::size_t frames) {
        return {MatX::Zero(dim, static_cast<Eigen::Index>(frames)), MatX::Zero(dim, static_cast<Eigen::Index>(frames))};
    }

    int dim() const { return static_cast<int>(values.rows()); }
    std::size_t frames() const { return static_cast<std::size_t>(values.cols()); }
    void zero_grads() { grads.setZero(); }
};

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double decay_factor = 0.1;
    double decay_steps = 250000.0;

    /// Continuous exponential decay: lr * decay_factor^(iteration / decay_steps).
    double lr_at(std::int64_t iteration) const {
        return lr * std::pow(decay_factor, static_cast<double>(iteration) / decay_steps);
    }
};

struct AdamState {
    std::vector<VecX> m;
    std::vector<VecX> v;
    std::int64_t step = 0;

    void reset() {
        m.clear();
        v.clear();
        step = 0;
    }
};

/// Bias-corrected ADAM at the scheduled learning rate for `iteration`.
/// Gradients are left in place; callers clear them.
inline void adam_step(AdamState &state, const AdamConfig &cfg, std::span<const ParamRef> params, std::int64_t iteration,
                      const std::string &group = "params") {
    if (state.m.empty()) {
        for (const ParamRef &p : params) {
            state.m.push_back(VecX::Zero(static_cast<Eigen::Index>(p.value.size())));
            state.v.push_back(VecX::Zero(static_cast<Eigen::Index>(p.value.size())));
        }
    }
    if (state.m.size() != params.size()) throw DimensionError("adam_step: parameter list does not match optimizer state");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (static_cast<std::size_t>(state.m[i].size()) != params[i].value.size() || params[i].grad.size() != params[i].value.size()) {
            throw DimensionError("adam_step: tensor " + std::to_string(i) + " of " + group + " changed shape");
        }
        if (!Eigen::Map<const Eigen::ArrayXd>(params[i].grad.data(), static_cast<Eigen::Index>(params[i].grad.size())).allFinite()) {
            throw NumericalError("adam_step: non-finite gradient in " + group + " tensor " + std::to_string(i));
        }
    }
    ++state.step;
    const double lr = cfg.lr_at(iteration);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    // Every multiply-add is an explicit fma, so vectorized and scalar
    // iterations round identically and results do not depend on alignment.
    const double b1 = cfg.beta1, b2 = cfg.beta2, eps = cfg.epsilon;
    constexpr std::size_t kChunk = 256;
    alignas(64) double root[kChunk];
    for (std::size_t i = 0; i < params.size(); ++i) {
        double *__restrict m = state.m[i].data();
        double *__restrict v = state.v[i].data();
        double *__restrict x = params[i].value.data();
        const double *__restrict gr = params[i].grad.data();
        const std::size_t n = params[i].value.size();
        for (std::size_t lo = 0; lo < n; lo += kChunk) {
            const std::size_t len = std::min(kChunk, n - lo);
            for (std::size_t k = 0; k < len; ++k) {
                const double g = gr[lo + k];
                m[lo + k] = std::fma(b1, m[lo + k], (1.0 - b1) * g);
                v[lo + k] = std::fma(b2, v[lo + k], (1.0 - b2) * g * g);
                root[k] = v[lo + k] / c2;
            }
            Eigen::Map<Eigen::ArrayXd> r(root, static_cast<Eigen::Index>(len));
            r = r.sqrt();
            for (std::size_t k = 0; k < len; ++k) x[lo + k] -= lr * (m[lo + k] / c1) / (root[k] + eps);
        }
    }
}

} // namespace fastsurf
