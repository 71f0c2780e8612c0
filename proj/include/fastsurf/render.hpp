// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// SDF-weighted color rendering and the training losses, each with its adjoint.

#include "fastsurf/rays.hpp"

#include <cmath>
#include <span>

namespace fastsurf {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// sigma(sdf / tr) * sigma(-sdf / tr): peaks at 0.25 on the surface.
inline double render_weight(double sdf, double tr) {
    const double x = sdf / tr;
    return sigmoid(x) * sigmoid(-x);
}

/// d render_weight / d sdf
inline double render_weight_grad(double sdf, double tr) {
    const double x = sdf / tr;
    const double a = sigmoid(x), b = sigmoid(-x);
    return a * b * (b - a) / tr;
}

inline constexpr double kWeightSumEpsilon = 1e-8;

struct RenderedColor {
    Vec3 color = Vec3::Zero();
    double weight_sum = 0.0;
    bool low_confidence = false; // weight_sum < epsilon: plain mean, excluded from the color loss
};

/// Normalized weighted sum of per-sample colors.
inline RenderedColor render_color(std::span<const double> weights, std::span<const Vec3> colors) {
    if (weights.empty() || weights.size() != colors.size()) throw InvalidParameterError("render_color: need matching, non-empty samples");
    RenderedColor r;
    Vec3 acc = Vec3::Zero();
    for (std::size_t k = 0; k < weights.size(); ++k) {
        r.weight_sum += weights[k];
        acc += weights[k] * colors[k];
    }
    if (weights.size() == 1) {
        r.low_confidence = r.weight_sum < kWeightSumEpsilon;
        r.color = colors[0];
    } else if (r.weight_sum < kWeightSumEpsilon) {
        r.low_confidence = true;
        acc.setZero();
        for (const Vec3 &c : colors) acc += c;
        r.color = acc / static_cast<double>(colors.size());
    } else {
        r.color = acc / r.weight_sum;
    }
    return r;
}

/// Adjoint of render_color for a confident ray: fills d/d weight and d/d color.
inline void render_color_backward(std::span<const double> weights, std::span<const Vec3> colors, const RenderedColor &r,
                                  const Vec3 &upstream, std::span<double> d_weights, std::span<Vec3> d_colors) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
        d_weights[k] = upstream.dot(colors[k] - r.color) / r.weight_sum;
        d_colors[k] = upstream * (weights[k] / r.weight_sum);
    }
}

/// Nonnegative loss weights of the total objective.
struct LossWeights {
    double fs = 10.0;
    double sdf = 6e3;
    double rgb = 0.5;
    double reg = 0.1;
};

struct LossParts {
    double fs = 0.0;
    double sdf = 0.0;
    double rgb = 0.0;
    double reg = 0.0;
    double reg_embed = 0.0;
    double reg_refine = 0.0;
    double reg_deform = 0.0;
    double pre = 0.0;
    double total = 0.0;
};

inline double total_loss(const LossParts &p, const LossWeights &w) {
    return w.fs * p.fs + w.sdf * p.sdf + w.rgb * p.rgb + w.reg * p.reg;
}

/// Mean squared error against the fused prior.
inline double loss_pre(std::span<const double> pred, std::span<const double> target, std::span<double> grad = {}) {
    if (pred.empty() || pred.size() != target.size()) throw InvalidParameterError("loss_pre: need equal-length, non-empty batches");
    const double n = static_cast<double>(pred.size());
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        s += e * e;
        if (!grad.empty()) grad[i] = 2.0 * e / n;
    }
    return s / n;
}

/// Depth-supervised samples of one ray.
struct RayDepthTerms {
    std::span<const double> sdf;
    std::span<const SampleLabel> labels;
    std::span<const double> targets;
};

namespace detail {

template <typename TargetFn>
double nested_mean_loss(std::span<const RayDepthTerms> rays, SampleLabel label, TargetFn target,
                        std::vector<std::vector<double>> *grads) {
    std::size_t active = 0;
    for (const auto &r : rays) {
        for (SampleLabel l : r.labels) {
            if (l == label) {
                ++active;
                break;
            }
        }
    }
    if (grads) {
        grads->resize(rays.size());
        for (std::size_t i = 0; i < rays.size(); ++i) (*grads)[i].assign(rays[i].sdf.size(), 0.0);
    }
    if (active == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < rays.size(); ++i) {
        const auto &r = rays[i];
        std::size_t n = 0;
        double s = 0.0;
        for (std::size_t k = 0; k < r.sdf.size(); ++k) {
            if (r.labels[k] != label) continue;
            const double e = r.sdf[k] - target(r, k);
            s += e * e;
            ++n;
        }
        if (n == 0) continue;
        total += s / static_cast<double>(n);
        if (grads) {
            const double scale = 2.0 / (static_cast<double>(n) * static_cast<double>(active));
            for (std::size_t k = 0; k < r.sdf.size(); ++k) {
                if (r.labels[k] == label) (*grads)[i][k] = scale * (r.sdf[k] - target(r, k));
            }
        }
    }
    return total / static_cast<double>(active);
}

} // namespace detail

/// Mean over rays (with free-space samples) of the per-ray mean of (sdf - tr)^2.
inline double loss_fs(std::span<const RayDepthTerms> rays, double tr, std::vector<std::vector<double>> *grads = nullptr) {
    return detail::nested_mean_loss(rays, SampleLabel::FreeSpace, [tr](const RayDepthTerms &, std::size_t) { return tr; }, grads);
}

/// Mean over rays (with band samples) of the per-ray mean of (sdf - observed)^2.
inline double loss_sdf(std::span<const RayDepthTerms> rays, std::vector<std::vector<double>> *grads = nullptr) {
    return detail::nested_mean_loss(rays, SampleLabel::Sdf, [](const RayDepthTerms &r, std::size_t k) { return r.targets[k]; }, grads);
}

struct ColorPair {
    Vec3 rendered;
    Vec3 observed;
    bool valid = true;
};

/// Mean over valid rays of the channel-summed squared color error.
inline double loss_rgb(std::span<const ColorPair> rays, std::vector<Vec3> *grads = nullptr) {
    std::size_t n = 0;
    for (const auto &r : rays) n += r.valid ? 1 : 0;
    if (grads) grads->assign(rays.size(), Vec3::Zero());
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < rays.size(); ++i) {
        if (!rays[i].valid) continue;
        const Vec3 e = rays[i].rendered - rays[i].observed;
        s += e.squaredNorm();
        if (grads) (*grads)[i] = 2.0 * e / static_cast<double>(n);
    }
    return s / static_cast<double>(n);
}

/// Mean over frames of the per-coordinate mean of xi^2 (xi stored as columns).
inline double reg_embed(const MatX &values, MatX *grad = nullptr, double scale = 1.0) {
    if (values.size() == 0) return 0.0;
    const double n = static_cast<double>(values.size());
    if (grad) *grad += (2.0 * scale / n) * values;
    return values.squaredNorm() / n;
}

/// Mean over the batch rays of (sx-1)^2 + (sy-1)^2 + tx^2 + ty^2 of each ray's frame.
inline double reg_refine(const RefinementParams &params, std::span<const std::size_t> ray_frames, std::vector<double> *grad = nullptr,
                         double scale = 1.0) {
    if (ray_frames.empty()) return 0.0;
    const double n = static_cast<double>(ray_frames.size());
    double s = 0.0;
    for (std::size_t f : ray_frames) {
        const FrameRefinement r = params.frame(f);
        s += (r.sx - 1.0) * (r.sx - 1.0) + (r.sy - 1.0) * (r.sy - 1.0) + r.tx * r.tx + r.ty * r.ty;
        if (grad) {
            (*grad)[4 * f + 0] += scale * 2.0 * (r.sx - 1.0) / n;
            (*grad)[4 * f + 1] += scale * 2.0 * (r.sy - 1.0) / n;
            (*grad)[4 * f + 2] += scale * 2.0 * r.tx / n;
            (*grad)[4 * f + 3] += scale * 2.0 * r.ty / n;
        }
    }
    return s / n;
}

/// Mean squared weight-matrix entry of the deformation network (biases excluded).
/// Identical for every ray, so its per-ray batch mean is this value.
inline double reg_deform(const Mlp &net, Mlp *grad = nullptr, double scale = 1.0) {
    double s = 0.0;
    double n = 0.0;
    for (const auto &l : net.layers) {
        s += l.weight.squaredNorm();
        n += static_cast<double>(l.weight.size());
    }
    if (n == 0.0) return 0.0;
    if (grad) {
        for (std::size_t i = 0; i < net.layers.size(); ++i) grad->layers[i].weight_grad += (2.0 * scale / n) * net.layers[i].weight;
    }
    return s / n;
}

} // namespace fastsurf
