// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ray generation through the correction chain
//   pixel -> image plane -> deformation field -> per-frame refinement
//         -> normalization -> refined pose,
// plus coarse / fine depth sampling and sample classification.

#include "fastsurf/frames.hpp"
#include "fastsurf/nn.hpp"

#include <optional>
#include <random>
#include <vector>

namespace fastsurf {

/// Per-frame scale (sx, sy) and translation (tx, ty) of the normalized image plane.
struct FrameRefinement {
    double sx = 1.0;
    double sy = 1.0;
    double tx = 0.0;
    double ty = 0.0;
};

/// Four trainable scalars per frame, stored as [sx, sy, tx, ty] per frame.
struct RefinementParams {
    std::vector<double> values;
    std::vector<double> grads;

    static RefinementParams create(std::size_t frames) {
        RefinementParams r;
        r.values.resize(frames * 4);
        for (std::size_t i = 0; i < frames; ++i) {
            r.values[4 * i + 0] = 1.0;
            r.values[4 * i + 1] = 1.0;
            r.values[4 * i + 2] = 0.0;
            r.values[4 * i + 3] = 0.0;
        }
        r.grads.assign(r.values.size(), 0.0);
        return r;
    }

    std::size_t frames() const { return values.size() / 4; }
    FrameRefinement frame(std::size_t i) const { return {values[4 * i], values[4 * i + 1], values[4 * i + 2], values[4 * i + 3]}; }
    void set(std::size_t i, const FrameRefinement &f) {
        values[4 * i] = f.sx;
        values[4 * i + 1] = f.sy;
        values[4 * i + 2] = f.tx;
        values[4 * i + 3] = f.ty;
    }
    void zero_grads() { std::fill(grads.begin(), grads.end(), 0.0); }
};

/// Axis-angle rotation increment and translation increment per frame:
/// refined = [Exp(w) | dt] * base.
struct PoseDeltas {
    std::vector<double> values; // [wx, wy, wz, tx, ty, tz] per frame
    std::vector<double> grads;

    static PoseDeltas create(std::size_t frames) { return {std::vector<double>(frames * 6, 0.0), std::vector<double>(frames * 6, 0.0)}; }

    std::size_t frames() const { return values.size() / 6; }
    Vec3 rotation(std::size_t i) const { return {values[6 * i], values[6 * i + 1], values[6 * i + 2]}; }
    Vec3 translation(std::size_t i) const { return {values[6 * i + 3], values[6 * i + 4], values[6 * i + 5]}; }
    void zero_grads() { std::fill(grads.begin(), grads.end(), 0.0); }

    Pose apply(std::size_t i, const Pose &base) const {
        const Vec3 w = rotation(i);
        const Vec3 t = translation(i);
        if (w.isZero(0.0) && t.isZero(0.0)) return base;
        const Mat3 e = so3_exp(w);
        return {e * base.rotation, e * base.translation + t};
    }
};

/// Global image-plane correction: a shallow MLP from frequency-encoded
/// normalized pixel coordinates to an additive offset on the plane x, y.
struct DeformationField {
    Mlp net;
    int levels = 4;

    static DeformationField create(int hidden, int layers, int levels, std::mt19937_64 &rng) {
        DeformationField f;
        f.levels = levels;
        f.net = Mlp::create(2 + 2 * 2 * levels, std::vector<int>(static_cast<std::size_t>(layers), hidden), 2, Activation::Relu,
                            Activation::None, rng);
        f.net.zero_output_layer();
        return f;
    }

    static int input_dim(int levels) { return 2 + 4 * levels; }
};

/// Pixel coordinates scaled to [-1, 1]^2.
inline Vec2 normalized_pixel(double u, double v, const Intrinsics &intr) {
    const double nu = intr.width > 1 ? 2.0 * u / (intr.width - 1) - 1.0 : 0.0;
    const double nv = intr.height > 1 ? 2.0 * v / (intr.height - 1) - 1.0 : 0.0;
    return {nu, nv};
}

inline VecX deformation_input(double u, double v, const Intrinsics &intr, int levels) {
    const Vec2 n = normalized_pixel(u, v, intr);
    VecX x(2);
    x << n.x(), n.y();
    return frequency_encode(x, levels);
}

inline Vec3 pixel_to_plane(double u, double v, const Intrinsics &intr) { return pixel_to_camera_plane(u, v, intr); }

/// diag(sx, sy, 1) * (plane + (tx, ty, 0)).
inline Vec3 refine_plane(const Vec3 &plane, const FrameRefinement &r) {
    return {r.sx * (plane.x() + r.tx), r.sy * (plane.y() + r.ty), plane.z()};
}

/// Inverse of refine_plane.
inline Vec3 unrefine_plane(const Vec3 &refined, const FrameRefinement &r) {
    return {refined.x() / r.sx - r.tx, refined.y() / r.sy - r.ty, refined.z()};
}

inline Vec3 refined_direction(const Vec3 &refined) {
    const double n = refined.norm();
    if (!(n > 0.0)) throw InvalidParameterError("refined_direction: zero plane vector");
    return refined / n;
}

inline Vec3 apply_deformation(double u, double v, const Vec3 &plane, const DeformationField &field, const Intrinsics &intr) {
    const MatX off = mlp_eval(field.net, deformation_input(u, v, intr, field.levels));
    return {plane.x() + off(0, 0), plane.y() + off(1, 0), plane.z()};
}

/// Which correction stages make_ray applies.
struct CorrectionChain {
    const Intrinsics *intrinsics = nullptr;
    const DeformationField *deformation = nullptr; // nullptr: stage disabled
    const RefinementParams *refinement = nullptr;
    const PoseDeltas *pose_deltas = nullptr;
};

/// Forward intermediates of one generated ray; also what ray_backward consumes.
struct RayTrace {
    std::size_t frame = 0;
    double u = 0.0;
    double v = 0.0;
    Vec3 plane = Vec3::Zero();    // uncorrected
    Vec2 offset = Vec2::Zero();   // deformation output
    Vec3 deformed = Vec3::Zero();
    Vec3 refined = Vec3::Zero();
    FrameRefinement refinement;
    Pose pose;                 // refined camera-to-world
    Vec3 origin = Vec3::Zero();
    Vec3 step = Vec3::Zero();  // world displacement per unit z-depth: pose.rotation * refined
    Vec3 camera_direction = Vec3::Zero(); // refined / |refined|
    Vec3 direction = Vec3::Zero();        // pose.rotation * camera_direction
};

/// Runs the chain with a precomputed deformation offset (batched by callers).
inline RayTrace trace_ray(std::size_t frame, double u, double v, const Pose &base_pose, const Vec2 &offset, const CorrectionChain &chain) {
    RayTrace t;
    t.frame = frame;
    t.u = u;
    t.v = v;
    t.plane = pixel_to_plane(u, v, *chain.intrinsics);
    t.offset = offset;
    t.deformed = {t.plane.x() + offset.x(), t.plane.y() + offset.y(), t.plane.z()};
    t.refinement = chain.refinement ? chain.refinement->frame(frame) : FrameRefinement{};
    t.refined = chain.refinement ? refine_plane(t.deformed, t.refinement) : t.deformed;
    t.pose = chain.pose_deltas ? chain.pose_deltas->apply(frame, base_pose) : base_pose;
    t.origin = t.pose.translation;
    t.step = t.pose.rotation * t.refined;
    t.camera_direction = refined_direction(t.refined);
    t.direction = t.pose.rotation * t.camera_direction;
    return t;
}

struct Ray {
    Vec3 origin;
    Vec3 direction; // unit
    Vec3 step;      // point at z-depth t is origin + t * step
};

inline Ray make_ray(std::size_t frame, double u, double v, const Pose &base_pose, const CorrectionChain &chain) {
    Vec2 offset = Vec2::Zero();
    if (chain.deformation) {
        const MatX off = mlp_eval(chain.deformation->net, deformation_input(u, v, *chain.intrinsics, chain.deformation->levels));
        offset = {off(0, 0), off(1, 0)};
    }
    const RayTrace t = trace_ray(frame, u, v, base_pose, offset, chain);
    return {t.origin, t.direction, t.step};
}

/// Gradients flowing into a ray's outputs.
struct RayUpstream {
    Vec3 origin = Vec3::Zero();
    Vec3 step = Vec3::Zero();
    Vec3 direction = Vec3::Zero();
};

/// Backpropagates through pose, normalization and refinement. Accumulates into
/// refinement / pose grads when non-null; returns d loss / d offset.
inline Vec2 ray_backward(const RayTrace &t, const Pose &base_pose, const RayUpstream &up, RefinementParams *refinement,
                         PoseDeltas *pose_deltas) {
    const Mat3 rt = t.pose.rotation.transpose();
    const Vec3 dcam = rt * up.direction;
    const Vec3 &dhat = t.camera_direction;
    const Vec3 drefined = rt * up.step + (dcam - dhat * dhat.dot(dcam)) / t.refined.norm();
    if (pose_deltas) {
        const Mat3 d_rot = up.step * t.refined.transpose() + up.direction * dhat.transpose();
        const Vec3 d_trans = up.origin;
        const std::size_t o = 6 * t.frame;
        const Vec3 w = pose_deltas->rotation(t.frame);
        const Mat3 e = so3_exp(w);
        const Mat3 g = d_rot * base_pose.rotation.transpose() + d_trans * base_pose.translation.transpose();
        const Mat3 jr_t = so3_right_jacobian(w).transpose();
        const Mat3 et = e.transpose();
        Vec3 dw = Vec3::Zero();
        for (int c = 0; c < 3; ++c) dw += jr_t * (skew(Vec3::Unit(c)) * (et * g.col(c)));
        for (int a = 0; a < 3; ++a) {
            pose_deltas->grads[o + a] += dw[a];
            pose_deltas->grads[o + 3 + a] += d_trans[a];
        }
    }
    Vec2 doff;
    if (refinement) {
        const std::size_t o = 4 * t.frame;
        const FrameRefinement &r = t.refinement;
        refinement->grads[o + 0] += drefined.x() * (t.deformed.x() + r.tx);
        refinement->grads[o + 1] += drefined.y() * (t.deformed.y() + r.ty);
        refinement->grads[o + 2] += drefined.x() * r.sx;
        refinement->grads[o + 3] += drefined.y() * r.sy;
        doff = {drefined.x() * r.sx, drefined.y() * r.sy};
    } else {
        doff = {drefined.x() * t.refinement.sx, drefined.y() * t.refinement.sy};
    }
    return doff;
}

/// z-depths {k * step : k >= 1, k * step <= ray_length}; with `rng`, each
/// depth is jittered uniformly within +-step / 2.
inline std::vector<double> sample_coarse(double ray_length, double step = 0.015625, std::mt19937_64 *rng = nullptr) {
    if (!(ray_length > 0.0) || !(step > 0.0)) throw InvalidParameterError("sample_coarse: ray length and step must be positive");
    const auto n = static_cast<std::size_t>(std::floor(ray_length / step + 1e-9));
    std::vector<double> t(n);
    std::uniform_real_distribution<double> jitter(-0.5 * step, 0.5 * step);
    for (std::size_t k = 0; k < n; ++k) {
        t[k] = static_cast<double>(k + 1) * step;
        if (rng) t[k] += jitter(*rng);
    }
    return t;
}

enum class SampleLabel : std::uint8_t { FreeSpace = 0, Sdf = 1, Excluded = 2 };

struct SampleClass {
    SampleLabel label;
    double target; // observed signed distance d_obs - t for Sdf samples
};

/// Free space in front of the band, Sdf inside |d_obs - t| <= tr, Excluded
/// behind the band or when the depth is invalid.
inline SampleClass classify_sample(double t, double observed_depth, double tr) {
    if (!(observed_depth > 0.0)) return {SampleLabel::Excluded, 0.0};
    const double diff = observed_depth - t;
    if (std::abs(diff) <= tr) return {SampleLabel::Sdf, diff};
    if (t < observed_depth - tr) return {SampleLabel::FreeSpace, 0.0};
    return {SampleLabel::Excluded, 0.0};
}

inline std::vector<SampleClass> classify_samples(const std::vector<double> &depths, double observed_depth, double tr) {
    std::vector<SampleClass> out;
    out.reserve(depths.size());
    for (double t : depths) out.push_back(classify_sample(t, observed_depth, tr));
    return out;
}

/// First + to - crossing of the coarse predictions, by linear interpolation.
/// Pairs where either prediction is missing (nullopt) are skipped.
inline std::optional<double> first_zero_crossing(const std::vector<double> &depths, const std::vector<std::optional<double>> &sdf) {
    for (std::size_t k = 0; k + 1 < depths.size() && k + 1 < sdf.size(); ++k) {
        if (!sdf[k] || !sdf[k + 1]) continue;
        const double a = *sdf[k], b = *sdf[k + 1];
        if (a > 0.0 && b <= 0.0) return depths[k] + (depths[k + 1] - depths[k]) * a / (a - b);
    }
    return std::nullopt;
}

/// `count` depths spread uniformly over [c - tr, c + tr] around the first
/// crossing c, clamped to [min_depth, ray_length]; empty without a crossing.
inline std::vector<double> sample_fine(const std::vector<double> &depths, const std::vector<std::optional<double>> &sdf, double tr,
                                       int count, double min_depth, double ray_length) {
    std::vector<double> out;
    const auto c = first_zero_crossing(depths, sdf);
    if (!c || count <= 0) return out;
    out.reserve(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
        const double f = count > 1 ? static_cast<double>(j) / (count - 1) : 0.5;
        out.push_back(std::clamp(*c - tr + 2.0 * tr * f, min_depth, ray_length));
    }
    return out;
}

/// One ray of a training batch. World points are a function of the current
/// correction parameters and are computed at evaluation time.
struct RaySamples {
    std::size_t frame = 0;
    int px = 0;
    int py = 0;
    double observed_depth = 0.0; // 0 = invalid
    Vec3 observed_color = Vec3::Zero();
    std::vector<double> depths;
    std::vector<SampleLabel> labels;
    std::vector<double> targets;
    std::size_t fine_begin = 0; // depths[fine_begin..] are fine samples
};

struct SampleBatch {
    std::vector<RaySamples> rays;

    std::size_t sample_count() const {
        std::size_t n = 0;
        for (const auto &r : rays) n += r.depths.size();
        return n;
    }
};

} // namespace fastsurf
