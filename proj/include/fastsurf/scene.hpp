// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Procedural RGB-D scenes: a room interior with boxes, spheres and slabs,
// ray-cast analytically, plus sensor-style depth corruption.

#include "fastsurf/mesh.hpp"
#include "fastsurf/rays.hpp"

#include <variant>

namespace fastsurf {

struct RoomInterior {
    Vec3 lo, hi;
    std::array<Vec3, 6> albedo; // -x, +x, -y, +y, -z, +z walls
};

struct BoxPrimitive {
    Vec3 center, half;
    Vec3 albedo;
};

struct SpherePrimitive {
    Vec3 center;
    double radius;
    Vec3 albedo;
};

using Primitive = std::variant<RoomInterior, BoxPrimitive, SpherePrimitive>;

struct SurfaceHit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal = Vec3::Zero();
    Vec3 albedo = Vec3::Zero();
};

namespace detail {

/// Signed distance, positive in free space.
inline double primitive_sdf(const Primitive &prim, const Vec3 &p) {
    return std::visit(
        [&p](const auto &s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RoomInterior>) {
                const Vec3 in = (p - s.lo).cwiseMin(s.hi - p);
                if ((in.array() >= 0.0).all()) return in.minCoeff();
                return -in.cwiseMin(0.0).norm();
            } else if constexpr (std::is_same_v<T, BoxPrimitive>) {
                const Vec3 q = (p - s.center).cwiseAbs() - s.half;
                return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
            } else {
                return (p - s.center).norm() - s.radius;
            }
        },
        prim);
}

/// First hit at parameter t > 0 along origin + t * w (w need not be unit).
inline SurfaceHit primitive_hit(const Primitive &prim, const Vec3 &o, const Vec3 &w) {
    SurfaceHit hit;
    std::visit(
        [&](const auto &s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RoomInterior>) {
                for (int a = 0; a < 3; ++a) {
                    if (w[a] == 0.0) continue;
                    const bool positive = w[a] > 0.0;
                    const double t = ((positive ? s.hi[a] : s.lo[a]) - o[a]) / w[a];
                    if (t > 0.0 && t < hit.t) {
                        hit.t = t;
                        hit.normal = -Vec3::Unit(a) * (positive ? 1.0 : -1.0);
                        hit.albedo = s.albedo[static_cast<std::size_t>(2 * a + (positive ? 1 : 0))];
                    }
                }
            } else if constexpr (std::is_same_v<T, BoxPrimitive>) {
                double t_near = -std::numeric_limits<double>::infinity(), t_far = std::numeric_limits<double>::infinity();
                int axis = -1;
                for (int a = 0; a < 3; ++a) {
                    const double lo = s.center[a] - s.half[a], hi = s.center[a] + s.half[a];
                    if (w[a] == 0.0) {
                        if (o[a] < lo || o[a] > hi) return;
                        continue;
                    }
                    double t0 = (lo - o[a]) / w[a], t1 = (hi - o[a]) / w[a];
                    if (t0 > t1) std::swap(t0, t1);
                    if (t0 > t_near) {
                        t_near = t0;
                        axis = a;
                    }
                    t_far = std::min(t_far, t1);
                }
                if (axis < 0 || t_near > t_far || !(t_near > 0.0)) return;
                hit.t = t_near;
                hit.normal = -Vec3::Unit(axis) * (w[axis] > 0.0 ? 1.0 : -1.0);
                hit.albedo = s.albedo;
            } else {
                const Vec3 oc = o - s.center;
                const double a = w.squaredNorm(), b = oc.dot(w), c = oc.squaredNorm() - s.radius * s.radius;
                const double disc = b * b - a * c;
                if (disc < 0.0) return;
                const double sq = std::sqrt(disc);
                double t = (-b - sq) / a;
                if (!(t > 0.0)) t = (-b + sq) / a;
                if (!(t > 0.0)) return;
                hit.t = t;
                hit.normal = (o + t * w - s.center).normalized();
                hit.albedo = s.albedo;
            }
        },
        prim);
    return hit;
}

} // namespace detail

/// Per-frame true image-plane distortion for refinement experiments.
struct FramePerturbation {
    std::size_t frame = 0;
    FrameRefinement truth;
};

struct SyntheticScene {
    std::string name;
    std::vector<Primitive> primitives;
    BoundingBox room;
    Intrinsics intrinsics;
    std::vector<Pose> poses;
    std::vector<FramePerturbation> perturbations;
    Vec3 light = Vec3(0.3, 0.8, 0.5).normalized();

    double sdf(const Vec3 &p) const {
        double d = std::numeric_limits<double>::infinity();
        for (const auto &prim : primitives) d = std::min(d, detail::primitive_sdf(prim, p));
        return d;
    }

    SurfaceHit cast(const Vec3 &origin, const Vec3 &w) const {
        SurfaceHit best;
        for (const auto &prim : primitives) {
            const SurfaceHit h = detail::primitive_hit(prim, origin, w);
            if (h.t < best.t) best = h;
        }
        return best;
    }

    FrameRefinement perturbation(std::size_t frame) const {
        for (const auto &p : perturbations) {
            if (p.frame == frame) return p.truth;
        }
        return {};
    }
};

inline Intrinsics default_intrinsics(int width = 160, int height = 120) {
    Intrinsics k;
    k.width = width;
    k.height = height;
    k.fx = k.fy = 100.0 * width / 160.0;
    k.cx = 0.5 * (width - 1);
    k.cy = 0.5 * (height - 1);
    return k;
}

/// Cameras circling the room center at radius `radius`, alternately pitched up and down.
inline std::vector<Pose> orbit_trajectory(int frames, double radius = 1.0, double height = 1.2, const Vec3 &target = Vec3(0.0, 0.6, 0.0)) {
    std::vector<Pose> poses;
    for (int i = 0; i < frames; ++i) {
        const double a = 2.0 * std::numbers::pi * i / frames;
        const Vec3 eye(radius * std::cos(a), height, radius * std::sin(a));
        const Vec3 look = target + Vec3(0.0, (i % 2 == 0) ? -0.2 : 0.2, 0.0);
        poses.push_back(look_at(eye, look));
    }
    return poses;
}

inline RoomInterior default_room() {
    return {Vec3(-1.5, 0.0, -1.5), Vec3(1.5, 2.4, 1.5),
            {Vec3(0.80, 0.45, 0.40), Vec3(0.35, 0.55, 0.80), Vec3(0.60, 0.60, 0.55), Vec3(0.90, 0.90, 0.85), Vec3(0.40, 0.75, 0.45),
             Vec3(0.85, 0.75, 0.35)}};
}

/// "box": a room with one cube on the floor; "cluttered": adds spheres,
/// more boxes and a thin slab.
inline SyntheticScene make_scene(const std::string &name, int frames, const Intrinsics &intr = default_intrinsics()) {
    if (frames <= 0) throw InvalidParameterError("make_scene: need at least one frame");
    SyntheticScene s;
    s.name = name;
    const RoomInterior room = default_room();
    s.room = {room.lo, room.hi};
    s.primitives.push_back(room);
    s.intrinsics = intr;
    if (name == "box") {
        s.primitives.push_back(BoxPrimitive{Vec3(0.0, 0.3, 0.0), Vec3::Constant(0.3), Vec3(0.85, 0.30, 0.25)});
    } else if (name == "cluttered") {
        s.primitives.push_back(BoxPrimitive{Vec3(0.0, 0.3, 0.0), Vec3::Constant(0.3), Vec3(0.85, 0.30, 0.25)});
        s.primitives.push_back(SpherePrimitive{Vec3(0.85, 0.35, -0.7), 0.35, Vec3(0.25, 0.45, 0.85)});
        s.primitives.push_back(SpherePrimitive{Vec3(-0.8, 0.25, 0.8), 0.25, Vec3(0.90, 0.80, 0.20)});
        s.primitives.push_back(BoxPrimitive{Vec3(-0.9, 0.2, -0.8), Vec3(0.25, 0.2, 0.35), Vec3(0.30, 0.70, 0.60)});
        s.primitives.push_back(BoxPrimitive{Vec3(0.9, 0.75, 0.9), Vec3(0.35, 0.015, 0.3), Vec3(0.70, 0.50, 0.30)});
    } else {
        throw InvalidParameterError("make_scene: unknown scene '" + name + "' (expected box or cluttered)");
    }
    s.poses = orbit_trajectory(frames);
    return s;
}

struct RenderedFrame {
    DepthImage depth;
    ColorImage color;
};

/// z-depth and shaded color of frame `i`. A perturbed frame casts pixel
/// (u, v) along the refined plane point, so learning the same refinement
/// recovers the true rays.
inline RenderedFrame render_frame(const SyntheticScene &scene, std::size_t i) {
    const Intrinsics &k = scene.intrinsics;
    const Pose &pose = scene.poses.at(i);
    const FrameRefinement pert = scene.perturbation(i);
    RenderedFrame out{DepthImage(k.width, k.height), ColorImage(k.width, k.height)};
    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            const Vec3 plane = refine_plane(pixel_to_plane(u, v, k), pert);
            const Vec3 w = pose.rotation * plane;
            const SurfaceHit hit = scene.cast(pose.translation, w);
            if (!std::isfinite(hit.t)) continue;
            out.depth.at(u, v) = hit.t;
            const Vec3 c = hit.albedo * (0.35 + 0.65 * std::max(0.0, hit.normal.dot(scene.light)));
            std::uint8_t *px = out.color.pixel(u, v);
            for (int a = 0; a < 3; ++a) px[a] = static_cast<std::uint8_t>(std::lround(std::clamp(c[a], 0.0, 1.0) * 255.0));
        }
    }
    return out;
}

/// Frames rendered from the scene, poses exactly the camera trajectory.
inline FrameSet render_frames(const SyntheticScene &scene) {
    FrameSet fs;
    fs.intrinsics = scene.intrinsics;
    for (std::size_t i = 0; i < scene.poses.size(); ++i) {
        RenderedFrame r = render_frame(scene, i);
        fs.frames.push_back({std::move(r.depth), std::move(r.color), scene.poses[i]});
    }
    return fs;
}

/// Registers a true distortion of frame `i`; rendering uses it from now on.
inline void perturb_intrinsics(SyntheticScene &scene, std::size_t i, const FrameRefinement &truth) {
    if (i >= scene.poses.size()) throw InvalidParameterError("perturb_intrinsics: frame " + std::to_string(i) + " out of range");
    if (!(truth.sx > 0.0) || !(truth.sy > 0.0)) throw InvalidParameterError("perturb_intrinsics: scales must be positive");
    for (auto &p : scene.perturbations) {
        if (p.frame == i) {
            p.truth = truth;
            return;
        }
    }
    scene.perturbations.push_back({i, truth});
}

/// Marching cubes of the analytic field over the room, margin included.
inline TriangleMesh ground_truth_mesh(const SyntheticScene &scene, double resolution = 0.02) {
    return extract_mesh(function_sampler([&scene](const Vec3 &p) { return scene.sdf(p); }), scene.room.expanded(2.0 * resolution), resolution);
}

struct DepthNoise {
    double sigma0 = 0.0;        // std dev = sigma0 * d^2
    double hole_fraction = 0.0; // of the valid pixels
    bool quantize = true;       // round to whole millimeters
    std::uint64_t seed = 0;

    static DepthNoise kinect(std::uint64_t seed = 0) { return {0.0015, 0.02, true, seed}; }
    static DepthNoise none() { return {0.0, 0.0, true, 0}; }
};

/// Gaussian noise, then elliptical holes, then millimeter quantization.
inline DepthImage corrupt_depth(const DepthImage &depth, const DepthNoise &p) {
    if (p.sigma0 < 0.0 || p.hole_fraction < 0.0 || p.hole_fraction > 1.0) throw InvalidParameterError("corrupt_depth: bad noise parameters");
    DepthImage out = depth;
    std::mt19937_64 rng(p.seed);
    if (p.sigma0 > 0.0) {
        std::normal_distribution<double> g(0.0, 1.0);
        for (double &d : out.data) {
            if (d > 0.0) d = std::max(1e-3, d + p.sigma0 * d * d * g(rng));
        }
    }
    if (p.hole_fraction > 0.0) {
        const std::size_t valid = out.valid_count();
        const auto target = static_cast<std::size_t>(std::llround(p.hole_fraction * static_cast<double>(valid)));
        const double scale = std::sqrt(static_cast<double>(out.width) * out.height) / 140.0;
        std::uniform_real_distribution<double> cu(0.0, out.width), cv(0.0, out.height), ax(1.0 * scale, 4.0 * scale),
            ang(0.0, std::numbers::pi);
        std::size_t removed = 0;
        for (int attempt = 0; removed < target && attempt < 1000000; ++attempt) {
            const double u0 = cu(rng), v0 = cv(rng), a = ax(rng), b = ax(rng), th = ang(rng);
            const double c = std::cos(th), s = std::sin(th);
            const double r = std::max(a, b);
            for (int v = std::max(0, static_cast<int>(v0 - r)); v <= std::min(out.height - 1, static_cast<int>(v0 + r)); ++v) {
                for (int u = std::max(0, static_cast<int>(u0 - r)); u <= std::min(out.width - 1, static_cast<int>(u0 + r)); ++u) {
                    const double du = u - u0, dv = v - v0;
                    const double x = c * du + s * dv, y = -s * du + c * dv;
                    if ((x * x) / (a * a) + (y * y) / (b * b) > 1.0) continue;
                    double &d = out.at(u, v);
                    if (d > 0.0 && removed < target) {
                        d = 0.0;
                        ++removed;
                    }
                }
            }
        }
    }
    if (p.quantize) {
        for (double &d : out.data) {
            if (d > 0.0) d = static_cast<double>(std::min<long long>(65535, std::llround(d * 1000.0))) / 1000.0;
        }
    }
    return out;
}

} // namespace fastsurf
