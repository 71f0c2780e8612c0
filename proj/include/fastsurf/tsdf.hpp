// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Classical TSDF fusion on a dense vertex lattice. The fused field is the
// prior used for pretraining and the baseline reconstruction.

#include "fastsurf/frames.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

namespace fastsurf {

struct TsdfVolume {
    GridDims dims;
    BoundingBox bounds;
    double gs = 0.1;
    double tr = 0.05;
    std::vector<float> sdf;
    std::vector<float> weight;

    static TsdfVolume create(const BoundingBox &bounds, double gs, double tr) {
        if (!(tr > 0.0)) throw InvalidParameterError("tsdf: truncation must be positive");
        TsdfVolume vol;
        vol.dims = grid_dims(bounds, gs);
        vol.bounds = bounds;
        vol.gs = gs;
        vol.tr = tr;
        const auto n = static_cast<std::size_t>(vol.dims.vertex_count());
        vol.sdf.assign(n, static_cast<float>(tr));
        vol.weight.assign(n, 0.0f);
        return vol;
    }

    Vec3 vertex_position(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return bounds.min_corner + Vec3(static_cast<double>(i) * gs, static_cast<double>(j) * gs, static_cast<double>(k) * gs);
    }

    /// Upper corner of the vertex lattice (>= bounds.max_corner).
    Vec3 lattice_max() const {
        return vertex_position(dims.nx - 1, dims.ny - 1, dims.nz - 1);
    }
};

struct VolumeSpec {
    double gs = 0.1;
    double tr = 0.05;
    double margin = 0.1;
};

/// Projective TSDF update with unit weights. A vertex is updated when it
/// projects onto a valid pixel and lies no more than `tr` behind the observed
/// surface; the observation is clamped to [-tr, tr] and folded into the
/// running average.
inline void integrate_frame(TsdfVolume &vol, const DepthImage &depth, const Pose &pose, const Intrinsics &intr) {
    if (depth.width != intr.width || depth.height != intr.height) {
        throw DimensionError("integrate_frame: depth image " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                             " does not match intrinsics " + std::to_string(intr.width) + "x" + std::to_string(intr.height));
    }
    const Mat3 rt = pose.rotation.transpose();
    const double tr = vol.tr;
    const float trf = static_cast<float>(tr);
    for (std::int64_t k = 0; k < vol.dims.nz; ++k) {
        for (std::int64_t j = 0; j < vol.dims.ny; ++j) {
            for (std::int64_t i = 0; i < vol.dims.nx; ++i) {
                const Vec3 pc = rt * (vol.vertex_position(i, j, k) - pose.translation);
                const double z = -pc.z();
                if (!(z > 0.0)) continue;
                const double u = intr.fx * pc.x() / z + intr.cx;
                const double v = intr.cy - intr.fy * pc.y() / z;
                const double ur = std::floor(u + 0.5);
                const double vr = std::floor(v + 0.5);
                if (ur < 0.0 || vr < 0.0 || ur >= intr.width || vr >= intr.height) continue;
                const double d = depth.at(static_cast<int>(ur), static_cast<int>(vr));
                if (!(d > 0.0)) continue;
                const double raw = d - z;
                if (raw < -tr) continue;
                const float obs = std::min(static_cast<float>(raw), trf);
                const auto idx = static_cast<std::size_t>(vol.dims.index(i, j, k));
                const float w = vol.weight[idx];
                vol.sdf[idx] = (vol.sdf[idx] * w + obs) / (w + 1.0f);
                vol.weight[idx] = w + 1.0f;
            }
        }
    }
}

inline TsdfVolume run_fusion(const FrameSet &frames, const BoundingBox &bounds, double gs, double tr) {
    if (frames.empty()) throw InvalidParameterError("run_fusion: empty frame set");
    TsdfVolume vol = TsdfVolume::create(bounds, gs, tr);
    for (const Frame &f : frames.frames) integrate_frame(vol, f.depth, f.pose, frames.intrinsics);
    return vol;
}

inline TsdfVolume run_fusion(const FrameSet &frames, const VolumeSpec &spec) {
    if (frames.empty()) throw InvalidParameterError("run_fusion: empty frame set");
    return run_fusion(frames, compute_scene_bounds(frames, spec.margin), spec.gs, spec.tr);
}

struct TsdfSample {
    double sdf;
    bool observed;
};

/// Trilinear read; observed iff all 8 corners have weight > 0.
inline TsdfSample query_tsdf(const TsdfVolume &vol, const Vec3 &p) {
    const Vec3 g = (p - vol.bounds.min_corner) / vol.gs;
    const double lim[3] = {static_cast<double>(vol.dims.nx - 1), static_cast<double>(vol.dims.ny - 1),
                           static_cast<double>(vol.dims.nz - 1)};
    std::int64_t base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        if (!(g[a] >= 0.0 && g[a] <= lim[a])) return {vol.tr, false};
        auto c = static_cast<std::int64_t>(std::floor(g[a]));
        c = std::min<std::int64_t>(c, static_cast<std::int64_t>(lim[a]) - 1);
        base[a] = c;
        frac[a] = g[a] - static_cast<double>(c);
    }
    double value = 0.0;
    bool observed = true;
    for (int c = 0; c < 8; ++c) {
        const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
        const double w = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) * (dz ? frac[2] : 1.0 - frac[2]);
        const auto idx = static_cast<std::size_t>(vol.dims.index(base[0] + dx, base[1] + dy, base[2] + dz));
        value += w * static_cast<double>(vol.sdf[idx]);
        observed = observed && vol.weight[idx] > 0.0f;
    }
    return {value, observed};
}

// Volume dump layout (little-endian):
//   "TSDF" | u32 version=1 | u32 nx, ny, nz | f64 min xyz, max xyz | f64 gs | f64 tr
//   | f32 sdf[nx*ny*nz] | f32 weight[nx*ny*nz]      (x fastest)
inline constexpr std::uint32_t kTsdfVersion = 1;

inline void write_volume(std::ostream &out, const TsdfVolume &vol) {
    BinaryWriter w(out);
    w.write_tag("TSDF");
    w.write<std::uint32_t>(kTsdfVersion);
    w.write<std::uint32_t>(static_cast<std::uint32_t>(vol.dims.nx));
    w.write<std::uint32_t>(static_cast<std::uint32_t>(vol.dims.ny));
    w.write<std::uint32_t>(static_cast<std::uint32_t>(vol.dims.nz));
    for (int a = 0; a < 3; ++a) w.write<double>(vol.bounds.min_corner[a]);
    for (int a = 0; a < 3; ++a) w.write<double>(vol.bounds.max_corner[a]);
    w.write<double>(vol.gs);
    w.write<double>(vol.tr);
    w.write_array(vol.sdf.data(), vol.sdf.size());
    w.write_array(vol.weight.data(), vol.weight.size());
}

inline TsdfVolume read_volume(std::istream &in, const std::string &source) {
    BinaryReader r(in, source);
    if (r.read_tag() != "TSDF") throw ParseError(source + ": not a TSDF volume (bad magic)");
    const auto version = r.read<std::uint32_t>();
    if (version != kTsdfVersion) throw ParseError(source + ": unsupported TSDF version " + std::to_string(version));
    TsdfVolume vol;
    vol.dims.nx = r.read<std::uint32_t>();
    vol.dims.ny = r.read<std::uint32_t>();
    vol.dims.nz = r.read<std::uint32_t>();
    vol.dims.validate();
    for (int a = 0; a < 3; ++a) vol.bounds.min_corner[a] = r.read<double>();
    for (int a = 0; a < 3; ++a) vol.bounds.max_corner[a] = r.read<double>();
    vol.gs = r.read<double>();
    vol.tr = r.read<double>();
    const auto n = static_cast<std::size_t>(vol.dims.vertex_count());
    vol.sdf.resize(n);
    vol.weight.resize(n);
    r.read_array(vol.sdf.data(), n);
    r.read_array(vol.weight.data(), n);
    return vol;
}

inline void save_volume(const std::filesystem::path &path, const TsdfVolume &vol) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_volume(out, vol);
    if (!out) throw IoError("failed writing " + path.string());
}

inline TsdfVolume load_volume(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_volume(in, path.string());
}

} // namespace fastsurf
