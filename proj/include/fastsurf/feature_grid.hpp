// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fastsurf/geometry.hpp"

#include <array>
#include <cmath>
#include <optional>

namespace fastsurf {

/// The 8 lattice corners around a point and their trilinear weights.
/// Corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1) from the base vertex.
struct Stencil {
    std::array<std::int64_t, 8> index{};
    std::array<double, 8> weight{};
    std::array<double, 3> frac{};

    /// d weight[c] / d frac[axis]
    double weight_derivative(int c, int axis) const {
        double d = 1.0;
        for (int a = 0; a < 3; ++a) {
            const int bit = (c >> a) & 1;
            if (a == axis) {
                d *= bit ? 1.0 : -1.0;
            } else {
                d *= bit ? frac[a] : 1.0 - frac[a];
            }
        }
        return d;
    }
};

/// Dense per-vertex learnable features with a gradient accumulator.
/// features.col(v) is the F-vector of vertex v (linear index, x fastest).
struct FeatureGrid {
    GridDims dims;
    BoundingBox bounds;
    double gs = 0.1;
    MatX features;
    MatX grads;

    static FeatureGrid create(const BoundingBox &bounds, double gs, int feature_len) {
        if (feature_len <= 0) throw InvalidParameterError("feature grid: F must be positive");
        FeatureGrid g;
        g.dims = grid_dims(bounds, gs);
        g.bounds = bounds;
        g.gs = gs;
        g.features = MatX::Zero(feature_len, g.dims.vertex_count());
        g.grads = MatX::Zero(feature_len, g.dims.vertex_count());
        return g;
    }

    /// Lattice with explicit dims anchored at `origin` (used by miniature test scenes).
    static FeatureGrid create(const Vec3 &origin, const GridDims &dims, double gs, int feature_len) {
        dims.validate();
        if (!(gs > 0.0)) throw InvalidParameterError("feature grid: cell size must be positive");
        FeatureGrid g;
        g.dims = dims;
        g.gs = gs;
        g.bounds = {origin, origin + gs * Vec3(dims.nx - 1, dims.ny - 1, dims.nz - 1)};
        g.features = MatX::Zero(feature_len, dims.vertex_count());
        g.grads = MatX::Zero(feature_len, dims.vertex_count());
        return g;
    }

    int feature_len() const { return static_cast<int>(features.rows()); }
    void zero_grads() { grads.setZero(); }

    Vec3 vertex_position(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return bounds.min_corner + Vec3(static_cast<double>(i) * gs, static_cast<double>(j) * gs, static_cast<double>(k) * gs);
    }

    Vec3 lattice_max() const { return vertex_position(dims.nx - 1, dims.ny - 1, dims.nz - 1); }

    /// Stencil for p, or nullopt when p lies outside the vertex lattice.
    std::optional<Stencil> locate(const Vec3 &p) const {
        const Vec3 g = (p - bounds.min_corner) / gs;
        const std::int64_t n[3] = {dims.nx, dims.ny, dims.nz};
        std::int64_t base[3];
        Stencil s;
        for (int a = 0; a < 3; ++a) {
            const double lim = static_cast<double>(n[a] - 1);
            if (!(g[a] >= 0.0 && g[a] <= lim)) return std::nullopt;
            auto c = static_cast<std::int64_t>(std::floor(g[a]));
            c = std::min<std::int64_t>(c, n[a] - 2);
            base[a] = c;
            s.frac[a] = g[a] - static_cast<double>(c);
        }
        for (int c = 0; c < 8; ++c) {
            const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
            s.index[c] = dims.index(base[0] + dx, base[1] + dy, base[2] + dz);
            s.weight[c] = (dx ? s.frac[0] : 1.0 - s.frac[0]) * (dy ? s.frac[1] : 1.0 - s.frac[1]) *
                          (dz ? s.frac[2] : 1.0 - s.frac[2]);
        }
        return s;
    }

    template <typename Out>
    void gather(const Stencil &s, Out &&out) const {
        out.setZero();
        for (int c = 0; c < 8; ++c) out += s.weight[c] * features.col(s.index[c]);
    }

    /// d feature / d p, an F x 3 Jacobian.
    MatX position_jacobian(const Stencil &s) const {
        MatX j = MatX::Zero(feature_len(), 3);
        for (int c = 0; c < 8; ++c) {
            for (int a = 0; a < 3; ++a) j.col(a) += (s.weight_derivative(c, a) / gs) * features.col(s.index[c]);
        }
        return j;
    }

    /// upstream^T * d feature / d p without materializing the Jacobian.
    template <typename Upstream>
    Vec3 position_gradient(const Stencil &s, const Upstream &upstream) const {
        Vec3 out = Vec3::Zero();
        for (int c = 0; c < 8; ++c) {
            const double dot = features.col(s.index[c]).dot(upstream);
            for (int a = 0; a < 3; ++a) out[a] += s.weight_derivative(c, a) * dot;
        }
        return out / gs;
    }
};

struct Interpolation {
    VecX feature;
    Stencil stencil;
};

inline Interpolation interpolate(const FeatureGrid &grid, const Vec3 &p) {
    auto s = grid.locate(p);
    if (!s) throw OutOfBoundsError("interpolate: point " + to_string(p) + " outside the feature grid");
    Interpolation out{VecX(grid.feature_len()), *s};
    grid.gather(*s, out.feature);
    return out;
}

/// Adjoint of interpolate: grads[corner] += weight * upstream.
template <typename Upstream>
void interpolate_backward(FeatureGrid &grid, const Stencil &s, const Upstream &upstream) {
    for (int c = 0; c < 8; ++c) grid.grads.col(s.index[c]) += s.weight[c] * upstream;
}

/// Halves the cell size, doubling the cell count on every axis. Features
/// transfer by trilinear upsampling of the old lattice, which reproduces the
/// old field exactly. Gradients start at zero.
inline FeatureGrid subdivide(const FeatureGrid &grid, double max_bytes = 8.0 * (1ull << 30)) {
    const double half = grid.gs / 2.0;
    const GridDims nd{2 * grid.dims.nx - 1, 2 * grid.dims.ny - 1, 2 * grid.dims.nz - 1};
    const double bytes = 2.0 * feature_bytes(nd, grid.feature_len(), sizeof(double));
    if (bytes > max_bytes) {
        throw ResourceError("subdivide: " + std::to_string(bytes / (1 << 20)) + " MiB exceeds the configured grid cap");
    }
    FeatureGrid out;
    out.dims = nd;
    out.bounds = grid.bounds;
    out.gs = half;
    out.features = MatX::Zero(grid.feature_len(), nd.vertex_count());
    out.grads = MatX::Zero(grid.feature_len(), nd.vertex_count());

    const std::int64_t on[3] = {grid.dims.nx, grid.dims.ny, grid.dims.nz};
    // Parent index and 0 / 0.5 fraction per axis, in exact lattice arithmetic.
    auto split = [&](std::int64_t i, int axis, std::int64_t &base, double &frac) {
        base = std::min<std::int64_t>(i / 2, on[axis] - 2);
        frac = 0.5 * static_cast<double>(i - 2 * base);
    };
    Stencil s;
    for (std::int64_t k = 0; k < nd.nz; ++k) {
        for (std::int64_t j = 0; j < nd.ny; ++j) {
            for (std::int64_t i = 0; i < nd.nx; ++i) {
                std::int64_t b[3];
                split(i, 0, b[0], s.frac[0]);
                split(j, 1, b[1], s.frac[1]);
                split(k, 2, b[2], s.frac[2]);
                for (int c = 0; c < 8; ++c) {
                    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
                    s.index[c] = grid.dims.index(b[0] + dx, b[1] + dy, b[2] + dz);
                    s.weight[c] = (dx ? s.frac[0] : 1.0 - s.frac[0]) * (dy ? s.frac[1] : 1.0 - s.frac[1]) *
                                  (dz ? s.frac[2] : 1.0 - s.frac[2]);
                }
                grid.gather(s, out.features.col(nd.index(i, j, k)));
            }
        }
    }
    return out;
}

} // namespace fastsurf
