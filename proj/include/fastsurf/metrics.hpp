// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Surface sampling and the reconstruction metrics: Chamfer-L1, F-score,
// normal consistency and voxel IoU.

#include "fastsurf/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <unordered_set>

namespace fastsurf {

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals; // empty or one per point

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Area-weighted uniform samples, `density` points per square meter. Each
/// triangle receives floor(area * density) points plus one more with
/// probability equal to the remainder; points carry their triangle's normal.
inline PointCloud sample_surface(const TriangleMesh &mesh, double density = 1e4, std::uint64_t seed = 0) {
    if (mesh.empty()) throw InvalidParameterError("sample_surface: empty mesh");
    if (!(density > 0.0)) throw InvalidParameterError("sample_surface: density must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(mesh.area() * density * 1.05) + 16);
    for (const auto &t : mesh.triangles) {
        const Vec3 &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]], &c = mesh.vertices[t[2]];
        const Vec3 cr = (b - a).cross(c - a);
        const double area = 0.5 * cr.norm();
        if (!(area > 0.0)) continue;
        const Vec3 n = cr.normalized();
        const double expected = area * density;
        auto count = static_cast<std::size_t>(std::floor(expected));
        if (uni(rng) < expected - static_cast<double>(count)) ++count;
        for (std::size_t s = 0; s < count; ++s) {
            const double r1 = std::sqrt(uni(rng)), r2 = uni(rng);
            cloud.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
            cloud.normals.push_back(n);
        }
    }
    return cloud;
}

/// Exact Euclidean nearest neighbour over a k-d tree. Ties go to the lowest
/// point index, matching a linear scan.
class NearestNeighbor {
public:
    explicit NearestNeighbor(const std::vector<Vec3> &points, std::size_t leaf_size = 16) : points_(points), leaf_(leaf_size) {
        if (points.empty()) throw InvalidParameterError("nearest neighbour: empty point set");
        if (leaf_size == 0) throw InvalidParameterError("nearest neighbour: leaf size must be positive");
        order_.resize(points.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
        nodes_.reserve(2 * points.size() / leaf_size + 2);
        build(0, order_.size());
    }

    struct Result {
        std::size_t index;
        double distance;
    };

    Result query(const Vec3 &p) const {
        Result best{0, std::numeric_limits<double>::infinity()};
        descend(0, p, best);
        return best;
    }

private:
    struct Node {
        std::size_t begin, end;
        int axis = -1; // -1 marks a leaf
        double split = 0.0;
        std::size_t left = 0, right = 0;
    };

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back({begin, end});
        if (end - begin <= leaf_) return id;
        Vec3 lo = points_[order_[begin]], hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            lo = lo.cwiseMin(points_[order_[i]]);
            hi = hi.cwiseMax(points_[order_[i]]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        if (!(hi[axis] > lo[axis])) return id; // all points coincide
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::uint32_t x, std::uint32_t y) { return points_[x][axis] < points_[y][axis]; });
        const double split = points_[order_[mid]][axis];
        const std::size_t left = build(begin, mid);
        const std::size_t right = build(mid, end);
        nodes_[id].axis = axis;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void descend(std::size_t id, const Vec3 &p, Result &best) const {
        const Node &n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t k = n.begin; k < n.end; ++k) {
                const std::uint32_t i = order_[k];
                const double d = (points_[i] - p).norm();
                if (d < best.distance || (d == best.distance && i < best.index)) best = {i, d};
            }
            return;
        }
        // Left holds coordinates <= split, right holds >= split.
        const double gap = p[n.axis] - n.split;
        const std::size_t near = gap < 0.0 ? n.left : n.right;
        const std::size_t far = gap < 0.0 ? n.right : n.left;
        descend(near, p, best);
        if (std::abs(gap) <= best.distance) descend(far, p, best);
    }

    const std::vector<Vec3> &points_;
    std::size_t leaf_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

/// Nearest-neighbour distance from every point of `from` into `to`.
inline std::vector<NearestNeighbor::Result> nearest_distances(const PointCloud &from, const PointCloud &to) {
    if (from.empty() || to.empty()) throw InvalidParameterError("metrics: empty point cloud");
    const NearestNeighbor nn(to.points);
    std::vector<NearestNeighbor::Result> out;
    out.reserve(from.size());
    for (const Vec3 &p : from.points) out.push_back(nn.query(p));
    return out;
}

namespace detail {

inline double mean_distance(const std::vector<NearestNeighbor::Result> &r) {
    double s = 0.0;
    for (const auto &x : r) s += x.distance;
    return s / static_cast<double>(r.size());
}

inline double fraction_within(const std::vector<NearestNeighbor::Result> &r, double tau) {
    std::size_t n = 0;
    for (const auto &x : r) n += x.distance < tau ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(r.size());
}

inline double f_from(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

} // namespace detail

inline double chamfer_l1(const PointCloud &a, const PointCloud &b) {
    return 0.5 * (detail::mean_distance(nearest_distances(a, b)) + detail::mean_distance(nearest_distances(b, a)));
}

/// Harmonic mean of precision and recall at threshold `tau` (strict).
inline double f_score(const PointCloud &pred, const PointCloud &gt, double tau = 0.05) {
    const double precision = detail::fraction_within(nearest_distances(pred, gt), tau);
    const double recall = detail::fraction_within(nearest_distances(gt, pred), tau);
    return detail::f_from(precision, recall);
}

inline double normal_consistency(const PointCloud &a, const PointCloud &b) {
    if (a.normals.size() != a.size() || b.normals.size() != b.size()) throw InvalidParameterError("normal_consistency: missing normals");
    auto one_way = [](const PointCloud &from, const PointCloud &to) {
        const auto nn = nearest_distances(from, to);
        double s = 0.0;
        for (std::size_t i = 0; i < nn.size(); ++i) s += std::abs(from.normals[i].dot(to.normals[nn[i].index]));
        return s / static_cast<double>(nn.size());
    };
    return 0.5 * (one_way(a, b) + one_way(b, a));
}

/// Points seen by at least one frame: in front of the camera, inside the
/// image, and within `tolerance` of that pixel's observed depth. Used to drop
/// ground-truth surface the trajectory never observed.
inline PointCloud visible_subset(const PointCloud &cloud, const FrameSet &frames, double tolerance = 0.02) {
    const bool with_normals = cloud.normals.size() == cloud.size();
    PointCloud out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (const Frame &f : frames.frames) {
            const auto px = project(cloud.points[i], frames.intrinsics, f.pose);
            if (!px) continue;
            const double u = std::floor(px->u + 0.5), v = std::floor(px->v + 0.5);
            if (u < 0.0 || v < 0.0 || u >= frames.intrinsics.width || v >= frames.intrinsics.height) continue;
            const double d = f.depth.at(static_cast<int>(u), static_cast<int>(v));
            if (d > 0.0 && std::abs(d - px->depth) < tolerance) {
                out.points.push_back(cloud.points[i]);
                if (with_normals) out.normals.push_back(cloud.normals[i]);
                break;
            }
        }
    }
    return out;
}

/// Separating-axis overlap test of a triangle and an axis-aligned box
/// (touching counts as overlapping).
inline bool triangle_box_overlap(const Vec3 &center, const Vec3 &half, const Vec3 &t0, const Vec3 &t1, const Vec3 &t2) {
    const Vec3 v[3] = {t0 - center, t1 - center, t2 - center};
    const Vec3 e[3] = {v[1] - v[0], v[2] - v[1], v[0] - v[2]};
    auto separated = [&](const Vec3 &axis) {
        if (axis.squaredNorm() == 0.0) return false;
        const double p0 = v[0].dot(axis), p1 = v[1].dot(axis), p2 = v[2].dot(axis);
        const double r = half.x() * std::abs(axis.x()) + half.y() * std::abs(axis.y()) + half.z() * std::abs(axis.z());
        return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
    };
    for (int a = 0; a < 3; ++a) {
        for (const Vec3 &ed : e) {
            if (separated(Vec3::Unit(a).cross(ed))) return false;
        }
    }
    for (int a = 0; a < 3; ++a) {
        if (separated(Vec3::Unit(a))) return false;
    }
    return !separated(e[0].cross(e[1]));
}

/// Voxels of the world-aligned lattice with edge `edge` touched by any triangle.
inline std::unordered_set<std::uint64_t> surface_voxels(const TriangleMesh &mesh, double edge) {
    auto pack = [](std::int64_t i, std::int64_t j, std::int64_t k) {
        constexpr std::int64_t off = 1 << 20;
        return static_cast<std::uint64_t>(i + off) | (static_cast<std::uint64_t>(j + off) << 21) | (static_cast<std::uint64_t>(k + off) << 42);
    };
    std::unordered_set<std::uint64_t> out;
    const Vec3 half = Vec3::Constant(0.5 * edge);
    for (const auto &t : mesh.triangles) {
        const Vec3 &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]], &c = mesh.vertices[t[2]];
        const Vec3 lo = a.cwiseMin(b).cwiseMin(c), hi = a.cwiseMax(b).cwiseMax(c);
        std::int64_t l[3], h[3];
        for (int ax = 0; ax < 3; ++ax) {
            l[ax] = static_cast<std::int64_t>(std::floor(lo[ax] / edge));
            h[ax] = static_cast<std::int64_t>(std::floor(hi[ax] / edge));
            if (std::abs(l[ax]) >= (1 << 20) - 1 || std::abs(h[ax]) >= (1 << 20) - 1) throw OutOfBoundsError("iou: mesh too large for the voxel lattice");
        }
        for (std::int64_t k = l[2] - 1; k <= h[2] + 1; ++k) {
            for (std::int64_t j = l[1] - 1; j <= h[1] + 1; ++j) {
                for (std::int64_t i = l[0] - 1; i <= h[0] + 1; ++i) {
                    const Vec3 center = edge * Vec3(static_cast<double>(i) + 0.5, static_cast<double>(j) + 0.5, static_cast<double>(k) + 0.5);
                    if (triangle_box_overlap(center, half, a, b, c)) out.insert(pack(i, j, k));
                }
            }
        }
    }
    return out;
}

inline double iou(const TriangleMesh &pred, const TriangleMesh &gt, double edge = 0.1) {
    if (pred.empty() || gt.empty()) throw InvalidParameterError("iou: empty mesh");
    if (!(edge > 0.0)) throw InvalidParameterError("iou: voxel edge must be positive");
    const auto p = surface_voxels(pred, edge), g = surface_voxels(gt, edge);
    std::size_t inter = 0;
    for (auto v : p) inter += g.count(v);
    const std::size_t uni = p.size() + g.size() - inter;
    if (uni == 0) throw InvalidParameterError("iou: empty union");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct MetricReport {
    double chamfer_l1 = 0.0;
    double iou = 0.0;
    double normal_consistency = 0.0;
    double f_score = 0.0;
    double fscore_tau = 0.05;
    double iou_edge = 0.1;
    double sample_res = 0.01;
    std::size_t pred_points = 0;
    std::size_t gt_points = 0;

    std::string record() const {
        char buf[256];
        std::snprintf(buf, sizeof buf, "chamfer_l1=%.9g iou=%.9g nc=%.9g f_score=%.9g tau=%g edge=%g sample_res=%g pred_points=%zu gt_points=%zu",
                      chamfer_l1, iou, normal_consistency, f_score, fscore_tau, iou_edge, sample_res, pred_points, gt_points);
        return buf;
    }

    std::string table() const {
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "metric              value\n"
                      "C-l1 (m)            %.6f\n"
                      "IoU  (edge %.3g m)   %.6f\n"
                      "NC                  %.6f\n"
                      "F-score (tau %.3g)  %.6f\n",
                      chamfer_l1, iou_edge, iou, normal_consistency, fscore_tau, f_score);
        return buf;
    }
};

/// All four metrics. Both meshes are sampled with the same seed, so a mesh
/// compared with itself scores exactly (0, 1, 1, 1).
inline MetricReport evaluate_meshes(const TriangleMesh &pred, const TriangleMesh &gt, double tau = 0.05, double edge = 0.1,
                                    double sample_res = 0.01, std::uint64_t seed = 0) {
    if (!(sample_res > 0.0)) throw InvalidParameterError("evaluate: sample resolution must be positive");
    const double density = 1.0 / (sample_res * sample_res);
    const PointCloud a = sample_surface(pred, density, seed);
    const PointCloud b = sample_surface(gt, density, seed);
    if (a.empty() || b.empty()) throw InvalidParameterError("evaluate: a mesh is too small to sample at this resolution");
    MetricReport r;
    r.fscore_tau = tau;
    r.iou_edge = edge;
    r.sample_res = sample_res;
    r.pred_points = a.size();
    r.gt_points = b.size();
    r.chamfer_l1 = chamfer_l1(a, b);
    r.f_score = f_score(a, b, tau);
    r.normal_consistency = normal_consistency(a, b);
    r.iou = iou(pred, gt, edge);
    return r;
}

} // namespace fastsurf
