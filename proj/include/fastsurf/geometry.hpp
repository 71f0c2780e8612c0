// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Camera models, rigid transforms, scene bounds and grid coordinates.
//
// Camera convention: x right, y up, the camera looks along -z. A pixel (u, v)
// maps to the normalized image-plane point ((u - cx) / fx, -(v - cy) / fy, -1).
// Poses are camera-to-world. Depth values are z-depth (distance along the
// camera's -z axis), never ray length.

#include "fastsurf/common.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>

namespace fastsurf {

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidParameterError("intrinsics: focal lengths must be positive");
        if (width <= 0 || height <= 0) throw InvalidParameterError("intrinsics: image size must be positive");
        if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
            throw InvalidParameterError("intrinsics: principal point outside the image");
        }
    }

    bool operator==(const Intrinsics &) const = default;
};

inline Mat3 skew(const Vec3 &v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

/// Rodrigues exponential map so(3) -> SO(3).
inline Mat3 so3_exp(const Vec3 &omega) {
    const double theta2 = omega.squaredNorm();
    const Mat3 k = skew(omega);
    double a, b;
    if (theta2 < 1e-12) {
        a = 1.0 - theta2 / 6.0;
        b = 0.5 - theta2 / 24.0;
    } else {
        const double theta = std::sqrt(theta2);
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    return Mat3::Identity() + a * k + b * k * k;
}

/// Right Jacobian of SO(3): d Exp(w + dw) = Exp(w) Exp(J_r(w) dw).
inline Mat3 so3_right_jacobian(const Vec3 &omega) {
    const double theta2 = omega.squaredNorm();
    const Mat3 k = skew(omega);
    double a, b;
    if (theta2 < 1e-10) {
        a = 0.5 - theta2 / 24.0;
        b = 1.0 / 6.0 - theta2 / 120.0;
    } else {
        const double theta = std::sqrt(theta2);
        a = (1.0 - std::cos(theta)) / theta2;
        b = (theta - std::sin(theta)) / (theta2 * theta);
    }
    return Mat3::Identity() - a * k + b * k * k;
}

/// Nearest rotation in the Frobenius sense (SVD projection with det = +1).
inline Mat3 orthonormalize(const Mat3 &m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
    return u * v.transpose();
}

/// Rigid camera-to-world transform.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return {}; }

    static Pose from_matrix(const Mat4 &m) {
        Pose p;
        p.rotation = m.topLeftCorner<3, 3>();
        p.translation = m.topRightCorner<3, 1>();
        return p;
    }

    Mat4 matrix() const {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
    }

    Vec3 apply(const Vec3 &p) const { return rotation * p + translation; }
    Vec3 to_camera(const Vec3 &world) const { return rotation.transpose() * (world - translation); }

    Pose compose(const Pose &rhs) const { return {rotation * rhs.rotation, rotation * rhs.translation + translation}; }

    /// Max deviation of rotation from orthonormal with det +1.
    double rigidity_error() const {
        const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
        return std::max(ortho, std::abs(rotation.determinant() - 1.0));
    }

    void validate(double tol = 1e-9) const {
        if (!(rigidity_error() <= tol)) throw InvalidParameterError("pose: rotation is not orthonormal");
    }
};

/// Camera at `eye` looking at `target`; the camera's -z axis points at the target.
inline Pose look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up = Vec3::UnitY()) {
    const Vec3 f = (target - eye).normalized();
    const Vec3 s = f.cross(up).normalized();
    const Vec3 u = s.cross(f);
    Pose p;
    p.rotation.col(0) = s;
    p.rotation.col(1) = u;
    p.rotation.col(2) = -f;
    p.translation = eye;
    return p;
}

struct BoundingBox {
    Vec3 min_corner = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max_corner = Vec3::Constant(-std::numeric_limits<double>::infinity());

    static BoundingBox from_corners(const Vec3 &lo, const Vec3 &hi) {
        BoundingBox b{lo, hi};
        b.validate();
        return b;
    }

    bool empty() const { return !(max_corner.array() >= min_corner.array()).all(); }

    void validate() const {
        if (empty()) throw InvalidParameterError("bounding box: max_corner < min_corner");
    }

    Vec3 extents() const { return max_corner - min_corner; }

    void extend(const Vec3 &p) {
        min_corner = min_corner.cwiseMin(p);
        max_corner = max_corner.cwiseMax(p);
    }

    void extend(const BoundingBox &b) {
        if (b.empty()) return;
        extend(b.min_corner);
        extend(b.max_corner);
    }

    BoundingBox expanded(double margin) const { return {min_corner.array() - margin, max_corner.array() + margin}; }

    bool contains(const Vec3 &p) const {
        return (p.array() >= min_corner.array()).all() && (p.array() <= max_corner.array()).all();
    }

    bool operator==(const BoundingBox &) const = default;
};

/// Vertex counts per axis of a dense lattice; vertex (i, j, k) has linear
/// index i + nx * (j + ny * k) (x fastest).
struct GridDims {
    std::int64_t nx = 2;
    std::int64_t ny = 2;
    std::int64_t nz = 2;

    std::int64_t vertex_count() const { return nx * ny * nz; }
    std::int64_t index(std::int64_t i, std::int64_t j, std::int64_t k) const { return i + nx * (j + ny * k); }
    Eigen::Array<std::int64_t, 3, 1> cells() const { return {nx - 1, ny - 1, nz - 1}; }

    void validate() const {
        if (nx < 2 || ny < 2 || nz < 2) throw InvalidParameterError("grid dims: each axis needs at least 2 vertices");
    }

    bool operator==(const GridDims &) const = default;
};

/// Cells per axis are ceil(L / gs); returned vertex counts are cells + 1.
/// A relative slack of 1e-9 keeps exact multiples (1.0 / 0.1) from rounding up.
inline GridDims grid_dims(const BoundingBox &bounds, double gs) {
    if (!(gs > 0.0)) throw InvalidParameterError("grid_dims: cell size must be positive");
    bounds.validate();
    const Vec3 l = bounds.extents();
    auto cells = [gs](double len) {
        const double ratio = len / gs;
        auto c = static_cast<std::int64_t>(std::ceil(ratio - 1e-9 * std::max(1.0, ratio)));
        return std::max<std::int64_t>(c, 1);
    };
    return {cells(l.x()) + 1, cells(l.y()) + 1, cells(l.z()) + 1};
}

/// Estimated bytes for F scalars per vertex.
inline double feature_bytes(const GridDims &dims, int feature_len, int bytes_per_scalar) {
    return static_cast<double>(dims.vertex_count()) * feature_len * bytes_per_scalar;
}

inline Vec3 pixel_to_camera_plane(double u, double v, const Intrinsics &intr) {
    return {(u - intr.cx) / intr.fx, -(v - intr.cy) / intr.fy, -1.0};
}

inline Vec3 backproject(double u, double v, double depth, const Intrinsics &intr, const Pose &pose) {
    if (!(depth > 0.0)) throw InvalidDepthError("backproject: depth must be positive");
    return pose.apply(depth * pixel_to_camera_plane(u, v, intr));
}

struct PixelDepth {
    double u;
    double v;
    double depth;
};

/// Projects a world point; nullopt when the point is not in front of the camera.
inline std::optional<PixelDepth> project(const Vec3 &world, const Intrinsics &intr, const Pose &pose) {
    const Vec3 c = pose.to_camera(world);
    const double z = -c.z();
    if (!(z > 0.0)) return std::nullopt;
    return PixelDepth{intr.fx * c.x() / z + intr.cx, intr.cy - intr.fy * c.y() / z, z};
}

struct GridCoord {
    Vec3 coord;
    bool contained;
};

inline GridCoord world_to_grid(const Vec3 &p, const BoundingBox &bounds, double gs) {
    return {(p - bounds.min_corner) / gs, bounds.contains(p)};
}

inline std::string to_string(const Vec3 &v) {
    std::ostringstream os;
    os << "(" << v.x() << ", " << v.y() << ", " << v.z() << ")";
    return os.str();
}

} // namespace fastsurf
