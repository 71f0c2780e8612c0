// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0

#include "fastsurf/tsdf.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

using namespace fastsurf;

namespace {

Intrinsics camera() {
    Intrinsics k;
    k.fx = k.fy = 60.0;
    k.cx = 31.5;
    k.cy = 23.5;
    k.width = 64;
    k.height = 48;
    return k;
}

// Wall at z = -2 seen by an identity camera.
TsdfVolume wall_volume(double gs = 0.05, double tr = 0.1) {
    return TsdfVolume::create(BoundingBox::from_corners(Vec3(-0.3, -0.3, -2.4), Vec3(0.3, 0.3, -1.5)), gs, tr);
}

} // namespace

TEST(Integrate, FlatWallCentralRay) {
    TsdfVolume vol = wall_volume();
    integrate_frame(vol, DepthImage(64, 48, 2.0), Pose::identity(), camera());
    // Vertices on the x = y = 0 line project onto the principal point.
    const std::int64_t ic = 6, jc = 6;
    ASSERT_NEAR(vol.vertex_position(ic, jc, 0).head<2>().norm(), 0.0, 1e-12);
    for (std::int64_t k = 0; k < vol.dims.nz; ++k) {
        const Vec3 p = vol.vertex_position(ic, jc, k);
        const double z = -p.z();
        const auto idx = static_cast<std::size_t>(vol.dims.index(ic, jc, k));
        const double raw = 2.0 - z;
        if (raw < -vol.tr) {
            EXPECT_EQ(vol.weight[idx], 0.0f);
            continue;
        }
        EXPECT_EQ(vol.weight[idx], 1.0f);
        EXPECT_NEAR(vol.sdf[idx], std::clamp(raw, -vol.tr, vol.tr), 1e-6);
    }
}

TEST(Integrate, SameFrameTwiceKeepsValuesDoublesWeights) {
    TsdfVolume a = wall_volume(), b = wall_volume();
    DepthImage d(64, 48);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(1.8, 2.2);
    for (double &x : d.data) x = u(rng);
    integrate_frame(a, d, Pose::identity(), camera());
    integrate_frame(b, d, Pose::identity(), camera());
    integrate_frame(b, d, Pose::identity(), camera());
    for (std::size_t i = 0; i < a.sdf.size(); ++i) {
        EXPECT_EQ(a.sdf[i], b.sdf[i]);
        EXPECT_EQ(b.weight[i], 2.0f * a.weight[i]);
    }
}

TEST(Integrate, InvalidFrameLeavesVolumeUnchanged) {
    TsdfVolume vol = wall_volume();
    const TsdfVolume before = vol;
    integrate_frame(vol, DepthImage(64, 48, 0.0), Pose::identity(), camera());
    EXPECT_EQ(vol.sdf, before.sdf);
    EXPECT_EQ(vol.weight, before.weight);
}

TEST(Integrate, MismatchedFrameIsDimensionError) {
    TsdfVolume vol = wall_volume();
    EXPECT_THROW(integrate_frame(vol, DepthImage(32, 48, 2.0), Pose::identity(), camera()), DimensionError);
}

TEST(Fusion, ConflictingObservationsAverage) {
    FrameSet fs;
    fs.intrinsics = camera();
    fs.frames.push_back({DepthImage(64, 48, 2.00), {}, Pose::identity()});
    fs.frames.push_back({DepthImage(64, 48, 2.04), {}, Pose::identity()});
    const TsdfVolume vol = run_fusion(fs, wall_volume().bounds, 0.05, 0.1);
    const TsdfVolume one = run_fusion({fs.intrinsics, {fs.frames[0]}}, wall_volume().bounds, 0.05, 0.1);
    const auto idx = static_cast<std::size_t>(vol.dims.index(6, 6, 8));
    const double z = -vol.vertex_position(6, 6, 8).z();
    const double a = std::clamp(2.00 - z, -0.1, 0.1), b = std::clamp(2.04 - z, -0.1, 0.1);
    ASSERT_GT(vol.weight[idx], 1.5f);
    EXPECT_NEAR(vol.sdf[idx], 0.5 * (a + b), 1e-6);
    EXPECT_EQ(one.weight[idx], 1.0f);
}

TEST(Fusion, ConsistentFramesMatchSingleFrame) {
    FrameSet fs;
    fs.intrinsics = camera();
    fs.frames.push_back({DepthImage(64, 48, 2.0), {}, Pose::identity()});
    fs.frames.push_back(fs.frames[0]);
    const TsdfVolume two = run_fusion(fs, wall_volume().bounds, 0.05, 0.1);
    fs.frames.pop_back();
    const TsdfVolume one = run_fusion(fs, wall_volume().bounds, 0.05, 0.1);
    for (std::size_t i = 0; i < one.sdf.size(); ++i) {
        EXPECT_EQ(one.sdf[i], two.sdf[i]);
        EXPECT_EQ(two.weight[i], 2.0f * one.weight[i]);
    }
}

TEST(Fusion, EmptyFrameSetThrows) {
    FrameSet fs;
    fs.intrinsics = camera();
    EXPECT_THROW(run_fusion(fs, VolumeSpec{}), InvalidParameterError);
}

TEST(Fusion, OrderIndependentWithinRounding) {
    FrameSet fs;
    fs.intrinsics = camera();
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(1.85, 2.15), a(-0.05, 0.05);
    for (int f = 0; f < 4; ++f) {
        DepthImage d(64, 48);
        for (double &x : d.data) x = u(rng);
        Pose p;
        p.rotation = so3_exp(Vec3(a(rng), a(rng), 0.0));
        fs.frames.push_back({d, {}, p});
    }
    const BoundingBox b = wall_volume().bounds;
    const TsdfVolume fwd = run_fusion(fs, b, 0.05, 0.1);
    std::reverse(fs.frames.begin(), fs.frames.end());
    const TsdfVolume rev = run_fusion(fs, b, 0.05, 0.1);
    for (std::size_t i = 0; i < fwd.sdf.size(); ++i) {
        EXPECT_EQ(fwd.weight[i], rev.weight[i]);
        EXPECT_NEAR(fwd.sdf[i], rev.sdf[i], 1e-6);
        EXPECT_LE(std::abs(fwd.sdf[i]), 0.1f);
    }
}

TEST(Query, VertexCellCenterAndMidpoint) {
    TsdfVolume vol = TsdfVolume::create(BoundingBox::from_corners(Vec3::Zero(), Vec3::Constant(0.2)), 0.1, 0.05);
    std::fill(vol.weight.begin(), vol.weight.end(), 1.0f);
    const TsdfSample c = query_tsdf(vol, Vec3::Constant(0.05));
    EXPECT_NEAR(c.sdf, 0.05, 1e-7);
    EXPECT_TRUE(c.observed);
    const auto v = static_cast<std::size_t>(vol.dims.index(1, 1, 1));
    vol.sdf[v] = 0.0125f;
    EXPECT_NEAR(query_tsdf(vol, Vec3::Constant(0.1)).sdf, 0.0125, 1e-9);
    // Zero along one edge of cell (0,0,0), tr on the opposite face.
    for (std::int64_t k = 0; k < 2; ++k)
        for (std::int64_t j = 0; j < 2; ++j) vol.sdf[static_cast<std::size_t>(vol.dims.index(0, j, k))] = 0.0f;
    EXPECT_NEAR(query_tsdf(vol, Vec3(0.05, 0.0, 0.0)).sdf, 0.025, 1e-8);
}

TEST(Query, OutOfBoundsAndUnobserved) {
    TsdfVolume vol = TsdfVolume::create(BoundingBox::from_corners(Vec3::Zero(), Vec3::Constant(0.2)), 0.1, 0.05);
    const TsdfSample out = query_tsdf(vol, Vec3(-0.01, 0.1, 0.1));
    EXPECT_EQ(out.sdf, 0.05);
    EXPECT_FALSE(out.observed);
    EXPECT_FALSE(query_tsdf(vol, Vec3::Constant(0.05)).observed);
}

TEST(VolumeIo, RoundTripIsExact) {
    TsdfVolume vol = wall_volume();
    integrate_frame(vol, DepthImage(64, 48, 2.0), Pose::identity(), camera());
    std::stringstream ss;
    write_volume(ss, vol);
    const TsdfVolume back = read_volume(ss, "memory");
    EXPECT_EQ(back.dims, vol.dims);
    EXPECT_EQ(back.bounds, vol.bounds);
    EXPECT_EQ(back.sdf, vol.sdf);
    EXPECT_EQ(back.weight, vol.weight);
    std::stringstream bad("XXXX");
    EXPECT_THROW(read_volume(bad, "bad"), ParseError);
}
