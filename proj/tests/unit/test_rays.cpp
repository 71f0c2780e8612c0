// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0

#include "fastsurf/rays.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace fastsurf;

namespace {

Intrinsics camera() {
    Intrinsics k;
    k.fx = 100.0;
    k.fy = 90.0;
    k.cx = 79.5;
    k.cy = 59.5;
    k.width = 160;
    k.height = 120;
    return k;
}

} // namespace

TEST(Plane, PrincipalPointAndUnitOffsets) {
    const Intrinsics k = camera();
    EXPECT_EQ(pixel_to_plane(k.cx, k.cy, k), Vec3(0, 0, -1));
    EXPECT_EQ(pixel_to_plane(k.cx + k.fx, k.cy, k), Vec3(1, 0, -1));
    EXPECT_EQ(pixel_to_plane(k.cx, k.cy + k.fy, k), Vec3(0, -1, -1));
}

TEST(Refine, IdentityScaleAndTranslation) {
    const Vec3 p(0.5, 0.3, -1);
    EXPECT_EQ(refine_plane(p, {}), p);
    EXPECT_EQ(refine_plane(p, {2.0, 1.0, 0.0, 0.0}), Vec3(1.0, 0.3, -1));
    EXPECT_EQ(refine_plane(Vec3(0, 0, -1), {1.0, 1.0, 0.1, 0.0}), Vec3(0.1, 0, -1));
}

TEST(Refine, UnrefineIsInverse) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int t = 0; t < 100; ++t) {
        const FrameRefinement r{1.0 + 0.1 * u(rng), 1.0 + 0.1 * u(rng), 0.05 * u(rng), 0.05 * u(rng)};
        const Vec3 p(u(rng), u(rng), -1);
        EXPECT_LT((refine_plane(unrefine_plane(p, r), r) - p).norm(), 1e-12);
        EXPECT_LT((unrefine_plane(refine_plane(p, r), r) - p).norm(), 1e-12);
    }
}

TEST(Refine, DirectionNormalization) {
    EXPECT_EQ(refined_direction(Vec3(0, 0, -1)), Vec3(0, 0, -1));
    EXPECT_LT((refined_direction(Vec3(1, 0, -1)) - Vec3(1, 0, -1) / std::sqrt(2.0)).norm(), 1e-15);
    EXPECT_THROW(refined_direction(Vec3::Zero()), InvalidParameterError);
}

TEST(Deformation, ZeroInitializedFieldIsIdentity) {
    std::mt19937_64 rng(2);
    const DeformationField f = DeformationField::create(64, 2, 4, rng);
    const Intrinsics k = camera();
    for (int v = 0; v < 120; v += 17) {
        for (int u = 0; u < 160; u += 23) {
            const Vec3 p = pixel_to_plane(u, v, k);
            EXPECT_EQ(apply_deformation(u, v, p, f, k), p);
        }
    }
}

TEST(Deformation, ConstantOffsetShiftsEveryPixel) {
    std::mt19937_64 rng(3);
    DeformationField f = DeformationField::create(16, 2, 4, rng);
    f.net.layers.back().bias << 0.02, 0.0;
    const Intrinsics k = camera();
    for (int u = 0; u < 160; u += 31) {
        const Vec3 p = pixel_to_plane(u, 40, k);
        const Vec3 d = apply_deformation(u, 40, p, f, k);
        EXPECT_NEAR(d.x() - p.x(), 0.02, 1e-15);
        EXPECT_EQ(d.y(), p.y());
    }
}

TEST(Deformation, InputIsNormalizedEncoding) {
    const Intrinsics k = camera();
    EXPECT_EQ(normalized_pixel(0, 0, k), Vec2(-1, -1));
    EXPECT_EQ(normalized_pixel(159, 119, k), Vec2(1, 1));
    EXPECT_EQ(deformation_input(3, 4, k, 4).size(), DeformationField::input_dim(4));
}

TEST(MakeRay, IdentityPrincipalRay) {
    const Intrinsics k = camera();
    const CorrectionChain chain{&k};
    Pose pose;
    pose.translation = Vec3(0.5, 1.0, 2.0);
    const Ray r = make_ray(0, k.cx, k.cy, pose, chain);
    EXPECT_EQ(r.origin, pose.translation);
    EXPECT_EQ(r.direction, Vec3(0, 0, -1));
    EXPECT_EQ(r.step, Vec3(0, 0, -1));
}

TEST(MakeRay, PoseDeltaTranslationShiftsOrigin) {
    const Intrinsics k = camera();
    PoseDeltas deltas = PoseDeltas::create(2);
    deltas.values[6 + 3] = 0.1;
    deltas.values[6 + 5] = -0.2;
    const CorrectionChain plain{&k}, chain{&k, nullptr, nullptr, &deltas};
    const Pose pose = look_at(Vec3(1, 1, 1), Vec3::Zero());
    const Ray a = make_ray(1, 30.0, 70.0, pose, plain);
    const Ray b = make_ray(1, 30.0, 70.0, pose, chain);
    EXPECT_LT((b.origin - a.origin - Vec3(0.1, 0, -0.2)).norm(), 1e-15);
    EXPECT_EQ(b.direction, a.direction);
}

TEST(MakeRay, InitialChainMatchesUncorrectedRay) {
    const Intrinsics k = camera();
    std::mt19937_64 rng(4);
    const DeformationField def = DeformationField::create(32, 2, 4, rng);
    const RefinementParams ref = RefinementParams::create(3);
    const PoseDeltas deltas = PoseDeltas::create(3);
    const CorrectionChain full{&k, &def, &ref, &deltas}, plain{&k};
    const Pose pose = look_at(Vec3(0.3, 1.2, 1.0), Vec3(0, 0.5, 0));
    const Ray a = make_ray(2, 11.0, 97.0, pose, full);
    const Ray b = make_ray(2, 11.0, 97.0, pose, plain);
    EXPECT_EQ(a.origin, b.origin);
    EXPECT_EQ(a.direction, b.direction);
    EXPECT_EQ(a.step, b.step);
}

TEST(MakeRay, ZDepthParameterization) {
    const Intrinsics k = camera();
    const Pose pose = look_at(Vec3(0.3, 1.2, 1.0), Vec3(0, 0.5, 0));
    const Ray r = make_ray(0, 20.0, 30.0, pose, {&k});
    const Vec3 p = r.origin + 2.5 * r.step;
    EXPECT_NEAR(-pose.to_camera(p).z(), 2.5, 1e-12);
    EXPECT_LT((p - backproject(20.0, 30.0, 2.5, k, pose)).norm(), 1e-12);
}

TEST(RayBackward, MatchesFiniteDifferences) {
    const Intrinsics k = camera();
    RefinementParams ref = RefinementParams::create(2);
    ref.set(1, {1.03, 0.98, 0.01, -0.02});
    PoseDeltas deltas = PoseDeltas::create(2);
    for (int i = 0; i < 6; ++i) deltas.values[6 + i] = 0.01 * (i + 1) * (i % 2 ? -1 : 1);
    const Pose base = look_at(Vec3(0.3, 1.2, 1.0), Vec3(0, 0.5, 0));
    const Vec2 offset(0.004, -0.003);
    RayUpstream up;
    up.origin = Vec3(0.3, -0.7, 0.2);
    up.step = Vec3(-0.4, 0.1, 0.9);
    up.direction = Vec3(0.5, 0.25, -0.6);
    auto objective = [&](const Vec2 &off) {
        const RayTrace t = trace_ray(1, 37.0, 81.0, base, off, {&k, nullptr, &ref, &deltas});
        return up.origin.dot(t.origin) + up.step.dot(t.step) + up.direction.dot(t.direction);
    };
    const RayTrace t = trace_ray(1, 37.0, 81.0, base, offset, {&k, nullptr, &ref, &deltas});
    ref.zero_grads();
    deltas.zero_grads();
    const Vec2 doff = ray_backward(t, base, up, &ref, &deltas);
    const double h = 1e-7;
    auto fd = [&](double &x) {
        const double keep = x;
        x = keep + h;
        const double fp = objective(offset);
        x = keep - h;
        const double fm = objective(offset);
        x = keep;
        return (fp - fm) / (2 * h);
    };
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(fd(ref.values[4 + i]), ref.grads[4 + i], 1e-7) << "refinement " << i;
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(fd(deltas.values[6 + i]), deltas.grads[6 + i], 1e-7) << "pose " << i;
    for (int a = 0; a < 2; ++a) {
        Vec2 p = offset, m = offset;
        p[a] += h;
        m[a] -= h;
        EXPECT_NEAR((objective(p) - objective(m)) / (2 * h), doff[a], 1e-7) << "offset " << a;
    }
    for (int i = 0; i < 4; ++i) EXPECT_EQ(ref.grads[i], 0.0);
}

TEST(SampleCoarse, CountsAndDeterminism) {
    EXPECT_EQ(sample_coarse(4.0).size(), 256u);
    EXPECT_EQ(sample_coarse(10.0).size(), 640u);
    const auto a = sample_coarse(4.0), b = sample_coarse(4.0);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.front(), 0.015625);
    EXPECT_EQ(a.back(), 4.0);
    std::mt19937_64 rng(5);
    const auto j = sample_coarse(4.0, 0.015625, &rng);
    for (std::size_t i = 0; i < j.size(); ++i) EXPECT_LE(std::abs(j[i] - a[i]), 0.0078125);
}

TEST(Classify, FreeSpaceBandAndExcluded) {
    EXPECT_EQ(classify_sample(1.0, 2.0, 0.05).label, SampleLabel::FreeSpace);
    const SampleClass band = classify_sample(1.98, 2.0, 0.05);
    EXPECT_EQ(band.label, SampleLabel::Sdf);
    EXPECT_NEAR(band.target, 0.02, 1e-15);
    EXPECT_EQ(classify_sample(2.10, 2.0, 0.05).label, SampleLabel::Excluded);
    EXPECT_EQ(classify_sample(1.0, 0.0, 0.05).label, SampleLabel::Excluded);
    const auto all = classify_samples({1.0, 1.98, 2.1}, 2.0, 0.05);
    ASSERT_EQ(all.size(), 3u);
    EXPECT_EQ(all[1].label, SampleLabel::Sdf);
}

TEST(SampleFine, NoCrossingNoSamples) {
    const std::vector<double> t{1.0, 1.5, 2.0};
    const std::vector<std::optional<double>> sdf{0.05, 0.03, 0.01};
    EXPECT_TRUE(sample_fine(t, sdf, 0.05, 16, 0.015625, 4.0).empty());
}

TEST(SampleFine, SamplesAroundInterpolatedCrossing) {
    const std::vector<double> t{1.984375, 2.0, 2.015625, 2.03125};
    const std::vector<std::optional<double>> sdf{0.03, 0.01, -0.01, -0.03};
    const double c = *first_zero_crossing(t, sdf);
    EXPECT_NEAR(c, 2.0078125, 1e-12);
    const auto f = sample_fine(t, sdf, 0.05, 16, 0.015625, 4.0);
    ASSERT_EQ(f.size(), 16u);
    for (double x : f) {
        EXPECT_GE(x, c - 0.05 - 1e-12);
        EXPECT_LE(x, c + 0.05 + 1e-12);
    }
    EXPECT_NEAR(f.front(), c - 0.05, 1e-12);
    EXPECT_NEAR(f.back(), c + 0.05, 1e-12);
}

TEST(SampleFine, MissingPredictionsAreSkipped) {
    const std::vector<double> t{1.0, 1.1, 1.2};
    const std::vector<std::optional<double>> sdf{0.02, std::nullopt, -0.02};
    EXPECT_FALSE(first_zero_crossing(t, sdf).has_value());
}
