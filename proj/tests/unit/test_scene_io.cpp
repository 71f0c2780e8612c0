// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

using namespace fastsurf;
namespace fs = std::filesystem;

namespace {

SyntheticScene single(const Primitive &p, const Intrinsics &k) {
    SyntheticScene s;
    s.name = "custom";
    s.primitives = {p};
    s.intrinsics = k;
    s.poses = {Pose::identity()};
    return s;
}

class TempDir {
public:
    TempDir() : path_(fs::temp_directory_path() / ("fastsurf_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++))) {
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;
    const fs::path &path() const { return path_; }

private:
    static int &counter() {
        static int n = 0;
        return n;
    }
    fs::path path_;
};

} // namespace

TEST(Render, WallSeenHeadOn) {
    const Intrinsics k = default_intrinsics(32, 24);
    const SyntheticScene s = single(BoxPrimitive{Vec3(0, 0, -2.5), Vec3(5, 5, 0.5), Vec3::Constant(0.5)}, k);
    const RenderedFrame f = render_frame(s, 0);
    for (double d : f.depth.data) EXPECT_NEAR(d, 2.0, 1e-12);
}

TEST(Render, SphereMatchesAnalyticIntersection) {
    const Intrinsics k = default_intrinsics(64, 48);
    const Vec3 c(0.1, -0.2, -3.0);
    const double r = 0.8;
    const SyntheticScene s = single(SpherePrimitive{c, r, Vec3::Constant(0.5)}, k);
    const RenderedFrame f = render_frame(s, 0);
    int hits = 0, misses = 0;
    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            // |t w - c|^2 = r^2 with w on the z = -1 plane, so t is the z-depth.
            const Vec3 w = pixel_to_plane(u, v, k);
            const double a = w.squaredNorm(), b = -2.0 * w.dot(c), cc = c.squaredNorm() - r * r;
            const double disc = b * b - 4 * a * cc;
            if (disc < 0.0) {
                EXPECT_EQ(f.depth.at(u, v), 0.0);
                ++misses;
                continue;
            }
            ++hits;
            EXPECT_NEAR(f.depth.at(u, v), (-b - std::sqrt(disc)) / (2 * a), 1e-6);
        }
    }
    EXPECT_GT(hits, 100);
    EXPECT_GT(misses, 100);
}

TEST(Render, ColorIsShadedAlbedo) {
    const Intrinsics k = default_intrinsics(8, 6);
    SyntheticScene s = single(BoxPrimitive{Vec3(0, 0, -2.5), Vec3(5, 5, 0.5), Vec3(0.8, 0.4, 0.2)}, k);
    s.light = Vec3(0, 0, 1);
    const RenderedFrame f = render_frame(s, 0);
    const Vec3 c = f.color.color(3, 2);
    EXPECT_NEAR(c.x(), 0.8, 0.5 / 255);
    EXPECT_NEAR(c.z(), 0.2, 0.5 / 255);
}

TEST(Scenes, BuiltInsAndUnknownName) {
    const SyntheticScene box = make_scene("box", 6);
    EXPECT_EQ(box.poses.size(), 6u);
    EXPECT_LT(box.sdf(Vec3(0, 0.3, 0)), 0.0);
    EXPECT_GT(box.sdf(Vec3(0.9, 1.5, 0.9)), 0.0);
    EXPECT_NEAR(box.sdf(Vec3(0, 0.3, 0.3)), 0.0, 1e-12);
    EXPECT_GT(make_scene("cluttered", 3).primitives.size(), box.primitives.size());
    EXPECT_THROW(make_scene("kitchen", 3), InvalidParameterError);
    EXPECT_THROW(make_scene("box", 0), InvalidParameterError);
    for (const Pose &p : box.poses) EXPECT_LT(p.rigidity_error(), 1e-12);
}

TEST(Scenes, EveryBoxPixelIsObserved) {
    const FrameSet f = fastsurf::testing::tiny_box_frames(3);
    for (const Frame &fr : f.frames) EXPECT_EQ(fr.depth.valid_count(), fr.depth.data.size());
}

TEST(Noise, QuantizesToMillimeters) {
    DepthImage d(10, 10);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.5, 4.0);
    for (double &x : d.data) x = u(rng);
    const DepthImage q = corrupt_depth(d, DepthNoise::none());
    for (std::size_t i = 0; i < d.data.size(); ++i) {
        EXPECT_LE(std::abs(q.data[i] - d.data[i]), 0.0005 + 1e-12);
        EXPECT_NEAR(q.data[i] * 1000.0, std::round(q.data[i] * 1000.0), 1e-9);
    }
}

TEST(Noise, HoleFractionAndSeedDeterminism) {
    const DepthImage d(160, 120, 2.0);
    DepthNoise p{0.0, 0.1, false, 4};
    const DepthImage h = corrupt_depth(d, p);
    const double frac = 1.0 - static_cast<double>(h.valid_count()) / static_cast<double>(d.valid_count());
    EXPECT_NEAR(frac, 0.1, 0.02);
    EXPECT_EQ(corrupt_depth(d, p), h);
    p.seed = 5;
    EXPECT_NE(corrupt_depth(d, p), h);
    EXPECT_EQ(corrupt_depth(d, DepthNoise::kinect(9)), corrupt_depth(d, DepthNoise::kinect(9)));
    EXPECT_THROW(corrupt_depth(d, DepthNoise{0.0, 1.5, false, 0}), InvalidParameterError);
}

TEST(Noise, GaussianScalesWithDepthSquared) {
    const DepthImage near(200, 200, 1.0), far(200, 200, 3.0);
    auto spread = [](const DepthImage &in, double mean) {
        double s = 0.0;
        const DepthImage out = corrupt_depth(in, DepthNoise{0.01, 0.0, false, 2});
        for (double x : out.data) s += (x - mean) * (x - mean);
        return std::sqrt(s / static_cast<double>(out.data.size()));
    };
    EXPECT_NEAR(spread(near, 1.0), 0.01, 0.001);
    EXPECT_NEAR(spread(far, 3.0), 0.09, 0.009);
}

TEST(Perturbation, IdentityLeavesFramesUnchanged) {
    SyntheticScene s = make_scene("box", 2, default_intrinsics(40, 30));
    const RenderedFrame plain = render_frame(s, 1);
    perturb_intrinsics(s, 1, {});
    const RenderedFrame same = render_frame(s, 1);
    EXPECT_EQ(same.depth, plain.depth);
    EXPECT_EQ(same.color.rgb, plain.color.rgb);
    EXPECT_THROW(perturb_intrinsics(s, 5, {}), InvalidParameterError);
}

TEST(Perturbation, TrueRefinementRecoversRays) {
    SyntheticScene s = make_scene("box", 2, default_intrinsics(40, 30));
    const FrameRefinement truth{1.04, 0.97, 0.02, -0.015};
    perturb_intrinsics(s, 1, truth);
    const RenderedFrame f = render_frame(s, 1);
    RefinementParams ref = RefinementParams::create(2);
    ref.set(1, truth);
    const CorrectionChain chain{&s.intrinsics, nullptr, &ref, nullptr};
    for (int v = 0; v < 30; v += 3) {
        for (int u = 0; u < 40; u += 3) {
            const Ray r = make_ray(1, u, v, s.poses[1], chain);
            const Vec3 p = r.origin + f.depth.at(u, v) * r.step;
            EXPECT_NEAR(s.sdf(p), 0.0, 1e-9);
            // Undoing the refinement of the camera-space hit lands back on the pixel.
            const Vec3 cam = s.poses[1].to_camera(p);
            const Vec3 plane = unrefine_plane(cam / -cam.z(), truth);
            EXPECT_NEAR(plane.x() * s.intrinsics.fx + s.intrinsics.cx, u, 1e-9);
            EXPECT_NEAR(-plane.y() * s.intrinsics.fy + s.intrinsics.cy, v, 1e-9);
        }
    }
}

TEST(GroundTruth, BoxMeshAreaMatchesRoomAndCube) {
    const SyntheticScene s = make_scene("box", 1);
    const TriangleMesh m = ground_truth_mesh(s, 0.05);
    // Room interior 3 x 2.4 x 3 plus five visible cube faces (the bottom rests on the floor).
    const double room = 2 * (3 * 2.4) * 2 + 2 * (3 * 3);
    const double cube = 5 * 0.36;
    EXPECT_NEAR(m.area(), room - 0.36 + cube, 0.03 * (room + cube));
}

TEST(Dataset, RoundTrip) {
    const FrameSet f = fastsurf::testing::tiny_box_frames(3);
    TempDir dir;
    save_dataset(f, dir.path());
    std::ostringstream warn;
    const FrameSet back = load_dataset(dir.path(), &warn);
    EXPECT_TRUE(warn.str().empty()) << warn.str();
    EXPECT_EQ(back.intrinsics, f.intrinsics);
    ASSERT_EQ(back.size(), f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (std::size_t p = 0; p < f.frames[i].depth.data.size(); ++p) {
            EXPECT_EQ(back.frames[i].depth.data[p], static_cast<double>(std::llround(f.frames[i].depth.data[p] * 1000.0)) / 1000.0);
        }
        EXPECT_EQ(back.frames[i].color.rgb, f.frames[i].color.rgb);
        EXPECT_LT((back.frames[i].pose.matrix() - f.frames[i].pose.matrix()).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(Dataset, TruncatedPngNamesTheFile) {
    const FrameSet f = fastsurf::testing::tiny_box_frames(2);
    TempDir dir;
    save_dataset(f, dir.path());
    const fs::path bad = dir.path() / "depth" / frame_name(1, "png");
    fs::resize_file(bad, fs::file_size(bad) / 2);
    try {
        load_dataset(dir.path());
        FAIL() << "expected a parse error";
    } catch (const ParseError &e) {
        EXPECT_NE(std::string(e.what()).find(bad.string()), std::string::npos) << e.what();
    }
}

TEST(Dataset, CountMismatchAndBadPose) {
    const FrameSet f = fastsurf::testing::tiny_box_frames(2);
    TempDir dir;
    save_dataset(f, dir.path());
    fs::remove(dir.path() / "pose" / frame_name(1, "txt"));
    EXPECT_THROW(load_dataset(dir.path()), DimensionError);
    std::ofstream(dir.path() / "pose" / frame_name(1, "txt")) << "1 0 0 0\n0 1 0\n";
    EXPECT_THROW(load_dataset(dir.path()), ParseError);
}

TEST(Dataset, DriftingRotationIsRepaired) {
    TempDir dir;
    const fs::path p = dir.path() / "pose.txt";
    std::ofstream(p) << "1.00001 0 0 0.5\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";
    std::ostringstream warn;
    const Pose pose = read_pose(p, &warn);
    EXPECT_LT(pose.rigidity_error(), 1e-12);
    EXPECT_NE(warn.str().find("drift"), std::string::npos);
    EXPECT_EQ(pose.translation, Vec3(0.5, 0, 0));
}
