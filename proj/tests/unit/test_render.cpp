// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0

#include "fastsurf/render.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace fastsurf;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

RaySamples labelled_ray(std::vector<double> t, double d_obs, double tr) {
    RaySamples r;
    r.depths = std::move(t);
    r.observed_depth = d_obs;
    for (const auto &c : classify_samples(r.depths, d_obs, tr)) {
        r.labels.push_back(c.label);
        r.targets.push_back(c.target);
    }
    return r;
}

} // namespace

TEST(RenderWeight, PeakAndTruncationValue) {
    EXPECT_EQ(render_weight(0.0, 0.05), 0.25);
    EXPECT_NEAR(render_weight(0.05, 0.05), logistic(1.0) * logistic(-1.0), 1e-12);
    EXPECT_NEAR(render_weight(0.05, 0.05), 0.196612, 1e-6);
}

TEST(RenderWeight, TailsAndSymmetry) {
    EXPECT_LT(render_weight(0.5, 0.05), 1e-4);
    EXPECT_LT(render_weight(-0.5, 0.05), 1e-4);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < 100; ++i) {
        const double d = u(rng);
        EXPECT_NEAR(render_weight(d, 0.05), render_weight(-d, 0.05), 1e-15);
        EXPECT_LE(render_weight(d, 0.05), 0.25);
        const double h = 1e-7;
        EXPECT_NEAR((render_weight(d + h, 0.05) - render_weight(d - h, 0.05)) / (2 * h), render_weight_grad(d, 0.05), 1e-6);
    }
}

TEST(RenderColor, SingleSampleReturnsItsColor) {
    const Vec3 c(0.2, 0.7, 0.4);
    for (double w : {1e-3, 0.1, 0.25}) {
        const double ws[] = {w};
        const Vec3 cs[] = {c};
        EXPECT_EQ(render_color(ws, cs).color, c);
    }
}

TEST(RenderColor, EqualWeightsAverage) {
    const double ws[] = {0.2, 0.2};
    const Vec3 cs[] = {Vec3(1, 0, 0), Vec3(0, 0, 1)};
    EXPECT_LT((render_color(ws, cs).color - Vec3(0.5, 0, 0.5)).norm(), 1e-15);
    std::vector<double> zero_sdf(5, render_weight(0.0, 0.05));
    std::vector<Vec3> colors{Vec3(0.1, 0.2, 0.3), Vec3(0.5, 0.5, 0.5), Vec3(0.9, 0.1, 0.0), Vec3(0.3, 0.3, 0.9), Vec3(0.0, 1.0, 0.2)};
    Vec3 mean = Vec3::Zero();
    for (const auto &c : colors) mean += c / 5.0;
    EXPECT_LT((render_color(zero_sdf, colors).color - mean).norm(), 1e-15);
}

TEST(RenderColor, EmptyIsErrorAndLowWeightFlagged) {
    EXPECT_THROW(render_color({}, {}), InvalidParameterError);
    const double ws[] = {0.0, 0.0};
    const Vec3 cs[] = {Vec3(1, 1, 1), Vec3(0, 0, 0)};
    const RenderedColor r = render_color(ws, cs);
    EXPECT_TRUE(r.low_confidence);
    EXPECT_EQ(r.color, Vec3::Constant(0.5));
}

TEST(RenderColor, BackwardMatchesFiniteDifferences) {
    std::vector<double> w{0.1, 0.2, 0.05, 0.24};
    std::vector<Vec3> c{Vec3(0.1, 0.2, 0.3), Vec3(0.5, 0.1, 0.9), Vec3(0.2, 0.8, 0.1), Vec3(0.7, 0.4, 0.6)};
    const Vec3 up(0.3, -0.5, 0.8);
    const RenderedColor r = render_color(w, c);
    std::vector<double> dw(4);
    std::vector<Vec3> dc(4);
    render_color_backward(w, c, r, up, dw, dc);
    const double h = 1e-7;
    for (std::size_t k = 0; k < w.size(); ++k) {
        auto wp = w, wm = w;
        wp[k] += h;
        wm[k] -= h;
        EXPECT_NEAR((up.dot(render_color(wp, c).color) - up.dot(render_color(wm, c).color)) / (2 * h), dw[k], 1e-7);
        for (int a = 0; a < 3; ++a) {
            auto cp = c, cm = c;
            cp[k][a] += h;
            cm[k][a] -= h;
            EXPECT_NEAR((up.dot(render_color(w, cp).color) - up.dot(render_color(w, cm).color)) / (2 * h), dc[k][a], 1e-7);
        }
    }
}

TEST(LossPre, ValueAndGradient) {
    const double pred[] = {0.05, 0.00}, target[] = {0.04, 0.02};
    EXPECT_NEAR(loss_pre(pred, target), 2.5e-4, 1e-18);
    const double same[] = {0.1, 0.2};
    EXPECT_EQ(loss_pre(same, same), 0.0);
    const double p3[] = {0.3, 0.1, -0.2}, t3[] = {0.25, 0.05, -0.25};
    EXPECT_NEAR(loss_pre(p3, t3), 0.0025, 1e-15);
    std::vector<double> g(2);
    loss_pre(pred, target, g);
    EXPECT_NEAR(g[0], 0.01, 1e-15);
    EXPECT_NEAR(g[1], -0.02, 1e-15);
    EXPECT_THROW(loss_pre({}, {}), InvalidParameterError);
}

TEST(LossFs, NestedMeans) {
    const double tr = 0.05;
    const SampleLabel fs2[] = {SampleLabel::FreeSpace, SampleLabel::FreeSpace};
    const double sdf_a[] = {0.0, tr}, zeros[] = {0.0, 0.0};
    const RayDepthTerms one[] = {{sdf_a, fs2, zeros}};
    EXPECT_NEAR(loss_fs(one, tr), tr * tr / 2, 1e-18);
    const double at_tr[] = {tr, tr};
    const RayDepthTerms met[] = {{at_tr, fs2, zeros}};
    EXPECT_EQ(loss_fs(met, tr), 0.0);
    // Ray 1 mean m1 = tr^2 / 2 over 2 samples; ray 2 mean m2 = (tr - 0.01)^2 over 1.
    const SampleLabel mixed[] = {SampleLabel::FreeSpace, SampleLabel::Sdf};
    const double sdf_b[] = {0.04, 0.3};
    const RayDepthTerms two[] = {{sdf_a, fs2, zeros}, {sdf_b, mixed, zeros}};
    EXPECT_NEAR(loss_fs(two, tr), 0.5 * (tr * tr / 2 + 0.01 * 0.01), 1e-18);
}

TEST(LossFs, GradientMatchesFiniteDifferences) {
    const double tr = 0.05;
    std::vector<double> a{0.01, 0.2, -0.1}, b{0.03, 0.0};
    const SampleLabel la[] = {SampleLabel::FreeSpace, SampleLabel::Sdf, SampleLabel::FreeSpace};
    const SampleLabel lb[] = {SampleLabel::FreeSpace, SampleLabel::Excluded};
    const double ta[] = {0, 0.01, 0}, tb[] = {0, 0};
    auto eval = [&](std::vector<std::vector<double>> *g) {
        const RayDepthTerms rays[] = {{a, la, ta}, {b, lb, tb}};
        return loss_fs(rays, tr, g) + 3.0 * loss_sdf(rays);
    };
    std::vector<std::vector<double>> g;
    const RayDepthTerms rays[] = {{a, la, ta}, {b, lb, tb}};
    loss_fs(rays, tr, &g);
    std::vector<std::vector<double>> gs;
    loss_sdf(rays, &gs);
    const double h = 1e-7;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double keep = a[k];
        a[k] = keep + h;
        const double fp = eval(nullptr);
        a[k] = keep - h;
        const double fm = eval(nullptr);
        a[k] = keep;
        EXPECT_NEAR((fp - fm) / (2 * h), g[0][k] + 3.0 * gs[0][k], 1e-8);
    }
    EXPECT_EQ(g[1][1], 0.0);
}

TEST(LossSdf, ExamplesAndWallOracle) {
    const SampleLabel l[] = {SampleLabel::Sdf};
    const double pred[] = {0.03}, target[] = {0.02};
    const RayDepthTerms r[] = {{pred, l, target}};
    EXPECT_NEAR(loss_sdf(r), 1e-4, 1e-18);
    // A wall at 2 m seen head-on: perfect predictions equal the observed signed distance.
    const RaySamples ray = labelled_ray(sample_coarse(4.0), 2.0, 0.05);
    std::vector<double> perfect(ray.depths.size());
    for (std::size_t k = 0; k < perfect.size(); ++k) perfect[k] = std::clamp(2.0 - ray.depths[k], -0.05, 0.05);
    const RayDepthTerms wall[] = {{perfect, ray.labels, ray.targets}};
    EXPECT_EQ(loss_sdf(wall), 0.0);
    EXPECT_EQ(loss_fs(wall, 0.05), 0.0);
}

TEST(LossRgb, ChannelSum) {
    const ColorPair same[] = {{Vec3(0.2, 0.3, 0.4), Vec3(0.2, 0.3, 0.4)}};
    EXPECT_EQ(loss_rgb(same), 0.0);
    const ColorPair off[] = {{Vec3(0.6, 0.6, 0.6), Vec3(0.5, 0.5, 0.5)}, {Vec3(0, 0, 0), Vec3(1, 1, 1), false}};
    EXPECT_NEAR(loss_rgb(off), 0.03, 1e-15);
}

TEST(Regularizers, InitialStateAndScaleOffset) {
    std::mt19937_64 rng(2);
    const DeformationField def = DeformationField::create(64, 2, 4, rng);
    RefinementParams ref = RefinementParams::create(3);
    const EmbeddingTable emb = EmbeddingTable::create(4, 3);
    const std::size_t frames[] = {0, 1, 2, 1};
    EXPECT_EQ(reg_embed(emb.values), 0.0);
    EXPECT_EQ(reg_refine(ref, frames), 0.0);
    EXPECT_GT(reg_deform(def.net), 0.0);
    for (std::size_t i = 0; i < 3; ++i) ref.set(i, {1.1, 1.0, 0.0, 0.0});
    EXPECT_NEAR(reg_refine(ref, frames), 0.01, 1e-15);
}

TEST(Regularizers, GradientsMatchFiniteDifferences) {
    RefinementParams ref = RefinementParams::create(2);
    ref.set(0, {1.02, 0.97, 0.01, -0.03});
    ref.set(1, {0.99, 1.05, -0.02, 0.0});
    const std::size_t frames[] = {0, 1, 1};
    std::vector<double> g(8, 0.0);
    reg_refine(ref, frames, &g, 2.0);
    const double h = 1e-7;
    for (std::size_t i = 0; i < 8; ++i) {
        const double keep = ref.values[i];
        ref.values[i] = keep + h;
        const double fp = 2.0 * reg_refine(ref, frames);
        ref.values[i] = keep - h;
        const double fm = 2.0 * reg_refine(ref, frames);
        ref.values[i] = keep;
        EXPECT_NEAR((fp - fm) / (2 * h), g[i], 1e-8);
    }
    MatX xi = MatX::Random(4, 3);
    MatX gx = MatX::Zero(4, 3);
    reg_embed(xi, &gx);
    EXPECT_LT((gx - 2.0 * xi / 12.0).norm(), 1e-15);
}

TEST(TotalLoss, WeightedSum) {
    const LossWeights w;
    EXPECT_EQ(total_loss(LossParts{}, w), 0.0);
    LossParts p;
    p.sdf = 1e-4;
    EXPECT_NEAR(total_loss(p, w), 0.6, 1e-15);
    p = {};
    p.fs = 0.1;
    p.rgb = 0.2;
    p.reg = 0.3;
    EXPECT_NEAR(total_loss(p, w), 10 * 0.1 + 0.5 * 0.2 + 0.1 * 0.3, 1e-15);
}
