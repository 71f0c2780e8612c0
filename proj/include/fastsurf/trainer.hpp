// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Three-phase schedule: prior pretraining of the grid and SDF decoder against
// fused TSDF values, ray-batch training on coarse samples, then training on a
// subdivided grid with extra samples around the detected surface.

#include "fastsurf/model.hpp"

#include <cinttypes>
#include <cstdio>
#include <optional>

namespace fastsurf {

/// Generator for one iteration of one phase. Keying on (seed, phase, iteration)
/// makes any resumed run draw exactly the batches of an uninterrupted one.
inline std::mt19937_64 iteration_rng(std::uint64_t seed, int phase, std::int64_t iteration) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(phase),
                      static_cast<std::uint32_t>(iteration), static_cast<std::uint32_t>(static_cast<std::uint64_t>(iteration) >> 32)};
    return std::mt19937_64(seq);
}

inline CorrectionChain correction_chain(const SceneModel &m, const FrameSet &frames, const TrainConfig &cfg) {
    return {&frames.intrinsics, cfg.enable_deformation ? &m.deformation : nullptr, cfg.enable_refinement ? &m.refinement : nullptr,
            cfg.enable_pose_opt ? &m.pose_deltas : nullptr};
}

/// Rays drawn uniformly over frames and pixels (with replacement). With
/// `with_fine`, each ray also gets fine samples around the first crossing of
/// the current model's coarse predictions.
inline SampleBatch build_batch(const SceneModel &m, const FrameSet &frames, const TrainConfig &cfg, int ray_count, double ray_length,
                               bool with_fine, std::mt19937_64 &rng) {
    if (frames.empty()) throw InvalidParameterError("build_batch: no frames");
    SampleBatch batch;
    batch.rays.resize(static_cast<std::size_t>(ray_count));
    std::uniform_int_distribution<std::size_t> pick_frame(0, frames.size() - 1);
    std::uniform_int_distribution<int> pick_u(0, frames.intrinsics.width - 1);
    std::uniform_int_distribution<int> pick_v(0, frames.intrinsics.height - 1);
    for (auto &r : batch.rays) {
        r.frame = pick_frame(rng);
        r.px = pick_u(rng);
        r.py = pick_v(rng);
        const Frame &f = frames.frames[r.frame];
        r.observed_depth = f.depth.at(r.px, r.py);
        if (!f.color.rgb.empty()) r.observed_color = f.color.color(r.px, r.py);
        r.depths = sample_coarse(ray_length, cfg.coarse_step, cfg.jitter ? &rng : nullptr);
        r.fine_begin = r.depths.size();
    }
    if (with_fine && cfg.fine_samples > 0) {
        const CorrectionChain chain = correction_chain(m, frames, cfg);
        std::vector<Vec3> pts;
        std::vector<double> vals;
        std::vector<std::uint8_t> ok;
        for (auto &r : batch.rays) {
            const Ray ray = make_ray(r.frame, r.px, r.py, frames.frames[r.frame].pose, chain);
            pts.resize(r.depths.size());
            vals.assign(r.depths.size(), 0.0);
            ok.assign(r.depths.size(), 0);
            for (std::size_t k = 0; k < r.depths.size(); ++k) pts[k] = ray.origin + r.depths[k] * ray.step;
            m.sdf_batch(pts, vals, ok);
            std::vector<std::optional<double>> sdf(r.depths.size());
            for (std::size_t k = 0; k < r.depths.size(); ++k) {
                if (ok[k]) sdf[k] = vals[k];
            }
            const auto fine = sample_fine(r.depths, sdf, m.tr, cfg.fine_samples, cfg.coarse_step, ray_length);
            r.depths.insert(r.depths.end(), fine.begin(), fine.end());
        }
    }
    for (auto &r : batch.rays) {
        r.labels.resize(r.depths.size());
        r.targets.resize(r.depths.size());
        for (std::size_t k = 0; k < r.depths.size(); ++k) {
            const SampleClass c = classify_sample(r.depths[k], r.observed_depth, m.tr);
            r.labels[k] = c.label;
            r.targets[k] = c.target;
        }
    }
    return batch;
}

struct EvalStats {
    std::size_t kept_samples = 0;
    std::size_t dropped_samples = 0;
    std::size_t low_confidence_rays = 0;
};

/// Total loss of a batch. With `want_grad`, parameter gradients of the total
/// are accumulated into the model (callers zero them first). Groups disabled
/// in `cfg` neither contribute nor receive gradients.
inline LossParts evaluate_batch(SceneModel &m, const FrameSet &frames, const TrainConfig &cfg, const SampleBatch &batch, bool want_grad,
                                EvalStats *stats = nullptr) {
    const std::size_t nrays = batch.rays.size();
    const Intrinsics &intr = frames.intrinsics;
    const auto R = static_cast<Eigen::Index>(nrays);
    const int F = m.grid.feature_len();
    const int P = encoded_length(m.pe_levels);
    const int E = m.embeddings.dim();
    const double tr = m.tr;
    const LossWeights &lw = cfg.weights;

    MatX offsets = MatX::Zero(2, R);
    MlpTape deform_tape;
    if (cfg.enable_deformation && nrays > 0) {
        MatX din(DeformationField::input_dim(m.deformation.levels), R);
        for (std::size_t i = 0; i < nrays; ++i) {
            din.col(static_cast<Eigen::Index>(i)) = deformation_input(batch.rays[i].px, batch.rays[i].py, intr, m.deformation.levels);
        }
        if (want_grad) {
            deform_tape = mlp_forward(m.deformation.net, din);
            offsets = deform_tape.output;
        } else {
            offsets = mlp_eval(m.deformation.net, din);
        }
    }

    const CorrectionChain chain = correction_chain(m, frames, cfg);
    std::vector<RayTrace> traces(nrays);
    struct Kept {
        std::uint32_t ray;
        std::uint32_t k;
        Stencil stencil;
    };
    std::vector<Kept> kept;
    std::vector<std::size_t> begin(nrays + 1, 0);
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < nrays; ++i) {
        const RaySamples &r = batch.rays[i];
        traces[i] = trace_ray(r.frame, r.px, r.py, frames.frames[r.frame].pose, offsets.col(static_cast<Eigen::Index>(i)), chain);
        begin[i] = kept.size();
        for (std::size_t k = 0; k < r.depths.size(); ++k) {
            const Vec3 p = traces[i].origin + r.depths[k] * traces[i].step;
            if (auto s = m.grid.locate(p)) {
                kept.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k), *s});
            } else {
                ++dropped;
            }
        }
    }
    begin[nrays] = kept.size();
    const auto N = static_cast<Eigen::Index>(kept.size());

    MatX phi(F, N);
    for (Eigen::Index j = 0; j < N; ++j) m.grid.gather(kept[static_cast<std::size_t>(j)].stencil, phi.col(j));
    std::vector<VecX> encoded(nrays);
    for (std::size_t i = 0; i < nrays; ++i) encoded[i] = positional_encode(traces[i].direction, m.pe_levels).values;
    MatX cin(F + P + E, N);
    cin.topRows(F) = phi;
    for (Eigen::Index j = 0; j < N; ++j) {
        const Kept &kp = kept[static_cast<std::size_t>(j)];
        cin.block(F, j, P, 1) = encoded[kp.ray];
        cin.block(F + P, j, E, 1) = m.embeddings.values.col(static_cast<Eigen::Index>(batch.rays[kp.ray].frame));
    }

    MlpTape sdf_tape, color_tape;
    MatX D, C;
    if (N > 0) {
        if (want_grad) {
            sdf_tape = mlp_forward(m.sdf_net, phi);
            color_tape = mlp_forward(m.color_net, cin);
            D = sdf_tape.output;
            C = color_tape.output;
        } else {
            D = mlp_eval(m.sdf_net, phi);
            C = mlp_eval(m.color_net, cin);
        }
    }

    std::vector<SampleLabel> labels(kept.size());
    std::vector<double> targets(kept.size());
    std::vector<double> weights(kept.size());
    std::vector<Vec3> colors(kept.size());
    for (std::size_t j = 0; j < kept.size(); ++j) {
        const RaySamples &r = batch.rays[kept[j].ray];
        labels[j] = r.labels[kept[j].k];
        targets[j] = r.targets[kept[j].k];
        weights[j] = render_weight(D(0, static_cast<Eigen::Index>(j)), tr);
        colors[j] = C.col(static_cast<Eigen::Index>(j));
    }
    std::vector<RayDepthTerms> terms(nrays);
    std::vector<ColorPair> pairs(nrays);
    std::vector<RenderedColor> rendered(nrays);
    std::vector<std::size_t> ray_frames(nrays);
    std::size_t low_conf = 0;
    for (std::size_t i = 0; i < nrays; ++i) {
        const std::size_t b = begin[i], n = begin[i + 1] - begin[i];
        const double *dp = N > 0 ? D.data() + b : nullptr;
        terms[i] = {{dp, n}, {labels.data() + b, n}, {targets.data() + b, n}};
        ray_frames[i] = batch.rays[i].frame;
        pairs[i].observed = batch.rays[i].observed_color;
        pairs[i].valid = false;
        if (n == 0) continue;
        rendered[i] = render_color({weights.data() + b, n}, {colors.data() + b, n});
        pairs[i].rendered = rendered[i].color;
        const bool has_color = !frames.frames[batch.rays[i].frame].color.rgb.empty();
        pairs[i].valid = has_color && !rendered[i].low_confidence;
        low_conf += rendered[i].low_confidence ? 1 : 0;
    }

    std::vector<std::vector<double>> g_fs, g_sdf;
    std::vector<Vec3> g_rgb;
    LossParts parts;
    parts.fs = loss_fs(terms, tr, want_grad ? &g_fs : nullptr);
    parts.sdf = loss_sdf(terms, want_grad ? &g_sdf : nullptr);
    parts.rgb = loss_rgb(pairs, want_grad ? &g_rgb : nullptr);
    parts.reg_embed = reg_embed(m.embeddings.values, want_grad ? &m.embeddings.grads : nullptr, lw.reg);
    if (cfg.enable_refinement) parts.reg_refine = reg_refine(m.refinement, ray_frames, want_grad ? &m.refinement.grads : nullptr, lw.reg);
    if (cfg.enable_deformation) parts.reg_deform = reg_deform(m.deformation.net, want_grad ? &m.deformation.net : nullptr, lw.reg);
    parts.reg = parts.reg_embed + parts.reg_refine + parts.reg_deform;
    parts.total = total_loss(parts, lw);
    if (stats) *stats = {kept.size(), dropped, low_conf};
    if (!want_grad) return parts;

    MatX dD = MatX::Zero(1, N);
    MatX dC = MatX::Zero(3, N);
    std::vector<double> dw;
    std::vector<Vec3> dc;
    for (std::size_t i = 0; i < nrays; ++i) {
        const std::size_t b = begin[i], n = begin[i + 1] - begin[i];
        for (std::size_t k = 0; k < n; ++k) {
            const auto j = static_cast<Eigen::Index>(b + k);
            dD(0, j) += lw.fs * g_fs[i][k] + lw.sdf * g_sdf[i][k];
        }
        if (!pairs[i].valid) continue;
        dw.resize(n);
        dc.resize(n);
        render_color_backward({weights.data() + b, n}, {colors.data() + b, n}, rendered[i], lw.rgb * g_rgb[i], dw, dc);
        for (std::size_t k = 0; k < n; ++k) {
            const auto j = static_cast<Eigen::Index>(b + k);
            dD(0, j) += dw[k] * render_weight_grad(D(0, j), tr);
            dC.col(j) = dc[k];
        }
    }

    MatX dphi;
    MatX dcin;
    if (N > 0) {
        dcin = mlp_backward(m.color_net, color_tape, dC);
        dphi = dcin.topRows(F) + mlp_backward(m.sdf_net, sdf_tape, dD);
    }
    MatX doff = MatX::Zero(2, R);
    for (std::size_t i = 0; i < nrays; ++i) {
        RayUpstream up;
        VecX dpe = VecX::Zero(P);
        const std::size_t frame = batch.rays[i].frame;
        for (std::size_t j = begin[i]; j < begin[i + 1]; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const Stencil &s = kept[j].stencil;
            interpolate_backward(m.grid, s, dphi.col(jj));
            m.embeddings.grads.col(static_cast<Eigen::Index>(frame)) += dcin.block(F + P, jj, E, 1);
            dpe += dcin.block(F, jj, P, 1);
            const Vec3 dp = m.grid.position_gradient(s, dphi.col(jj));
            up.origin += dp;
            up.step += batch.rays[i].depths[kept[j].k] * dp;
        }
        up.direction = frequency_encode_backward(traces[i].direction, m.pe_levels, dpe);
        const Vec2 d = ray_backward(traces[i], frames.frames[frame].pose, up, cfg.enable_refinement ? &m.refinement : nullptr,
                                    cfg.enable_pose_opt ? &m.pose_deltas : nullptr);
        doff.col(static_cast<Eigen::Index>(i)) = d;
    }
    if (cfg.enable_deformation && nrays > 0) mlp_backward(m.deformation.net, deform_tape, doff);
    return parts;
}

/// Prior loss on `count` random cell centers; accumulates grid and SDF
/// decoder gradients when `want_grad`.
inline LossParts evaluate_prior(SceneModel &m, const TsdfVolume &prior, int count, std::mt19937_64 &rng, bool want_grad) {
    if (prior.dims != m.grid.dims || prior.gs != m.grid.gs || !(prior.bounds.min_corner == m.grid.bounds.min_corner)) {
        throw InvalidParameterError("phase 1: fused volume does not match the model grid geometry");
    }
    const GridDims &d = m.grid.dims;
    std::uniform_int_distribution<std::int64_t> ci(0, d.nx - 2), cj(0, d.ny - 2), ck(0, d.nz - 2);
    const int F = m.grid.feature_len();
    MatX phi(F, count);
    std::vector<Stencil> stencils(static_cast<std::size_t>(count));
    std::vector<double> target(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const std::int64_t i = ci(rng), j = cj(rng), k = ck(rng);
        const Vec3 center = m.grid.vertex_position(i, j, k) + Vec3::Constant(0.5 * m.grid.gs);
        target[static_cast<std::size_t>(n)] = query_tsdf(prior, center).sdf;
        auto s = m.grid.locate(center);
        if (!s) throw OutOfBoundsError("phase 1: cell center outside the lattice");
        stencils[static_cast<std::size_t>(n)] = *s;
        m.grid.gather(*s, phi.col(n));
    }
    LossParts parts;
    std::vector<double> grad(static_cast<std::size_t>(count));
    if (!want_grad) {
        const MatX D = mlp_eval(m.sdf_net, phi);
        parts.pre = loss_pre({D.data(), static_cast<std::size_t>(count)}, target);
        parts.total = parts.pre;
        return parts;
    }
    MlpTape tape = mlp_forward(m.sdf_net, phi);
    parts.pre = loss_pre({tape.output.data(), static_cast<std::size_t>(count)}, target, grad);
    parts.total = parts.pre;
    const MatX up = Eigen::Map<const MatX>(grad.data(), 1, count);
    const MatX dphi = mlp_backward(m.sdf_net, tape, up);
    for (int n = 0; n < count; ++n) interpolate_backward(m.grid, stencils[static_cast<std::size_t>(n)], dphi.col(n));
    return parts;
}

/// Metrics log line: iter= phase= total= fs= sdf= rgb= reg= pre= lr=
inline std::string format_metrics(std::int64_t iteration, int phase, const LossParts &p, double lr) {
    char buf[320];
    std::snprintf(buf, sizeof buf, "iter=%" PRId64 " phase=%d total=%.9e fs=%.9e sdf=%.9e rgb=%.9e reg=%.9e pre=%.9e lr=%.9e", iteration,
                  phase, p.total, p.fs, p.sdf, p.rgb, p.reg, p.pre, lr);
    return buf;
}

struct TrainHooks {
    /// Called once per iteration with the loss evaluated before that iteration's step.
    std::function<void(int phase, std::int64_t phase_iteration, const LossParts &)> on_iteration;
    std::ostream *log = nullptr;
};

struct PhaseContext {
    const FrameSet *frames = nullptr;
    const TsdfVolume *prior = nullptr;
    int ray_batch = 0;
    double ray_length = 0.0;
    std::string last_checkpoint;
};

inline PhaseContext make_context(const SceneModel &m, const FrameSet &frames, const TrainConfig &cfg, const TsdfVolume *prior = nullptr) {
    return {&frames, prior, cfg.resolved_ray_batch(frames), cfg.resolved_ray_length(m.grid.bounds), {}};
}

namespace detail {

inline void log_iteration(const TrainHooks &hooks, const SceneModel &m, const TrainConfig &cfg, int phase, std::int64_t it,
                          std::int64_t total, const LossParts &parts) {
    if (hooks.on_iteration) hooks.on_iteration(phase, it, parts);
    if (hooks.log && (it % cfg.log_every == 0 || it + 1 == total)) {
        *hooks.log << format_metrics(m.iteration, phase, parts, cfg.adam.lr_at(m.iteration)) << '\n';
    }
}

inline void check_finite(const LossParts &p, int phase, std::int64_t it, const PhaseContext &ctx) {
    if (std::isfinite(p.total)) return;
    std::string msg = "training diverged: non-finite loss in phase " + std::to_string(phase) + " at iteration " + std::to_string(it);
    msg += ctx.last_checkpoint.empty() ? "; no checkpoint written yet" : "; last good checkpoint: " + ctx.last_checkpoint;
    throw NumericalError(msg);
}

} // namespace detail

/// Phase 1 up to iteration `until` (default: the configured length). Only the
/// grid and the SDF decoder move.
inline void phase1_pretrain(SceneModel &m, const TsdfVolume &prior, const TrainConfig &cfg, const TrainHooks &hooks = {},
                            std::optional<std::int64_t> until = {}, const PhaseContext *ctx = nullptr) {
    if (!cfg.enable_tsdf_prior) return;
    const std::int64_t total = cfg.phase1_iters;
    const std::int64_t stop = std::min(until.value_or(total), total);
    const PhaseContext none;
    for (std::int64_t &it = m.phase_iters[0]; it < stop;) {
        std::mt19937_64 rng = iteration_rng(cfg.seed, 1, it);
        m.grid.zero_grads();
        m.sdf_net.zero_grads();
        const LossParts parts = evaluate_prior(m, prior, cfg.cell_batch, rng, true);
        detail::check_finite(parts, 1, it, ctx ? *ctx : none);
        detail::log_iteration(hooks, m, cfg, 1, it, total, parts);
        const ParamRef g = param_ref(m.grid.features, m.grid.grads);
        adam_step(m.adam.grid, cfg.adam, std::span<const ParamRef>(&g, 1), m.iteration, "grid");
        const auto sp = m.sdf_net.params();
        adam_step(m.adam.sdf, cfg.adam, sp, m.iteration, "mlp_d");
        ++it;
        ++m.iteration;
    }
}

namespace detail {

inline void ray_phase(SceneModel &m, int phase, const PhaseContext &ctx, const TrainConfig &cfg, const TrainHooks &hooks,
                      std::optional<std::int64_t> until) {
    const std::int64_t total = phase == 2 ? cfg.phase2_iters : cfg.phase3_iters;
    const std::int64_t stop = std::min(until.value_or(total), total);
    for (std::int64_t &it = m.phase_iters[phase - 1]; it < stop;) {
        std::mt19937_64 rng = iteration_rng(cfg.seed, phase, it);
        const SampleBatch batch = build_batch(m, *ctx.frames, cfg, ctx.ray_batch, ctx.ray_length, phase == 3, rng);
        m.zero_grads();
        const LossParts parts = evaluate_batch(m, *ctx.frames, cfg, batch, true);
        check_finite(parts, phase, it, ctx);
        log_iteration(hooks, m, cfg, phase, it, total, parts);
        const ParamRef g = param_ref(m.grid.features, m.grid.grads);
        adam_step(m.adam.grid, cfg.adam, std::span<const ParamRef>(&g, 1), m.iteration, "grid");
        adam_step(m.adam.sdf, cfg.adam, m.sdf_net.params(), m.iteration, "mlp_d");
        adam_step(m.adam.color, cfg.adam, m.color_net.params(), m.iteration, "mlp_c");
        const ParamRef e = param_ref(m.embeddings.values, m.embeddings.grads);
        adam_step(m.adam.embed, cfg.adam, std::span<const ParamRef>(&e, 1), m.iteration, "embeddings");
        if (cfg.enable_refinement) {
            const ParamRef r = param_ref(m.refinement.values, m.refinement.grads);
            adam_step(m.adam.refine, cfg.adam, std::span<const ParamRef>(&r, 1), m.iteration, "refinement");
        }
        if (cfg.enable_pose_opt) {
            const ParamRef p = param_ref(m.pose_deltas.values, m.pose_deltas.grads);
            adam_step(m.adam.pose, cfg.adam, std::span<const ParamRef>(&p, 1), m.iteration, "pose_deltas");
        }
        if (cfg.enable_deformation) adam_step(m.adam.deform, cfg.adam, m.deformation.net.params(), m.iteration, "deformation");
        ++it;
        ++m.iteration;
    }
}

} // namespace detail

inline void phase2_train(SceneModel &m, const PhaseContext &ctx, const TrainConfig &cfg, const TrainHooks &hooks = {},
                         std::optional<std::int64_t> until = {}) {
    detail::ray_phase(m, 2, ctx, cfg, hooks, until);
}

/// Halves the grid cell size once, with fresh optimizer moments for the new
/// grid; decoder moments carry over.
inline void subdivide_model(SceneModel &m, const TrainConfig &cfg) {
    if (m.subdivided) return;
    m.grid = subdivide(m.grid, cfg.max_grid_bytes);
    m.adam.grid.reset();
    m.subdivided = true;
}

inline void phase3_train(SceneModel &m, const PhaseContext &ctx, const TrainConfig &cfg, const TrainHooks &hooks = {},
                         std::optional<std::int64_t> until = {}) {
    if (m.phase_iters[1] < cfg.phase2_iters) throw InvalidParameterError("phase 3: phase 2 has not finished");
    subdivide_model(m, cfg);
    detail::ray_phase(m, 3, ctx, cfg, hooks, until);
}

/// Loss on a fixed, seed-determined ray set without touching gradients.
inline LossParts evaluate_validation(SceneModel &m, const FrameSet &frames, const TrainConfig &cfg, int rays, std::uint64_t seed = 7,
                                     bool with_fine = false) {
    std::mt19937_64 rng = iteration_rng(seed, 99, 0);
    const SampleBatch batch = build_batch(m, frames, cfg, rays, cfg.resolved_ray_length(m.grid.bounds), with_fine, rng);
    return evaluate_batch(m, frames, cfg, batch, false);
}

struct ScheduleOptions {
    std::filesystem::path checkpoint_prefix; // empty: no checkpoints
    TrainHooks hooks;
    int last_phase = 3;
};

struct ScheduleResult {
    SceneModel model;
    TsdfVolume prior;
};

inline std::filesystem::path phase_checkpoint_path(const std::filesystem::path &prefix, int phase) {
    std::filesystem::path p = prefix;
    p += ".phase" + std::to_string(phase) + ".fsrf";
    return p;
}

/// Runs whatever remains of the schedule for `m`, writing a checkpoint after each phase.
inline void continue_schedule(SceneModel &m, const TsdfVolume &prior, const FrameSet &frames, const TrainConfig &cfg,
                              const ScheduleOptions &opt = {}) {
    PhaseContext ctx = make_context(m, frames, cfg, &prior);
    auto checkpoint = [&](int phase) {
        if (opt.checkpoint_prefix.empty()) return;
        const auto path = phase_checkpoint_path(opt.checkpoint_prefix, phase);
        save_checkpoint(path, m, cfg);
        ctx.last_checkpoint = path.string();
    };
    if (m.phase_iters[0] < cfg.phase1_iters && cfg.enable_tsdf_prior) {
        phase1_pretrain(m, prior, cfg, opt.hooks, {}, &ctx);
        checkpoint(1);
    }
    if (opt.last_phase < 2) return;
    if (m.phase_iters[1] < cfg.phase2_iters) {
        phase2_train(m, ctx, cfg, opt.hooks);
        checkpoint(2);
    }
    if (opt.last_phase < 3) return;
    if (m.phase_iters[2] < cfg.phase3_iters) {
        phase3_train(m, ctx, cfg, opt.hooks);
        checkpoint(3);
    }
}

/// Fusion, then the three phases from a freshly initialized model.
inline ScheduleResult run_schedule(const FrameSet &frames, const TrainConfig &cfg, const ScheduleOptions &opt = {}) {
    cfg.validate();
    frames.validate();
    const BoundingBox bounds = compute_scene_bounds(frames, cfg.resolved_bounds_margin());
    ScheduleResult out{SceneModel::create(bounds, frames.size(), cfg), run_fusion(frames, bounds, cfg.gs, cfg.tr)};
    continue_schedule(out.model, out.prior, frames, cfg, opt);
    return out;
}

} // namespace fastsurf
