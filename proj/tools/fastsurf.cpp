// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0

// fastsurf: synthesize, fuse, train, extract and evaluate.

#include "fastsurf.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace fastsurf;

namespace {

struct Perturbation {
    std::size_t frame = 0;
    FrameRefinement truth;
};

// "I:sx,sy,tx,ty"
Perturbation parse_perturbation(const std::string &text) {
    Perturbation p;
    char tail = 0;
    unsigned long long frame = 0;
    if (std::sscanf(text.c_str(), "%llu:%lf,%lf,%lf,%lf%c", &frame, &p.truth.sx, &p.truth.sy, &p.truth.tx, &p.truth.ty, &tail) != 5) {
        throw InvalidParameterError("--perturb-frame expects I:sx,sy,tx,ty, got '" + text + "'");
    }
    p.frame = static_cast<std::size_t>(frame);
    return p;
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path);
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

struct SynthArgs {
    std::string scene = "box";
    int frames = 30;
    int width = 160, height = 120;
    std::string noise = "none";
    std::vector<std::string> perturb;
    std::uint64_t seed = 0;
    double gt_resolution = 0.02;
    fs::path out;
};

void synth(const SynthArgs &a) {
    SyntheticScene scene = make_scene(a.scene, a.frames, default_intrinsics(a.width, a.height));
    for (const auto &text : a.perturb) {
        const Perturbation p = parse_perturbation(text);
        perturb_intrinsics(scene, p.frame, p.truth);
    }
    FrameSet frames = render_frames(scene);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        DepthNoise noise = a.noise == "kinect" ? DepthNoise::kinect(a.seed + i) : DepthNoise::none();
        frames.frames[i].depth = corrupt_depth(frames.frames[i].depth, noise);
    }
    save_dataset(frames, a.out);
    save_ply(a.out / "gt_mesh.ply", ground_truth_mesh(scene, a.gt_resolution));
    std::cout << "wrote " << frames.size() << " frames and gt_mesh.ply to " << a.out.string() << '\n';
}

struct FuseArgs {
    fs::path data;
    double gs = 0.1, tr = 0.05;
    double margin = -1.0;
    fs::path out, mesh;
};

void fuse(const FuseArgs &a) {
    const FrameSet frames = load_dataset(a.data);
    const BoundingBox bounds = compute_scene_bounds(frames, a.margin < 0.0 ? 2.0 * a.tr : a.margin);
    const TsdfVolume vol = run_fusion(frames, bounds, a.gs, a.tr);
    save_volume(a.out, vol);
    std::cout << "fused " << frames.size() << " frames into " << vol.dims.nx << 'x' << vol.dims.ny << 'x' << vol.dims.nz << " vertices\n";
    if (!a.mesh.empty()) {
        const TriangleMesh m = extract_mesh(tsdf_sampler(vol), vol.bounds, a.gs);
        save_ply(a.mesh, m);
        std::cout << "mesh: " << m.vertices.size() << " vertices, " << m.triangles.size() << " triangles\n";
    }
}

struct TrainArgs {
    fs::path data, config, out, log;
    double scale = 1.0;
    std::vector<std::string> ablate;
    std::vector<std::string> set;
    bool phase_checkpoints = false;
};

void train(const TrainArgs &a) {
    TrainConfig cfg;
    if (!a.config.empty()) cfg = load_config(a.config);
    for (const auto &kv : a.set) {
        std::istringstream line(kv);
        parse_config(line, cfg, "--set");
    }
    if (a.scale != 1.0) cfg.apply_scale(a.scale);
    for (const auto &ab : a.ablate) {
        if (ab == "no-refine") cfg.enable_refinement = false;
        else if (ab == "no-prior") cfg.enable_tsdf_prior = false;
        else if (ab == "no-deform") cfg.enable_deformation = false;
        else if (ab == "no-pose") cfg.enable_pose_opt = false;
        else throw InvalidParameterError("--ablate: unknown ablation '" + ab + "'");
    }
    cfg.validate();
    const FrameSet frames = load_dataset(a.data);
    std::ofstream log;
    ScheduleOptions opt;
    if (!a.log.empty()) {
        log.open(a.log);
        if (!log) throw IoError("cannot open " + a.log.string());
        opt.hooks.log = &log;
    }
    if (a.phase_checkpoints) {
        opt.checkpoint_prefix = a.out;
        opt.checkpoint_prefix.replace_extension();
    }
    const ScheduleResult r = run_schedule(frames, cfg, opt);
    save_checkpoint(a.out, r.model, cfg);
    std::cout << "trained " << r.model.iteration << " iterations; checkpoint " << a.out.string() << '\n';
}

void extract(const fs::path &ckpt, double resolution, const fs::path &out) {
    const Checkpoint ck = load_checkpoint(ckpt);
    const TriangleMesh m = extract_mesh(model_sampler(ck.model), ck.model.grid.bounds, resolution);
    save_ply(out, m);
    std::cout << "mesh: " << m.vertices.size() << " vertices, " << m.triangles.size() << " triangles\n";
}

struct EvalArgs {
    fs::path pred, gt, out;
    double tau = 0.05, edge = 0.1, sample_res = 0.01;
    std::uint64_t seed = 0;
};

void evaluate(const EvalArgs &a) {
    const MetricReport r = evaluate_meshes(load_ply(a.pred), load_ply(a.gt), a.tau, a.edge, a.sample_res, a.seed);
    std::cout << r.table();
    if (!a.out.empty()) write_text(a.out, r.record() + "\n" + r.table());
}

} // namespace

int main(int argc, char **argv) {
    retain_large_allocations();
    CLI::App app{"Neural RGB-D surface reconstruction on a dense feature grid"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto *s = app.add_subcommand("synth", "Render a synthetic RGB-D dataset");
    s->add_option("--scene", sa.scene, "box or cluttered")->check(CLI::IsMember({"box", "cluttered"}));
    s->add_option("--frames", sa.frames)->check(CLI::PositiveNumber);
    s->add_option("--width", sa.width)->check(CLI::PositiveNumber);
    s->add_option("--height", sa.height)->check(CLI::PositiveNumber);
    s->add_option("--noise-preset", sa.noise)->check(CLI::IsMember({"none", "kinect"}));
    s->add_option("--perturb-frame", sa.perturb, "I:sx,sy,tx,ty (repeatable)");
    s->add_option("--seed", sa.seed);
    s->add_option("--gt-resolution", sa.gt_resolution, "marching-cubes step of gt_mesh.ply");
    s->add_option("--out", sa.out)->required();

    FuseArgs fa;
    auto *f = app.add_subcommand("fuse", "TSDF fusion of a dataset");
    f->add_option("--data", fa.data)->required()->check(CLI::ExistingDirectory);
    f->add_option("--gs", fa.gs)->check(CLI::PositiveNumber);
    f->add_option("--tr", fa.tr)->check(CLI::PositiveNumber);
    f->add_option("--margin", fa.margin, "bounding-box margin (default 2 * tr)");
    f->add_option("--out", fa.out)->required();
    f->add_option("--mesh", fa.mesh);

    TrainArgs ta;
    auto *t = app.add_subcommand("train", "Three-phase training");
    t->add_option("--data", ta.data)->required()->check(CLI::ExistingDirectory);
    t->add_option("--config", ta.config)->check(CLI::ExistingFile);
    t->add_option("--set", ta.set, "key=value override (repeatable)");
    t->add_option("--scale", ta.scale, "multiply all phase lengths")->check(CLI::PositiveNumber);
    t->add_option("--ablate", ta.ablate, "no-refine, no-prior, no-deform or no-pose (repeatable)");
    t->add_option("--out", ta.out)->required();
    t->add_option("--log", ta.log, "metrics log");
    t->add_flag("--phase-checkpoints", ta.phase_checkpoints, "also write <out>.phaseN.fsrf after each phase");

    fs::path ckpt, mesh_out;
    double resolution = 0.01;
    auto *x = app.add_subcommand("extract", "Marching cubes of a trained model");
    x->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
    x->add_option("--resolution", resolution)->check(CLI::PositiveNumber);
    x->add_option("--out", mesh_out)->required();

    EvalArgs ea;
    auto *e = app.add_subcommand("eval", "Compare a mesh against ground truth");
    e->add_option("--pred", ea.pred)->required()->check(CLI::ExistingFile);
    e->add_option("--gt", ea.gt)->required()->check(CLI::ExistingFile);
    e->add_option("--fscore-tau", ea.tau)->check(CLI::PositiveNumber);
    e->add_option("--iou-edge", ea.edge)->check(CLI::PositiveNumber);
    e->add_option("--sample-res", ea.sample_res)->check(CLI::PositiveNumber);
    e->add_option("--seed", ea.seed);
    e->add_option("--out", ea.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    try {
        if (*s) synth(sa);
        if (*f) fuse(fa);
        if (*t) train(ta);
        if (*x) extract(ckpt, resolution, mesh_out);
        if (*e) evaluate(ea);
    } catch (const std::exception &ex) {
        std::cerr << "fastsurf: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
