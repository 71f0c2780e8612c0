// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0

// A short training run on a low-resolution render, printing the loss every
// few hundred iterations and writing the extracted surface.

#include "fastsurf.hpp"

#include <iostream>

int main(int argc, char **argv) {
    using namespace fastsurf;
    retain_large_allocations();
    const double scale = argc > 1 ? std::stod(argv[1]) : 0.02;
    const FrameSet frames = render_frames(make_scene("box", 8, default_intrinsics(80, 60)));

    TrainConfig cfg;
    cfg.decoder_hidden = 32;
    cfg.deform_hidden = 16;
    cfg.ray_batch = 64;
    cfg.cell_batch = 512;
    cfg.apply_scale(scale);

    ScheduleOptions opt;
    opt.hooks.log = &std::cout;
    const ScheduleResult r = run_schedule(frames, cfg, opt);

    const TriangleMesh mesh = extract_mesh(model_sampler(r.model), r.model.grid.bounds, 0.02);
    save_ply("small_scene.ply", mesh);
    std::cout << "extracted " << mesh.triangles.size() << " triangles\n";
    return 0;
}
