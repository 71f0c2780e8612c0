// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fastsurf.hpp"

#include <openssl/evp.h>

#include <iomanip>
#include <sstream>

namespace fastsurf::testing {

/// Low-resolution render of the box room.
inline FrameSet tiny_box_frames(int frames = 4, int width = 40, int height = 30) {
    return render_frames(make_scene("box", frames, default_intrinsics(width, height)));
}

/// Small networks and batches that keep a training iteration in the millisecond range.
inline TrainConfig tiny_config() {
    TrainConfig c;
    c.gs = 0.2;
    c.tr = 0.1;
    c.feature_len = 4;
    c.decoder_hidden = 16;
    c.deform_hidden = 8;
    c.ray_batch = 16;
    c.cell_batch = 128;
    c.coarse_step = 0.0625;
    c.fine_samples = 4;
    c.phase1_iters = 20;
    c.phase2_iters = 10;
    c.phase3_iters = 5;
    c.log_every = 1;
    c.adam.lr = 5e-3;
    return c;
}

/// SHA-256 over the doubles of every listed buffer.
class ParamHasher {
public:
    ParamHasher() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
    ~ParamHasher() { EVP_MD_CTX_free(ctx_); }
    ParamHasher(const ParamHasher &) = delete;
    ParamHasher &operator=(const ParamHasher &) = delete;

    ParamHasher &add(const double *p, std::size_t n) {
        EVP_DigestUpdate(ctx_, p, n * sizeof(double));
        return *this;
    }
    ParamHasher &add(const MatX &m) { return add(m.data(), static_cast<std::size_t>(m.size())); }
    ParamHasher &add(const VecX &v) { return add(v.data(), static_cast<std::size_t>(v.size())); }
    ParamHasher &add(const std::vector<double> &v) { return add(v.data(), v.size()); }
    ParamHasher &add(const Mlp &net) {
        for (const auto &l : net.layers) add(l.weight).add(l.bias);
        return *this;
    }

    std::string hex() {
        unsigned char out[EVP_MAX_MD_SIZE];
        unsigned int n = 0;
        EVP_DigestFinal_ex(ctx_, out, &n);
        std::ostringstream os;
        for (unsigned int i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(out[i]);
        return os.str();
    }

private:
    EVP_MD_CTX *ctx_;
};

inline std::string frozen_in_pretraining_hash(const SceneModel &m) {
    ParamHasher h;
    h.add(m.color_net).add(m.embeddings.values).add(m.refinement.values).add(m.pose_deltas.values).add(m.deformation.net);
    return h.hex();
}

inline bool same_parameters(const SceneModel &a, const SceneModel &b) {
    auto same_net = [](const Mlp &x, const Mlp &y) {
        if (x.layers.size() != y.layers.size()) return false;
        for (std::size_t i = 0; i < x.layers.size(); ++i) {
            if (x.layers[i].weight != y.layers[i].weight || x.layers[i].bias != y.layers[i].bias) return false;
        }
        return true;
    };
    return a.grid.dims == b.grid.dims && a.grid.features == b.grid.features && same_net(a.sdf_net, b.sdf_net) &&
           same_net(a.color_net, b.color_net) && a.embeddings.values == b.embeddings.values && a.refinement.values == b.refinement.values &&
           a.pose_deltas.values == b.pose_deltas.values && same_net(a.deformation.net, b.deformation.net) && a.iteration == b.iteration;
}

} // namespace fastsurf::testing
