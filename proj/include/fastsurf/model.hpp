// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training configuration, the full set of learnable state, and the
// checkpoint container.

#include "fastsurf/feature_grid.hpp"
#include "fastsurf/render.hpp"
#include "fastsurf/tsdf.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

namespace fastsurf {

struct TrainConfig {
    int feature_len = 12;
    double gs = 0.1;
    double tr = 0.05;
    int embed_dim = 4;
    int pe_levels = 4;
    int deform_pe_levels = 4;
    int decoder_hidden = 128;
    int decoder_layers = 2;
    int deform_hidden = 64;
    int deform_layers = 2;

    LossWeights weights;
    AdamConfig adam;

    std::int64_t phase1_iters = 3000;
    std::int64_t phase2_iters = 7000;
    std::int64_t phase3_iters = 65000;
    int cell_batch = 1024;
    int ray_batch = 0;       // 0: clamp(total_pixels / 50000, 768, 2048)
    double ray_length = 0.0; // 0: scene diagonal clamped to [4, 10] m
    double coarse_step = 0.015625;
    int fine_samples = 16;
    bool jitter = false;

    bool enable_refinement = true;
    bool enable_tsdf_prior = true;
    bool enable_deformation = true;
    bool enable_pose_opt = true;

    std::uint64_t seed = 0;
    std::int64_t log_every = 100;
    double bounds_margin = -1.0; // negative: 2 * tr
    double max_grid_bytes = 8.0 * (1ull << 30);

    /// Scales the three phase lengths by one factor, keeping each at least 1.
    void apply_scale(double scale) {
        if (!(scale > 0.0)) throw InvalidParameterError("config: scale must be positive");
        auto s = [scale](std::int64_t n) { return std::max<std::int64_t>(1, std::llround(static_cast<double>(n) * scale)); };
        phase1_iters = s(phase1_iters);
        phase2_iters = s(phase2_iters);
        phase3_iters = s(phase3_iters);
    }

    int resolved_ray_batch(const FrameSet &frames) const {
        if (ray_batch > 0) return ray_batch;
        return static_cast<int>(std::clamp<std::size_t>(frames.total_pixels() / 50000, 768, 2048));
    }

    double resolved_bounds_margin() const { return bounds_margin < 0.0 ? 2.0 * tr : bounds_margin; }

    double resolved_ray_length(const BoundingBox &bounds) const {
        if (ray_length > 0.0) return ray_length;
        return std::clamp(bounds.extents().norm(), 4.0, 10.0);
    }

    void validate() const {
        auto positive = [](bool ok, const char *what) {
            if (!ok) throw InvalidParameterError(std::string("config: ") + what + " must be positive");
        };
        positive(feature_len > 0, "feature_len");
        positive(gs > 0.0, "gs");
        positive(tr > 0.0, "tr");
        positive(embed_dim > 0, "embed_dim");
        positive(pe_levels >= 0, "pe_levels");
        positive(decoder_hidden > 0 && decoder_layers > 0, "decoder size");
        positive(deform_hidden > 0 && deform_layers > 0, "deformation size");
        positive(phase1_iters > 0 && phase2_iters > 0 && phase3_iters > 0, "phase iteration counts");
        positive(cell_batch > 0, "cell_batch");
        positive(ray_batch >= 0, "ray_batch");
        positive(ray_length >= 0.0, "ray_length");
        positive(coarse_step > 0.0, "coarse_step");
        positive(fine_samples >= 0, "fine_samples");
        positive(adam.lr > 0.0 && adam.decay_steps > 0.0, "learning rate schedule");
        positive(log_every > 0, "log_every");
        if (weights.fs < 0 || weights.sdf < 0 || weights.rgb < 0 || weights.reg < 0) {
            throw InvalidParameterError("config: loss weights must be nonnegative");
        }
    }
};

namespace detail {

template <typename T>
T parse_number(const std::string &key, const std::string &text) {
    T value{};
    const char *b = text.data();
    const char *e = b + text.size();
    auto [ptr, ec] = std::from_chars(b, e, value);
    if (ec != std::errc() || ptr != e) throw ParseError("config: bad value '" + text + "' for " + key);
    return value;
}

inline bool parse_bool(const std::string &key, const std::string &text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ParseError("config: bad boolean '" + text + "' for " + key);
}

inline std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

using ConfigSetter = std::function<void(TrainConfig &, const std::string &, const std::string &)>;

inline const std::map<std::string, ConfigSetter> &config_setters() {
    static const std::map<std::string, ConfigSetter> table = [] {
        std::map<std::string, ConfigSetter> t;
        auto i = [&](const char *k, auto member) {
            t[k] = [member](TrainConfig &c, const std::string &key, const std::string &v) {
                c.*member = parse_number<std::remove_reference_t<decltype(c.*member)>>(key, v);
            };
        };
        auto b = [&](const char *k, bool TrainConfig::*member) {
            t[k] = [member](TrainConfig &c, const std::string &key, const std::string &v) { c.*member = parse_bool(key, v); };
        };
        i("feature_len", &TrainConfig::feature_len);
        i("gs", &TrainConfig::gs);
        i("tr", &TrainConfig::tr);
        i("embed_dim", &TrainConfig::embed_dim);
        i("pe_levels", &TrainConfig::pe_levels);
        i("deform_pe_levels", &TrainConfig::deform_pe_levels);
        i("decoder_hidden", &TrainConfig::decoder_hidden);
        i("decoder_layers", &TrainConfig::decoder_layers);
        i("deform_hidden", &TrainConfig::deform_hidden);
        i("deform_layers", &TrainConfig::deform_layers);
        i("phase1_iters", &TrainConfig::phase1_iters);
        i("phase2_iters", &TrainConfig::phase2_iters);
        i("phase3_iters", &TrainConfig::phase3_iters);
        i("cell_batch", &TrainConfig::cell_batch);
        i("ray_batch", &TrainConfig::ray_batch);
        i("ray_length", &TrainConfig::ray_length);
        i("coarse_step", &TrainConfig::coarse_step);
        i("fine_samples", &TrainConfig::fine_samples);
        i("seed", &TrainConfig::seed);
        i("log_every", &TrainConfig::log_every);
        i("bounds_margin", &TrainConfig::bounds_margin);
        i("max_grid_bytes", &TrainConfig::max_grid_bytes);
        b("jitter", &TrainConfig::jitter);
        b("enable_refinement", &TrainConfig::enable_refinement);
        b("enable_tsdf_prior", &TrainConfig::enable_tsdf_prior);
        b("enable_deformation", &TrainConfig::enable_deformation);
        b("enable_pose_opt", &TrainConfig::enable_pose_opt);
        auto d = [&](const char *k, auto field) {
            t[k] = [field](TrainConfig &c, const std::string &key, const std::string &v) { field(c) = parse_number<double>(key, v); };
        };
        d("lambda_fs", [](TrainConfig &c) -> double & { return c.weights.fs; });
        d("lambda_sdf", [](TrainConfig &c) -> double & { return c.weights.sdf; });
        d("lambda_rgb", [](TrainConfig &c) -> double & { return c.weights.rgb; });
        d("lambda_reg", [](TrainConfig &c) -> double & { return c.weights.reg; });
        d("lr", [](TrainConfig &c) -> double & { return c.adam.lr; });
        d("beta1", [](TrainConfig &c) -> double & { return c.adam.beta1; });
        d("beta2", [](TrainConfig &c) -> double & { return c.adam.beta2; });
        d("adam_epsilon", [](TrainConfig &c) -> double & { return c.adam.epsilon; });
        d("lr_decay_factor", [](TrainConfig &c) -> double & { return c.adam.decay_factor; });
        d("lr_decay_steps", [](TrainConfig &c) -> double & { return c.adam.decay_steps; });
        return t;
    }();
    return table;
}

} // namespace detail

/// Applies `key = value` lines onto `cfg`. Blank lines and `#` comments are
/// ignored; unknown keys are errors.
inline void parse_config(std::istream &in, TrainConfig &cfg, const std::string &source = "config") {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(source + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const auto &setters = detail::config_setters();
        auto it = setters.find(key);
        if (it == setters.end()) throw ParseError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        try {
            it->second(cfg, key, value);
        } catch (const ParseError &e) {
            throw ParseError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline TrainConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    TrainConfig cfg;
    parse_config(in, cfg, path.string());
    cfg.validate();
    return cfg;
}

/// Serializes every key parse_config understands.
inline std::string format_config(const TrainConfig &c) {
    std::ostringstream o;
    o.precision(17);
    auto b = [](bool v) { return v ? "true" : "false"; };
    o << "feature_len = " << c.feature_len << "\ngs = " << c.gs << "\ntr = " << c.tr << "\nembed_dim = " << c.embed_dim
      << "\npe_levels = " << c.pe_levels << "\ndeform_pe_levels = " << c.deform_pe_levels << "\ndecoder_hidden = " << c.decoder_hidden
      << "\ndecoder_layers = " << c.decoder_layers << "\ndeform_hidden = " << c.deform_hidden << "\ndeform_layers = " << c.deform_layers
      << "\nlambda_fs = " << c.weights.fs << "\nlambda_sdf = " << c.weights.sdf << "\nlambda_rgb = " << c.weights.rgb
      << "\nlambda_reg = " << c.weights.reg << "\nlr = " << c.adam.lr << "\nbeta1 = " << c.adam.beta1 << "\nbeta2 = " << c.adam.beta2
      << "\nadam_epsilon = " << c.adam.epsilon << "\nlr_decay_factor = " << c.adam.decay_factor
      << "\nlr_decay_steps = " << c.adam.decay_steps << "\nphase1_iters = " << c.phase1_iters << "\nphase2_iters = " << c.phase2_iters
      << "\nphase3_iters = " << c.phase3_iters << "\ncell_batch = " << c.cell_batch << "\nray_batch = " << c.ray_batch
      << "\nray_length = " << c.ray_length << "\ncoarse_step = " << c.coarse_step << "\nfine_samples = " << c.fine_samples
      << "\njitter = " << b(c.jitter) << "\nenable_refinement = " << b(c.enable_refinement)
      << "\nenable_tsdf_prior = " << b(c.enable_tsdf_prior) << "\nenable_deformation = " << b(c.enable_deformation)
      << "\nenable_pose_opt = " << b(c.enable_pose_opt) << "\nseed = " << c.seed << "\nlog_every = " << c.log_every
      << "\nbounds_margin = " << c.bounds_margin << "\nmax_grid_bytes = " << c.max_grid_bytes << "\n";
    return o.str();
}

/// Everything a training run learns, plus optimizer state and progress.
struct SceneModel {
    FeatureGrid grid;
    Mlp sdf_net;
    Mlp color_net;
    EmbeddingTable embeddings;
    RefinementParams refinement;
    PoseDeltas pose_deltas;
    DeformationField deformation;

    struct Optimizers {
        AdamState grid, sdf, color, embed, refine, pose, deform;
    } adam;

    std::int64_t phase_iters[3] = {0, 0, 0};
    std::int64_t iteration = 0; // global, drives the lr schedule
    bool subdivided = false;
    double tr = 0.05;
    int pe_levels = 4;

    static SceneModel create(const BoundingBox &bounds, std::size_t frame_count, const TrainConfig &cfg) {
        cfg.validate();
        std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
        SceneModel m;
        m.tr = cfg.tr;
        m.pe_levels = cfg.pe_levels;
        m.grid = FeatureGrid::create(bounds, cfg.gs, cfg.feature_len);
        const std::vector<int> hidden(static_cast<std::size_t>(cfg.decoder_layers), cfg.decoder_hidden);
        m.sdf_net = Mlp::create(cfg.feature_len, hidden, 1, Activation::Relu, Activation::None, rng);
        calibrate_zero_input_output(m.sdf_net, cfg.tr);
        m.color_net = Mlp::create(cfg.feature_len + encoded_length(cfg.pe_levels) + cfg.embed_dim, hidden, 3, Activation::Relu,
                                  Activation::Sigmoid, rng);
        m.embeddings = EmbeddingTable::create(cfg.embed_dim, frame_count);
        m.refinement = RefinementParams::create(frame_count);
        m.pose_deltas = PoseDeltas::create(frame_count);
        m.deformation = DeformationField::create(cfg.deform_hidden, cfg.deform_layers, cfg.deform_pe_levels, rng);
        return m;
    }

    std::size_t frame_count() const { return refinement.frames(); }

    void zero_grads() {
        grid.zero_grads();
        sdf_net.zero_grads();
        color_net.zero_grads();
        embeddings.zero_grads();
        refinement.zero_grads();
        pose_deltas.zero_grads();
        deformation.net.zero_grads();
    }

    /// D-hat at a world point, nullopt outside the lattice.
    std::optional<double> sdf_at(const Vec3 &p) const {
        auto s = grid.locate(p);
        if (!s) return std::nullopt;
        VecX f(grid.feature_len());
        grid.gather(*s, f);
        return mlp_eval(sdf_net, f)(0, 0);
    }

    /// Batched D-hat; valid[i] = 0 where points[i] is outside the lattice.
    void sdf_batch(std::span<const Vec3> points, std::span<double> values, std::span<std::uint8_t> valid) const {
        MatX phi(grid.feature_len(), static_cast<Eigen::Index>(points.size()));
        std::vector<Eigen::Index> cols;
        cols.reserve(points.size());
        Eigen::Index n = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto s = grid.locate(points[i]);
            valid[i] = s ? 1 : 0;
            if (!s) continue;
            grid.gather(*s, phi.col(n++));
            cols.push_back(static_cast<Eigen::Index>(i));
        }
        if (n == 0) return;
        const MatX out = mlp_eval(sdf_net, phi.leftCols(n));
        for (Eigen::Index c = 0; c < n; ++c) values[static_cast<std::size_t>(cols[static_cast<std::size_t>(c)])] = out(0, c);
    }
};

// Checkpoint container (little-endian):
//   "FSRF" | u32 version | u32 scalar bytes (4 or 8)
//   then sections: 4-byte tag | u64 payload length | payload
// Scalar payloads are written at the header's width; readers accept both.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class SectionWriter {
public:
    explicit SectionWriter(std::uint32_t scalar_bytes) : scalar_(scalar_bytes), w_(buf_) {}

    void u64(std::uint64_t v) { w_.write(v); }
    void i64(std::int64_t v) { w_.write(v); }
    void u32(std::uint32_t v) { w_.write(v); }
    void scalar(double v) {
        if (scalar_ == 8) {
            w_.write(v);
        } else {
            w_.write(static_cast<float>(v));
        }
    }
    void f64(double v) { w_.write(v); }
    void text(const std::string &t) {
        u64(t.size());
        w_.write_bytes(t.data(), t.size());
    }
    void scalars(const double *p, std::size_t n) {
        u64(n);
        for (std::size_t i = 0; i < n; ++i) scalar(p[i]);
    }
    /// Row-major matrix with its shape.
    void matrix(const MatX &m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) scalar(m(r, c));
        }
    }
    void mlp(const Mlp &net) {
        u32(static_cast<std::uint32_t>(net.layers.size()));
        u32(static_cast<std::uint32_t>(net.hidden_activation));
        u32(static_cast<std::uint32_t>(net.output_activation));
        for (const auto &l : net.layers) {
            matrix(l.weight);
            scalars(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
        }
    }
    void adam(const AdamState &s) {
        i64(s.step);
        u64(s.m.size());
        for (std::size_t i = 0; i < s.m.size(); ++i) {
            scalars(s.m[i].data(), static_cast<std::size_t>(s.m[i].size()));
            scalars(s.v[i].data(), static_cast<std::size_t>(s.v[i].size()));
        }
    }

    void flush(BinaryWriter &out, const char (&tag)[5]) {
        const std::string bytes = buf_.str();
        out.write_tag(tag);
        out.write<std::uint64_t>(bytes.size());
        out.write_bytes(bytes.data(), bytes.size());
        buf_.str({});
    }

private:
    std::uint32_t scalar_;
    std::ostringstream buf_;
    BinaryWriter w_;
};

class SectionReader {
public:
    SectionReader(const std::string &payload, std::uint32_t scalar_bytes, std::string source)
        : scalar_(scalar_bytes), in_(payload), r_(in_, std::move(source)) {}

    std::uint64_t u64() { return r_.read<std::uint64_t>(); }
    std::int64_t i64() { return r_.read<std::int64_t>(); }
    std::uint32_t u32() { return r_.read<std::uint32_t>(); }
    double f64() { return r_.read<double>(); }
    std::string text() {
        const auto n = u64();
        if (n > (1ull << 24)) throw ParseError(r_.source() + ": implausible text length");
        std::string t(n, '\0');
        r_.read_bytes(t.data(), n);
        return t;
    }
    double scalar() { return scalar_ == 8 ? r_.read<double>() : static_cast<double>(r_.read<float>()); }

    template <typename V>
    void scalars(V &out) {
        const auto n = u64();
        if (n > (1ull << 36)) throw ParseError(r_.source() + ": implausible array length");
        out.resize(static_cast<Eigen::Index>(n));
        for (std::uint64_t i = 0; i < n; ++i) out[static_cast<Eigen::Index>(i)] = scalar();
    }
    MatX matrix() {
        const auto rows = u64(), cols = u64();
        if (rows * cols > (1ull << 36)) throw ParseError(r_.source() + ": implausible matrix shape");
        MatX m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scalar();
        }
        return m;
    }
    Mlp mlp() {
        Mlp net;
        const auto n = u32();
        net.hidden_activation = static_cast<Activation>(u32());
        net.output_activation = static_cast<Activation>(u32());
        for (std::uint32_t i = 0; i < n; ++i) {
            DenseLayer l;
            l.weight = matrix();
            scalars(l.bias);
            if (l.bias.size() != l.weight.rows()) throw ParseError(r_.source() + ": layer bias does not match weight");
            l.weight_grad = MatX::Zero(l.weight.rows(), l.weight.cols());
            l.bias_grad = VecX::Zero(l.bias.size());
            net.layers.push_back(std::move(l));
        }
        for (std::size_t i = 1; i < net.layers.size(); ++i) {
            if (net.layers[i].weight.cols() != net.layers[i - 1].weight.rows()) throw ParseError(r_.source() + ": layer shapes disagree");
        }
        return net;
    }
    AdamState adam() {
        AdamState s;
        s.step = i64();
        const auto n = u64();
        s.m.resize(n);
        s.v.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            scalars(s.m[i]);
            scalars(s.v[i]);
        }
        return s;
    }

private:
    std::uint32_t scalar_;
    std::istringstream in_;
    BinaryReader r_;
};

} // namespace detail

inline void write_checkpoint(std::ostream &out, const SceneModel &m, const TrainConfig &cfg, std::uint32_t scalar_bytes = 8) {
    if (scalar_bytes != 4 && scalar_bytes != 8) throw InvalidParameterError("checkpoint: scalar width must be 4 or 8");
    BinaryWriter w(out);
    w.write_tag("FSRF");
    w.write<std::uint32_t>(kCheckpointVersion);
    w.write<std::uint32_t>(scalar_bytes);
    detail::SectionWriter s(scalar_bytes);

    s.u64(static_cast<std::uint64_t>(m.grid.dims.nx));
    s.u64(static_cast<std::uint64_t>(m.grid.dims.ny));
    s.u64(static_cast<std::uint64_t>(m.grid.dims.nz));
    for (int a = 0; a < 3; ++a) s.f64(m.grid.bounds.min_corner[a]);
    for (int a = 0; a < 3; ++a) s.f64(m.grid.bounds.max_corner[a]);
    s.f64(m.grid.gs);
    s.matrix(m.grid.features);
    s.flush(w, "GRID");
    s.mlp(m.sdf_net);
    s.flush(w, "MLPD");
    s.mlp(m.color_net);
    s.flush(w, "MLPC");
    s.matrix(m.embeddings.values);
    s.flush(w, "EMBD");
    s.scalars(m.refinement.values.data(), m.refinement.values.size());
    s.flush(w, "REFN");
    s.scalars(m.pose_deltas.values.data(), m.pose_deltas.values.size());
    s.flush(w, "POSE");
    s.u32(static_cast<std::uint32_t>(m.deformation.levels));
    s.mlp(m.deformation.net);
    s.flush(w, "DEFM");
    for (const AdamState *a : {&m.adam.grid, &m.adam.sdf, &m.adam.color, &m.adam.embed, &m.adam.refine, &m.adam.pose, &m.adam.deform}) {
        s.adam(*a);
    }
    s.flush(w, "ADAM");
    for (auto n : m.phase_iters) s.i64(n);
    s.i64(m.iteration);
    s.u32(m.subdivided ? 1 : 0);
    s.f64(m.tr);
    s.u32(static_cast<std::uint32_t>(m.pe_levels));
    s.flush(w, "CNTR");
    s.text(format_config(cfg));
    s.flush(w, "CONF");
    if (!w.good()) throw IoError("checkpoint: write failed");
}

struct Checkpoint {
    SceneModel model;
    TrainConfig config;
};

inline Checkpoint read_checkpoint(std::istream &in, const std::string &source) {
    BinaryReader r(in, source);
    if (r.read_tag() != "FSRF") throw ParseError(source + ": not a checkpoint (bad magic)");
    const auto version = r.read<std::uint32_t>();
    if (version != kCheckpointVersion) throw ParseError(source + ": unsupported checkpoint version " + std::to_string(version));
    const auto width = r.read<std::uint32_t>();
    if (width != 4 && width != 8) throw ParseError(source + ": bad scalar width " + std::to_string(width));

    std::map<std::string, std::string> sections;
    while (in.peek() != std::char_traits<char>::eof()) {
        const std::string tag = r.read_tag();
        const auto len = r.read<std::uint64_t>();
        if (len > (1ull << 40)) throw ParseError(source + ": implausible section length");
        std::string payload(len, '\0');
        r.read_bytes(payload.data(), len);
        sections[tag] = std::move(payload);
    }
    auto section = [&](const char *tag) {
        auto it = sections.find(tag);
        if (it == sections.end()) throw ParseError(source + ": missing section " + tag);
        return detail::SectionReader(it->second, width, source + " [" + tag + "]");
    };

    Checkpoint ck;
    SceneModel &m = ck.model;
    {
        auto s = section("GRID");
        m.grid.dims.nx = static_cast<std::int64_t>(s.u64());
        m.grid.dims.ny = static_cast<std::int64_t>(s.u64());
        m.grid.dims.nz = static_cast<std::int64_t>(s.u64());
        m.grid.dims.validate();
        for (int a = 0; a < 3; ++a) m.grid.bounds.min_corner[a] = s.f64();
        for (int a = 0; a < 3; ++a) m.grid.bounds.max_corner[a] = s.f64();
        m.grid.gs = s.f64();
        m.grid.features = s.matrix();
        if (m.grid.features.cols() != m.grid.dims.vertex_count()) throw ParseError(source + ": grid features do not match dims");
        m.grid.grads = MatX::Zero(m.grid.features.rows(), m.grid.features.cols());
    }
    m.sdf_net = section("MLPD").mlp();
    m.color_net = section("MLPC").mlp();
    {
        auto s = section("EMBD");
        m.embeddings.values = s.matrix();
        m.embeddings.grads = MatX::Zero(m.embeddings.values.rows(), m.embeddings.values.cols());
    }
    {
        auto s = section("REFN");
        VecX v;
        s.scalars(v);
        m.refinement.values.assign(v.data(), v.data() + v.size());
        m.refinement.grads.assign(m.refinement.values.size(), 0.0);
    }
    {
        auto s = section("POSE");
        VecX v;
        s.scalars(v);
        m.pose_deltas.values.assign(v.data(), v.data() + v.size());
        m.pose_deltas.grads.assign(m.pose_deltas.values.size(), 0.0);
    }
    {
        auto s = section("DEFM");
        m.deformation.levels = static_cast<int>(s.u32());
        m.deformation.net = s.mlp();
    }
    {
        auto s = section("ADAM");
        for (AdamState *a : {&m.adam.grid, &m.adam.sdf, &m.adam.color, &m.adam.embed, &m.adam.refine, &m.adam.pose, &m.adam.deform}) {
            *a = s.adam();
        }
    }
    {
        auto s = section("CNTR");
        for (auto &n : m.phase_iters) n = s.i64();
        m.iteration = s.i64();
        m.subdivided = s.u32() != 0;
        m.tr = s.f64();
        m.pe_levels = static_cast<int>(s.u32());
    }
    {
        auto s = section("CONF");
        std::istringstream cin(s.text());
        parse_config(cin, ck.config, source + " [CONF]");
    }
    const std::size_t frames = m.refinement.frames();
    if (m.pose_deltas.frames() != frames || m.embeddings.frames() != frames) {
        throw ParseError(source + ": per-frame sections disagree on the frame count");
    }
    return ck;
}

/// Writes to a sibling temp file, then renames over `path`.
inline void save_checkpoint(const std::filesystem::path &path, const SceneModel &m, const TrainConfig &cfg, std::uint32_t scalar_bytes = 8) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        write_checkpoint(out, m, cfg, scalar_bytes);
        out.flush();
        if (!out) throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    return read_checkpoint(in, path.string());
}

} // namespace fastsurf
