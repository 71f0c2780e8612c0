// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fastsurf/geometry.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace fastsurf {

/// z-depth in meters; 0 marks an invalid pixel.
struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    DepthImage() = default;
    DepthImage(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    double &at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
    double at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
    bool valid(int u, int v) const { return at(u, v) > 0.0; }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (double d : data) n += d > 0.0 ? 1 : 0;
        return n;
    }

    bool operator==(const DepthImage &) const = default;
};

/// 8-bit interleaved RGB.
struct ColorImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    ColorImage() = default;
    ColorImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t *pixel(int u, int v) { return rgb.data() + (static_cast<std::size_t>(v) * width + u) * 3; }
    const std::uint8_t *pixel(int u, int v) const { return rgb.data() + (static_cast<std::size_t>(v) * width + u) * 3; }

    Vec3 color(int u, int v) const {
        const std::uint8_t *p = pixel(u, v);
        return Vec3(p[0], p[1], p[2]) / 255.0;
    }

    bool operator==(const ColorImage &) const = default;
};

struct Frame {
    DepthImage depth;
    ColorImage color;
    Pose pose;
};

/// Frames sharing one set of base intrinsics.
struct FrameSet {
    Intrinsics intrinsics;
    std::vector<Frame> frames;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
    std::size_t total_pixels() const { return frames.size() * static_cast<std::size_t>(intrinsics.width) * intrinsics.height; }

    void validate() const {
        intrinsics.validate();
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const Frame &f = frames[i];
            if (f.depth.width != intrinsics.width || f.depth.height != intrinsics.height) {
                throw DimensionError("frame " + std::to_string(i) + ": depth size does not match intrinsics");
            }
            if (!f.color.rgb.empty() && (f.color.width != intrinsics.width || f.color.height != intrinsics.height)) {
                throw DimensionError("frame " + std::to_string(i) + ": color size does not match intrinsics");
            }
        }
    }
};

/// Tight box around every back-projected valid depth pixel, grown by `margin`.
inline BoundingBox compute_scene_bounds(const FrameSet &frames, double margin) {
    if (!(margin >= 0.0)) throw InvalidParameterError("compute_scene_bounds: negative margin");
    BoundingBox box;
    for (const Frame &f : frames.frames) {
        for (int v = 0; v < f.depth.height; ++v) {
            for (int u = 0; u < f.depth.width; ++u) {
                const double d = f.depth.at(u, v);
                if (d > 0.0) box.extend(backproject(u, v, d, frames.intrinsics, f.pose));
            }
        }
    }
    if (box.empty()) throw EmptySceneError("compute_scene_bounds: no valid depth pixel in any frame");
    return box.expanded(margin);
}

} // namespace fastsurf
