// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// On-disk RGB-D datasets:
//   DIR/intrinsics.txt     fx fy cx cy width height
//   DIR/depth/NNNNNN.png   16-bit gray, millimeters, 0 = invalid
//   DIR/color/NNNNNN.png   8-bit RGB
//   DIR/pose/NNNNNN.txt    4x4 camera-to-world, row-major

#include "fastsurf/frames.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace fastsurf {

struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0; // 1 or 3
    int bit_depth = 0; // 8 or 16
    std::vector<std::uint16_t> samples; // row-major, interleaved
};

namespace detail {

struct PngErrorState {
    char message[256] = {};
    std::jmp_buf jump;
};

inline void fastsurf_png_error(png_structp png, png_const_charp msg) {
    auto *st = static_cast<PngErrorState *>(png_get_error_ptr(png));
    std::snprintf(st->message, sizeof st->message, "%s", msg);
    std::longjmp(st->jump, 1);
}

inline void fastsurf_png_warning(png_structp, png_const_charp) {}

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f) std::fclose(f);
    }
};

// Fills `img` from `fp`; returns false with st.message set on failure. No
// objects with destructors are created between setjmp and the libpng calls.
inline bool png_read_impl(std::FILE *fp, PngImage &img, std::vector<png_bytep> &rows, std::vector<png_byte> &buffer, PngErrorState &st) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st, fastsurf_png_error, fastsurf_png_warning);
    if (!png) {
        std::snprintf(st.message, sizeof st.message, "out of memory");
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(st.jump)) {
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png); // host-order little-endian samples
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);
    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.channels = channels;
    img.bit_depth = out_depth;
    return true;
}

inline bool png_write_impl(std::FILE *fp, const PngImage &img, std::vector<png_bytep> &rows, std::vector<png_byte> &buffer,
                           PngErrorState &st) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &st, fastsurf_png_error, fastsurf_png_warning);
    if (!png) {
        std::snprintf(st.message, sizeof st.message, "out of memory");
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(st.jump)) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), img.bit_depth,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (img.bit_depth == 16) png_set_swap(png);
    const std::size_t bps = img.bit_depth / 8;
    const std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels * bps;
    buffer.resize(rowbytes * img.height);
    for (std::size_t i = 0; i < img.samples.size(); ++i) {
        if (bps == 2) {
            std::memcpy(buffer.data() + 2 * i, &img.samples[i], 2);
        } else {
            buffer[i] = static_cast<png_byte>(img.samples[i]);
        }
    }
    rows.resize(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(y) * rowbytes;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

} // namespace detail

inline PngImage read_png(const std::filesystem::path &path) {
    std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw ParseError(path.string() + ": not a PNG file");
    std::rewind(fp.get());
    PngImage img;
    std::vector<png_bytep> rows;
    std::vector<png_byte> buffer;
    detail::PngErrorState st;
    if (!detail::png_read_impl(fp.get(), img, rows, buffer, st)) throw ParseError(path.string() + ": " + st.message);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
    img.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (img.bit_depth == 16) {
            std::uint16_t s;
            std::memcpy(&s, buffer.data() + 2 * i, 2);
            img.samples[i] = s;
        } else {
            img.samples[i] = buffer[i];
        }
    }
    return img;
}

inline void write_png(const std::filesystem::path &path, const PngImage &img) {
    if ((img.channels != 1 && img.channels != 3) || (img.bit_depth != 8 && img.bit_depth != 16) ||
        img.samples.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
        throw InvalidParameterError("write_png: unsupported image layout for " + path.string());
    }
    std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path.string() + " for writing");
    std::vector<png_bytep> rows;
    std::vector<png_byte> buffer;
    detail::PngErrorState st;
    if (!detail::png_write_impl(fp.get(), img, rows, buffer, st)) throw IoError(path.string() + ": " + st.message);
    if (std::fflush(fp.get()) != 0) throw IoError("failed writing " + path.string());
}

inline std::string frame_name(std::size_t i, const char *ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.%s", i, ext);
    return buf;
}

/// Depth is stored in whole millimeters; other values are rounded.
inline void save_dataset(const FrameSet &frames, const std::filesystem::path &dir) {
    frames.validate();
    namespace fs = std::filesystem;
    fs::create_directories(dir / "depth");
    fs::create_directories(dir / "color");
    fs::create_directories(dir / "pose");
    {
        std::ofstream k(dir / "intrinsics.txt");
        k.precision(17);
        const Intrinsics &in = frames.intrinsics;
        k << in.fx << ' ' << in.fy << ' ' << in.cx << ' ' << in.cy << ' ' << in.width << ' ' << in.height << '\n';
        if (!k) throw IoError("failed writing " + (dir / "intrinsics.txt").string());
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Frame &f = frames.frames[i];
        PngImage d{f.depth.width, f.depth.height, 1, 16, {}};
        d.samples.resize(f.depth.data.size());
        for (std::size_t p = 0; p < f.depth.data.size(); ++p) {
            const long long mm = std::llround(f.depth.data[p] * 1000.0);
            if (mm < 0 || mm > 65535) throw InvalidParameterError("save_dataset: depth outside the 16-bit millimeter range in frame " + std::to_string(i));
            d.samples[p] = static_cast<std::uint16_t>(f.depth.data[p] > 0.0 ? mm : 0);
        }
        write_png(dir / "depth" / frame_name(i, "png"), d);
        if (!f.color.rgb.empty()) {
            PngImage c{f.color.width, f.color.height, 3, 8, {}};
            c.samples.assign(f.color.rgb.begin(), f.color.rgb.end());
            write_png(dir / "color" / frame_name(i, "png"), c);
        }
        std::FILE *pf = std::fopen((dir / "pose" / frame_name(i, "txt")).string().c_str(), "w");
        if (!pf) throw IoError("cannot open pose file for frame " + std::to_string(i));
        const Mat4 m = f.pose.matrix();
        for (int r = 0; r < 4; ++r) std::fprintf(pf, "%.17g %.17g %.17g %.17g\n", m(r, 0), m(r, 1), m(r, 2), m(r, 3));
        if (std::fclose(pf) != 0) throw IoError("failed writing pose file for frame " + std::to_string(i));
    }
}

namespace detail {

inline std::vector<std::filesystem::path> sorted_files(const std::filesystem::path &dir, const std::string &ext) {
    std::vector<std::filesystem::path> out;
    if (!std::filesystem::is_directory(dir)) return out;
    for (const auto &e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace detail

inline Pose read_pose(const std::filesystem::path &path, std::ostream *warnings = &std::cerr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            if (!(in >> m(r, c))) throw ParseError(path.string() + ": expected 16 numbers");
        }
    }
    Pose p = Pose::from_matrix(m);
    const double drift = p.rigidity_error();
    if (drift > 1e-6 && warnings) *warnings << "warning: " << path.string() << ": rotation drift " << drift << ", re-orthonormalized\n";
    if (drift > 1e-12) p.rotation = orthonormalize(p.rotation);
    return p;
}

inline FrameSet load_dataset(const std::filesystem::path &dir, std::ostream *warnings = &std::cerr) {
    FrameSet fs;
    {
        const auto kp = dir / "intrinsics.txt";
        std::ifstream k(kp);
        if (!k) throw IoError("cannot open " + kp.string());
        Intrinsics &in = fs.intrinsics;
        if (!(k >> in.fx >> in.fy >> in.cx >> in.cy >> in.width >> in.height)) throw ParseError(kp.string() + ": expected fx fy cx cy width height");
        try {
            in.validate();
        } catch (const InvalidParameterError &e) {
            throw ParseError(kp.string() + ": " + e.what());
        }
    }
    const auto depths = detail::sorted_files(dir / "depth", ".png");
    const auto colors = detail::sorted_files(dir / "color", ".png");
    const auto poses = detail::sorted_files(dir / "pose", ".txt");
    if (depths.empty()) throw ParseError((dir / "depth").string() + ": no depth frames");
    if (poses.size() != depths.size() || (!colors.empty() && colors.size() != depths.size())) {
        throw DimensionError(dir.string() + ": frame counts differ (depth " + std::to_string(depths.size()) + ", color " +
                             std::to_string(colors.size()) + ", pose " + std::to_string(poses.size()) + ")");
    }
    for (std::size_t i = 0; i < depths.size(); ++i) {
        Frame f;
        const PngImage d = read_png(depths[i]);
        if (d.channels != 1 || d.bit_depth != 16) throw ParseError(depths[i].string() + ": depth must be 16-bit grayscale");
        if (d.width != fs.intrinsics.width || d.height != fs.intrinsics.height) throw DimensionError(depths[i].string() + ": size does not match intrinsics");
        f.depth = DepthImage(d.width, d.height);
        for (std::size_t p = 0; p < d.samples.size(); ++p) f.depth.data[p] = static_cast<double>(d.samples[p]) / 1000.0;
        if (!colors.empty()) {
            const PngImage c = read_png(colors[i]);
            if (c.channels != 3 || c.bit_depth != 8) throw ParseError(colors[i].string() + ": color must be 8-bit RGB");
            if (c.width != fs.intrinsics.width || c.height != fs.intrinsics.height) throw DimensionError(colors[i].string() + ": size does not match intrinsics");
            f.color = ColorImage(c.width, c.height);
            for (std::size_t p = 0; p < c.samples.size(); ++p) f.color.rgb[p] = static_cast<std::uint8_t>(c.samples[p]);
        }
        f.pose = read_pose(poses[i], warnings);
        fs.frames.push_back(std::move(f));
    }
    return fs;
}

} // namespace fastsurf
