// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Zero-isosurface extraction by marching cubes, and binary PLY meshes.

#include "fastsurf/model.hpp"

#include <array>
#include <functional>
#include <unordered_map>

namespace fastsurf {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<Vec3> normals;

    bool empty() const { return triangles.empty(); }

    double area() const {
        double a = 0.0;
        for (const auto &t : triangles) a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
        return a;
    }

    void recompute_normals();
};

/// Evaluates the field at `points`; valid[i] = 0 marks an unknown value.
using SdfSampler = std::function<void(std::span<const Vec3> points, std::span<double> values, std::span<std::uint8_t> valid)>;

namespace mc {

/// Corner c of a cube sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
/// An edge joins two corners that differ in exactly one bit.
struct Edge {
    int a, b, axis;
};

inline const std::array<Edge, 12> &edges() {
    static const std::array<Edge, 12> e = [] {
        std::array<Edge, 12> out{};
        int n = 0;
        for (int axis = 0; axis < 3; ++axis) {
            for (int c = 0; c < 8; ++c) {
                if (c & (1 << axis)) continue;
                out[n++] = {c, c | (1 << axis), axis};
            }
        }
        return out;
    }();
    return e;
}

inline int edge_between(int a, int b) {
    for (int i = 0; i < 12; ++i) {
        const Edge &e = edges()[i];
        if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) return i;
    }
    throw Error("marching cubes: corners are not adjacent");
}

using Triangles = std::vector<std::array<int, 3>>; // edge ids

/// Boundary loops of the inside region on the cube surface. Each face is
/// walked counter-clockwise seen from outside; a run of inside corners makes
/// one segment from its entering edge to its leaving edge. Diagonal inside
/// corners on a face are kept apart, so neighbouring cells agree on shared
/// faces.
inline std::vector<std::vector<int>> boundary_loops(int config) {
    std::array<int, 12> next;
    next.fill(-1);
    for (int axis = 0; axis < 3; ++axis) {
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        for (int side = 0; side < 2; ++side) {
            std::array<int, 4> ring;
            const int uv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
            for (int q = 0; q < 4; ++q) ring[q] = (side << axis) | (uv[q][0] << u) | (uv[q][1] << v);
            if (side == 0) std::swap(ring[1], ring[3]);
            int entering = -1;
            // Start from an outside corner so runs do not wrap.
            int start = -1;
            for (int q = 0; q < 4; ++q) {
                if (!(config >> ring[q] & 1)) {
                    start = q;
                    break;
                }
            }
            if (start < 0) continue;
            for (int s = 0; s < 4; ++s) {
                const int c0 = ring[(start + s) % 4], c1 = ring[(start + s + 1) % 4];
                const bool in0 = config >> c0 & 1, in1 = config >> c1 & 1;
                if (!in0 && in1) entering = edge_between(c0, c1);
                if (in0 && !in1) next[static_cast<std::size_t>(entering)] = edge_between(c0, c1);
            }
        }
    }
    std::vector<std::vector<int>> loops;
    std::array<bool, 12> used{};
    for (int e = 0; e < 12; ++e) {
        if (next[e] < 0 || used[e]) continue;
        std::vector<int> loop;
        for (int c = e; !used[c]; c = next[c]) {
            used[c] = true;
            loop.push_back(c);
        }
        loops.push_back(std::move(loop));
    }
    return loops;
}

inline Triangles triangulate(int config, bool flip) {
    Triangles out;
    for (const auto &loop : boundary_loops(config)) {
        for (std::size_t i = 1; i + 1 < loop.size(); ++i) {
            if (flip) {
                out.push_back({loop[0], loop[i + 1], loop[i]});
            } else {
                out.push_back({loop[0], loop[i], loop[i + 1]});
            }
        }
    }
    return out;
}

inline Vec3 edge_midpoint(int e) {
    const Edge &ed = edges()[static_cast<std::size_t>(e)];
    auto corner = [](int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); };
    return 0.5 * (corner(ed.a) + corner(ed.b));
}

/// Triangles per sign configuration (bit c set: corner c is inside, value < 0),
/// oriented so normals point toward increasing values.
inline const std::array<Triangles, 256> &table() {
    static const std::array<Triangles, 256> t = [] {
        // Corner 0 alone inside: the field increases toward (1, 1, 1).
        const Triangles probe = triangulate(1, false);
        const auto &tri = probe.front();
        const Vec3 n = (edge_midpoint(tri[1]) - edge_midpoint(tri[0])).cross(edge_midpoint(tri[2]) - edge_midpoint(tri[0]));
        const bool flip = n.dot(Vec3::Ones()) < 0.0;
        std::array<Triangles, 256> out;
        for (int c = 0; c < 256; ++c) out[static_cast<std::size_t>(c)] = triangulate(c, flip);
        return out;
    }();
    return t;
}

} // namespace mc

inline void TriangleMesh::recompute_normals() {
    normals.assign(vertices.size(), Vec3::Zero());
    for (const auto &t : triangles) {
        const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]); // length = 2 * area
        for (auto i : t) normals[i] += n;
    }
    for (std::size_t i = 0; i < normals.size(); ++i) {
        const double len = normals[i].norm();
        normals[i] = len > 0.0 ? Vec3(normals[i] / len) : Vec3::UnitZ();
    }
}

/// Marching cubes over the lattice {bounds.min + resolution * (i, j, k)}
/// covering `bounds`. Cells touching an invalid sample are skipped. Returns an
/// empty mesh when the field never changes sign.
inline TriangleMesh extract_mesh(const SdfSampler &sampler, const BoundingBox &bounds, double resolution = 0.01) {
    const GridDims dims = grid_dims(bounds, resolution);
    const std::int64_t nx = dims.nx, ny = dims.ny, nz = dims.nz;
    const auto slice = static_cast<std::size_t>(nx * ny);
    auto sample_slice = [&](std::int64_t k, std::vector<double> &val, std::vector<std::uint8_t> &ok) {
        std::vector<Vec3> pts(slice);
        for (std::int64_t j = 0; j < ny; ++j) {
            for (std::int64_t i = 0; i < nx; ++i) {
                pts[static_cast<std::size_t>(i + nx * j)] =
                    bounds.min_corner + Vec3(static_cast<double>(i) * resolution, static_cast<double>(j) * resolution,
                                             static_cast<double>(k) * resolution);
            }
        }
        val.assign(slice, 0.0);
        ok.assign(slice, 0);
        sampler(pts, val, ok);
        for (std::size_t i = 0; i < slice; ++i) {
            if (ok[i] && !std::isfinite(val[i])) ok[i] = 0;
        }
    };

    TriangleMesh mesh;
    std::unordered_map<std::int64_t, std::uint32_t> welded;
    const auto &edges = mc::edges();
    const auto &table = mc::table();
    std::vector<double> v0, v1;
    std::vector<std::uint8_t> ok0, ok1;
    sample_slice(0, v0, ok0);
    for (std::int64_t k = 0; k + 1 < nz; ++k) {
        sample_slice(k + 1, v1, ok1);
        const std::vector<double> *vs[2] = {&v0, &v1};
        const std::vector<std::uint8_t> *oks[2] = {&ok0, &ok1};
        for (std::int64_t j = 0; j + 1 < ny; ++j) {
            for (std::int64_t i = 0; i + 1 < nx; ++i) {
                double val[8];
                bool valid = true;
                int config = 0;
                for (int c = 0; c < 8; ++c) {
                    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
                    const auto idx = static_cast<std::size_t>((i + dx) + nx * (j + dy));
                    valid = valid && (*oks[dz])[idx];
                    val[c] = (*vs[dz])[idx];
                    if (val[c] < 0.0) config |= 1 << c;
                }
                if (!valid || config == 0 || config == 255) continue;
                std::uint32_t ids[12];
                bool have[12] = {};
                auto vertex_on = [&](int e) {
                    if (have[e]) return ids[e];
                    const mc::Edge &ed = edges[static_cast<std::size_t>(e)];
                    const int ax = ed.a & 1, ay = (ed.a >> 1) & 1, az = (ed.a >> 2) & 1;
                    const std::int64_t key = dims.index(i + ax, j + ay, k + az) * 3 + ed.axis;
                    auto it = welded.find(key);
                    if (it == welded.end()) {
                        const double t = val[ed.a] / (val[ed.a] - val[ed.b]);
                        Vec3 p = bounds.min_corner + Vec3(static_cast<double>(i + ax) * resolution, static_cast<double>(j + ay) * resolution,
                                                          static_cast<double>(k + az) * resolution);
                        p[ed.axis] += t * resolution;
                        it = welded.emplace(key, static_cast<std::uint32_t>(mesh.vertices.size())).first;
                        mesh.vertices.push_back(p);
                    }
                    have[e] = true;
                    ids[e] = it->second;
                    return ids[e];
                };
                for (const auto &tri : table[static_cast<std::size_t>(config)]) {
                    const std::array<std::uint32_t, 3> t = {vertex_on(tri[0]), vertex_on(tri[1]), vertex_on(tri[2])};
                    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
                    const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
                    if (!(n.norm() > 1e-12 * resolution * resolution)) continue;
                    mesh.triangles.push_back(t);
                }
            }
        }
        v0.swap(v1);
        ok0.swap(ok1);
    }

    // Drop vertices only referenced by discarded degenerate triangles.
    std::vector<std::uint32_t> remap(mesh.vertices.size(), UINT32_MAX);
    std::vector<Vec3> kept;
    kept.reserve(mesh.vertices.size());
    for (auto &t : mesh.triangles) {
        for (auto &i : t) {
            if (remap[i] == UINT32_MAX) {
                remap[i] = static_cast<std::uint32_t>(kept.size());
                kept.push_back(mesh.vertices[i]);
            }
            i = remap[i];
        }
    }
    mesh.vertices = std::move(kept);
    mesh.recompute_normals();
    return mesh;
}

/// Trilinear fused values; unobserved cells are invalid.
inline SdfSampler tsdf_sampler(const TsdfVolume &vol) {
    return [&vol](std::span<const Vec3> pts, std::span<double> values, std::span<std::uint8_t> valid) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const TsdfSample s = query_tsdf(vol, pts[i]);
            values[i] = s.sdf;
            valid[i] = s.observed ? 1 : 0;
        }
    };
}

/// Decoded SDF of a trained model; points outside its lattice are invalid.
inline SdfSampler model_sampler(const SceneModel &model) {
    return [&model](std::span<const Vec3> pts, std::span<double> values, std::span<std::uint8_t> valid) { model.sdf_batch(pts, values, valid); };
}

inline SdfSampler function_sampler(std::function<double(const Vec3 &)> f) {
    return [f = std::move(f)](std::span<const Vec3> pts, std::span<double> values, std::span<std::uint8_t> valid) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            values[i] = f(pts[i]);
            valid[i] = 1;
        }
    };
}

// PLY, binary_little_endian 1.0:
//   element vertex N: float x y z nx ny nz
//   element face M:   list uchar int vertex_indices
inline void write_ply(std::ostream &out, const TriangleMesh &mesh) {
    if (mesh.normals.size() != mesh.vertices.size()) throw InvalidParameterError("write_ply: normals do not match vertices");
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << mesh.vertices.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\nproperty float nz\nelement face "
        << mesh.triangles.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
    BinaryWriter w(out);
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        for (int a = 0; a < 3; ++a) w.write(static_cast<float>(mesh.vertices[i][a]));
        for (int a = 0; a < 3; ++a) w.write(static_cast<float>(mesh.normals[i][a]));
    }
    for (const auto &t : mesh.triangles) {
        w.write<std::uint8_t>(3);
        for (auto i : t) w.write(static_cast<std::int32_t>(i));
    }
}

inline TriangleMesh read_ply(std::istream &in, const std::string &source) {
    std::string line;
    auto next_line = [&]() {
        if (!std::getline(in, line)) throw ParseError(source + ": truncated PLY header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };
    if (next_line() != "ply") throw ParseError(source + ": not a PLY file");
    struct Property {
        std::string name, type;
    };
    std::size_t nverts = 0, nfaces = 0;
    std::vector<Property> vprops;
    std::string list_count, list_index;
    std::string element;
    bool binary_le = false;
    while (next_line() != "end_header") {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (word == "element") {
            std::size_t n = 0;
            ls >> element >> n;
            if (element == "vertex") nverts = n;
            else if (element == "face") nfaces = n;
            else if (n > 0) throw ParseError(source + ": unsupported PLY element " + element);
        } else if (word == "property") {
            std::string type;
            ls >> type;
            if (element == "vertex") {
                Property p;
                p.type = type;
                ls >> p.name;
                vprops.push_back(p);
            } else if (element == "face") {
                if (type != "list") throw ParseError(source + ": face property must be a list");
                ls >> list_count >> list_index;
            }
        }
    }
    if (!binary_le) throw ParseError(source + ": only binary_little_endian PLY is supported");
    BinaryReader r(in, source);
    TriangleMesh mesh;
    mesh.vertices.resize(nverts);
    mesh.normals.resize(nverts, Vec3::UnitZ());
    bool has_normals = false;
    for (auto &p : vprops) has_normals = has_normals || p.name == "nx";
    for (std::size_t v = 0; v < nverts; ++v) {
        for (const auto &p : vprops) {
            double x;
            if (p.type == "float" || p.type == "float32") x = r.read<float>();
            else if (p.type == "double" || p.type == "float64") x = r.read<double>();
            else if (p.type == "uchar" || p.type == "uint8") x = r.read<std::uint8_t>();
            else throw ParseError(source + ": unsupported vertex property type " + p.type);
            if (p.name == "x") mesh.vertices[v].x() = x;
            else if (p.name == "y") mesh.vertices[v].y() = x;
            else if (p.name == "z") mesh.vertices[v].z() = x;
            else if (p.name == "nx") mesh.normals[v].x() = x;
            else if (p.name == "ny") mesh.normals[v].y() = x;
            else if (p.name == "nz") mesh.normals[v].z() = x;
        }
    }
    for (std::size_t f = 0; f < nfaces; ++f) {
        std::size_t n;
        if (list_count == "uchar" || list_count == "uint8") n = r.read<std::uint8_t>();
        else if (list_count == "int" || list_count == "int32" || list_count == "uint" || list_count == "uint32") n = r.read<std::uint32_t>();
        else throw ParseError(source + ": unsupported face count type " + list_count);
        std::vector<std::uint32_t> idx(n);
        for (auto &i : idx) {
            if (list_index == "int" || list_index == "int32" || list_index == "uint" || list_index == "uint32") i = r.read<std::uint32_t>();
            else throw ParseError(source + ": unsupported face index type " + list_index);
            if (i >= nverts) throw ParseError(source + ": face index out of range");
        }
        for (std::size_t k = 1; k + 1 < n; ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
    if (!has_normals) mesh.recompute_normals();
    return mesh;
}

inline void save_ply(const std::filesystem::path &path, const TriangleMesh &mesh) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_ply(out, mesh);
    if (!out) throw IoError("failed writing " + path.string());
}

inline TriangleMesh load_ply(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_ply(in, path.string());
}

} // namespace fastsurf
