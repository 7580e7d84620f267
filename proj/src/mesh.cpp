// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "priorforge/error.hpp"

namespace priorforge {
namespace {

std::string where(std::string_view source, std::size_t line) {
    std::ostringstream os;
    os << source << ':' << line << ": ";
    return os.str();
}

bool parse_double(std::string_view tok, double& out) {
    // std::from_chars for double is available in libstdc++ 11.
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_index(std::string_view tok, long long& out) {
    const auto slash = tok.find('/');
    if (slash != std::string_view::npos) tok = tok.substr(0, slash);
    if (tok.empty()) return false;
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace

LoadedMesh parse_obj(std::istream& in, std::string_view source) {
    TriangleMesh mesh;
    std::vector<std::size_t> face_line;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const auto toks = split_ws(std::string_view(line).substr(0, hash));
        if (toks.empty()) continue;
        if (toks[0] == "v") {
            if (toks.size() < 4 || toks.size() > 5) {
                throw DataError(where(source, lineno) + "malformed vertex record");
            }
            Vec3 p;
            for (int k = 0; k < 3; ++k) {
                if (!parse_double(toks[1 + k], p[k])) {
                    throw DataError(where(source, lineno) + "malformed vertex coordinate");
                }
            }
            if (!is_finite(p)) throw DataError(where(source, lineno) + "non-finite vertex coordinate");
            mesh.vertices.push_back(p);
        } else if (toks[0] == "f") {
            if (toks.size() < 4) throw DataError(where(source, lineno) + "face needs at least 3 vertices");
            std::vector<std::uint32_t> poly;
            for (std::size_t k = 1; k < toks.size(); ++k) {
                long long idx = 0;
                if (!parse_index(toks[k], idx) || idx == 0) {
                    throw DataError(where(source, lineno) + "malformed face index");
                }
                const long long resolved =
                    idx > 0 ? idx - 1 : static_cast<long long>(mesh.vertices.size()) + idx;
                if (resolved < 0 || resolved > std::numeric_limits<std::uint32_t>::max()) {
                    throw DataError(where(source, lineno) + "index out of range");
                }
                poly.push_back(static_cast<std::uint32_t>(resolved));
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
                face_line.push_back(lineno);
            }
        }
        // vn, vt, usemtl, o, g, s and friends are ignored.
    }
    if (mesh.vertices.empty()) throw DataError(std::string(source) + ": no vertex records");
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        for (auto i : mesh.faces[f]) {
            if (i >= mesh.vertices.size()) throw DataError(where(source, face_line[f]) + "index out of range");
        }
    }

    LoadedMesh out;
    const Aabb box = bounds(mesh);
    const double longest = std::max({box.extent().x, box.extent().y, box.extent().z});
    const double scale = longest > 0.0 ? kNormalizedExtent / longest : 0.0;
    std::vector<Face> kept;
    kept.reserve(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        if (mesh.area(f) * scale * scale < kDegenerateArea) {
            ++out.dropped_degenerate;
        } else {
            kept.push_back(mesh.faces[f]);
        }
    }
    mesh.faces = std::move(kept);
    if (mesh.faces.empty()) throw DataError(std::string(source) + ": zero faces after filtering");
    out.mesh = std::move(mesh);
    return out;
}

LoadedMesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open mesh file: " + path.string());
    return parse_obj(in, path.string());
}

void write_obj(const TriangleMesh& mesh, std::ostream& out) {
    out << std::setprecision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write mesh file: " + path.string());
    write_obj(mesh, out);
}

void validate(const TriangleMesh& mesh) {
    for (const auto& v : mesh.vertices) {
        if (!is_finite(v)) throw DataError("non-finite vertex coordinate");
    }
    for (const auto& f : mesh.faces) {
        for (auto i : f) {
            if (i >= mesh.vertices.size()) throw DataError("index out of range");
        }
    }
}

Aabb bounds(const TriangleMesh& mesh) {
    Aabb box;
    for (const auto& v : mesh.vertices) box.expand(v);
    return box;
}

Normalization normalization_for(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw DataError("cannot normalize an empty mesh");
    const Aabb box = bounds(mesh);
    const Vec3 e = box.extent();
    const double longest = std::max({e.x, e.y, e.z});
    if (!(longest > 0.0)) throw DataError("cannot normalize: all vertices coincide");
    return {box.center(), kNormalizedExtent / longest};
}

TriangleMesh transformed(const TriangleMesh& mesh, const Normalization& xf) {
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) v = xf.apply(v);
    return out;
}

TriangleMesh normalize(const TriangleMesh& mesh) { return transformed(mesh, normalization_for(mesh)); }

TriangleMesh flipped(const TriangleMesh& mesh) {
    TriangleMesh out = mesh;
    for (auto& f : out.faces) std::swap(f[1], f[2]);
    return out;
}

TriangleMesh merged(const std::vector<TriangleMesh>& parts) {
    TriangleMesh out;
    for (const auto& part : parts) {
        const auto base = static_cast<std::uint32_t>(out.vertices.size());
        out.vertices.insert(out.vertices.end(), part.vertices.begin(), part.vertices.end());
        for (const auto& f : part.faces) out.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bvh

Bvh::Bvh(TriangleMesh mesh) : mesh_(std::move(mesh)) {
    validate(mesh_);
    if (mesh_.faces.empty()) throw DataError("cannot build a hierarchy over zero faces");
    order_.resize(mesh_.faces.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * mesh_.faces.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(order_.size()));
}

std::int32_t Bvh::build(std::uint32_t first, std::uint32_t count) {
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();

    Aabb box, centroids;
    for (std::uint32_t i = first; i < first + count; ++i) {
        const auto f = order_[i];
        for (int k = 0; k < 3; ++k) box.expand(mesh_.corner(f, k));
        centroids.expand(mesh_.centroid(f));
    }
    nodes_[index].box = box;

    if (count <= kLeafSize) {
        BvhNode& node = nodes_[index];
        node.first = first;
        node.count = count;
        Vec3 weighted;
        for (std::uint32_t i = first; i < first + count; ++i) {
            const auto f = order_[i];
            const double a = mesh_.area(f);
            node.dipole += mesh_.area_normal(f);
            node.area += a;
            weighted += a * mesh_.centroid(f);
        }
        node.centroid = node.area > 0.0 ? weighted / node.area : box.center();
        return index;
    }

    const Vec3 e = centroids.extent();
    const int axis = (e.x >= e.y && e.x >= e.z) ? 0 : (e.y >= e.z ? 1 : 2);
    const std::uint32_t half = count / 2;
    auto begin = order_.begin() + first;
    std::nth_element(begin, begin + half, begin + count, [&](std::uint32_t a, std::uint32_t b) {
        const double ca = mesh_.centroid(a)[axis], cb = mesh_.centroid(b)[axis];
        return ca < cb || (ca == cb && a < b);
    });

    const std::int32_t left = build(first, half);
    const std::int32_t right = build(first + half, count - half);
    BvhNode& node = nodes_[index];
    node.left = left;
    node.right = right;
    const BvhNode& l = nodes_[left];
    const BvhNode& r = nodes_[right];
    node.dipole = l.dipole + r.dipole;
    node.area = l.area + r.area;
    node.centroid = node.area > 0.0 ? (l.area * l.centroid + r.area * r.centroid) / node.area : box.center();
    return index;
}

std::size_t Bvh::depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 1}};
    while (!stack.empty()) {
        auto [n, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        if (!nodes_[n].leaf()) {
            stack.push_back({nodes_[n].left, d + 1});
            stack.push_back({nodes_[n].right, d + 1});
        }
    }
    return best;
}

namespace {

bool slab_hit(const Aabb& box, const Vec3& o, const Vec3& inv, double t_min, double t_max) {
    for (int k = 0; k < 3; ++k) {
        double t0 = (box.min[k] - o[k]) * inv[k];
        double t1 = (box.max[k] - o[k]) * inv[k];
        if (t0 > t1) std::swap(t0, t1);
        // NaN from 0 * inf means the ray lies in the slab plane; keep it.
        if (t0 > t_min) t_min = t0;
        if (t1 < t_max) t_max = t1;
        if (t_max < t_min) return false;
    }
    return true;
}

}  // namespace

std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& direction, const Vec3& a,
                                         const Vec3& b, const Vec3& c) {
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 p = cross(direction, e2);
    const double det = dot(e1, p);
    if (std::abs(det) < 1e-300) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 s = origin - a;
    const double u = dot(s, p) * inv;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 q = cross(s, e1);
    const double v = dot(direction, q) * inv;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    return dot(e2, q) * inv;
}

std::optional<RayHit> Bvh::intersect(const Vec3& origin, const Vec3& direction, double t_min,
                                     double t_max) const {
    const Vec3 inv{1.0 / direction.x, 1.0 / direction.y, 1.0 / direction.z};
    std::optional<RayHit> best;
    std::int32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const BvhNode& node = nodes_[stack[--top]];
        const double limit = best ? best->t : t_max;
        if (!slab_hit(node.box, origin, inv, t_min, limit)) continue;
        if (node.leaf()) {
            for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                const auto f = order_[i];
                auto t = intersect_triangle(origin, direction, mesh_.corner(f, 0), mesh_.corner(f, 1),
                                            mesh_.corner(f, 2));
                if (t && *t > t_min && *t < (best ? best->t : t_max)) best = RayHit{*t, f};
            }
        } else {
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
    return best;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Region tests after Ericson, Real-Time Collision Detection 5.1.5.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    }
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

double Bvh::distance(const Vec3& p) const {
    double best2 = std::numeric_limits<double>::infinity();
    std::int32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const BvhNode& node = nodes_[stack[--top]];
        if (node.box.squared_distance(p) >= best2) continue;
        if (node.leaf()) {
            for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                const auto f = order_[i];
                const Vec3 q = closest_point_on_triangle(p, mesh_.corner(f, 0), mesh_.corner(f, 1),
                                                         mesh_.corner(f, 2));
                best2 = std::min(best2, dot(p - q, p - q));
            }
        } else {
            const double dl = nodes_[node.left].box.squared_distance(p);
            const double dr = nodes_[node.right].box.squared_distance(p);
            // Push the farther child first so the nearer one is popped next.
            if (dl < dr) {
                stack[top++] = node.right;
                stack[top++] = node.left;
            } else {
                stack[top++] = node.left;
                stack[top++] = node.right;
            }
        }
    }
    return std::sqrt(best2);
}

}  // namespace priorforge
