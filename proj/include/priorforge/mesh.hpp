// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "priorforge/geometry.hpp"

namespace priorforge {

using Face = std::array<std::uint32_t, 3>;

/// Indexed triangle soup.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    const Vec3& corner(std::size_t face, int k) const { return vertices[faces[face][k]]; }
    /// Half the edge cross product: area times unit normal, right-hand orientation.
    Vec3 area_normal(std::size_t face) const {
        const Vec3& a = corner(face, 0);
        return 0.5 * cross(corner(face, 1) - a, corner(face, 2) - a);
    }
    double area(std::size_t face) const { return norm(area_normal(face)); }
    Vec3 centroid(std::size_t face) const {
        return (corner(face, 0) + corner(face, 1) + corner(face, 2)) / 3.0;
    }
};

inline constexpr double kDegenerateArea = 1e-12;
inline constexpr double kNormalizedExtent = 1.5;

struct LoadedMesh {
    TriangleMesh mesh;
    std::size_t dropped_degenerate = 0;
};

/// Reads the `v` / `f` subset of Wavefront OBJ. N-gons are fan-triangulated,
/// negative indices resolve against the vertices seen so far, and faces whose
/// area would fall below kDegenerateArea after normalize() are dropped.
LoadedMesh load_obj(const std::filesystem::path& path);
LoadedMesh parse_obj(std::istream& in, std::string_view source = "<stream>");

void write_obj(const TriangleMesh& mesh, std::ostream& out);
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Throws DataError on an out-of-range index or a non-finite coordinate.
void validate(const TriangleMesh& mesh);

Aabb bounds(const TriangleMesh& mesh);

/// Affine map p -> (p - center) * scale placing the bounding box centroid at
/// the origin with the longest side equal to kNormalizedExtent.
struct Normalization {
    Vec3 center;
    double scale = 1.0;
    Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
};

Normalization normalization_for(const TriangleMesh& mesh);
TriangleMesh transformed(const TriangleMesh& mesh, const Normalization& xf);
TriangleMesh normalize(const TriangleMesh& mesh);

/// Inverts the orientation of every face.
TriangleMesh flipped(const TriangleMesh& mesh);
/// Concatenates meshes; winding numbers of the result are the sums of the parts.
TriangleMesh merged(const std::vector<TriangleMesh>& parts);

struct BvhNode {
    Aabb box;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t first = 0;  // into Bvh::order(), leaves only
    std::uint32_t count = 0;
    Vec3 dipole;    // sum of descendant area_normal()
    Vec3 centroid;  // area-weighted centroid of descendants
    double area = 0.0;

    bool leaf() const { return left < 0; }
};

struct RayHit {
    double t = 0.0;
    std::uint32_t face = 0;
};

/// Median-split bounding volume hierarchy with per-node dipole aggregates.
/// Owns a copy of the mesh; immutable after construction.
class Bvh {
public:
    static constexpr std::uint32_t kLeafSize = 8;

    explicit Bvh(TriangleMesh mesh);

    const TriangleMesh& mesh() const { return mesh_; }
    const std::vector<BvhNode>& nodes() const { return nodes_; }
    const BvhNode& root() const { return nodes_.front(); }
    /// Triangle indices permuted so every leaf covers a contiguous range.
    const std::vector<std::uint32_t>& order() const { return order_; }
    std::size_t depth() const;

    /// Nearest hit with t in (t_min, t_max); direction need not be unit length.
    std::optional<RayHit> intersect(const Vec3& origin, const Vec3& direction, double t_min = 1e-9,
                                    double t_max = std::numeric_limits<double>::infinity()) const;

    /// Unsigned distance from p to the closest surface point.
    double distance(const Vec3& p) const;

private:
    std::int32_t build(std::uint32_t first, std::uint32_t count);

    TriangleMesh mesh_;
    std::vector<BvhNode> nodes_;
    std::vector<std::uint32_t> order_;
};

inline Bvh build_bvh(TriangleMesh mesh) { return Bvh(std::move(mesh)); }

/// Möller–Trumbore; returns t for a hit in front of the origin.
std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& direction, const Vec3& a,
                                         const Vec3& b, const Vec3& c);

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace priorforge
