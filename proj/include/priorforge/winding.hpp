// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "priorforge/geometry.hpp"
#include "priorforge/mesh.hpp"

namespace priorforge {

struct WindingConfig {
    /// Far-field admissibility: a node is expanded as a dipole when the query
    /// is farther than beta times the node radius from the node centroid.
    /// Infinity forces exact evaluation of every triangle.
    double beta = 2.0;
    double inside_threshold = 0.5;

    void validate() const;
};

/// Signed solid angle subtended by triangle (a, b, c) at q, in (-2π, 2π).
/// Positive when q sees the triangle's back side, i.e. q lies behind the face
/// normal of a counter-clockwise triangle. Zero for queries in the triangle plane.
double solid_angle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& q);

/// Brute-force generalized winding number over every face.
double winding_exact(const TriangleMesh& mesh, const Vec3& q);

/// Hierarchical winding number with first-order (dipole) far-field expansion.
double winding_fast(const Bvh& bvh, const Vec3& q, const WindingConfig& cfg = {});

/// Node radius used by the far-field test: half the diagonal of the node box.
double far_field_radius(const BvhNode& node);

/// 1 iff winding_fast(q) > cfg.inside_threshold.
std::uint8_t occupancy_label(const Bvh& bvh, const Vec3& q, const WindingConfig& cfg = {});

/// Batch kernels parallel over queries; results do not depend on the thread count.
std::vector<double> winding_numbers(const Bvh& bvh, std::span<const Vec3> queries,
                                    const WindingConfig& cfg = {});
std::vector<std::uint8_t> occupancy_labels(const Bvh& bvh, std::span<const Vec3> queries,
                                           const WindingConfig& cfg = {});

namespace serial {
/// Single-threaded reference for the batch kernels.
std::vector<double> winding_numbers(const Bvh& bvh, std::span<const Vec3> queries,
                                    const WindingConfig& cfg = {});
std::vector<std::uint8_t> occupancy_labels(const Bvh& bvh, std::span<const Vec3> queries,
                                           const WindingConfig& cfg = {});
}  // namespace serial

}  // namespace priorforge
