// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/winding.hpp"

#include <cmath>

#include "priorforge/error.hpp"

namespace priorforge {

void WindingConfig::validate() const {
    if (!(beta > 1.0)) throw ConfigError("winding beta must exceed 1");
    if (!(inside_threshold > 0.0 && inside_threshold < 1.0)) {
        throw ConfigError("inside_threshold must lie in (0, 1)");
    }
}

double solid_angle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& q) {
    // Van Oosterom & Strackee (1983).
    const Vec3 qa = a - q, qb = b - q, qc = c - q;
    const double la = norm(qa), lb = norm(qb), lc = norm(qc);
    const double numer = dot(qa, cross(qb, qc));
    const double denom = la * lb * lc + dot(qa, qb) * lc + dot(qa, qc) * lb + dot(qb, qc) * la;
    if (numer == 0.0) return 0.0;
    return 2.0 * std::atan2(numer, denom);
}

double winding_exact(const TriangleMesh& mesh, const Vec3& q) {
    double sum = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        sum += solid_angle(mesh.corner(f, 0), mesh.corner(f, 1), mesh.corner(f, 2), q);
    }
    return sum / (4.0 * kPi);
}

double far_field_radius(const BvhNode& node) { return node.box.radius(); }

double winding_fast(const Bvh& bvh, const Vec3& q, const WindingConfig& cfg) {
    cfg.validate();
    const auto& nodes = bvh.nodes();
    const auto& order = bvh.order();
    const TriangleMesh& mesh = bvh.mesh();
    const bool exact_only = std::isinf(cfg.beta);
    double exact = 0.0;  // sum of solid angles
    double far = 0.0;    // sum of dipole terms, in steradians
    std::int32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const BvhNode& node = nodes[stack[--top]];
        if (!exact_only) {
            const Vec3 r = node.centroid - q;
            const double dist = norm(r);
            if (dist > cfg.beta * far_field_radius(node)) {
                far += dot(node.dipole, r) / (dist * dist * dist);
                continue;
            }
        }
        if (node.leaf()) {
            for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                const auto f = order[i];
                exact += solid_angle(mesh.corner(f, 0), mesh.corner(f, 1), mesh.corner(f, 2), q);
            }
        } else {
            stack[top++] = node.right;
            stack[top++] = node.left;
        }
    }
    return (exact + far) / (4.0 * kPi);
}

std::uint8_t occupancy_label(const Bvh& bvh, const Vec3& q, const WindingConfig& cfg) {
    return winding_fast(bvh, q, cfg) > cfg.inside_threshold ? 1 : 0;
}

std::vector<double> winding_numbers(const Bvh& bvh, std::span<const Vec3> queries, const WindingConfig& cfg) {
    std::vector<double> out(queries.size());
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = winding_fast(bvh, queries[i], cfg);
    return out;
}

std::vector<std::uint8_t> occupancy_labels(const Bvh& bvh, std::span<const Vec3> queries,
                                           const WindingConfig& cfg) {
    std::vector<std::uint8_t> out(queries.size());
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = occupancy_label(bvh, queries[i], cfg);
    return out;
}

namespace serial {

std::vector<double> winding_numbers(const Bvh& bvh, std::span<const Vec3> queries, const WindingConfig& cfg) {
    std::vector<double> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(winding_fast(bvh, q, cfg));
    return out;
}

std::vector<std::uint8_t> occupancy_labels(const Bvh& bvh, std::span<const Vec3> queries,
                                           const WindingConfig& cfg) {
    std::vector<std::uint8_t> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(occupancy_label(bvh, q, cfg));
    return out;
}

}  // namespace serial
}  // namespace priorforge
