// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "priorforge/field.hpp"
#include "priorforge/guidance.hpp"
#include "priorforge/mesh.hpp"
#include "priorforge/sampling.hpp"

namespace priorforge {

/// Densities are clamped to [kSparsityClamp, 1 - kSparsityClamp] inside the sparsity logs.
inline constexpr double kSparsityClamp = 1e-4;

/// True when min(d, 1-d) is in the clamp zone. The boundary is inclusive with
/// a relative slack covering the logit/logistic round trip of a density set
/// exactly to the clamp value.
inline bool in_sparsity_clamp(double smaller_side) { return smaller_side <= kSparsityClamp * (1.0 + 1e-12); }

/// Loss value with its dense gradient with respect to the raw field parameters.
struct LossValue {
    double value = 0.0;
    std::vector<double> grad;
};

struct LossBreakdown {
    double l_shape = 0.0;
    double l_sparse = 0.0;
    double l_diff = 0.0;
    double l_total = 0.0;
    double lambda = 0.0;
    double mu = 0.0;
};

struct CoLoss {
    LossBreakdown breakdown;
    std::vector<double> grad;
    /// Density at each alive keypoint, aligned with `alive`.
    std::vector<std::size_t> alive;
    std::vector<double> keypoint_density;
};

/// Mean BCE of the field against alive keypoint labels.
LossValue shape_loss(const KeypointSet& keypoints, const DensityField& field);

/// Mean of log d_c + log(1 - d_c) over the points, d_c the clamped density.
/// Minimizing pushes densities away from 0.5; the gradient vanishes in the clamp zones.
LossValue sparsity_loss(std::span<const Vec3> points, const DensityField& field);

/// l_total = l_diff + lambda·l_shape + mu·l_sparse, sparsity taken over the
/// alive keypoints followed by the guidance points.
CoLoss co_loss(const KeypointSet& keypoints, std::span<const Vec3> guidance_points, const DensityField& field,
               const GuidanceOracle& oracle, double lambda, double mu);

/// Unsigned distance from each point to the mesh surface.
std::vector<double> surface_distances(const Bvh& bvh, std::span<const Vec3> points);

struct SketchPoint {
    Vec3 point;
    double distance = 0.0;  // unsigned distance to the template surface
};

/// Mean over points of BCE against template occupancy, attenuated by
/// 1 - exp(-distance²/(2σ)); points near the surface are left free.
LossValue sketch_shape_loss(const Bvh& template_bvh, std::span<const SketchPoint> points, const DensityField& field,
                            double sigma_s);
LossValue sketch_shape_loss(std::span<const SketchPoint> points, std::span<const std::uint8_t> labels,
                            const DensityField& field, double sigma_s);

inline constexpr double kSketchSigma = 1.2;

namespace serial {
/// Single-threaded references: plain loops, sequential sums.
LossValue shape_loss(const KeypointSet& keypoints, const DensityField& field);
LossValue sparsity_loss(std::span<const Vec3> points, const DensityField& field);
}  // namespace serial

}  // namespace priorforge
