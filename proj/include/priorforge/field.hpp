// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "priorforge/geometry.hpp"

namespace priorforge {

/// Numerically stable logistic and its complement.
double logistic(double z);
double logit(double p);
/// log(1 + e^z) without overflow.
double softplus(double z);

/// Everything a loss needs about one field evaluation: the interpolated raw
/// value, the density and its complement computed without cancellation, and
/// the trilinear stencil (corner c = dx + 2dy + 4dz of the cell at `base`).
struct FieldSample {
    double raw = 0.0;
    double density = 0.5;
    double complement = 0.5;  // 1 - density
    std::array<double, 3> frac{};
    std::uint32_t base = 0;
    std::uint32_t stride = 1;  // G
    bool clamped = false;      // the query point was outside [-1,1]^3

    std::uint32_t node(int c) const {
        return base + (c & 1) + stride * (((c >> 1) & 1) + stride * ((c >> 2) & 1));
    }
    double weight(int c) const {
        return ((c & 1) ? frac[0] : 1.0 - frac[0]) * ((c & 2) ? frac[1] : 1.0 - frac[1]) *
               ((c & 4) ? frac[2] : 1.0 - frac[2]);
    }
};

struct NodeGradient {
    std::uint32_t node = 0;
    double value = 0.0;  // ∂density/∂θ_node
};

/// Trainable density on [-1,1]^3: logistic of the trilinear interpolation of
/// raw parameters stored on a G^3 node lattice (node i at -1 + i·2/(G-1), x fastest).
class DensityField {
public:
    DensityField(int resolution, double init_density);

    int resolution() const { return resolution_; }
    std::size_t size() const { return params_.size(); }
    double spacing() const { return 2.0 / (resolution_ - 1); }
    Vec3 node_position(std::uint32_t node) const;

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    FieldSample sample(const Vec3& p) const;
    double query(const Vec3& p) const { return sample(p).density; }
    std::array<NodeGradient, 8> query_grad(const Vec3& p) const;

    bool all_finite() const;

private:
    int resolution_;
    std::vector<double> params_;
};

inline DensityField new_field(int resolution, double init_density) { return DensityField(resolution, init_density); }

/// Binary voxel grid over [-1,1]^3, values at cell centers, x fastest.
struct OccupancyGrid {
    std::array<std::uint32_t, 3> dims{0, 0, 0};
    std::vector<std::uint8_t> values;
    double threshold = 0.5;

    std::size_t size() const { return values.size(); }
    std::size_t count() const;
};

/// Real-valued grid over [-1,1]^3 at cell centers; the PFG1 payload.
struct DensityGrid {
    std::array<std::uint32_t, 3> dims{0, 0, 0};
    std::vector<float> values;

    /// Trilinear interpolation between cell centers, clamped at the border.
    double sample(const Vec3& p) const;
};

/// Cell-center coordinates of a cubic grid.
Vec3 cell_center(std::uint32_t res, std::uint32_t i, std::uint32_t j, std::uint32_t k);
std::vector<Vec3> cell_centers(std::uint32_t res);

OccupancyGrid to_occupancy_grid(const DensityField& field, int resolution, double threshold);
DensityGrid to_density_grid(const DensityField& field, int resolution);
OccupancyGrid threshold_grid(const DensityGrid& grid, double threshold);

/// |a ∩ b| / |a ∪ b|, 0 when both are empty. Dimensions must match.
double iou(const OccupancyGrid& a, const OccupancyGrid& b);
double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// PFG1: "PFG1", three little-endian u32 dims, then little-endian float32 values.
void write_grid(const DensityGrid& grid, const std::filesystem::path& path);
void write_grid(const OccupancyGrid& grid, const std::filesystem::path& path);
DensityGrid read_grid(const std::filesystem::path& path);

}  // namespace priorforge
