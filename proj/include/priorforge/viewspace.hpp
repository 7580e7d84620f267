// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "priorforge/mesh.hpp"
#include "priorforge/sampling.hpp"

namespace priorforge {

/// Bin b covers azimuths [90b - 45, 90b + 45) modulo 360.
int canonical_bin(double azimuth_deg);

inline constexpr std::array<double, 4> kCanonicalAzimuths = {0.0, 90.0, 180.0, 270.0};

struct CanonicalViews {
    double radius = 2.5;
    double fov = 40.0;
    double elevation = 0.0;
    int width = 256;
    int height = 256;

    std::array<Camera, 4> cameras() const;
};

struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<double> depth;  // distance along the ray, 0 = miss; row-major from the top-left

    double at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
    std::vector<std::uint8_t> silhouette() const;
};

/// Nearest hit distance per pixel-center ray.
DepthImage render_depth(const Bvh& bvh, const Camera& camera);

namespace serial {
DepthImage render_depth(const Bvh& bvh, const Camera& camera);
}  // namespace serial

/// Binary P5 PGM with 16-bit big-endian samples: hits map linearly from
/// [near, far] onto [1, 65535] (clamped), misses are 0. Writes the mapping
/// constants to `<path>.txt` beside it.
void write_depth_pgm(const DepthImage& image, double near, double far, const std::filesystem::path& path);

}  // namespace priorforge
