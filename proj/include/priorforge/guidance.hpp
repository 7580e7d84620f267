// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "priorforge/field.hpp"
#include "priorforge/mesh.hpp"

namespace priorforge {

enum class OracleKind { Neutral, TargetShape, Recorded };

struct OracleResult {
    double loss = 0.0;
    std::vector<double> grad_density;  // ∂L/∂d per point
    std::vector<double> grad_raw;      // ∂L/∂z per point, z the interpolated raw value
};

/// Stand-in for the image-space prior. A target_shape oracle prefers the
/// occupancy of a hidden mesh: its loss is the mean binary cross-entropy of
/// the field against target labels, precomputed once on a lattice of
/// `lattice`³ cells (a point takes the label of the cell containing it) and
/// flipped per cell with probability noise_rate.
class GuidanceOracle {
public:
    static constexpr int kDefaultLattice = 64;

    static GuidanceOracle neutral();
    static GuidanceOracle target_shape(TriangleMesh target, double noise_rate, std::uint64_t seed,
                                       int lattice = kDefaultLattice);
    /// Gradients replayed from a `# prior-forge guidance v1` file of `x y z grad`
    /// lines, grad being ∂L/∂d. The replayed loss value is reported as 0.
    static GuidanceOracle recorded(const std::filesystem::path& path);

    OracleKind kind() const { return kind_; }
    double noise_rate() const { return noise_rate_; }
    int lattice() const { return lattice_; }

    /// Target BVH for target_shape oracles, null otherwise.
    const Bvh* target() const { return target_.get(); }

    /// Noisy target label the oracle supervises with, for target_shape oracles.
    std::uint8_t label(const Vec3& p) const;

    OracleResult eval(std::span<const Vec3> points, std::span<const FieldSample> samples) const;
    OracleResult eval(std::span<const Vec3> points, const DensityField& field) const;

private:
    OracleKind kind_ = OracleKind::Neutral;
    double noise_rate_ = 0.0;
    int lattice_ = 0;
    std::shared_ptr<const Bvh> target_;
    std::shared_ptr<const std::vector<std::uint8_t>> labels_;
    std::shared_ptr<const std::vector<double>> recorded_;
};

/// Writes per-point ∂L/∂d in the recorded-oracle format.
void write_guidance(std::span<const Vec3> points, std::span<const double> grad_density,
                    const std::filesystem::path& path);

}  // namespace priorforge
