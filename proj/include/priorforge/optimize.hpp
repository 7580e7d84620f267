// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "priorforge/field.hpp"
#include "priorforge/guidance.hpp"
#include "priorforge/losses.hpp"
#include "priorforge/mesh.hpp"
#include "priorforge/rng.hpp"
#include "priorforge/sampling.hpp"

namespace priorforge {

/// Every field is a config key of the same name (`key = value`).
struct OptimizeConfig {
    std::filesystem::path template_mesh;
    std::string oracle = "neutral";  // neutral | target_shape | recorded
    std::filesystem::path target_mesh;
    std::filesystem::path oracle_file;
    double oracle_noise = 0.0;
    int oracle_lattice = GuidanceOracle::kDefaultLattice;

    double lambda = 0.1;
    double mu = 0.01;
    int sparse_factor = 8;
    int plane_width = 512;
    int plane_height = 512;
    int grid_resolution = 64;
    int steps = 10000;
    int snapshot_step = 5000;  // 0 disables the intermediate snapshot
    double learning_rate = 1e-2;
    double prune_threshold = 0.01;
    int prune_streak = 10;
    double grow_threshold = 0.9;
    int grow_period = 250;
    int grow_budget = 512;
    int views_per_step = 1;
    std::uint64_t seed = 0;

    double orbit_radius = 2.5;
    double fov = 40.0;
    double elevation_min = -45.0;
    double elevation_max = 45.0;
    double near = 1.5;
    double far = 3.5;
    int samples_per_ray = 32;
    int guidance_samples_per_ray = 32;

    std::string init = "uniform";  // uniform | template
    double init_density = 0.1;

    std::filesystem::path output_dir;

    void validate() const;
};

/// Parses `key = value` lines; '#' starts a comment. Relative paths resolve
/// against base_dir. Unknown keys and malformed values raise ConfigError.
OptimizeConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
OptimizeConfig load_config(const std::filesystem::path& path);
void apply_setting(OptimizeConfig& cfg, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir = {});
/// Resolved config as ordered (key, value) pairs.
std::vector<std::pair<std::string, std::string>> config_entries(const OptimizeConfig& cfg);
const std::vector<std::string>& config_keys();

/// Bias-corrected first/second-moment descent.
class Adam {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-8;

    Adam(std::size_t size, double learning_rate);
    void step(std::span<double> params, std::span<const double> grad);
    std::uint64_t iterations() const { return t_; }

private:
    double lr_;
    std::uint64_t t_ = 0;
    std::vector<double> m_, v_;
};

struct StepRecord {
    int step = 0;
    LossBreakdown loss;
    double iou_template = 0.0;
    std::optional<double> iou_target;
    std::size_t pruned = 0;  // cumulative
    std::size_t grown = 0;   // cumulative
    std::size_t alive = 0;
    std::size_t keypoints = 0;
    std::vector<std::size_t> pruned_now;
    std::vector<std::size_t> grown_now;
};

struct OptimizationReport {
    std::vector<StepRecord> steps;
    std::size_t pruned = 0;
    std::size_t grown = 0;
    std::vector<std::filesystem::path> snapshots;
};

/// Template (and target) already in the normalized frame, plus the oracle.
struct Problem {
    TriangleMesh template_mesh;
    GuidanceOracle oracle;
};

/// Loads and normalizes the template; a target mesh is mapped with the
/// template's normalization so both share one frame.
Problem load_problem(const OptimizeConfig& cfg);

/// One co-supervised optimization. Each step samples views, merges their
/// sparse-plane keypoints, evaluates the combined loss with guidance points
/// from the full plane, updates prune streaks from the pre-update densities,
/// takes an Adam step, and every grow_period steps runs growth.
class Optimizer {
public:
    Optimizer(OptimizeConfig cfg, Problem problem);

    StepRecord step();
    int steps_done() const { return step_; }

    const OptimizeConfig& config() const { return cfg_; }
    const DensityField& field() const { return field_; }
    DensityField& field() { return field_; }
    const KeypointSet& keypoints() const { return keypoints_; }
    const Bvh& template_bvh() const { return *template_; }
    const GuidanceOracle& oracle() const { return oracle_; }
    /// Loss of the latest step, evaluated before its parameter update.
    const CoLoss& last_loss() const { return last_loss_; }

    /// Node-lattice occupancy (θ > 0, i.e. density > 0.5) and its IoU vs the
    /// template / target occupancy at the same nodes.
    std::vector<std::uint8_t> node_occupancy() const;
    double iou_template() const;
    std::optional<double> iou_target() const;

    /// Updates streaks from the densities of `loss` and kills keypoints whose
    /// streak reaches prune_streak. Returns killed entry indices.
    std::vector<std::size_t> prune(const CoLoss& loss);
    /// Uniform candidates with density > grow_threshold, template label 0 and
    /// no alive keypoint in their dedup cell become label-1 keypoints.
    std::vector<std::size_t> grow();

    std::vector<Camera> views_for_step(int step) const;

private:
    OptimizeConfig cfg_;
    std::shared_ptr<const Bvh> template_;
    GuidanceOracle oracle_;
    DensityField field_;
    Adam adam_;
    KeypointSet keypoints_;
    CounterRng root_;
    std::vector<std::uint8_t> template_nodes_;
    std::vector<std::uint8_t> target_nodes_;
    CoLoss last_loss_;
    int step_ = 0;
    std::size_t pruned_ = 0;
    std::size_t grown_ = 0;
};

using StepObserver = std::function<void(const StepRecord&, const Optimizer&)>;

std::string report_line(const StepRecord& r);

/// Runs cfg.steps steps. With a non-empty output_dir, writes report.jsonl,
/// snapshot_<step>.pfg and keypoints_<step>.txt at snapshot_step and at the
/// end, and keypoints.txt. A non-finite loss writes failure_state.json and
/// throws DataError.
OptimizationReport run(const OptimizeConfig& cfg, Problem problem, const StepObserver& observer = {});
OptimizationReport run(const OptimizeConfig& cfg, const StepObserver& observer = {});

}  // namespace priorforge
