// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "priorforge/geometry.hpp"
#include "priorforge/rng.hpp"

namespace priorforge {

/// Pinhole camera looking from position at target.
struct Camera {
    Vec3 position;
    Vec3 target;
    Vec3 up{0.0, 1.0, 0.0};
    double vertical_fov = 40.0;  // degrees
    int width = 1;
    int height = 1;

    void validate() const;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
};

/// Orbit camera about the origin. Azimuth 0 looks from +z, azimuth 90 from +x;
/// positive elevation raises the camera toward +y.
Camera camera_from_spherical(double radius, double azimuth_deg, double elevation_deg, double fov_deg,
                             int width, int height);

/// One ray per pixel center, row-major from the top-left pixel.
std::vector<Ray> generate_rays(const Camera& camera);

/// Same pose and field of view, with width and height divided by n.
Camera sparse_plane(const Camera& camera, int n);

enum class Provenance : std::uint8_t { Template = 0, Grown = 1 };

struct Keypoint {
    Vec3 point;
    std::uint8_t label = 0;
    bool alive = true;
    std::uint32_t low_density_streak = 0;
    Provenance provenance = Provenance::Template;
};

inline constexpr int kDedupResolution = 64;

/// Dedup cell of a point in [-1,1]^3, x fastest.
std::uint32_t dedup_cell(const Vec3& p);

/// Persistent supervised point set with one claim per dedup cell. A cell
/// stays claimed after its keypoint dies so pruned regions are not
/// re-supervised by later views; grown points only require that no alive
/// keypoint holds the cell.
class KeypointSet {
public:
    KeypointSet();

    const std::vector<Keypoint>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t alive_count() const { return alive_; }

    bool cell_claimed(std::uint32_t cell) const { return claimed_[cell] != 0; }
    bool cell_has_alive(std::uint32_t cell) const { return alive_owner_[cell] >= 0; }

    /// Adds k if its cell is unclaimed (Template) or has no alive owner (Grown).
    bool insert(const Keypoint& k);

    /// Marks an alive entry dead; dead entries never revive.
    void kill(std::size_t index);
    void set_streak(std::size_t index, std::uint32_t streak) { entries_[index].low_density_streak = streak; }

    /// Alive entry indices in ascending dedup-cell order (spatially coherent).
    std::vector<std::size_t> alive_indices() const;

private:
    std::vector<Keypoint> entries_;
    std::vector<std::int32_t> alive_owner_;
    std::vector<std::uint8_t> claimed_;
    std::size_t alive_ = 0;
};

using Labeler = std::function<std::uint8_t(const Vec3&)>;

struct DepthRange {
    double near = 1.5;
    double far = 3.5;
    int samples_per_ray = 32;

    void validate() const;
};

/// Stratified depths along a ray: one uniform draw in each of
/// samples_per_ray equal sub-intervals of [near, far]. The draws are keyed by
/// the ray's bits, so identical rays produce identical samples.
std::vector<double> stratified_depths(const Ray& ray, const DepthRange& range, const CounterRng& seed);

/// Ray samples inside [-1,1]^3 (others discarded), in ray-major order.
std::vector<Vec3> ray_samples(std::span<const Ray> rays, const DepthRange& range, const CounterRng& seed);

/// Samples, labels and merges keypoints into `into`. Cells are claimed in
/// ray-major sample order; only newly claimed points are labeled, in parallel.
/// Returns the number of points added.
std::size_t append_keypoints(KeypointSet& into, std::span<const Ray> rays, const DepthRange& range,
                             const Labeler& labeler, const CounterRng& seed);

KeypointSet sample_keypoints(std::span<const Ray> rays, const DepthRange& range, const Labeler& labeler,
                             const CounterRng& seed);

/// Text format: `# prior-forge keypoints v1` header, then `x y z s alive` lines.
void write_keypoints(const KeypointSet& set, std::ostream& out);
void write_keypoints(const KeypointSet& set, const std::filesystem::path& path);
std::vector<Keypoint> read_keypoints(std::istream& in);
std::vector<Keypoint> read_keypoints(const std::filesystem::path& path);

/// Reads whitespace-separated `x y z` leading columns; '#' starts a comment.
std::vector<Vec3> read_points(const std::filesystem::path& path);

}  // namespace priorforge
