// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/sampling.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "priorforge/error.hpp"

namespace priorforge {

void Camera::validate() const {
    if (!(vertical_fov > 0.0 && vertical_fov < 180.0)) throw ConfigError("camera fov must lie in (0, 180)");
    if (width < 1 || height < 1) throw ConfigError("camera width and height must be >= 1");
    if (position == target) throw ConfigError("camera position coincides with target");
    if (!is_finite(position) || !is_finite(target) || !is_finite(up)) {
        throw ConfigError("camera pose must be finite");
    }
    if (norm(cross(target - position, up)) < 1e-12) throw ConfigError("camera up vector parallel to view");
}

Camera camera_from_spherical(double radius, double azimuth_deg, double elevation_deg, double fov_deg,
                             int width, int height) {
    if (!(radius > 0.0)) throw ConfigError("orbit radius must be positive");
    if (!(std::abs(elevation_deg) < 90.0 - 1e-9)) {
        throw ConfigError("elevation must lie strictly inside (-90, 90)");
    }
    const double az = azimuth_deg * kPi / 180.0;
    const double el = elevation_deg * kPi / 180.0;
    Camera cam;
    cam.position = {radius * std::cos(el) * std::sin(az), radius * std::sin(el),
                    radius * std::cos(el) * std::cos(az)};
    cam.target = {};
    cam.vertical_fov = fov_deg;
    cam.width = width;
    cam.height = height;
    cam.validate();
    return cam;
}

std::vector<Ray> generate_rays(const Camera& camera) {
    camera.validate();
    const Vec3 forward = normalized(camera.target - camera.position);
    const Vec3 right = normalized(cross(forward, camera.up));
    const Vec3 up = cross(right, forward);
    const double tan_half = std::tan(0.5 * camera.vertical_fov * kPi / 180.0);
    const double aspect = static_cast<double>(camera.width) / camera.height;

    std::vector<Ray> rays(static_cast<std::size_t>(camera.width) * camera.height);
    const int w = camera.width, h = camera.height;
#pragma omp parallel for schedule(static)
    for (int j = 0; j < h; ++j) {
        const double sy = (1.0 - 2.0 * (j + 0.5) / h) * tan_half;
        for (int i = 0; i < w; ++i) {
            const double sx = (2.0 * (i + 0.5) / w - 1.0) * tan_half * aspect;
            rays[static_cast<std::size_t>(j) * w + i] = {camera.position, normalized(forward + sx * right + sy * up)};
        }
    }
    return rays;
}

Camera sparse_plane(const Camera& camera, int n) {
    if (n < 1) throw ConfigError("sparse factor must be >= 1");
    if (camera.width % n != 0 || camera.height % n != 0) {
        throw ConfigError("sparse factor " + std::to_string(n) + " does not divide the " +
                          std::to_string(camera.width) + "x" + std::to_string(camera.height) + " plane");
    }
    Camera out = camera;
    out.width = camera.width / n;
    out.height = camera.height / n;
    return out;
}

std::uint32_t dedup_cell(const Vec3& p) {
    std::uint32_t idx[3];
    for (int k = 0; k < 3; ++k) {
        const double u = (std::clamp(p[k], -1.0, 1.0) + 1.0) * 0.5 * kDedupResolution;
        idx[k] = static_cast<std::uint32_t>(std::min(static_cast<int>(u), kDedupResolution - 1));
    }
    return idx[0] + kDedupResolution * (idx[1] + kDedupResolution * idx[2]);
}

KeypointSet::KeypointSet()
    : alive_owner_(static_cast<std::size_t>(kDedupResolution) * kDedupResolution * kDedupResolution, -1),
      claimed_(alive_owner_.size(), 0) {}

bool KeypointSet::insert(const Keypoint& k) {
    const auto cell = dedup_cell(k.point);
    if (k.provenance == Provenance::Template ? claimed_[cell] != 0 : alive_owner_[cell] >= 0) return false;
    claimed_[cell] = 1;
    Keypoint entry = k;
    entry.alive = true;
    entry.low_density_streak = 0;
    alive_owner_[cell] = static_cast<std::int32_t>(entries_.size());
    entries_.push_back(entry);
    ++alive_;
    return true;
}

void KeypointSet::kill(std::size_t index) {
    Keypoint& k = entries_[index];
    if (!k.alive) return;
    k.alive = false;
    const auto cell = dedup_cell(k.point);
    if (alive_owner_[cell] == static_cast<std::int32_t>(index)) alive_owner_[cell] = -1;
    --alive_;
}

std::vector<std::size_t> KeypointSet::alive_indices() const {
    std::vector<std::size_t> out;
    out.reserve(alive_);
    for (const auto owner : alive_owner_) {
        if (owner >= 0) out.push_back(static_cast<std::size_t>(owner));
    }
    return out;
}

void DepthRange::validate() const {
    if (!(near > 0.0 && near < far)) throw ConfigError("depth range requires 0 < near < far");
    if (samples_per_ray < 1) throw ConfigError("samples_per_ray must be >= 1");
}

namespace {

std::uint64_t ray_key(const Ray& ray) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : {ray.origin.x, ray.origin.y, ray.origin.z, ray.direction.x, ray.direction.y, ray.direction.z}) {
        const auto bits = std::bit_cast<std::array<unsigned char, sizeof(double)>>(v);
        h = fnv1a64(bits, h);
    }
    return h;
}

bool in_domain(const Vec3& p) {
    return p.x >= -1.0 && p.x <= 1.0 && p.y >= -1.0 && p.y <= 1.0 && p.z >= -1.0 && p.z <= 1.0;
}

}  // namespace

std::vector<double> stratified_depths(const Ray& ray, const DepthRange& range, const CounterRng& seed) {
    CounterRng rng = seed.split(ray_key(ray));
    std::vector<double> out(static_cast<std::size_t>(range.samples_per_ray));
    const double step = (range.far - range.near) / range.samples_per_ray;
    for (int s = 0; s < range.samples_per_ray; ++s) out[s] = range.near + (s + rng.uniform()) * step;
    return out;
}

std::vector<Vec3> ray_samples(std::span<const Ray> rays, const DepthRange& range, const CounterRng& seed) {
    range.validate();
    const auto spr = static_cast<std::size_t>(range.samples_per_ray);
    std::vector<Vec3> raw(rays.size() * spr);
    std::vector<std::uint8_t> keep(raw.size());
    const auto n = static_cast<std::ptrdiff_t>(rays.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
        const auto depths = stratified_depths(rays[r], range, seed);
        for (std::size_t s = 0; s < spr; ++s) {
            const Vec3 p = rays[r].origin + depths[s] * rays[r].direction;
            raw[r * spr + s] = p;
            keep[r * spr + s] = in_domain(p) ? 1 : 0;
        }
    }
    std::vector<Vec3> out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (keep[i]) out.push_back(raw[i]);
    }
    return out;
}

std::size_t append_keypoints(KeypointSet& into, std::span<const Ray> rays, const DepthRange& range,
                             const Labeler& labeler, const CounterRng& seed) {
    const auto samples = ray_samples(rays, range, seed);

    // Sequential claim pass: the first sample reaching a free cell wins.
    std::vector<Vec3> fresh;
    std::vector<std::uint32_t> fresh_cells;
    std::vector<std::uint8_t> taken(static_cast<std::size_t>(kDedupResolution) * kDedupResolution * kDedupResolution, 0);
    for (const auto& p : samples) {
        const auto cell = dedup_cell(p);
        if (into.cell_claimed(cell) || taken[cell]) continue;
        taken[cell] = 1;
        fresh.push_back(p);
        fresh_cells.push_back(cell);
    }

    std::vector<std::uint8_t> labels(fresh.size());
    const auto n = static_cast<std::ptrdiff_t>(fresh.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) labels[i] = labeler(fresh[i]);

    std::size_t added = 0;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        Keypoint k;
        k.point = fresh[i];
        k.label = labels[i];
        k.provenance = Provenance::Template;
        if (into.insert(k)) ++added;
    }
    return added;
}

KeypointSet sample_keypoints(std::span<const Ray> rays, const DepthRange& range, const Labeler& labeler,
                             const CounterRng& seed) {
    KeypointSet set;
    append_keypoints(set, rays, range, labeler, seed);
    return set;
}

void write_keypoints(const KeypointSet& set, std::ostream& out) {
    out << "# prior-forge keypoints v1\n";
    char buf[128];
    for (const auto& k : set.entries()) {
        std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %d %d\n", k.point.x, k.point.y, k.point.z,
                      static_cast<int>(k.label), k.alive ? 1 : 0);
        out << buf;
    }
}

void write_keypoints(const KeypointSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write keypoints file: " + path.string());
    write_keypoints(set, out);
}

std::vector<Keypoint> read_keypoints(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("# prior-forge keypoints v1", 0) != 0) {
        throw DataError("missing keypoints header");
    }
    std::vector<Keypoint> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        Keypoint k;
        int s = 0, alive = 0;
        if (!(is >> k.point.x >> k.point.y >> k.point.z >> s >> alive) || (s != 0 && s != 1) ||
            (alive != 0 && alive != 1)) {
            throw DataError("keypoints line " + std::to_string(lineno) + ": malformed record");
        }
        k.label = static_cast<std::uint8_t>(s);
        k.alive = alive != 0;
        out.push_back(k);
    }
    return out;
}

std::vector<Keypoint> read_keypoints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open keypoints file: " + path.string());
    return read_keypoints(in);
}

std::vector<Vec3> read_points(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open points file: " + path.string());
    std::vector<Vec3> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream is(line);
        Vec3 p;
        if (!(is >> p.x)) continue;
        if (!(is >> p.y >> p.z) || !is_finite(p)) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed point");
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace priorforge
