// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/viewspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "priorforge/error.hpp"

namespace priorforge {

int canonical_bin(double azimuth_deg) {
    if (!std::isfinite(azimuth_deg)) throw ConfigError("azimuth must be finite");
    double a = std::fmod(azimuth_deg + 45.0, 360.0);
    if (a < 0.0) a += 360.0;
    return std::min(static_cast<int>(a / 90.0), 3);
}

std::array<Camera, 4> CanonicalViews::cameras() const {
    std::array<Camera, 4> out;
    for (std::size_t b = 0; b < 4; ++b) {
        out[b] = camera_from_spherical(radius, kCanonicalAzimuths[b], elevation, fov, width, height);
    }
    return out;
}

std::vector<std::uint8_t> DepthImage::silhouette() const {
    std::vector<std::uint8_t> out(depth.size());
    for (std::size_t i = 0; i < depth.size(); ++i) out[i] = depth[i] > 0.0 ? 1 : 0;
    return out;
}

namespace {

double hit_depth(const Bvh& bvh, const Ray& ray) {
    const auto hit = bvh.intersect(ray.origin, ray.direction);
    return hit ? hit->t : 0.0;
}

}  // namespace

DepthImage render_depth(const Bvh& bvh, const Camera& camera) {
    const auto rays = generate_rays(camera);
    DepthImage img{camera.width, camera.height, std::vector<double>(rays.size(), 0.0)};
    const auto n = static_cast<std::ptrdiff_t>(rays.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) img.depth[i] = hit_depth(bvh, rays[i]);
    return img;
}

namespace serial {
DepthImage render_depth(const Bvh& bvh, const Camera& camera) {
    const auto rays = generate_rays(camera);
    DepthImage img{camera.width, camera.height, std::vector<double>(rays.size(), 0.0)};
    for (std::size_t i = 0; i < rays.size(); ++i) img.depth[i] = hit_depth(bvh, rays[i]);
    return img;
}
}  // namespace serial

void write_depth_pgm(const DepthImage& image, double near, double far, const std::filesystem::path& path) {
    if (!(near >= 0.0 && near < far)) throw ConfigError("depth mapping requires 0 <= near < far");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path.string());
    out << "P5\n" << image.width << ' ' << image.height << "\n65535\n";
    std::vector<unsigned char> bytes(image.depth.size() * 2);
    for (std::size_t i = 0; i < image.depth.size(); ++i) {
        const double d = image.depth[i];
        std::uint16_t v = 0;
        if (d > 0.0) {
            const double t = std::clamp((d - near) / (far - near), 0.0, 1.0);
            v = static_cast<std::uint16_t>(1 + std::lround(t * 65534.0));
        }
        bytes[2 * i] = static_cast<unsigned char>(v >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing image: " + path.string());

    auto sidecar = path;
    sidecar += ".txt";
    std::ofstream meta(sidecar, std::ios::binary);
    if (!meta) throw DataError("cannot write sidecar: " + sidecar.string());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", near);
    meta << "near = " << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.17g", far);
    meta << "far = " << buf << '\n';
    meta << "max_value = 65535\nmiss_value = 0\n"
         << "# hit depth = near + (value - 1) / (max_value - 1) * (far - near)\n";
}

}  // namespace priorforge
