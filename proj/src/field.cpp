// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "priorforge/error.hpp"

namespace priorforge {

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

DensityField::DensityField(int resolution, double init_density) : resolution_(resolution) {
    if (resolution < 2) throw ConfigError("field resolution must be >= 2");
    if (!(init_density > 0.0 && init_density < 1.0)) throw ConfigError("init_density must lie in (0, 1)");
    params_.assign(static_cast<std::size_t>(resolution) * resolution * resolution, logit(init_density));
}

Vec3 DensityField::node_position(std::uint32_t node) const {
    const auto g = static_cast<std::uint32_t>(resolution_);
    const double h = spacing();
    return {-1.0 + (node % g) * h, -1.0 + (node / g % g) * h, -1.0 + (node / (g * g)) * h};
}

FieldSample DensityField::sample(const Vec3& p) const {
    FieldSample s;
    const int g = resolution_;
    const double scale = 0.5 * (g - 1);
    std::uint32_t idx[3];
    for (int k = 0; k < 3; ++k) {
        double c = p[k];
        if (!(c >= -1.0 && c <= 1.0)) {
            s.clamped = true;
            c = std::isnan(c) ? 0.0 : std::clamp(c, -1.0, 1.0);
        }
        const double u = (c + 1.0) * scale;
        const int i = std::min(static_cast<int>(u), g - 2);
        idx[k] = static_cast<std::uint32_t>(i);
        s.frac[k] = u - i;
    }
    const auto gu = static_cast<std::uint32_t>(g);
    s.stride = gu;
    s.base = idx[0] + gu * (idx[1] + gu * idx[2]);
    const double* p0 = params_.data() + s.base;
    const double* p1 = p0 + gu;
    const double* p2 = p0 + gu * gu;
    const double* p3 = p2 + gu;
    const auto [tx, ty, tz] = s.frac;
    const double c00 = p0[0] + tx * (p0[1] - p0[0]);
    const double c10 = p1[0] + tx * (p1[1] - p1[0]);
    const double c01 = p2[0] + tx * (p2[1] - p2[0]);
    const double c11 = p3[0] + tx * (p3[1] - p3[0]);
    const double c0 = c00 + ty * (c10 - c00);
    const double c1 = c01 + ty * (c11 - c01);
    const double raw = c0 + tz * (c1 - c0);
    s.raw = raw;
    const double e = std::exp(-std::abs(raw));
    const double big = 1.0 / (1.0 + e), small = e / (1.0 + e);
    s.density = raw >= 0.0 ? big : small;
    s.complement = raw >= 0.0 ? small : big;
    return s;
}

std::array<NodeGradient, 8> DensityField::query_grad(const Vec3& p) const {
    const FieldSample s = sample(p);
    const double slope = s.density * s.complement;
    std::array<NodeGradient, 8> out;
    for (int c = 0; c < 8; ++c) out[c] = {s.node(c), slope * s.weight(c)};
    return out;
}

bool DensityField::all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

std::size_t OccupancyGrid::count() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

double DensityGrid::sample(const Vec3& p) const {
    std::uint32_t lo[3], hi[3];
    double t[3];
    for (int k = 0; k < 3; ++k) {
        const double n = dims[k];
        const double u = std::clamp((std::clamp(p[k], -1.0, 1.0) + 1.0) * 0.5 * n - 0.5, 0.0, n - 1.0);
        lo[k] = static_cast<std::uint32_t>(u);
        hi[k] = std::min(lo[k] + 1, dims[k] - 1);
        t[k] = u - lo[k];
    }
    double v = 0.0;
    for (int c = 0; c < 8; ++c) {
        const bool bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
        const double w = (bx ? t[0] : 1.0 - t[0]) * (by ? t[1] : 1.0 - t[1]) * (bz ? t[2] : 1.0 - t[2]);
        const std::size_t idx = (bx ? hi[0] : lo[0]) +
                                static_cast<std::size_t>(dims[0]) *
                                    ((by ? hi[1] : lo[1]) + static_cast<std::size_t>(dims[1]) * (bz ? hi[2] : lo[2]));
        v += w * values[idx];
    }
    return v;
}

Vec3 cell_center(std::uint32_t res, std::uint32_t i, std::uint32_t j, std::uint32_t k) {
    const double h = 2.0 / res;
    return {-1.0 + (i + 0.5) * h, -1.0 + (j + 0.5) * h, -1.0 + (k + 0.5) * h};
}

std::vector<Vec3> cell_centers(std::uint32_t res) {
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(res) * res * res);
    for (std::uint32_t k = 0; k < res; ++k) {
        for (std::uint32_t j = 0; j < res; ++j) {
            for (std::uint32_t i = 0; i < res; ++i) out.push_back(cell_center(res, i, j, k));
        }
    }
    return out;
}

DensityGrid to_density_grid(const DensityField& field, int resolution) {
    if (resolution < 1) throw ConfigError("grid resolution must be >= 1");
    const auto r = static_cast<std::uint32_t>(resolution);
    DensityGrid grid;
    grid.dims = {r, r, r};
    grid.values.resize(static_cast<std::size_t>(r) * r * r);
    const auto n = static_cast<std::ptrdiff_t>(grid.values.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t idx = 0; idx < n; ++idx) {
        const auto u = static_cast<std::uint32_t>(idx);
        grid.values[idx] = static_cast<float>(field.query(cell_center(r, u % r, u / r % r, u / (r * r))));
    }
    return grid;
}

OccupancyGrid to_occupancy_grid(const DensityField& field, int resolution, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("occupancy threshold must lie in (0, 1)");
    if (resolution < 1) throw ConfigError("grid resolution must be >= 1");
    const auto r = static_cast<std::uint32_t>(resolution);
    OccupancyGrid grid;
    grid.dims = {r, r, r};
    grid.threshold = threshold;
    grid.values.resize(static_cast<std::size_t>(r) * r * r);
    const auto n = static_cast<std::ptrdiff_t>(grid.values.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t idx = 0; idx < n; ++idx) {
        const auto u = static_cast<std::uint32_t>(idx);
        grid.values[idx] = field.query(cell_center(r, u % r, u / r % r, u / (r * r))) > threshold ? 1 : 0;
    }
    return grid;
}

OccupancyGrid threshold_grid(const DensityGrid& grid, double threshold) {
    OccupancyGrid out;
    out.dims = grid.dims;
    out.threshold = threshold;
    out.values.resize(grid.values.size());
    for (std::size_t i = 0; i < grid.values.size(); ++i) out.values[i] = grid.values[i] > threshold ? 1 : 0;
    return out;
}

double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw DataError("IoU of grids with different sizes");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] && b[i]) ? 1 : 0;
        uni += (a[i] || b[i]) ? 1 : 0;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double iou(const OccupancyGrid& a, const OccupancyGrid& b) {
    if (a.dims != b.dims) throw DataError("IoU of grids with different dimensions");
    return iou(std::span<const std::uint8_t>(a.values), std::span<const std::uint8_t>(b.values));
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
    return b[0] | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

template <class Values>
void write_pfg1(const std::array<std::uint32_t, 3>& dims, const Values& values, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write grid file: " + path.string());
    out.write("PFG1", 4);
    for (auto d : dims) put_u32(out, d);
    for (auto v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    if (!out) throw DataError("failed writing grid file: " + path.string());
}

}  // namespace

void write_grid(const DensityGrid& grid, const std::filesystem::path& path) {
    write_pfg1(grid.dims, grid.values, path);
}

void write_grid(const OccupancyGrid& grid, const std::filesystem::path& path) {
    write_pfg1(grid.dims, grid.values, path);
}

DensityGrid read_grid(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open grid file: " + path.string());
    unsigned char header[16];
    if (!in.read(reinterpret_cast<char*>(header), 16) || std::memcmp(header, "PFG1", 4) != 0) {
        throw DataError(path.string() + ": not a PFG1 grid");
    }
    DensityGrid grid;
    std::size_t count = 1;
    for (int k = 0; k < 3; ++k) {
        grid.dims[k] = get_u32(header + 4 + 4 * k);
        if (grid.dims[k] == 0 || grid.dims[k] > 4096) throw DataError(path.string() + ": invalid grid dimensions");
        count *= grid.dims[k];
    }
    std::vector<unsigned char> payload(count * 4);
    if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()))) {
        throw DataError(path.string() + ": truncated grid payload");
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes after grid");
    grid.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        grid.values[i] = std::bit_cast<float>(get_u32(payload.data() + 4 * i));
        if (!std::isfinite(grid.values[i])) throw DataError(path.string() + ": non-finite grid value");
    }
    return grid;
}

}  // namespace priorforge
