// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "priorforge/error.hpp"
#include "priorforge/parallel.hpp"
#include "priorforge/rng.hpp"
#include "priorforge/winding.hpp"

namespace priorforge {

GuidanceOracle GuidanceOracle::neutral() { return {}; }

GuidanceOracle GuidanceOracle::target_shape(TriangleMesh target, double noise_rate, std::uint64_t seed,
                                            int lattice) {
    if (!(noise_rate >= 0.0 && noise_rate < 0.5)) throw ConfigError("noise_rate must lie in [0, 0.5)");
    if (lattice < 1) throw ConfigError("guidance lattice must be >= 1");
    validate(target);
    GuidanceOracle o;
    o.kind_ = OracleKind::TargetShape;
    o.noise_rate_ = noise_rate;
    o.lattice_ = lattice;
    auto bvh = std::make_shared<const Bvh>(std::move(target));
    auto labels = occupancy_labels(*bvh, cell_centers(static_cast<std::uint32_t>(lattice)));
    if (noise_rate > 0.0) {
        const CounterRng flips = CounterRng(seed).split(fnv1a64("guidance.flips"));
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (static_cast<double>(flips.at(i) >> 11) * 0x1.0p-53 < noise_rate) labels[i] ^= 1;
        }
    }
    o.target_ = std::move(bvh);
    o.labels_ = std::make_shared<const std::vector<std::uint8_t>>(std::move(labels));
    return o;
}

GuidanceOracle GuidanceOracle::recorded(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open guidance file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("# prior-forge guidance v1", 0) != 0) {
        throw DataError(path.string() + ": missing guidance header");
    }
    std::vector<double> grads;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        double x, y, z, g;
        if (!(is >> x >> y >> z >> g) || !std::isfinite(g)) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed guidance record");
        }
        grads.push_back(g);
    }
    GuidanceOracle o;
    o.kind_ = OracleKind::Recorded;
    o.recorded_ = std::make_shared<const std::vector<double>>(std::move(grads));
    return o;
}

std::uint8_t GuidanceOracle::label(const Vec3& p) const {
    if (kind_ != OracleKind::TargetShape) throw ConfigError("only target_shape oracles carry labels");
    std::size_t idx[3];
    for (int k = 0; k < 3; ++k) {
        const double u = (std::clamp(p[k], -1.0, 1.0) + 1.0) * 0.5 * lattice_;
        idx[k] = static_cast<std::size_t>(std::min(static_cast<int>(u), lattice_ - 1));
    }
    const auto l = static_cast<std::size_t>(lattice_);
    return (*labels_)[idx[0] + l * (idx[1] + l * idx[2])];
}

OracleResult GuidanceOracle::eval(std::span<const Vec3> points, std::span<const FieldSample> samples) const {
    OracleResult r;
    const std::size_t n = points.size();
    r.grad_density.assign(n, 0.0);
    r.grad_raw.assign(n, 0.0);
    if (kind_ == OracleKind::Neutral || n == 0) return r;

    if (kind_ == OracleKind::Recorded) {
        if (recorded_->size() != n) {
            throw DataError("recorded guidance has " + std::to_string(recorded_->size()) + " points, evaluation has " +
                            std::to_string(n));
        }
        for (std::size_t i = 0; i < n; ++i) {
            r.grad_density[i] = (*recorded_)[i];
            r.grad_raw[i] = (*recorded_)[i] * samples[i].density * samples[i].complement;
        }
        return r;
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    const std::size_t chunks = (n + kReductionChunk - 1) / kReductionChunk;
    std::vector<double> partial(chunks, 0.0);
    const auto nc = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < nc; ++c) {
        const std::size_t lo = c * kReductionChunk, hi = std::min(n, lo + kReductionChunk);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const FieldSample& s = samples[i];
            const bool occupied = label(points[i]) != 0;
            // BCE in logit space: -log d = softplus(-z), -log(1-d) = softplus(z).
            acc += occupied ? softplus(-s.raw) : softplus(s.raw);
            r.grad_raw[i] = (occupied ? -s.complement : s.density) * inv_n;
            r.grad_density[i] = (occupied ? -1.0 / s.density : 1.0 / s.complement) * inv_n;
        }
        partial[c] = acc;
    }
    r.loss = ordered_sum(partial) * inv_n;
    return r;
}

OracleResult GuidanceOracle::eval(std::span<const Vec3> points, const DensityField& field) const {
    std::vector<FieldSample> samples(points.size());
    const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) samples[i] = field.sample(points[i]);
    return eval(points, samples);
}

void write_guidance(std::span<const Vec3> points, std::span<const double> grad_density,
                    const std::filesystem::path& path) {
    if (points.size() != grad_density.size()) throw DataError("guidance points and gradients differ in length");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write guidance file: " + path.string());
    out << "# prior-forge guidance v1\n";
    char buf[160];
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g\n", points[i].x, points[i].y, points[i].z,
                      grad_density[i]);
        out << buf;
    }
}

}  // namespace priorforge
