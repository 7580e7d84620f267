// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/losses.hpp"

#include <algorithm>
#include <cmath>

#include "priorforge/error.hpp"
#include "priorforge/parallel.hpp"
#include "priorforge/winding.hpp"

namespace priorforge {

namespace {

std::vector<FieldSample> sample_all(const DensityField& field, std::span<const Vec3> points) {
    std::vector<FieldSample> out(points.size());
    const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = field.sample(points[i]);
    return out;
}

// Parallel per-point terms, chunk partials combined in chunk order. term(i)
// returns the loss contribution and writes the per-point ∂/∂z into dz[i].
template <class Term>
double chunked_terms(std::size_t n, std::vector<double>& dz, Term term) {
    dz.assign(n, 0.0);
    const std::size_t chunks = (n + kReductionChunk - 1) / kReductionChunk;
    std::vector<double> partial(chunks, 0.0);
    const auto nc = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < nc; ++c) {
        const std::size_t lo = c * kReductionChunk, hi = std::min(n, lo + kReductionChunk);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += term(i, dz[i]);
        partial[c] = acc;
    }
    return ordered_sum(partial);
}

// Ordered scatter of per-point ∂/∂z through the trilinear stencil.
void scatter(std::vector<double>& grad, std::span<const FieldSample> samples, std::span<const double> dz,
             double scale) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double g = dz[i] * scale;
        if (g == 0.0) continue;
        for (int c = 0; c < 8; ++c) grad[samples[i].node(c)] += g * samples[i].weight(c);
    }
}

struct PointTerms {
    double bce, bce_dz, sparse, sparse_dz;
};

// BCE and sparsity terms with their ∂/∂z, sharing l = log1p(e^-|z|):
// -log d = max(-z, 0) + l, -log(1-d) = max(z, 0) + l. In the clamp zone both
// logs take the clamped density and the gradient is zero.
PointTerms point_terms(const FieldSample& s, bool occupied) {
    const double lo = std::min(s.density, s.complement), hi = std::max(s.density, s.complement);
    const double l = std::log1p(lo / hi);
    const double z = s.raw;
    PointTerms t;
    t.bce = (occupied ? std::max(-z, 0.0) : std::max(z, 0.0)) + l;
    t.bce_dz = occupied ? -s.complement : s.density;
    if (in_sparsity_clamp(lo)) {
        t.sparse = std::log(kSparsityClamp) + std::log1p(-kSparsityClamp);
        t.sparse_dz = 0.0;
    } else {
        t.sparse = -(std::abs(z) + 2.0 * l);
        t.sparse_dz = s.complement - s.density;
    }
    return t;
}

std::vector<Vec3> alive_points(const KeypointSet& keypoints, const std::vector<std::size_t>& alive) {
    std::vector<Vec3> pts(alive.size());
    for (std::size_t i = 0; i < alive.size(); ++i) pts[i] = keypoints.entries()[alive[i]].point;
    return pts;
}

}  // namespace

LossValue shape_loss(const KeypointSet& keypoints, const DensityField& field) {
    const auto alive = keypoints.alive_indices();
    if (alive.empty()) throw DataError("shape loss needs at least one alive keypoint");
    const auto pts = alive_points(keypoints, alive);
    const auto samples = sample_all(field, pts);
    std::vector<double> dz;
    const double sum = chunked_terms(alive.size(), dz, [&](std::size_t i, double& g) {
        const PointTerms t = point_terms(samples[i], keypoints.entries()[alive[i]].label != 0);
        g = t.bce_dz;
        return t.bce;
    });
    const double inv_n = 1.0 / static_cast<double>(alive.size());
    LossValue out{sum * inv_n, std::vector<double>(field.size(), 0.0)};
    scatter(out.grad, samples, dz, inv_n);
    return out;
}

LossValue sparsity_loss(std::span<const Vec3> points, const DensityField& field) {
    if (points.empty()) throw DataError("sparsity loss needs at least one point");
    const auto samples = sample_all(field, points);
    std::vector<double> dz;
    const double sum = chunked_terms(points.size(), dz, [&](std::size_t i, double& g) {
        const PointTerms t = point_terms(samples[i], false);
        g = t.sparse_dz;
        return t.sparse;
    });
    const double inv_n = 1.0 / static_cast<double>(points.size());
    LossValue out{sum * inv_n, std::vector<double>(field.size(), 0.0)};
    scatter(out.grad, samples, dz, inv_n);
    return out;
}

CoLoss co_loss(const KeypointSet& keypoints, std::span<const Vec3> guidance_points, const DensityField& field,
               const GuidanceOracle& oracle, double lambda, double mu) {
    if (!(lambda >= 0.0) || !(mu >= 0.0)) throw ConfigError("lambda and mu must be non-negative");
    CoLoss out;
    out.alive = keypoints.alive_indices();
    if (out.alive.empty()) throw DataError("co-supervision needs at least one alive keypoint");
    const std::size_t nk = out.alive.size(), ng = guidance_points.size();
    const double ws = lambda / static_cast<double>(nk), wp = mu / static_cast<double>(nk + ng);
    const auto& entries = keypoints.entries();

    // Keypoints: shape and sparsity terms in one pass; kdz holds the combined
    // per-point coefficient so each stencil is scattered once.
    std::vector<FieldSample> ks(nk);
    std::vector<double> kdz(nk);
    out.keypoint_density.resize(nk);
    const std::size_t kchunks = (nk + kReductionChunk - 1) / kReductionChunk;
    std::vector<double> shape_part(kchunks, 0.0), ksparse_part(kchunks, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(kchunks); ++c) {
        const std::size_t lo = c * kReductionChunk, hi = std::min(nk, lo + kReductionChunk);
        double shape_acc = 0.0, sparse_acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const Keypoint& k = entries[out.alive[i]];
            ks[i] = field.sample(k.point);
            const PointTerms t = point_terms(ks[i], k.label != 0);
            shape_acc += t.bce;
            sparse_acc += t.sparse;
            kdz[i] = ws * t.bce_dz + wp * t.sparse_dz;
            out.keypoint_density[i] = ks[i].density;
        }
        shape_part[c] = shape_acc;
        ksparse_part[c] = sparse_acc;
    }

    const auto gs = sample_all(field, guidance_points);
    std::vector<double> gsparse_dz;
    const double gsparse_sum = chunked_terms(ng, gsparse_dz, [&](std::size_t i, double& g) {
        const PointTerms t = point_terms(gs[i], false);
        g = t.sparse_dz;
        return t.sparse;
    });
    const OracleResult diff = oracle.eval(guidance_points, gs);

    auto& b = out.breakdown;
    b.lambda = lambda;
    b.mu = mu;
    b.l_shape = ordered_sum(shape_part) / static_cast<double>(nk);
    b.l_sparse = (ordered_sum(ksparse_part) + gsparse_sum) / static_cast<double>(nk + ng);
    b.l_diff = diff.loss;
    b.l_total = b.l_diff + lambda * b.l_shape + mu * b.l_sparse;

    std::vector<double> gdz(ng);
    for (std::size_t i = 0; i < ng; ++i) gdz[i] = diff.grad_raw[i] + wp * gsparse_dz[i];
    out.grad.assign(field.size(), 0.0);
    scatter(out.grad, ks, kdz, 1.0);
    scatter(out.grad, gs, gdz, 1.0);
    return out;
}

std::vector<double> surface_distances(const Bvh& bvh, std::span<const Vec3> points) {
    std::vector<double> out(points.size());
    const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = bvh.distance(points[i]);
    return out;
}

LossValue sketch_shape_loss(std::span<const SketchPoint> points, std::span<const std::uint8_t> labels,
                            const DensityField& field, double sigma_s) {
    if (points.empty()) throw DataError("sketch-shape loss needs at least one point");
    if (labels.size() != points.size()) throw DataError("sketch-shape labels and points differ in length");
    if (!(sigma_s > 0.0)) throw ConfigError("sigma_s must be positive");
    std::vector<Vec3> pts(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].distance >= 0.0)) throw DataError("sketch-shape distance must be non-negative");
        pts[i] = points[i].point;
    }
    const auto samples = sample_all(field, pts);
    std::vector<double> dz;
    const double sum = chunked_terms(points.size(), dz, [&](std::size_t i, double& g) {
        const double d = points[i].distance;
        const double atten = -std::expm1(-d * d / (2.0 * sigma_s));
        const PointTerms t = point_terms(samples[i], labels[i] != 0);
        g = atten * t.bce_dz;
        return atten * t.bce;
    });
    const double inv_n = 1.0 / static_cast<double>(points.size());
    LossValue out{sum * inv_n, std::vector<double>(field.size(), 0.0)};
    scatter(out.grad, samples, dz, inv_n);
    return out;
}

LossValue sketch_shape_loss(const Bvh& template_bvh, std::span<const SketchPoint> points, const DensityField& field,
                            double sigma_s) {
    std::vector<Vec3> pts(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) pts[i] = points[i].point;
    const auto labels = occupancy_labels(template_bvh, pts);
    return sketch_shape_loss(points, labels, field, sigma_s);
}

namespace serial {

LossValue shape_loss(const KeypointSet& keypoints, const DensityField& field) {
    LossValue out{0.0, std::vector<double>(field.size(), 0.0)};
    std::size_t n = 0;
    for (const auto& k : keypoints.entries()) n += k.alive ? 1 : 0;
    if (n == 0) throw DataError("shape loss needs at least one alive keypoint");
    for (const auto& k : keypoints.entries()) {
        if (!k.alive) continue;
        const FieldSample s = field.sample(k.point);
        const double d = s.density;
        out.value -= k.label ? std::log(d) : std::log1p(-d);
        const double dz = k.label ? -(1.0 - d) : d;
        for (int c = 0; c < 8; ++c) out.grad[s.node(c)] += dz * s.weight(c) / static_cast<double>(n);
    }
    out.value /= static_cast<double>(n);
    return out;
}

LossValue sparsity_loss(std::span<const Vec3> points, const DensityField& field) {
    if (points.empty()) throw DataError("sparsity loss needs at least one point");
    LossValue out{0.0, std::vector<double>(field.size(), 0.0)};
    const double n = static_cast<double>(points.size());
    for (const auto& p : points) {
        const FieldSample s = field.sample(p);
        if (in_sparsity_clamp(std::min(s.density, 1.0 - s.density))) {
            out.value += std::log(kSparsityClamp) + std::log1p(-kSparsityClamp);
            continue;
        }
        out.value += std::log(s.density) + std::log(1.0 - s.density);
        const double dz = (1.0 / s.density - 1.0 / (1.0 - s.density)) * s.density * (1.0 - s.density);
        for (int c = 0; c < 8; ++c) out.grad[s.node(c)] += dz * s.weight(c) / n;
    }
    out.value /= n;
    return out;
}

}  // namespace serial

}  // namespace priorforge
