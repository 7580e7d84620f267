// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
// Serial references against the OpenMP kernels. Arg(0) is the serial path,
// Arg(n > 0) the parallel kernel capped at n threads.
#include <benchmark/benchmark.h>

#include <thread>

#include "priorforge/losses.hpp"
#include "priorforge/parallel.hpp"
#include "priorforge/viewspace.hpp"
#include "priorforge/winding.hpp"
#include "shapes.hpp"

using namespace priorforge;

namespace {

std::vector<Vec3> uniform_points(std::size_t n, std::uint64_t seed) {
    CounterRng rng(seed);
    std::vector<Vec3> out(n);
    for (auto& p : out) p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    return out;
}

const Bvh& sphere_bvh() {
    static const Bvh bvh(normalize(shapes::icosphere(4, 1.0)));
    return bvh;
}

void apply_threads(const benchmark::State& state) { set_thread_limit(static_cast<int>(state.range(0))); }

void thread_args(benchmark::internal::Benchmark* b) {
    b->Arg(0);
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    for (int t = 1; t <= hw; t *= 2) b->Arg(t);
    b->UseRealTime()->Unit(benchmark::kMillisecond);
}

void BM_OccupancyLabels(benchmark::State& state) {
    const auto q = uniform_points(20000, 1);
    apply_threads(state);
    for (auto _ : state) {
        auto l = state.range(0) == 0 ? serial::occupancy_labels(sphere_bvh(), q) : occupancy_labels(sphere_bvh(), q);
        benchmark::DoNotOptimize(l.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(q.size()));
}
BENCHMARK(BM_OccupancyLabels)->Apply(thread_args);

void BM_RenderDepth(benchmark::State& state) {
    const Camera cam = camera_from_spherical(2.5, 30.0, 15.0, 40.0, 256, 256);
    apply_threads(state);
    for (auto _ : state) {
        auto img = state.range(0) == 0 ? serial::render_depth(sphere_bvh(), cam) : render_depth(sphere_bvh(), cam);
        benchmark::DoNotOptimize(img.depth.data());
    }
}
BENCHMARK(BM_RenderDepth)->Apply(thread_args);

struct LossInputs {
    DensityField field{64, 0.3};
    KeypointSet keypoints;
    std::vector<Vec3> points = uniform_points(200000, 3);

    LossInputs() {
        CounterRng rng(2);
        for (double& v : field.params()) v = rng.uniform(-3.0, 3.0);
        for (const Vec3& p : points) {
            Keypoint k;
            k.point = p;
            k.label = norm(p) < 0.6 ? 1 : 0;
            keypoints.insert(k);
        }
    }
};

const LossInputs& loss_inputs() {
    static const LossInputs in;
    return in;
}

void BM_ShapeLoss(benchmark::State& state) {
    const auto& in = loss_inputs();
    apply_threads(state);
    for (auto _ : state) {
        auto v = state.range(0) == 0 ? serial::shape_loss(in.keypoints, in.field) : shape_loss(in.keypoints, in.field);
        benchmark::DoNotOptimize(v.grad.data());
    }
}
BENCHMARK(BM_ShapeLoss)->Apply(thread_args);

void BM_SparsityLoss(benchmark::State& state) {
    const auto& in = loss_inputs();
    apply_threads(state);
    for (auto _ : state) {
        auto v = state.range(0) == 0 ? serial::sparsity_loss(in.points, in.field) : sparsity_loss(in.points, in.field);
        benchmark::DoNotOptimize(v.grad.data());
    }
}
BENCHMARK(BM_SparsityLoss)->Apply(thread_args);

}  // namespace

BENCHMARK_MAIN();
