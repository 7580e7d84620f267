// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "priorforge/losses.hpp"
#include "priorforge/parallel.hpp"
#include "priorforge/viewspace.hpp"
#include "priorforge/winding.hpp"
#include "shapes.hpp"

using namespace priorforge;

namespace {

constexpr int kThreadCounts[] = {1, 2, 3, 8};

struct RestoreThreads {
    ~RestoreThreads() { set_thread_limit(0); }
};

template <class T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

}  // namespace

TEST_CASE("thread limit") {
    const RestoreThreads restore;
    set_thread_limit(3);
    CHECK(thread_limit() == 3);
    set_thread_limit(-2);
    CHECK(thread_limit() >= 1);
    set_thread_limit(0);
    CHECK(thread_limit() >= 1);
}

TEST_CASE("ordered_sum adds in chunk order") {
    CHECK(ordered_sum({}) == 0.0);
    // Left to right: (1e16 + 1) + -1e16 loses the 1; any other order could keep it.
    CHECK(ordered_sum({1e16, 1.0, -1e16}) == 0.0);
    CHECK(ordered_sum({1.0, 1e16, -1e16}) == 0.0);
    CHECK(ordered_sum({1e16, -1e16, 1.0}) == 1.0);
}

TEST_CASE("winding kernels match the serial reference at every thread count") {
    const RestoreThreads restore;
    const Bvh bvh(shapes::torus(0.6, 0.25, 48, 24));
    CounterRng rng(11);
    const auto q = testing::random_points(20000, rng);
    const auto w_ref = serial::winding_numbers(bvh, q);
    const auto l_ref = serial::occupancy_labels(bvh, q);
    for (int t : kThreadCounts) {
        set_thread_limit(t);
        CHECK(same_bits(winding_numbers(bvh, q), w_ref));
        CHECK(same_bits(occupancy_labels(bvh, q), l_ref));
    }
}

TEST_CASE("render_depth matches the serial reference at every thread count") {
    const RestoreThreads restore;
    const Bvh bvh(normalize(shapes::cone(0.6, 0.8, 40)));
    const Camera cam = camera_from_spherical(2.5, 37.0, 20.0, 40.0, 96, 64);
    const DepthImage ref = serial::render_depth(bvh, cam);
    for (int t : kThreadCounts) {
        set_thread_limit(t);
        CHECK(same_bits(render_depth(bvh, cam).depth, ref.depth));
    }
}

TEST_CASE("losses are bitwise independent of the thread count") {
    const RestoreThreads restore;
    CounterRng rng(5);
    const DensityField field = testing::random_field(12, rng);
    const auto pts = testing::random_points(3 * kReductionChunk + 17, rng);
    const Bvh bvh(shapes::icosphere(2, 0.7));
    KeypointSet set;
    for (const Vec3& p : pts) {
        Keypoint k;
        k.point = p;
        k.label = occupancy_label(bvh, p);
        set.insert(k);
    }
    const auto guide = testing::random_points(kReductionChunk + 5, rng);
    const GuidanceOracle oracle = GuidanceOracle::neutral();

    set_thread_limit(1);
    const LossValue shape1 = shape_loss(set, field), sparse1 = sparsity_loss(pts, field);
    const CoLoss co1 = co_loss(set, guide, field, oracle, 0.1, 0.01);
    const LossValue shape_ref = serial::shape_loss(set, field), sparse_ref = serial::sparsity_loss(pts, field);
    CHECK(shape1.value == doctest::Approx(shape_ref.value).epsilon(1e-12));
    CHECK(sparse1.value == doctest::Approx(sparse_ref.value).epsilon(1e-12));

    for (int t : kThreadCounts) {
        set_thread_limit(t);
        const LossValue shape = shape_loss(set, field), sparse = sparsity_loss(pts, field);
        CHECK(shape.value == shape1.value);
        CHECK(same_bits(shape.grad, shape1.grad));
        CHECK(sparse.value == sparse1.value);
        CHECK(same_bits(sparse.grad, sparse1.grad));
        const CoLoss co = co_loss(set, guide, field, oracle, 0.1, 0.01);
        CHECK(co.breakdown.l_total == co1.breakdown.l_total);
        CHECK(same_bits(co.grad, co1.grad));
        CHECK(same_bits(co.keypoint_density, co1.keypoint_density));
    }
}
