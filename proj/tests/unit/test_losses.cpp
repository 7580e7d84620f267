// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "priorforge/error.hpp"
#include "priorforge/losses.hpp"
#include "priorforge/winding.hpp"
#include "shapes.hpp"

using namespace priorforge;
using testing::gradient_error;
using testing::random_field;
using testing::random_points;

namespace {

KeypointSet random_keypoints(std::size_t n, CounterRng& rng) {
    KeypointSet set;
    for (const Vec3& p : random_points(n, rng)) {
        Keypoint k;
        k.point = p;
        k.label = rng.uniform() < 0.5 ? 1 : 0;
        set.insert(k);
    }
    return set;
}

KeypointSet single(const Vec3& p, std::uint8_t label) {
    KeypointSet set;
    Keypoint k;
    k.point = p;
    k.label = label;
    set.insert(k);
    return set;
}

}  // namespace

TEST_CASE("shape loss") {
    SUBCASE("analytic values") {
        const DensityField half(4, 0.5);
        CHECK(shape_loss(single({0.1, 0.2, 0.3}, 1), half).value == doctest::Approx(0.693147).epsilon(1e-6));
        DensityField sure(4, 1.0 - 1e-12);
        CHECK(shape_loss(single({0.1, 0.2, 0.3}, 1), sure).value < 1e-11);
        DensityField saturated(4, 0.5);
        for (double& v : saturated.params()) v = 60.0;
        CHECK(shape_loss(single({0.1, 0.2, 0.3}, 1), saturated).value == doctest::Approx(std::exp(-60.0)).epsilon(1e-6));
        // -log(1-d) for d → 1 stays finite in logit space.
        CHECK(shape_loss(single({0.1, 0.2, 0.3}, 0), saturated).value == doctest::Approx(60.0).epsilon(1e-12));
    }
    SUBCASE("finite differences") {
        CounterRng rng(1);
        for (int trial = 0; trial < 10; ++trial) {
            DensityField f = random_field(5, rng);
            const KeypointSet set = random_keypoints(100, rng);
            const LossValue v = shape_loss(set, f);
            CHECK(gradient_error(f, [&] { return shape_loss(set, f).value; }, v.grad) < 1e-4);
        }
    }
    SUBCASE("dead keypoints leave the denominator") {
        CounterRng rng(2);
        const DensityField f = random_field(5, rng);
        KeypointSet set = random_keypoints(20, rng);
        KeypointSet kept;
        for (std::size_t i = 0; i < set.size(); ++i) {
            if (i % 3 == 0) set.kill(i);
            else kept.insert(set.entries()[i]);
        }
        CHECK(shape_loss(set, f).value == doctest::Approx(shape_loss(kept, f).value).epsilon(1e-12));
        KeypointSet none = single({0, 0, 0}, 1);
        none.kill(0);
        CHECK_THROWS_AS(shape_loss(none, f), DataError);
    }
    SUBCASE("matches the serial reference") {
        CounterRng rng(3);
        const DensityField f = random_field(7, rng);
        const KeypointSet set = random_keypoints(5000, rng);
        const LossValue a = shape_loss(set, f), b = serial::shape_loss(set, f);
        CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
        for (std::size_t i = 0; i < a.grad.size(); ++i) CHECK(std::abs(a.grad[i] - b.grad[i]) < 1e-14);
    }
}

TEST_CASE("sparsity loss") {
    SUBCASE("symmetric stationary point") {
        const DensityField half(4, 0.5);
        const auto pts = std::vector<Vec3>{{0.1, 0.1, 0.1}, {-0.4, 0.5, 0.9}, {0.7, -0.2, -0.6}};
        const LossValue v = sparsity_loss(pts, half);
        CHECK(v.value == doctest::Approx(-1.386294).epsilon(1e-6));
        for (double g : v.grad) CHECK(g == 0.0);
    }
    SUBCASE("descent raises a density above one half") {
        DensityField f(2, 0.9);
        const std::vector<Vec3> pts{{0.2, -0.3, 0.1}};
        const LossValue v = sparsity_loss(pts, f);
        for (double g : v.grad) CHECK(g < 0.0);  // ∂L/∂θ < 0: a descent step raises θ and d
    }
    SUBCASE("clamp zone carries no gradient") {
        const std::vector<Vec3> pts{{0.2, -0.3, 0.1}};
        for (double d : {1.0 - 1e-4, 1.0 - 1e-6, 1e-4, 1e-7}) {
            DensityField f(2, d);
            const LossValue v = sparsity_loss(pts, f);
            for (double g : v.grad) CHECK(g == 0.0);
            const double dc = std::clamp(d, kSparsityClamp, 1 - kSparsityClamp);
            CHECK(v.value == doctest::Approx(std::log(dc) + std::log(1 - dc)).epsilon(1e-6));
        }
    }
    SUBCASE("finite differences") {
        CounterRng rng(4);
        for (int trial = 0; trial < 10; ++trial) {
            DensityField f = random_field(5, rng);
            const auto pts = random_points(100, rng);
            const LossValue v = sparsity_loss(pts, f);
            CHECK(gradient_error(f, [&] { return sparsity_loss(pts, f).value; }, v.grad) < 1e-4);
        }
    }
    SUBCASE("matches the serial reference") {
        CounterRng rng(5);
        const DensityField f = random_field(7, rng, 12.0);
        const auto pts = random_points(5000, rng);
        const LossValue a = sparsity_loss(pts, f), b = serial::sparsity_loss(pts, f);
        CHECK(a.value == doctest::Approx(b.value).epsilon(1e-9));
        for (std::size_t i = 0; i < a.grad.size(); ++i) CHECK(std::abs(a.grad[i] - b.grad[i]) < 1e-12);
    }
}

TEST_CASE("co-supervision") {
    CounterRng rng(6);
    SUBCASE("neutral oracle without sparsity is the weighted shape loss") {
        const DensityField f = random_field(6, rng);
        const KeypointSet set = random_keypoints(200, rng);
        const auto guide = random_points(300, rng);
        const CoLoss c = co_loss(set, guide, f, GuidanceOracle::neutral(), 0.1, 0.0);
        const LossValue s = shape_loss(set, f);
        CHECK(c.breakdown.l_total == doctest::Approx(0.1 * s.value).epsilon(1e-12));
        CHECK(c.breakdown.l_diff == 0.0);
        for (std::size_t i = 0; i < s.grad.size(); ++i) CHECK(c.grad[i] == doctest::Approx(0.1 * s.grad[i]).epsilon(1e-12));
        CHECK(c.alive.size() == set.alive_count());
    }
    SUBCASE("zero weights give a zero gradient") {
        const DensityField f = random_field(6, rng);
        const KeypointSet set = random_keypoints(200, rng);
        const CoLoss c = co_loss(set, random_points(100, rng), f, GuidanceOracle::neutral(), 0.0, 0.0);
        for (double g : c.grad) CHECK(g == 0.0);
        CHECK(c.breakdown.l_total == 0.0);
    }
    SUBCASE("matching target adds (1 + λ) times the BCE gradient") {
        const shapes::ConflictScene scene = shapes::conflict_scene(2);
        const Bvh tmpl(scene.template_mesh);
        const auto oracle = GuidanceOracle::target_shape(scene.template_mesh, 0.0, 1, 32);
        KeypointSet set;
        for (const Vec3& p : random_points(2000, rng)) {
            if (tmpl.distance(p) < 0.12) continue;
            Keypoint k;
            k.point = p;
            k.label = occupancy_label(tmpl, p);
            set.insert(k);
        }
        std::vector<Vec3> shared;
        for (std::size_t i : set.alive_indices()) shared.push_back(set.entries()[i].point);
        const DensityField f = random_field(6, rng);
        const CoLoss c = co_loss(set, shared, f, oracle, 0.1, 0.0);
        // Independent sum: per-point BCE ∂/∂z = d − s, spread by the stencil.
        std::vector<double> expect(f.size(), 0.0);
        for (std::size_t i : set.alive_indices()) {
            const Keypoint& k = set.entries()[i];
            const FieldSample s = f.sample(k.point);
            for (int corner = 0; corner < 8; ++corner)
                expect[s.node(corner)] += 1.1 * (s.density - k.label) * s.weight(corner) / shared.size();
        }
        for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(c.grad[i] - expect[i]) < 1e-12);
    }
    SUBCASE("finite differences with every term active") {
        const shapes::ConflictScene scene = shapes::conflict_scene(2);
        const auto oracle = GuidanceOracle::target_shape(scene.target_mesh, 0.1, 3, 16);
        for (int trial = 0; trial < 5; ++trial) {
            DensityField f = random_field(5, rng);
            const KeypointSet set = random_keypoints(100, rng);
            const auto guide = random_points(150, rng);
            const CoLoss c = co_loss(set, guide, f, oracle, 0.1, 0.01);
            auto total = [&] { return co_loss(set, guide, f, oracle, 0.1, 0.01).breakdown.l_total; };
            CHECK(gradient_error(f, total, c.grad) < 1e-4);
            const auto& b = c.breakdown;
            CHECK(b.l_total == doctest::Approx(b.l_diff + 0.1 * b.l_shape + 0.01 * b.l_sparse).epsilon(1e-14));
        }
    }
    SUBCASE("invalid weights") {
        const DensityField f(4, 0.5);
        const KeypointSet set = single({0, 0, 0}, 1);
        CHECK_THROWS_AS(co_loss(set, {}, f, GuidanceOracle::neutral(), -1.0, 0.0), ConfigError);
        CHECK_THROWS_AS(co_loss(set, {}, f, GuidanceOracle::neutral(), 0.1, NAN), ConfigError);
    }
}

TEST_CASE("sketch-shape loss") {
    const DensityField half(4, 0.5);
    SUBCASE("attenuation") {
        const std::vector<SketchPoint> on{{{0.1, 0.1, 0.1}, 0.0}};
        const std::vector<std::uint8_t> one{1};
        const LossValue v = sketch_shape_loss(on, one, half, kSketchSigma);
        CHECK(v.value == 0.0);
        for (double g : v.grad) CHECK(g == 0.0);

        const std::vector<SketchPoint> mid{{{0.1, 0.1, 0.1}, 1.2}};
        CHECK(sketch_shape_loss(mid, one, half, 1.2).value ==
              doctest::Approx(0.451188 * std::log(2.0)).epsilon(1e-6));
        CHECK(-std::expm1(-0.6) == doctest::Approx(0.451188).epsilon(1e-6));

        const std::vector<SketchPoint> far{{{0.1, 0.1, 0.1}, 1e3}};
        CHECK(sketch_shape_loss(far, one, half, 1.2).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("finite differences") {
        const TriangleMesh sphere = shapes::icosphere(2, 0.5);
        const Bvh bvh(sphere);
        CounterRng rng(7);
        for (int trial = 0; trial < 5; ++trial) {
            DensityField f = random_field(5, rng);
            const auto pts = random_points(100, rng);
            const auto dist = surface_distances(bvh, pts);
            std::vector<SketchPoint> sp(pts.size());
            for (std::size_t i = 0; i < pts.size(); ++i) sp[i] = {pts[i], dist[i]};
            const LossValue v = sketch_shape_loss(bvh, sp, f, kSketchSigma);
            CHECK(gradient_error(f, [&] { return sketch_shape_loss(bvh, sp, f, kSketchSigma).value; }, v.grad) < 1e-4);
        }
    }
    SUBCASE("invalid input") {
        const std::vector<SketchPoint> neg{{{0, 0, 0}, -1.0}};
        const std::vector<std::uint8_t> one{1}, two{1, 0};
        CHECK_THROWS_AS(sketch_shape_loss(neg, one, half, 1.2), DataError);
        CHECK_THROWS_AS(sketch_shape_loss(neg, two, half, 1.2), DataError);
        const std::vector<SketchPoint> ok{{{0, 0, 0}, 1.0}};
        CHECK_THROWS_AS(sketch_shape_loss(ok, one, half, 0.0), ConfigError);
    }
}
