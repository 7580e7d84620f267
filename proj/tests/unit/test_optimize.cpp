// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "priorforge/error.hpp"
#include "priorforge/optimize.hpp"
#include "priorforge/parallel.hpp"
#include "priorforge/winding.hpp"
#include "shapes.hpp"

using namespace priorforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "pf_test_optimize" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

OptimizeConfig small_config() {
    OptimizeConfig c;
    c.plane_width = 64;
    c.plane_height = 64;
    c.sparse_factor = 8;
    c.grid_resolution = 16;
    c.samples_per_ray = 8;
    c.guidance_samples_per_ray = 4;
    c.steps = 12;
    c.snapshot_step = 5;
    c.learning_rate = 0.05;
    c.grow_period = 4;
    return c;
}

Problem sphere_problem() { return {normalize(shapes::icosphere(2, 1.0)), GuidanceOracle::neutral()}; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("keys, comments and relative paths") {
        std::istringstream in(
            "# run\n"
            "template_mesh = meshes/a.obj   # trailing comment\n"
            "oracle = target_shape\n"
            "target_mesh = /abs/b.obj\n"
            "lambda = 0.25\n"
            "steps=7\n"
            "seed = 18446744073709551615\n"
            "\n");
        const OptimizeConfig c = parse_config(in, "/base");
        CHECK(c.template_mesh == fs::path("/base/meshes/a.obj"));
        CHECK(c.target_mesh == fs::path("/abs/b.obj"));
        CHECK(c.oracle == "target_shape");
        CHECK(c.lambda == 0.25);
        CHECK(c.steps == 7);
        CHECK(c.seed == 18446744073709551615ULL);
        CHECK(c.mu == 0.01);  // default kept
    }
    SUBCASE("errors") {
        std::istringstream unknown("lamda = 1\n");
        CHECK_THROWS_AS(parse_config(unknown), ConfigError);
        std::istringstream bad_value("steps = 1.5\n");
        CHECK_THROWS_AS(parse_config(bad_value), ConfigError);
        std::istringstream no_eq("steps 5\n");
        CHECK_THROWS_AS(parse_config(no_eq), ConfigError);
        CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), DataError);
    }
    SUBCASE("entries round trip") {
        OptimizeConfig c = small_config();
        c.template_mesh = "/m/t.obj";
        c.lambda = 0.1;
        c.seed = 42;
        std::ostringstream text;
        for (const auto& [k, v] : config_entries(c)) text << k << " = " << v << '\n';
        std::istringstream in(text.str());
        const OptimizeConfig back = parse_config(in);
        CHECK(config_entries(back) == config_entries(c));
        CHECK(config_keys().size() == config_entries(c).size());
    }
    SUBCASE("validation") {
        auto invalid = [](auto mutate) {
            OptimizeConfig c;
            mutate(c);
            CHECK_THROWS_AS(c.validate(), ConfigError);
        };
        invalid([](OptimizeConfig& c) { c.sparse_factor = 7; });
        invalid([](OptimizeConfig& c) { c.lambda = -1; });
        invalid([](OptimizeConfig& c) { c.lambda = INFINITY; });
        invalid([](OptimizeConfig& c) { c.oracle = "sds"; });
        invalid([](OptimizeConfig& c) { c.prune_threshold = 0.95; });
        invalid([](OptimizeConfig& c) { c.grid_resolution = 1; });
        invalid([](OptimizeConfig& c) { c.init = "mesh"; });
        invalid([](OptimizeConfig& c) { c.elevation_min = 50; });
        CHECK_NOTHROW(OptimizeConfig{}.validate());
        OptimizeConfig c;
        c.oracle = "target_shape";
        c.template_mesh = "/t.obj";
        CHECK_THROWS_AS(load_problem(c), ConfigError);
    }
}

TEST_CASE("adam") {
    SUBCASE("first step moves by the learning rate") {
        Adam adam(3, 0.1);
        std::vector<double> p{1.0, 2.0, 3.0};
        const std::vector<double> g{0.5, -4.0, 0.0};
        adam.step(p, g);
        CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
        CHECK(p[1] == doctest::Approx(2.1).epsilon(1e-7));
        CHECK(p[2] == 3.0);
    }
    SUBCASE("matches an independent recurrence") {
        Adam adam(1, 0.01);
        std::vector<double> p{2.0};
        double x = 2.0, m = 0.0, v = 0.0;
        for (int t = 1; t <= 200; ++t) {
            const std::vector<double> g{2.0 * p[0] - 1.0};
            adam.step(p, g);
            const double gx = 2.0 * x - 1.0;
            m = 0.9 * m + 0.1 * gx;
            v = 0.999 * v + 0.001 * gx * gx;
            x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
            CHECK(p[0] == doctest::Approx(x).epsilon(1e-12));
        }
        CHECK(adam.iterations() == 200);
    }
}

TEST_CASE("zero weights leave parameters unchanged") {
    OptimizeConfig c = small_config();
    c.lambda = 0.0;
    c.mu = 0.0;
    Optimizer opt(c, sphere_problem());
    const std::vector<double> before(opt.field().params().begin(), opt.field().params().end());
    for (int i = 0; i < 5; ++i) opt.step();
    CHECK(std::equal(before.begin(), before.end(), opt.field().params().begin()));
}

TEST_CASE("pruning bookkeeping") {
    OptimizeConfig c = small_config();
    c.prune_streak = 3;
    Optimizer opt(c, sphere_problem());
    opt.step();
    CoLoss loss = opt.last_loss();
    REQUIRE(loss.alive.size() > 10);
    REQUIRE(loss.alive.size() == opt.keypoints().alive_count());
    // Below threshold for everyone except the first, which oscillates.
    std::fill(loss.keypoint_density.begin(), loss.keypoint_density.end(), 0.001);
    const std::size_t survivor = loss.alive[0];
    for (int round = 0; round < 2; ++round) {
        CHECK(opt.prune(loss).empty());
    }
    loss.keypoint_density[0] = 0.5;  // resets the survivor's streak
    const auto killed = opt.prune(loss);
    CHECK(killed.size() == loss.alive.size() - 1);
    CHECK(opt.keypoints().entries()[survivor].alive);
    CHECK(opt.keypoints().entries()[survivor].low_density_streak == 0);
    for (std::size_t k : killed) CHECK_FALSE(opt.keypoints().entries()[k].alive);
    CHECK(opt.keypoints().alive_count() == 1);
}

TEST_CASE("growth") {
    OptimizeConfig c = small_config();
    c.grow_budget = 400;
    SUBCASE("constant one half grows nothing") {
        Optimizer opt(c, sphere_problem());
        CHECK(opt.grow().empty());
    }
    SUBCASE("confident field grows label-1 points outside the template only") {
        Optimizer opt(c, sphere_problem());
        for (double& v : opt.field().params()) v = logit(0.95);
        const auto added = opt.grow();
        REQUIRE_FALSE(added.empty());
        for (std::size_t i : added) {
            const Keypoint& k = opt.keypoints().entries()[i];
            CHECK(k.label == 1);
            CHECK(k.provenance == Provenance::Grown);
            CHECK(occupancy_label(opt.template_bvh(), k.point) == 0);
        }
        // Every candidate cell is now held by an alive keypoint.
        const auto again = opt.grow();
        for (std::size_t i : again) CHECK(opt.keypoints().entries()[i].alive);
    }
}

TEST_CASE("views are seeded per step") {
    const OptimizeConfig c = small_config();
    Optimizer a(c, sphere_problem()), b(c, sphere_problem());
    const auto va = a.views_for_step(3), vb = b.views_for_step(3), vc = a.views_for_step(4);
    CHECK(va[0].position == vb[0].position);
    CHECK_FALSE(va[0].position == vc[0].position);
    for (int s = 0; s < 50; ++s) {
        const Vec3 p = a.views_for_step(s)[0].position;
        const double el = std::asin(p.y / norm(p)) * 180 / kPi;
        CHECK(el >= c.elevation_min - 1e-9);
        CHECK(el <= c.elevation_max + 1e-9);
        CHECK(norm(p) == doctest::Approx(c.orbit_radius));
    }
}

TEST_CASE("run writes reports and snapshots") {
    const fs::path dir = scratch("run");
    OptimizeConfig c = small_config();
    c.output_dir = dir;
    const OptimizationReport rep = run(c, sphere_problem());
    CHECK(rep.steps.size() == 12);
    CHECK(fs::exists(dir / "report.jsonl"));
    CHECK(fs::exists(dir / "snapshot_5.pfg"));
    CHECK(fs::exists(dir / "snapshot_12.pfg"));
    CHECK(fs::exists(dir / "keypoints_5.txt"));
    CHECK(fs::exists(dir / "keypoints_12.txt"));
    CHECK(fs::exists(dir / "keypoints.txt"));
    CHECK(read_grid(dir / "snapshot_12.pfg").dims == std::array<std::uint32_t, 3>{16, 16, 16});

    std::ifstream in(dir / "report.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::ordered_json::parse(line);
        std::vector<std::string> keys;
        for (const auto& [k, v] : j.items()) keys.push_back(k);
        CHECK(keys == std::vector<std::string>{"step", "l_shape", "l_sparse", "l_diff", "l_total", "iou_template",
                                               "iou_target", "pruned", "grown", "alive", "keypoints"});
        CHECK(j["step"] == ++n);
        CHECK(j["iou_target"].is_null());
    }
    CHECK(n == 12);
}

TEST_CASE("runs are deterministic across thread counts") {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    OptimizeConfig c = small_config();
    c.oracle = "target_shape";
    Problem pa = sphere_problem(), pb = sphere_problem();
    const auto scene = shapes::conflict_scene(2);
    const Normalization xf = normalization_for(scene.template_mesh);
    pa = {transformed(scene.template_mesh, xf), GuidanceOracle::target_shape(transformed(scene.target_mesh, xf), 0.05, 3, 32)};
    pb = {transformed(scene.template_mesh, xf), GuidanceOracle::target_shape(transformed(scene.target_mesh, xf), 0.05, 3, 32)};
    c.output_dir = a;
    set_thread_limit(1);
    run(c, std::move(pa));
    c.output_dir = b;
    set_thread_limit(4);
    run(c, std::move(pb));
    set_thread_limit(0);
    for (const char* f : {"report.jsonl", "snapshot_5.pfg", "snapshot_12.pfg", "keypoints.txt"}) {
        CAPTURE(f);
        CHECK(slurp(a / f) == slurp(b / f));
    }
}

TEST_CASE("non-finite loss stops the run with a state dump") {
    SUBCASE("direct step") {
        Optimizer opt(small_config(), sphere_problem());
        for (double& v : opt.field().params()) v = NAN;
        CHECK_THROWS_AS(opt.step(), DataError);
    }
    SUBCASE("through run") {
        const fs::path dir = scratch("nonfinite");
        OptimizeConfig c = small_config();
        c.learning_rate = 1e308;  // the second step overflows the interpolation
        c.output_dir = dir;
        CHECK_THROWS_AS(run(c, sphere_problem()), DataError);
        REQUIRE(fs::exists(dir / "failure_state.json"));
        const auto j = nlohmann::json::parse(slurp(dir / "failure_state.json"));
        CHECK(j.contains("step"));
        CHECK(j.contains("params_finite"));
    }
}

TEST_CASE("no-conflict run follows the template and barely grows") {
    OptimizeConfig c;
    c.plane_width = 128;
    c.plane_height = 128;
    c.grid_resolution = 64;
    c.samples_per_ray = 32;
    c.guidance_samples_per_ray = 16;
    c.steps = 400;
    c.grow_period = 100;
    c.learning_rate = 0.05;
    const TriangleMesh sphere = normalize(shapes::icosphere(3, 1.0));
    Optimizer opt(c, {sphere, GuidanceOracle::target_shape(sphere, 0.0, 1, 64)});
    StepRecord last;
    for (int s = 0; s < c.steps; ++s) last = opt.step();
    MESSAGE("iou_template=" << last.iou_template << " grown=" << last.grown << " keypoints=" << last.keypoints);
    CHECK(last.iou_template >= 0.9);
    CHECK(static_cast<double>(last.grown) < 0.01 * static_cast<double>(last.keypoints));
}
