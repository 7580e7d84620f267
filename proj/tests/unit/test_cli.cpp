// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctest.h"
#include "priorforge/cli.hpp"
#include "priorforge/field.hpp"
#include "priorforge/retrieval.hpp"
#include "priorforge/sampling.hpp"
#include "shapes.hpp"

using namespace priorforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "pf_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "prior-forge");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

// Relative path -> bytes of every file under dir except the manifest.
std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
        out[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
    }
    return out;
}

struct Fixture {
    fs::path dir, sphere, points;

    explicit Fixture(const std::string& name) : dir(scratch(name)) {
        sphere = dir / "sphere.obj";
        write_obj(shapes::icosphere(2, 1.0), sphere);
        points = dir / "points.txt";
        std::ofstream p(points);
        p << "# x y z\n0 0 0\n2 0 0\n0.5 0.5 0\n0 -1.5 0\n";
    }
};

void write_small_catalog(const fs::path& dir) {
    fs::create_directories(dir / "desc");
    Catalog cat;
    cat.dimension = 16;
    const auto list = shapes::primitive_catalog();
    for (int i = 0; i < 4; ++i) {
        CatalogEntry e;
        e.id = list[i].name;
        e.embedding = embed_text_toy(list[i].name + " shape", cat.dimension);
        e.descriptor = mesh_descriptor(list[i].mesh);
        e.mesh = "mesh.obj";
        e.descriptor_path = "desc/" + list[i].name + ".pfg";
        write_grid(e.descriptor, dir / e.descriptor_path);
        cat.entries.push_back(std::move(e));
    }
    write_catalog(cat, dir / "catalog.tsv");
}

}  // namespace

TEST_CASE("exit codes") {
    const Fixture f("exit");
    CHECK(cli({}) == 1);
    CHECK(cli({"bogus"}) == 1);
    CHECK(cli({"label", "--mesh", f.sphere.string()}) == 1);                       // missing --points
    CHECK(cli({"label", "--mesh", f.sphere.string(), "--points", f.points.string(), "--beta", "0",
               "--output", (f.dir / "l.txt").string()}) == 1);                      // invalid beta
    CHECK(cli({"label", "--mesh", (f.dir / "missing.obj").string(), "--points", f.points.string(), "--output",
               (f.dir / "l.txt").string()}) == 2);
    CHECK(cli({"optimize", "--lamda", "1"}) == 1);
    CHECK(cli({"optimize", "--steps", "3"}) == 1);  // no output_dir
    CHECK(cli({"retrieve", "--catalog", (f.dir / "none.tsv").string(), "--text", "x"}) == 2);
    CHECK(cli({"--version"}) == 0);
}

TEST_CASE("label") {
    const Fixture f("label");
    const fs::path out = f.dir / "out" / "labels.txt";
    REQUIRE(cli({"--threads", "2", "label", "--mesh", f.sphere.string(), "--points", f.points.string(), "--output",
                 out.string()}) == 0);
    CHECK(slurp(out) == "1\n0\n1\n0\n");
    const auto m = manifest(out.parent_path());
    CHECK(m["subcommand"] == "label");
    CHECK(m["config"]["beta"] == 2.0);
    CHECK(m["config"]["normalize"] == false);
    REQUIRE(m["inputs"].size() == 2);
    CHECK(m["inputs"][0]["fnv1a64"].get<std::string>().size() == 16);
    CHECK(m["outputs"][0] == out.generic_string());
    CHECK(m.contains("duration_seconds"));
}

TEST_CASE("keypoints") {
    const Fixture f("keypoints");
    const fs::path out = f.dir / "kp" / "keypoints.txt";
    REQUIRE(cli({"keypoints", "--mesh", f.sphere.string(), "--output", out.string(), "--width", "32", "--height", "32",
                 "--sparse-factor", "4", "--samples", "8", "--azimuth", "30", "--seed", "5"}) == 0);
    const auto set = read_keypoints(out);
    CHECK(set.size() > 0);
    CHECK(set.size() <= 8u * 8u * 8u);
    std::size_t inside = 0;
    for (const auto& k : set) inside += k.label;
    CHECK(inside > 0);
    CHECK(inside < set.size());
    CHECK(manifest(out.parent_path())["seed"] == 5);
    CHECK(cli({"keypoints", "--mesh", f.sphere.string(), "--output", out.string(), "--views", "0"}) == 1);
}

TEST_CASE("optimize, retrieve, reretrieve and render-views") {
    const Fixture f("pipeline");
    const fs::path run = f.dir / "run";
    {
        std::ofstream cfg(f.dir / "run.cfg");
        cfg << "template_mesh = sphere.obj\n"
               "plane_width = 32\nplane_height = 32\nsparse_factor = 4\n"
               "grid_resolution = 16\nsamples_per_ray = 8\nguidance_samples_per_ray = 4\n"
               "steps = 6\nsnapshot_step = 3\ngrow_period = 3\nlearning_rate = 0.05\n";
    }
    REQUIRE(cli({"optimize", "--config", (f.dir / "run.cfg").string(), "--output_dir", run.string()}) == 0);
    for (const char* name : {"report.jsonl", "snapshot_3.pfg", "snapshot_6.pfg", "keypoints_3.txt", "keypoints_6.txt",
                             "keypoints.txt", "manifest.json"}) {
        CHECK_MESSAGE(fs::exists(run / name), name);
    }
    auto m = manifest(run);
    CHECK(m["subcommand"] == "optimize");
    CHECK(m["config"]["steps"] == "6");
    CHECK(m["outputs"].size() == 6);

    write_small_catalog(f.dir);
    write_obj(shapes::icosphere(1, 1.0), f.dir / "mesh.obj");
    const auto list = shapes::primitive_catalog();
    const fs::path ranking = f.dir / "ret" / "ranking.txt";
    REQUIRE(cli({"retrieve", "--catalog", (f.dir / "catalog.tsv").string(), "--text", list[2].name + " shape", "--k",
                 "3", "--output", ranking.string()}) == 0);
    const RankedList r = read_ranking(ranking);
    REQUIRE(r.size() == 3);
    CHECK(r[0].id == list[2].name);
    CHECK(cli({"retrieve", "--catalog", (f.dir / "catalog.tsv").string()}) == 1);  // neither --text nor --query

    const fs::path reranking = f.dir / "ret" / "reranking.txt";
    REQUIRE(cli({"reretrieve", "--catalog", (f.dir / "catalog.tsv").string(), "--candidates", ranking.string(),
                 "--grid", (f.dir / "desc" / (list[1].name + ".pfg")).string(), "--output", reranking.string()}) == 0);
    const RankedList rr = read_ranking(reranking);
    REQUIRE(rr.size() == 3);
    CHECK(rr[0].id == list[1].name);
    CHECK(rr[0].score == doctest::Approx(1.0));

    const fs::path views = f.dir / "views";
    REQUIRE(cli({"render-views", "--mesh", f.sphere.string(), "--output-dir", views.string(), "--width", "16",
                 "--height", "8"}) == 0);
    for (int b = 0; b < 4; ++b) {
        const fs::path pgm = views / ("view_" + std::to_string(b) + ".pgm");
        CHECK(slurp(pgm).rfind("P5\n16 8\n65535\n", 0) == 0);
        CHECK(fs::exists(pgm.string() + ".txt"));
    }
    CHECK(manifest(views)["outputs"].size() == 8);
}

TEST_CASE("outputs are independent of --threads") {
    const Fixture f("threads");
    {
        std::ofstream cfg(f.dir / "run.cfg");
        cfg << "template_mesh = sphere.obj\noracle = target_shape\ntarget_mesh = target.obj\n"
               "oracle_lattice = 16\nplane_width = 32\nplane_height = 32\nsparse_factor = 4\n"
               "grid_resolution = 16\nsamples_per_ray = 8\nguidance_samples_per_ray = 4\n"
               "steps = 8\nsnapshot_step = 4\ngrow_period = 4\nlearning_rate = 0.05\nseed = 3\n";
    }
    write_obj(shapes::box({-0.8, -0.5, -0.5}, {0.8, 0.5, 0.5}), f.dir / "target.obj");
    for (const char* t : {"1", "4"}) {
        const fs::path out = f.dir / t;
        REQUIRE(cli({"--threads", t, "optimize", "--config", (f.dir / "run.cfg").string(), "--output_dir",
                     (out / "opt").string()}) == 0);
        REQUIRE(cli({"--threads", t, "keypoints", "--mesh", f.sphere.string(), "--output",
                     (out / "kp" / "k.txt").string(), "--views", "2", "--width", "32", "--height", "32",
                     "--sparse-factor", "2", "--samples", "8", "--seed", "9"}) == 0);
        REQUIRE(cli({"--threads", t, "label", "--mesh", f.sphere.string(), "--points", f.points.string(), "--output",
                     (out / "label" / "l.txt").string()}) == 0);
        REQUIRE(cli({"--threads", t, "render-views", "--mesh", f.sphere.string(), "--output-dir",
                     (out / "views").string(), "--width", "24", "--height", "24"}) == 0);
    }
    const auto a = tree(f.dir / "1"), b = tree(f.dir / "4");
    CHECK(a.size() == b.size());
    CHECK(a.size() > 10);
    for (const auto& [name, bytes] : a) {
        REQUIRE_MESSAGE(b.count(name), name);
        CHECK_MESSAGE(b.at(name) == bytes, name);
    }
}
