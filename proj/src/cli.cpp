// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "priorforge/error.hpp"
#include "priorforge/optimize.hpp"
#include "priorforge/parallel.hpp"
#include "priorforge/retrieval.hpp"
#include "priorforge/viewspace.hpp"
#include "priorforge/winding.hpp"

namespace priorforge {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

void log_event(const std::string& level, const std::string& event, json fields = json::object()) {
    json rec = {{"level", level}, {"event", event}};
    for (auto& [k, v] : fields.items()) rec[k] = v;
    std::cerr << rec.dump() << '\n';
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read input: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64(bytes);
}

// Collects what a run read and wrote; written as manifest.json beside the outputs.
struct Manifest {
    std::string subcommand;
    json config = json::object();
    std::uint64_t seed = 0;
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;

    void write(const fs::path& dir, double seconds) const {
        json j;
        j["subcommand"] = subcommand;
        j["version"] = PRIORFORGE_VERSION;
        j["config"] = config;
        j["seed"] = seed;
        json in = json::array();
        for (const auto& p : inputs) in.push_back({{"path", p.generic_string()}, {"fnv1a64", hex64(file_digest(p))}});
        j["inputs"] = in;
        json out = json::array();
        for (const auto& p : outputs) {
            if (!fs::exists(p)) throw DataError("declared output is missing: " + p.string());
            out.push_back(p.generic_string());
        }
        j["outputs"] = out;
        j["duration_seconds"] = seconds;
        const fs::path path = (dir.empty() ? fs::path(".") : dir) / "manifest.json";
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot write manifest: " + path.string());
        f << j.dump(2) << '\n';
    }
};

fs::path parent_or_cwd(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// label -----------------------------------------------------------------------

struct LabelArgs {
    std::string mesh, points, output;
    double beta = 2.0;
    bool normalize = false;
};

void run_label(const LabelArgs& a, Manifest& m) {
    WindingConfig wc;
    wc.beta = a.beta;
    wc.validate();
    auto loaded = load_obj(a.mesh);
    const TriangleMesh mesh = a.normalize ? normalize(loaded.mesh) : std::move(loaded.mesh);
    const auto pts = read_points(a.points);
    const Bvh bvh(mesh);
    const auto labels = occupancy_labels(bvh, pts, wc);
    ensure_parent(a.output);
    std::ofstream out(a.output, std::ios::binary);
    if (!out) throw DataError("cannot write labels: " + a.output);
    for (auto l : labels) out << static_cast<int>(l) << '\n';
    out.close();
    m.config = {{"mesh", a.mesh}, {"points", a.points}, {"output", a.output}, {"beta", a.beta},
                {"normalize", a.normalize}};
    m.inputs = {a.mesh, a.points};
    m.outputs = {a.output};
    log_event("info", "labeled", {{"points", pts.size()}, {"dropped_degenerate", loaded.dropped_degenerate}});
}

// keypoints -------------------------------------------------------------------

struct KeypointArgs {
    std::string mesh, output;
    int views = 1;
    std::optional<double> azimuth;
    double elevation = 0.0;
    int width = 512, height = 512, sparse_factor = 8;
    double radius = 2.5, fov = 40.0, near = 1.5, far = 3.5;
    int samples = 32;
    std::uint64_t seed = 0;
};

void run_keypoints(const KeypointArgs& a, Manifest& m) {
    if (a.views < 1) throw ConfigError("--views must be >= 1");
    const Bvh bvh(normalize(load_obj(a.mesh).mesh));
    const DepthRange range{a.near, a.far, a.samples};
    range.validate();
    const CounterRng root(a.seed);
    const Labeler labeler = [&bvh](const Vec3& p) { return occupancy_label(bvh, p); };
    KeypointSet set;
    CounterRng views = root.split(fnv1a64("keypoints.views"));
    for (int v = 0; v < a.views; ++v) {
        const double az = a.azimuth && a.views == 1 ? *a.azimuth : views.uniform(0.0, 360.0);
        const double el = a.azimuth && a.views == 1 ? a.elevation : views.uniform(-45.0, 45.0);
        const Camera cam = sparse_plane(camera_from_spherical(a.radius, az, el, a.fov, a.width, a.height), a.sparse_factor);
        append_keypoints(set, generate_rays(cam), range, labeler, root.split(fnv1a64("keypoints.depths")));
    }
    ensure_parent(a.output);
    write_keypoints(set, fs::path(a.output));
    m.config = {{"mesh", a.mesh},     {"output", a.output}, {"views", a.views},
                {"elevation", a.elevation}, {"width", a.width}, {"height", a.height},
                {"sparse_factor", a.sparse_factor}, {"radius", a.radius}, {"fov", a.fov},
                {"near", a.near},     {"far", a.far},       {"samples", a.samples}};
    m.config["azimuth"] = a.azimuth ? json(*a.azimuth) : json(nullptr);
    m.seed = a.seed;
    m.inputs = {a.mesh};
    m.outputs = {a.output};
    log_event("info", "keypoints", {{"count", set.size()}});
}

// optimize --------------------------------------------------------------------

void run_optimize(const std::string& config_path, const std::map<std::string, std::string>& overrides,
                  Manifest& m) {
    OptimizeConfig cfg = config_path.empty() ? OptimizeConfig{} : load_config(config_path);
    for (const auto& [k, v] : overrides) apply_setting(cfg, k, v, fs::current_path());
    if (cfg.output_dir.empty()) throw ConfigError("output_dir is required");
    cfg.validate();
    for (const auto& [k, v] : config_entries(cfg)) m.config[k] = v;
    m.seed = cfg.seed;
    if (!config_path.empty()) m.inputs.push_back(config_path);
    m.inputs.push_back(cfg.template_mesh);
    if (cfg.oracle == "target_shape") m.inputs.push_back(cfg.target_mesh);
    if (cfg.oracle == "recorded") m.inputs.push_back(cfg.oracle_file);

    const int every = std::max(1, cfg.steps / 20);
    const auto report = run(cfg, [&](const StepRecord& r, const Optimizer&) {
        if (r.step % every != 0 && r.step != cfg.steps) return;
        log_event("info", "step",
                  {{"step", r.step}, {"l_total", r.loss.l_total}, {"iou_template", r.iou_template},
                   {"pruned", r.pruned}, {"grown", r.grown}, {"alive", r.alive}});
    });
    m.outputs.push_back(cfg.output_dir / "report.jsonl");
    for (const auto& s : report.snapshots) {
        m.outputs.push_back(s);
        auto kp = s;
        kp.replace_filename("keypoints_" + s.stem().string().substr(std::string("snapshot_").size()) + ".txt");
        m.outputs.push_back(kp);
    }
    m.outputs.push_back(cfg.output_dir / "keypoints.txt");
}

// retrieve / reretrieve -------------------------------------------------------

struct RetrieveArgs {
    std::string catalog, text, query, output;
    std::size_t k = 10;
};

void run_retrieve(const RetrieveArgs& a, Manifest& m) {
    if (a.text.empty() == a.query.empty()) throw ConfigError("give exactly one of --text or --query");
    const Catalog cat = load_catalog(a.catalog);
    const auto q = a.text.empty() ? read_embedding(a.query) : embed_text_toy(a.text, cat.dimension);
    const auto ranking = retrieve(cat, q, a.k);
    ensure_parent(a.output);
    write_ranking(ranking, fs::path(a.output));
    m.config = {{"catalog", a.catalog}, {"k", a.k}, {"output", a.output}};
    if (!a.text.empty()) m.config["text"] = a.text;
    m.inputs = {a.catalog};
    for (const auto& e : cat.entries) m.inputs.push_back(e.descriptor_path);
    if (!a.query.empty()) m.inputs.push_back(a.query);
    m.outputs = {a.output};
    log_event("info", "retrieved", {{"returned", ranking.size()}, {"top", ranking.empty() ? "" : ranking[0].id}});
}

struct ReretrieveArgs {
    std::string catalog, candidates, grid, output;
};

void run_reretrieve(const ReretrieveArgs& a, Manifest& m) {
    const Catalog cat = load_catalog(a.catalog);
    const auto candidates = read_ranking(a.candidates);
    const auto descriptor = shape_descriptor(read_grid(a.grid));
    const auto ranking = reretrieve(cat, candidates, descriptor);
    ensure_parent(a.output);
    write_ranking(ranking, fs::path(a.output));
    m.config = {{"catalog", a.catalog}, {"candidates", a.candidates}, {"grid", a.grid}, {"output", a.output}};
    m.inputs = {a.catalog, a.candidates, a.grid};
    for (const auto& e : cat.entries) m.inputs.push_back(e.descriptor_path);
    m.outputs = {a.output};
    log_event("info", "reretrieved", {{"candidates", ranking.size()}, {"top", ranking[0].id}});
}

// render-views ----------------------------------------------------------------

struct RenderArgs {
    std::string mesh, output_dir;
    CanonicalViews views;
    double near = 1.5, far = 3.5;
};

void run_render(const RenderArgs& a, Manifest& m) {
    const Bvh bvh(normalize(load_obj(a.mesh).mesh));
    fs::create_directories(a.output_dir);
    const auto cams = a.views.cameras();
    for (std::size_t b = 0; b < cams.size(); ++b) {
        const auto img = render_depth(bvh, cams[b]);
        const fs::path out = fs::path(a.output_dir) / ("view_" + std::to_string(b) + ".pgm");
        write_depth_pgm(img, a.near, a.far, out);
        m.outputs.push_back(out);
        m.outputs.push_back(fs::path(out.string() + ".txt"));
    }
    m.config = {{"mesh", a.mesh},         {"output_dir", a.output_dir}, {"width", a.views.width},
                {"height", a.views.height}, {"radius", a.views.radius},   {"fov", a.views.fov},
                {"elevation", a.views.elevation}, {"near", a.near}, {"far", a.far}};
    m.inputs = {a.mesh};
    log_event("info", "rendered", {{"views", cams.size()}});
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"prior-forge: 3D shape-prior supervision toolkit"};
    app.set_version_flag("--version", std::string(PRIORFORGE_VERSION));
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Cap on worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

    LabelArgs label;
    auto* label_cmd = app.add_subcommand("label", "Occupancy labels of points against a mesh");
    label_cmd->add_option("--mesh", label.mesh, "OBJ mesh")->required();
    label_cmd->add_option("--points", label.points, "Points file (x y z per line)")->required();
    label_cmd->add_option("--output", label.output, "Labels file")->default_val("labels.txt");
    label_cmd->add_option("--beta", label.beta, "Far-field accuracy parameter");
    label_cmd->add_flag("--normalize", label.normalize, "Normalize the mesh before labeling");

    KeypointArgs kp;
    auto* kp_cmd = app.add_subcommand("keypoints", "Sample labeled keypoints from sparse ray planes");
    kp_cmd->add_option("--mesh", kp.mesh, "OBJ template mesh")->required();
    kp_cmd->add_option("--output", kp.output, "Keypoints file")->default_val("keypoints.txt");
    kp_cmd->add_option("--views", kp.views, "Number of random views");
    kp_cmd->add_option("--azimuth", kp.azimuth, "Single-view azimuth in degrees");
    kp_cmd->add_option("--elevation", kp.elevation, "Single-view elevation in degrees");
    kp_cmd->add_option("--width", kp.width);
    kp_cmd->add_option("--height", kp.height);
    kp_cmd->add_option("--sparse-factor", kp.sparse_factor);
    kp_cmd->add_option("--radius", kp.radius);
    kp_cmd->add_option("--fov", kp.fov);
    kp_cmd->add_option("--near", kp.near);
    kp_cmd->add_option("--far", kp.far);
    kp_cmd->add_option("--samples", kp.samples, "Samples per ray");
    kp_cmd->add_option("--seed", kp.seed);

    std::string config_path;
    std::map<std::string, std::string> overrides;
    auto* opt_cmd = app.add_subcommand("optimize", "Co-supervised optimization with growth and pruning");
    opt_cmd->add_option("--config", config_path, "key = value config file");
    for (const auto& key : config_keys()) {
        opt_cmd->add_option_function<std::string>(
            "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; }, "Overrides config key " + key);
    }

    RetrieveArgs ret;
    auto* ret_cmd = app.add_subcommand("retrieve", "Text retrieval over a catalog");
    ret_cmd->add_option("--catalog", ret.catalog)->required();
    ret_cmd->add_option("--text", ret.text, "Query text (toy embedder)");
    ret_cmd->add_option("--query", ret.query, "Query embedding file");
    ret_cmd->add_option("--k", ret.k)->check(CLI::PositiveNumber);
    ret_cmd->add_option("--output", ret.output)->default_val("ranking.txt");

    ReretrieveArgs rr;
    auto* rr_cmd = app.add_subcommand("reretrieve", "Re-rank text candidates by shape descriptor IoU");
    rr_cmd->add_option("--catalog", rr.catalog)->required();
    rr_cmd->add_option("--candidates", rr.candidates, "Ranking file from retrieve")->required();
    rr_cmd->add_option("--grid", rr.grid, "PFG1 density grid")->required();
    rr_cmd->add_option("--output", rr.output)->default_val("reranking.txt");

    RenderArgs rv;
    auto* rv_cmd = app.add_subcommand("render-views", "Depth images of the 4 canonical views");
    rv_cmd->add_option("--mesh", rv.mesh)->required();
    rv_cmd->add_option("--output-dir", rv.output_dir)->default_val("views");
    rv_cmd->add_option("--width", rv.views.width);
    rv_cmd->add_option("--height", rv.views.height);
    rv_cmd->add_option("--radius", rv.views.radius);
    rv_cmd->add_option("--fov", rv.views.fov);
    rv_cmd->add_option("--elevation", rv.views.elevation);
    rv_cmd->add_option("--near", rv.near);
    rv_cmd->add_option("--far", rv.far);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help() << '\n';
        return 1;
    }

    set_thread_limit(threads);
    const auto start = std::chrono::steady_clock::now();
    Manifest m;
    fs::path out_dir;
    try {
        if (label_cmd->parsed()) {
            m.subcommand = "label";
            run_label(label, m);
            out_dir = parent_or_cwd(label.output);
        } else if (kp_cmd->parsed()) {
            m.subcommand = "keypoints";
            run_keypoints(kp, m);
            out_dir = parent_or_cwd(kp.output);
        } else if (opt_cmd->parsed()) {
            m.subcommand = "optimize";
            run_optimize(config_path, overrides, m);
            out_dir = m.config["output_dir"].get<std::string>();
        } else if (ret_cmd->parsed()) {
            m.subcommand = "retrieve";
            run_retrieve(ret, m);
            out_dir = parent_or_cwd(ret.output);
        } else if (rr_cmd->parsed()) {
            m.subcommand = "reretrieve";
            run_reretrieve(rr, m);
            out_dir = parent_or_cwd(rr.output);
        } else if (rv_cmd->parsed()) {
            m.subcommand = "render-views";
            run_render(rv, m);
            out_dir = rv.output_dir;
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        m.write(out_dir, seconds);
        log_event("info", "done", {{"subcommand", m.subcommand}, {"seconds", seconds}});
        return 0;
    } catch (const ConfigError& e) {
        log_event("error", "usage", {{"message", e.what()}});
        std::cerr << app.help() << '\n';
        return 1;
    } catch (const DataError& e) {
        log_event("error", "data", {{"message", e.what()}});
        return 2;
    } catch (const fs::filesystem_error& e) {
        log_event("error", "data", {{"message", e.what()}});
        return 2;
    }
}

}  // namespace priorforge
