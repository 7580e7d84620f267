// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/optimize.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "priorforge/error.hpp"
#include "priorforge/winding.hpp"

namespace priorforge {

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw ConfigError("config key '" + key + "': invalid value '" + text + "'");
    return value;
}

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
    std::filesystem::path p(text);
    if (text.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

struct KeyDef {
    const char* name;
    void (*set)(OptimizeConfig&, const std::string& key, const std::string& value, const std::filesystem::path& base);
    std::string (*get)(const OptimizeConfig&);
};

#define PF_DOUBLE(field)                                                                                     \
    KeyDef {                                                                                                 \
        #field,                                                                                              \
            [](OptimizeConfig& c, const std::string& k, const std::string& v, const std::filesystem::path&) { \
                c.field = parse_number<double>(k, v);                                                        \
            },                                                                                               \
            [](const OptimizeConfig& c) { return format_double(c.field); }                                   \
    }
#define PF_INT(field)                                                                                        \
    KeyDef {                                                                                                 \
        #field,                                                                                              \
            [](OptimizeConfig& c, const std::string& k, const std::string& v, const std::filesystem::path&) { \
                c.field = parse_number<int>(k, v);                                                           \
            },                                                                                               \
            [](const OptimizeConfig& c) { return std::to_string(c.field); }                                  \
    }
#define PF_STRING(field)                                                                                     \
    KeyDef {                                                                                                 \
        #field,                                                                                              \
            [](OptimizeConfig& c, const std::string&, const std::string& v, const std::filesystem::path&) {   \
                c.field = v;                                                                                 \
            },                                                                                               \
            [](const OptimizeConfig& c) { return c.field; }                                                  \
    }
#define PF_PATH(field)                                                                                        \
    KeyDef {                                                                                                  \
        #field,                                                                                               \
            [](OptimizeConfig& c, const std::string&, const std::string& v, const std::filesystem::path& b) {  \
                c.field = resolve(b, v);                                                                      \
            },                                                                                                \
            [](const OptimizeConfig& c) { return c.field.generic_string(); }                                  \
    }

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = {
        PF_PATH(template_mesh),
        PF_STRING(oracle),
        PF_PATH(target_mesh),
        PF_PATH(oracle_file),
        PF_DOUBLE(oracle_noise),
        PF_INT(oracle_lattice),
        PF_DOUBLE(lambda),
        PF_DOUBLE(mu),
        PF_INT(sparse_factor),
        PF_INT(plane_width),
        PF_INT(plane_height),
        PF_INT(grid_resolution),
        PF_INT(steps),
        PF_INT(snapshot_step),
        PF_DOUBLE(learning_rate),
        PF_DOUBLE(prune_threshold),
        PF_INT(prune_streak),
        PF_DOUBLE(grow_threshold),
        PF_INT(grow_period),
        PF_INT(grow_budget),
        PF_INT(views_per_step),
        KeyDef{"seed",
               [](OptimizeConfig& c, const std::string& k, const std::string& v, const std::filesystem::path&) {
                   c.seed = parse_number<std::uint64_t>(k, v);
               },
               [](const OptimizeConfig& c) { return std::to_string(c.seed); }},
        PF_DOUBLE(orbit_radius),
        PF_DOUBLE(fov),
        PF_DOUBLE(elevation_min),
        PF_DOUBLE(elevation_max),
        PF_DOUBLE(near),
        PF_DOUBLE(far),
        PF_INT(samples_per_ray),
        PF_INT(guidance_samples_per_ray),
        PF_STRING(init),
        PF_DOUBLE(init_density),
        PF_PATH(output_dir),
    };
    return table;
}

#undef PF_DOUBLE
#undef PF_INT
#undef PF_STRING
#undef PF_PATH

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void OptimizeConfig::validate() const {
    if (oracle != "neutral" && oracle != "target_shape" && oracle != "recorded") {
        throw ConfigError("oracle must be neutral, target_shape or recorded");
    }
    if (!(oracle_noise >= 0.0 && oracle_noise < 0.5)) throw ConfigError("oracle_noise must lie in [0, 0.5)");
    if (oracle_lattice < 1) throw ConfigError("oracle_lattice must be >= 1");
    if (!(lambda >= 0.0 && std::isfinite(lambda))) throw ConfigError("lambda must be finite and >= 0");
    if (!(mu >= 0.0 && std::isfinite(mu))) throw ConfigError("mu must be finite and >= 0");
    if (sparse_factor < 1) throw ConfigError("sparse_factor must be >= 1");
    if (plane_width < 1 || plane_height < 1) throw ConfigError("plane dimensions must be >= 1");
    if (plane_width % sparse_factor != 0 || plane_height % sparse_factor != 0) {
        throw ConfigError("sparse_factor must divide the plane dimensions");
    }
    if (grid_resolution < 2) throw ConfigError("grid_resolution must be >= 2");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (snapshot_step < 0) throw ConfigError("snapshot_step must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(prune_threshold > 0.0 && prune_threshold < grow_threshold && grow_threshold < 1.0)) {
        throw ConfigError("thresholds must satisfy 0 < prune_threshold < grow_threshold < 1");
    }
    if (prune_streak < 1) throw ConfigError("prune_streak must be >= 1");
    if (grow_period < 0 || grow_budget < 0) throw ConfigError("grow_period and grow_budget must be >= 0");
    if (views_per_step < 1) throw ConfigError("views_per_step must be >= 1");
    if (!(orbit_radius > 0.0)) throw ConfigError("orbit_radius must be positive");
    if (!(fov > 0.0 && fov < 180.0)) throw ConfigError("fov must lie in (0, 180)");
    if (!(elevation_min <= elevation_max && elevation_min > -90.0 && elevation_max < 90.0)) {
        throw ConfigError("elevation range must satisfy -90 < elevation_min <= elevation_max < 90");
    }
    DepthRange{near, far, samples_per_ray}.validate();
    DepthRange{near, far, guidance_samples_per_ray}.validate();
    if (init != "uniform" && init != "template") throw ConfigError("init must be uniform or template");
    if (!(init_density > 0.0 && init_density < 1.0)) throw ConfigError("init_density must lie in (0, 1)");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& k : key_table()) out.emplace_back(k.name);
        return out;
    }();
    return keys;
}

void apply_setting(OptimizeConfig& cfg, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir) {
    for (const auto& k : key_table()) {
        if (key == k.name) {
            k.set(cfg, key, value, base_dir);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

OptimizeConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
    OptimizeConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), base_dir);
    }
    return cfg;
}

OptimizeConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    return parse_config(in, path.parent_path());
}

std::vector<std::pair<std::string, std::string>> config_entries(const OptimizeConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : key_table()) out.emplace_back(k.name, k.get(cfg));
    return out;
}

Adam::Adam(std::size_t size, double learning_rate) : lr_(learning_rate), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    const auto n = static_cast<std::ptrdiff_t>(params.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
        v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g * g;
        params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEpsilon);
    }
}

Problem load_problem(const OptimizeConfig& cfg) {
    cfg.validate();
    if (cfg.template_mesh.empty()) throw ConfigError("template_mesh is required");
    if (cfg.oracle == "target_shape" && cfg.target_mesh.empty()) throw ConfigError("target_shape oracle needs target_mesh");
    if (cfg.oracle == "recorded" && cfg.oracle_file.empty()) throw ConfigError("recorded oracle needs oracle_file");
    const TriangleMesh raw_template = load_obj(cfg.template_mesh).mesh;
    const Normalization xf = normalization_for(raw_template);
    Problem p{transformed(raw_template, xf), GuidanceOracle::neutral()};
    if (cfg.oracle == "target_shape") {
        p.oracle = GuidanceOracle::target_shape(transformed(load_obj(cfg.target_mesh).mesh, xf), cfg.oracle_noise,
                                                cfg.seed, cfg.oracle_lattice);
    } else if (cfg.oracle == "recorded") {
        p.oracle = GuidanceOracle::recorded(cfg.oracle_file);
    }
    return p;
}

namespace {

constexpr std::uint64_t kViewStream = fnv1a64("optimize.views");
constexpr std::uint64_t kKeypointStream = fnv1a64("optimize.keypoints");
constexpr std::uint64_t kGuidanceStream = fnv1a64("optimize.guidance");
constexpr std::uint64_t kGrowStream = fnv1a64("optimize.grow");

std::vector<Vec3> node_positions(const DensityField& field) {
    std::vector<Vec3> out(field.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = field.node_position(static_cast<std::uint32_t>(i));
    return out;
}

class NonFiniteLoss : public DataError {
public:
    NonFiniteLoss(const std::string& what, nlohmann::ordered_json state)
        : DataError(what), state_(std::move(state)) {}
    const nlohmann::ordered_json& state() const { return state_; }

private:
    nlohmann::ordered_json state_;
};

}  // namespace

Optimizer::Optimizer(OptimizeConfig cfg, Problem problem)
    : cfg_(std::move(cfg)),
      oracle_(std::move(problem.oracle)),
      field_(cfg_.grid_resolution, cfg_.init_density),
      adam_(field_.size(), cfg_.learning_rate),
      root_(cfg_.seed) {
    cfg_.validate();
    template_ = std::make_shared<const Bvh>(std::move(problem.template_mesh));
    const auto nodes = node_positions(field_);
    template_nodes_ = occupancy_labels(*template_, nodes);
    if (oracle_.target() != nullptr) target_nodes_ = occupancy_labels(*oracle_.target(), nodes);
    if (cfg_.init == "template") {
        const double inside = logit(1.0 - cfg_.init_density);
        auto params = field_.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (template_nodes_[i]) params[i] = inside;
        }
    }
}

std::vector<Camera> Optimizer::views_for_step(int step) const {
    CounterRng rng = root_.split(kViewStream).split(static_cast<std::uint64_t>(step));
    std::vector<Camera> out;
    for (int v = 0; v < cfg_.views_per_step; ++v) {
        const double az = rng.uniform(0.0, 360.0);
        const double el = rng.uniform(cfg_.elevation_min, cfg_.elevation_max);
        out.push_back(camera_from_spherical(cfg_.orbit_radius, az, el, cfg_.fov, cfg_.plane_width, cfg_.plane_height));
    }
    return out;
}

std::vector<std::uint8_t> Optimizer::node_occupancy() const {
    const auto params = field_.params();
    std::vector<std::uint8_t> out(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i] > 0.0 ? 1 : 0;
    return out;
}

double Optimizer::iou_template() const { return iou(node_occupancy(), template_nodes_); }

std::optional<double> Optimizer::iou_target() const {
    if (target_nodes_.empty()) return std::nullopt;
    return iou(node_occupancy(), target_nodes_);
}

std::vector<std::size_t> Optimizer::prune(const CoLoss& loss) {
    std::vector<std::size_t> killed;
    for (std::size_t i = 0; i < loss.alive.size(); ++i) {
        const std::size_t idx = loss.alive[i];
        const auto& k = keypoints_.entries()[idx];
        if (loss.keypoint_density[i] < cfg_.prune_threshold) {
            const std::uint32_t streak = k.low_density_streak + 1;
            keypoints_.set_streak(idx, streak);
            if (streak >= static_cast<std::uint32_t>(cfg_.prune_streak)) {
                keypoints_.kill(idx);
                killed.push_back(idx);
            }
        } else if (k.low_density_streak != 0) {
            keypoints_.set_streak(idx, 0);
        }
    }
    pruned_ += killed.size();
    return killed;
}

std::vector<std::size_t> Optimizer::grow() {
    CounterRng rng = root_.split(kGrowStream).split(static_cast<std::uint64_t>(step_));
    std::vector<std::size_t> added;
    for (int c = 0; c < cfg_.grow_budget; ++c) {
        const Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        if (!(field_.query(p) > cfg_.grow_threshold)) continue;
        if (keypoints_.cell_has_alive(dedup_cell(p))) continue;
        if (occupancy_label(*template_, p) != 0) continue;
        Keypoint k;
        k.point = p;
        k.label = 1;
        k.provenance = Provenance::Grown;
        if (keypoints_.insert(k)) added.push_back(keypoints_.size() - 1);
    }
    grown_ += added.size();
    return added;
}

StepRecord Optimizer::step() {
    ++step_;
    const DepthRange kp_range{cfg_.near, cfg_.far, cfg_.samples_per_ray};
    const DepthRange guide_range{cfg_.near, cfg_.far, cfg_.guidance_samples_per_ray};
    const Bvh& tmpl = *template_;
    const Labeler labeler = [&tmpl](const Vec3& p) { return occupancy_label(tmpl, p); };

    std::vector<Vec3> guidance;
    const auto views = views_for_step(step_);
    for (std::size_t v = 0; v < views.size(); ++v) {
        const auto sparse = generate_rays(sparse_plane(views[v], cfg_.sparse_factor));
        append_keypoints(keypoints_, sparse, kp_range, labeler, root_.split(kKeypointStream));
        const auto full = generate_rays(views[v]);
        const auto stream = static_cast<std::uint64_t>(step_) * views.size() + v;
        const auto pts = ray_samples(full, guide_range, root_.split(kGuidanceStream).split(stream));
        guidance.insert(guidance.end(), pts.begin(), pts.end());
    }

    CoLoss loss = co_loss(keypoints_, guidance, field_, oracle_, cfg_.lambda, cfg_.mu);
    if (!std::isfinite(loss.breakdown.l_total)) {
        const auto params = field_.params();
        const auto [lo, hi] = std::minmax_element(params.begin(), params.end());
        nlohmann::ordered_json state = {{"step", step_},
                                        {"l_shape", loss.breakdown.l_shape},
                                        {"l_sparse", loss.breakdown.l_sparse},
                                        {"l_diff", loss.breakdown.l_diff},
                                        {"l_total", loss.breakdown.l_total},
                                        {"alive", keypoints_.alive_count()},
                                        {"keypoints", keypoints_.size()},
                                        {"guidance_points", guidance.size()},
                                        {"param_min", *lo},
                                        {"param_max", *hi},
                                        {"params_finite", field_.all_finite()}};
        throw NonFiniteLoss("non-finite loss at step " + std::to_string(step_), std::move(state));
    }

    StepRecord rec;
    rec.step = step_;
    rec.loss = loss.breakdown;
    rec.pruned_now = prune(loss);
    adam_.step(field_.params(), loss.grad);
    last_loss_ = std::move(loss);
    if (cfg_.grow_period > 0 && step_ % cfg_.grow_period == 0) rec.grown_now = grow();
    rec.iou_template = iou_template();
    rec.iou_target = iou_target();
    rec.pruned = pruned_;
    rec.grown = grown_;
    rec.alive = keypoints_.alive_count();
    rec.keypoints = keypoints_.size();
    return rec;
}

std::string report_line(const StepRecord& r) {
    nlohmann::ordered_json j = {{"step", r.step},
                                {"l_shape", r.loss.l_shape},
                                {"l_sparse", r.loss.l_sparse},
                                {"l_diff", r.loss.l_diff},
                                {"l_total", r.loss.l_total},
                                {"iou_template", r.iou_template},
                                {"iou_target", r.iou_target ? nlohmann::ordered_json(*r.iou_target) : nullptr},
                                {"pruned", r.pruned},
                                {"grown", r.grown},
                                {"alive", r.alive},
                                {"keypoints", r.keypoints}};
    return j.dump();
}

OptimizationReport run(const OptimizeConfig& cfg, Problem problem, const StepObserver& observer) {
    Optimizer opt(cfg, std::move(problem));
    OptimizationReport report;
    const bool write = !cfg.output_dir.empty();
    std::ofstream out;
    if (write) {
        std::filesystem::create_directories(cfg.output_dir);
        out.open(cfg.output_dir / "report.jsonl", std::ios::binary);
        if (!out) throw DataError("cannot write report: " + (cfg.output_dir / "report.jsonl").string());
    }
    auto snapshot = [&](int step) {
        if (!write) return;
        const auto grid = cfg.output_dir / ("snapshot_" + std::to_string(step) + ".pfg");
        write_grid(to_density_grid(opt.field(), cfg.grid_resolution), grid);
        write_keypoints(opt.keypoints(), cfg.output_dir / ("keypoints_" + std::to_string(step) + ".txt"));
        report.snapshots.push_back(grid);
    };

    for (int s = 0; s < cfg.steps; ++s) {
        StepRecord rec;
        try {
            rec = opt.step();
        } catch (const NonFiniteLoss& e) {
            if (write) std::ofstream(cfg.output_dir / "failure_state.json", std::ios::binary) << e.state().dump(2) << '\n';
            throw;
        }
        if (write) out << report_line(rec) << '\n';
        if (observer) observer(rec, opt);
        report.steps.push_back(std::move(rec));
        if (cfg.snapshot_step > 0 && opt.steps_done() == cfg.snapshot_step && cfg.snapshot_step != cfg.steps) {
            snapshot(opt.steps_done());
        }
    }
    snapshot(opt.steps_done());
    if (write) write_keypoints(opt.keypoints(), cfg.output_dir / "keypoints.txt");
    report.pruned = report.steps.empty() ? 0 : report.steps.back().pruned;
    report.grown = report.steps.empty() ? 0 : report.steps.back().grown;
    return report;
}

OptimizationReport run(const OptimizeConfig& cfg, const StepObserver& observer) {
    return run(cfg, load_problem(cfg), observer);
}

}  // namespace priorforge
