#include "flowguide/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "flowguide/flow.hpp"
#include "flowguide/rng.hpp"

namespace flowguide::bench {

namespace {
using nlohmann::json;

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ExperimentConfig: cannot open " + path);
    json doc = json::parse(in);
    ExperimentConfig cfg;

    cfg.family = doc.value("family", cfg.family);
    if (doc.contains("scene_files")) cfg.scene_files = doc["scene_files"].get<std::vector<std::string>>();
    if (doc.contains("scenes")) {
        const auto& s = doc["scenes"];
        cfg.family = s.value("family", cfg.family);
        if (s.contains("files")) cfg.scene_files = s["files"].get<std::vector<std::string>>();
    }

    if (doc.contains("policy")) {
        const auto& p = doc["policy"];
        cfg.policy_type = p.value("type", cfg.policy_type);
        cfg.policy_file = p.value("file", cfg.policy_file);
        cfg.action_sigma = p.value("action_sigma", cfg.action_sigma);
    }
    if (doc.contains("robot")) cfg.robot_file = doc["robot"].value("file", cfg.robot_file);

    if (doc.contains("fields")) {
        const auto& f = doc["fields"];
        cfg.fields.voxel_size = f.value("voxel_size", cfg.fields.voxel_size);
        cfg.fields.cloud_spacing = f.value("cloud_spacing", cfg.fields.cloud_spacing);
        if (f.contains("collision")) {
            const auto& c = f["collision"];
            cfg.fields.collision.enabled = c.value("enabled", cfg.fields.collision.enabled);
            cfg.fields.collision.lambda = c.value("lambda", cfg.fields.collision.lambda);
            cfg.fields.collision.barrier_d = c.value("barrier_d", cfg.fields.collision.barrier_d);
            cfg.fields.collision.floor_eps = c.value("floor_eps", cfg.fields.collision.floor_eps);
        }
        if (f.contains("semantic")) {
            const auto& s = f["semantic"];
            cfg.fields.semantic.enabled = s.value("enabled", cfg.fields.semantic.enabled);
            cfg.fields.semantic.lambda = s.value("lambda", cfg.fields.semantic.lambda);
            cfg.fields.semantic.sigma = s.value("sigma", cfg.fields.semantic.sigma);
            cfg.fields.semantic.all_steps = s.value("all_steps", cfg.fields.semantic.all_steps);
            cfg.fields.semantic.orientation = s.value("orientation", cfg.fields.semantic.orientation);
            cfg.fields.semantic.orientation_weight =
                s.value("orientation_weight", cfg.fields.semantic.orientation_weight);
            cfg.fields.semantic.sigma_r = s.value("sigma_r", cfg.fields.semantic.sigma_r);
        }
        if (f.contains("human")) {
            const auto& h = f["human"];
            cfg.fields.human.enabled = h.value("enabled", cfg.fields.human.enabled);
            cfg.fields.human.lambda = h.value("lambda", cfg.fields.human.lambda);
            cfg.fields.human.sigma = h.value("sigma", cfg.fields.human.sigma);
        }
    }
    if (doc.contains("sampler")) {
        const auto& s = doc["sampler"];
        cfg.sampler.num_steps = s.value("num_steps", cfg.sampler.num_steps);
        cfg.sampler.clip_alpha = s.value("clip_alpha", cfg.sampler.clip_alpha);
        cfg.sampler.init_candidates = s.value("init_candidates", cfg.sampler.init_candidates);
        cfg.sampler.init_denoise_steps = s.value("init_denoise_steps", cfg.sampler.init_denoise_steps);
    }
    if (doc.contains("execution")) {
        const auto& e = doc["execution"];
        cfg.execution.horizon = e.value("horizon", cfg.execution.horizon);
        cfg.execution.executed_steps = e.value("executed_steps", cfg.execution.executed_steps);
        cfg.execution.max_chunks = e.value("max_chunks", cfg.execution.max_chunks);
        cfg.execution.success_radius = e.value("success_radius", cfg.execution.success_radius);
    }
    const std::string jac = doc.value("jacobian", "scaled");
    if (jac == "scaled")
        cfg.jacobian = TweedieJacobian::Scaled;
    else if (jac == "identity")
        cfg.jacobian = TweedieJacobian::Identity;
    else if (jac == "exact")
        cfg.jacobian = TweedieJacobian::Exact;
    else
        throw std::runtime_error("ExperimentConfig: unknown jacobian '" + jac + "'");

    cfg.trials = doc.value("trials", cfg.trials);
    cfg.master_seed = doc.value("seed", cfg.master_seed);
    cfg.out_dir = doc.value("out", cfg.out_dir);
    cfg.parallel = doc.value("parallel", cfg.parallel);

    if (doc.contains("sweep")) {
        const auto& s = doc["sweep"];
        cfg.sweep_points = s.value("points", cfg.sweep_points);
        cfg.sweep_decades = s.value("decades", cfg.sweep_decades);
        cfg.sweep_center = s.value("center", cfg.sweep_center);
    }
    if (doc.contains("latency")) cfg.latency_chunks = doc["latency"].value("chunks", cfg.latency_chunks);
    if (doc.contains("posthoc")) {
        const auto& p = doc["posthoc"];
        cfg.posthoc_w_align = p.value("w_align", cfg.posthoc_w_align);
        cfg.posthoc_w_coll = p.value("w_coll", cfg.posthoc_w_coll);
        cfg.posthoc_w_bound = p.value("w_bound", cfg.posthoc_w_bound);
        cfg.posthoc_w_goal = p.value("w_goal", cfg.posthoc_w_goal);
        cfg.posthoc_iters = p.value("iters", cfg.posthoc_iters);
        cfg.posthoc_lr = p.value("lr", cfg.posthoc_lr);
    }
    if (doc.contains("train")) {
        const auto& t = doc["train"];
        cfg.dataset_file = t.value("dataset_file", cfg.dataset_file);
        if (t.contains("hidden_sizes")) cfg.hidden_sizes = t["hidden_sizes"].get<std::vector<int>>();
        cfg.train_epochs = t.value("epochs", cfg.train_epochs);
        cfg.train_lr = t.value("lr", cfg.train_lr);
        cfg.dataset_episodes = t.value("dataset_episodes", cfg.dataset_episodes);
    }
    if (doc.contains("grid")) {
        const auto& g = doc["grid"];
        cfg.cloud_file = g.value("cloud_file", cfg.cloud_file);
        cfg.filter_label = g.value("filter_label", cfg.filter_label);
        cfg.filter_percentile = g.value("filter_percentile", cfg.filter_percentile);
    }
    return cfg;
}

std::string ExperimentConfig::canonical_json() const {
    json doc;
    doc["family"] = family;
    doc["scene_files"] = scene_files;
    doc["policy"] = {{"type", policy_type}, {"file", policy_file}, {"action_sigma", action_sigma}};
    doc["robot_file"] = robot_file;
    doc["fields"] = {
        {"voxel_size", fields.voxel_size},
        {"cloud_spacing", fields.cloud_spacing},
        {"collision",
         {{"enabled", fields.collision.enabled},
          {"lambda", fields.collision.lambda},
          {"barrier_d", fields.collision.barrier_d},
          {"floor_eps", fields.collision.floor_eps}}},
        {"semantic",
         {{"enabled", fields.semantic.enabled},
          {"lambda", fields.semantic.lambda},
          {"sigma", fields.semantic.sigma},
          {"all_steps", fields.semantic.all_steps},
          {"orientation", fields.semantic.orientation},
          {"orientation_weight", fields.semantic.orientation_weight},
          {"sigma_r", fields.semantic.sigma_r}}},
        {"human",
         {{"enabled", fields.human.enabled},
          {"lambda", fields.human.lambda},
          {"sigma", fields.human.sigma}}}};
    doc["sampler"] = {{"num_steps", sampler.num_steps},
                      {"clip_alpha", sampler.clip_alpha},
                      {"init_candidates", sampler.init_candidates},
                      {"init_denoise_steps", sampler.init_denoise_steps}};
    doc["execution"] = {{"horizon", execution.horizon},
                        {"executed_steps", execution.executed_steps},
                        {"max_chunks", execution.max_chunks},
                        {"success_radius", execution.success_radius}};
    doc["jacobian"] = static_cast<int>(jacobian);
    doc["trials"] = trials;
    doc["seed"] = master_seed;
    doc["sweep"] = {{"points", sweep_points}, {"decades", sweep_decades}, {"center", sweep_center}};
    doc["latency_chunks"] = latency_chunks;
    doc["posthoc"] = {{"w_align", posthoc_w_align}, {"w_coll", posthoc_w_coll},
                      {"w_bound", posthoc_w_bound}, {"w_goal", posthoc_w_goal},
                      {"iters", posthoc_iters},     {"lr", posthoc_lr}};
    return doc.dump();
}

uint64_t ExperimentConfig::config_hash() const { return fnv1a(canonical_json()); }

// ---------------------------------------------------------------------------
// Statistics and table plumbing

Interval wilson_interval(int successes, int n, double z) {
    if (n <= 0) return {0.0, 1.0};
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

const ResultRow& ResultTable::row(const std::string& cell) const {
    for (const auto& r : rows)
        if (r.cell == cell) return r;
    throw std::runtime_error("ResultTable: no cell named '" + cell + "'");
}

void ResultTable::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("ResultTable: cannot open " + path);
    out << "cell,trials,success_rate,success_lo,success_hi,safety_rate,safety_lo,safety_hi,"
           "mean_min_clearance,mean_chunks,mean_chunk_ms,mean_demo_deviation,ci_method\n";
    out.precision(12);
    for (const auto& r : rows) {
        out << r.cell << "," << r.trials << "," << r.success_rate << "," << r.success_ci.lo << ","
            << r.success_ci.hi << "," << r.safety_rate << "," << r.safety_ci.lo << ","
            << r.safety_ci.hi << "," << r.mean_min_clearance << "," << r.mean_chunks << ","
            << r.mean_chunk_ms << "," << r.mean_demo_deviation << "," << ci_method << "\n";
    }
}

std::string EpisodeRecord::to_json_line() const {
    json j;
    j["cell"] = cell;
    j["episode"] = episode;
    j["seed"] = seed;
    j["success"] = success;
    j["safe"] = safe;
    j["collisions"] = collisions;
    j["min_clearance"] = min_clearance;
    j["final_distance"] = final_distance;
    j["chunks"] = chunks;
    j["mean_chunk_ms"] = mean_chunk_ms;
    if (std::isfinite(demo_deviation)) j["demo_deviation"] = demo_deviation;
    if (!failure_reason.empty()) j["failure_reason"] = failure_reason;
    if (!notes.empty()) j["notes"] = notes;
    return j.dump();
}

EpisodeRecord EpisodeRecord::from_json_line(const std::string& line) {
    json j = json::parse(line);
    EpisodeRecord r;
    r.cell = j.at("cell").get<std::string>();
    r.episode = j.at("episode").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.success = j.at("success").get<bool>();
    r.safe = j.at("safe").get<bool>();
    r.collisions = j.at("collisions").get<int>();
    r.min_clearance = j.at("min_clearance").get<double>();
    r.final_distance = j.at("final_distance").get<double>();
    r.chunks = j.at("chunks").get<int>();
    r.mean_chunk_ms = j.at("mean_chunk_ms").get<double>();
    if (j.contains("demo_deviation")) r.demo_deviation = j["demo_deviation"].get<double>();
    if (j.contains("failure_reason")) r.failure_reason = j["failure_reason"].get<std::string>();
    if (j.contains("notes")) r.notes = j["notes"].get<std::string>();
    return r;
}

uint64_t episode_seed(uint64_t master_seed, const std::string& /*cell*/, int episode) {
    // Arms deliberately share per-episode seeds so comparisons are paired and
    // a lambda = 0 arm reproduces a standalone unguided run exactly.
    return Rng(master_seed).fork(static_cast<uint64_t>(episode) + 1).next_u64();
}

namespace {

EpisodeRecord run_one(const CellSpec& cell, int episode, uint64_t master_seed) {
    const uint64_t seed = episode_seed(master_seed, cell.name, episode);
    const Scene scene = cell.make_scene(seed);
    const EpisodeResult res = run_episode(scene, cell.setup, seed);

    EpisodeRecord rec;
    rec.cell = cell.name;
    rec.episode = episode;
    rec.seed = seed;
    rec.success = res.success;
    rec.safe = res.safe;
    rec.collisions = res.collision_count;
    rec.min_clearance = res.min_clearance;
    rec.final_distance = res.final_target_distance;
    rec.chunks = res.chunks_used;
    rec.demo_deviation = res.demo_mean_deviation;
    rec.failure_reason = res.failure_reason;
    rec.notes = res.notes;
    double ms = 0.0;
    for (double m : res.chunk_wall_ms) ms += m;
    rec.mean_chunk_ms = res.chunk_wall_ms.empty() ? 0.0 : ms / res.chunk_wall_ms.size();
    return rec;
}

ResultTable aggregate(const std::vector<CellSpec>& cells,
                      const std::map<std::pair<std::string, int>, EpisodeRecord>& records,
                      int trials) {
    ResultTable table;
    for (const auto& cell : cells) {
        ResultRow row;
        row.cell = cell.name;
        int n = 0, succ = 0, safe = 0, demo_n = 0;
        double clearance = 0.0, chunks = 0.0, ms = 0.0, demo_dev = 0.0;
        for (int e = 0; e < trials; ++e) {
            auto it = records.find({cell.name, e});
            if (it == records.end()) continue;
            const auto& r = it->second;
            ++n;
            succ += r.success ? 1 : 0;
            safe += r.safe ? 1 : 0;
            clearance += r.min_clearance;
            chunks += r.chunks;
            ms += r.mean_chunk_ms;
            if (std::isfinite(r.demo_deviation)) {
                demo_dev += r.demo_deviation;
                ++demo_n;
            }
        }
        row.trials = n;
        if (n > 0) {
            row.success_rate = static_cast<double>(succ) / n;
            row.safety_rate = static_cast<double>(safe) / n;
            row.success_ci = wilson_interval(succ, n);
            row.safety_ci = wilson_interval(safe, n);
            row.mean_min_clearance = clearance / n;
            row.mean_chunks = chunks / n;
            row.mean_chunk_ms = ms / n;
            if (demo_n > 0) row.mean_demo_deviation = demo_dev / demo_n;
        }
        table.rows.push_back(row);
    }
    return table;
}

void write_meta(const ExperimentConfig& cfg, const std::string& command) {
    json meta;
    meta["command"] = command;
    meta["config_hash"] = cfg.config_hash();
    meta["version"] = FLOWGUIDE_VERSION;
    meta["seed"] = cfg.master_seed;
    meta["trials"] = cfg.trials;
    meta["ci_method"] = "wilson95";
    std::ofstream out(std::filesystem::path(cfg.out_dir) / "meta.json");
    out << meta.dump(2) << "\n";
}

}  // namespace

ResultTable run_cells(const std::vector<CellSpec>& cells, const ExperimentConfig& cfg,
                      const std::string& command_name) {
    std::map<std::pair<std::string, int>, EpisodeRecord> records;
    std::filesystem::path jsonl;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        jsonl = std::filesystem::path(cfg.out_dir) / "episodes.jsonl";
        if (std::filesystem::exists(jsonl)) {
            std::ifstream in(jsonl);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                EpisodeRecord r = EpisodeRecord::from_json_line(line);
                records[{r.cell, r.episode}] = std::move(r);
            }
        }
    }

    struct Task {
        size_t cell;
        int episode;
    };
    std::vector<Task> tasks;
    for (size_t c = 0; c < cells.size(); ++c)
        for (int e = 0; e < cfg.trials; ++e)
            if (!records.count({cells[c].name, e})) tasks.push_back({c, e});

    std::vector<EpisodeRecord> fresh(tasks.size());
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::string failure_message;
    std::mutex failure_mutex;

    const int workers =
        std::max(1, std::min<int>(cfg.parallel, static_cast<int>(std::thread::hardware_concurrency())));
    auto work = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= tasks.size() || failed.load()) break;
            try {
                fresh[i] = run_one(cells[tasks[i].cell], tasks[i].episode, cfg.master_seed);
            } catch (const std::exception& err) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                failure_message = err.what();
                failed.store(true);
            }
        }
    };
    if (workers == 1 || tasks.size() <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failed.load()) throw std::runtime_error("run_cells: " + failure_message);

    if (!cfg.out_dir.empty()) {
        std::ofstream out(jsonl, std::ios::app);
        for (const auto& r : fresh) out << r.to_json_line() << "\n";
    }
    for (auto& r : fresh) records[{r.cell, r.episode}] = std::move(r);

    ResultTable table = aggregate(cells, records, cfg.trials);
    if (!cfg.out_dir.empty()) {
        table.write_csv((std::filesystem::path(cfg.out_dir) / "summary.csv").string());
        write_meta(cfg, command_name);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Shared command plumbing

namespace {

struct Rig {
    std::unique_ptr<RobotModel> model;
    std::unique_ptr<VelocityPolicy> policy;
};

Rig make_rig(const ExperimentConfig& cfg) {
    Rig rig;
    rig.model = std::make_unique<RobotModel>(
        cfg.robot_file.empty() ? RobotModel::default_free_gripper() : RobotModel::load_json(cfg.robot_file));
    if (cfg.policy_type == "family") {
        rig.policy = std::make_unique<scenes::ScenePrior>(scenes::family_prior(
            cfg.family, *rig.model, cfg.execution.horizon, cfg.action_sigma));
    } else if (cfg.policy_type == "file") {
        rig.policy = load_policy(cfg.policy_file);
    } else if (cfg.policy_type == "standard_normal") {
        rig.policy =
            std::make_unique<GmmPolicy>(GmmPolicy::standard_normal(cfg.execution.horizon,
                                                                   rig.model->action_dim()));
    } else if (cfg.policy_type == "mlp_random") {
        rig.policy = std::make_unique<MlpPolicy>(cfg.execution.horizon, rig.model->action_dim(), 0,
                                                 cfg.hidden_sizes, cfg.master_seed);
    } else {
        throw std::runtime_error("make_rig: unknown policy type '" + cfg.policy_type + "'");
    }
    if (rig.policy->horizon() != cfg.execution.horizon || rig.policy->dim() != rig.model->action_dim())
        throw std::runtime_error("make_rig: policy shape does not match robot/horizon");
    return rig;
}

std::function<Scene(uint64_t)> scene_maker(const ExperimentConfig& cfg) {
    if (!cfg.scene_files.empty()) {
        const auto files = cfg.scene_files;
        return [files](uint64_t seed) {
            return Scene::load_json(files[static_cast<size_t>(seed % files.size())]);
        };
    }
    const std::string family = cfg.family;
    return [family](uint64_t seed) { return scenes::make_scene(family, seed); };
}

EpisodeSetup base_setup(const ExperimentConfig& cfg, const Rig& rig) {
    EpisodeSetup setup;
    setup.policy = rig.policy.get();
    setup.model = rig.model.get();
    setup.jacobian = cfg.jacobian;
    setup.fields = cfg.fields;
    setup.execution = cfg.execution;
    setup.sampler = cfg.sampler;
    setup.mode = GuidanceMode::none();
    return setup;
}

std::string format_lambda(double v) {
    std::ostringstream ss;
    ss << "lambda=" << v;
    return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

ResultTable cmd_sweep_lambda(const ExperimentConfig& cfg) {
    Rig rig = make_rig(cfg);
    auto make_scene = scene_maker(cfg);

    std::vector<double> grid{0.0};
    const double lo = std::log10(cfg.sweep_center) - cfg.sweep_decades / 2.0;
    for (int i = 0; i < cfg.sweep_points; ++i)
        grid.push_back(std::pow(10.0, lo + cfg.sweep_decades * i / (cfg.sweep_points - 1)));

    std::vector<CellSpec> cells;
    for (double lambda : grid) {
        EpisodeSetup setup = base_setup(cfg, rig);
        setup.fields.collision.enabled = true;
        setup.fields.collision.lambda = lambda;
        setup.fields.semantic.enabled = false;
        setup.fields.human.enabled = false;
        // Fig.-7 protocol: denoising guidance only, initialization off.
        setup.mode = lambda > 0.0 ? GuidanceMode::denoise_only() : GuidanceMode::none();
        cells.push_back({format_lambda(lambda), std::move(setup), make_scene});
    }
    return run_cells(cells, cfg, "sweep-lambda");
}

ResultTable cmd_ablation(const ExperimentConfig& cfg) {
    Rig rig = make_rig(cfg);
    auto make_scene = scene_maker(cfg);

    std::vector<CellSpec> cells;
    const std::pair<std::string, GuidanceMode> arms[] = {
        {"none", GuidanceMode::none()},
        {"init", GuidanceMode::init_only()},
        {"denoise", GuidanceMode::denoise_only()},
        {"both", GuidanceMode::both()},
    };
    for (const auto& [name, mode] : arms) {
        EpisodeSetup setup = base_setup(cfg, rig);
        setup.fields.collision.enabled = true;
        setup.mode = mode;
        cells.push_back({name, std::move(setup), make_scene});
    }
    return run_cells(cells, cfg, "ablation");
}

ResultTable cmd_synergy(const ExperimentConfig& cfg) {
    Rig rig = make_rig(cfg);
    auto make_scene = scene_maker(cfg);

    struct Arm {
        const char* name;
        bool collision, semantic;
    };
    const Arm arms[] = {{"none", false, false},
                        {"semantic", false, true},
                        {"collision", true, false},
                        {"both", true, true}};
    std::vector<CellSpec> cells;
    for (const auto& arm : arms) {
        EpisodeSetup setup = base_setup(cfg, rig);
        setup.fields.collision.enabled = arm.collision;
        setup.fields.semantic.enabled = arm.semantic;
        setup.fields.human.enabled = false;
        setup.mode = (arm.collision || arm.semantic) ? GuidanceMode::both() : GuidanceMode::none();
        cells.push_back({arm.name, std::move(setup), make_scene});
    }
    return run_cells(cells, cfg, "synergy");
}

ActionChunk posthoc_optimize(const ActionChunk& chunk_in, const Scene& scene, const RobotModel& model,
                             const RobotState& state, const ExperimentConfig& cfg, bool* diverged) {
    const int h = std::min(cfg.execution.executed_steps, chunk_in.horizon());
    const double d = cfg.fields.collision.barrier_d;
    const Vec3 goal = scene.correct_target().position;
    constexpr double kActionBound = 4.0;

    const OccupancyGrid occ = scene_occupancy(scene, cfg.fields.voxel_size, cfg.fields.cloud_spacing);
    const SdfGrid sdf = compute_sdf(occ, d);

    ActionChunk chunk = chunk_in;
    const ActionChunk reference = chunk_in;
    if (diverged) *diverged = false;

    auto cost_and_grad = [&](const ActionChunk& a, Eigen::MatrixXd* grad_out) {
        const CartesianTrajectory traj = rollout_relative(model, state, a);
        TrajectoryCotangent cot = TrajectoryCotangent::zeros(traj.steps(), traj.probe_count());
        double cost = 0.0;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < traj.positions[i].cols(); ++j) {
                const double s = query_sdf(sdf, traj.positions[i].col(j));
                if (s < d) {
                    const double hinge = d - s;
                    cost += cfg.posthoc_w_coll * hinge * hinge;
                    cot.d_positions[i].col(j) +=
                        cfg.posthoc_w_coll * 2.0 * hinge * -query_sdf_gradient(sdf, traj.positions[i].col(j));
                }
            }
        }
        // goal term on the last executed pose
        const Vec3 ee = traj.positions[h - 1].col(traj.ee_index);
        cost += cfg.posthoc_w_goal * (ee - goal).squaredNorm();
        cot.d_positions[h - 1].col(traj.ee_index) += cfg.posthoc_w_goal * 2.0 * (ee - goal);

        Eigen::MatrixXd grad = vjp(model, state, a, cot);
        for (int i = 0; i < h; ++i) {
            const Eigen::RowVectorXd resid = a.values.row(i) - reference.values.row(i);
            cost += cfg.posthoc_w_align * resid.squaredNorm();
            grad.row(i) += cfg.posthoc_w_align * 2.0 * resid;
            for (int c = 0; c < a.dim(); ++c) {
                const double excess = std::abs(a.values(i, c)) - kActionBound;
                if (excess > 0.0) {
                    cost += cfg.posthoc_w_bound * excess * excess;
                    grad(i, c) += cfg.posthoc_w_bound * 2.0 * excess *
                                  (a.values(i, c) > 0.0 ? 1.0 : -1.0);
                }
            }
        }
        // only the executed portion is optimized
        for (int i = h; i < a.horizon(); ++i) grad.row(i).setZero();
        if (grad_out) *grad_out = std::move(grad);
        return cost;
    };

    Eigen::MatrixXd grad;
    for (int it = 0; it < cfg.posthoc_iters; ++it) {
        const double cost = cost_and_grad(chunk, &grad);
        if (!std::isfinite(cost) || !grad.allFinite()) {
            if (diverged) *diverged = true;
            return chunk_in;
        }
        chunk.values -= cfg.posthoc_lr * grad;
    }
    return chunk;
}

ResultTable cmd_posthoc(const ExperimentConfig& cfg) {
    Rig rig = make_rig(cfg);
    auto make_scene = scene_maker(cfg);
    const RobotModel* model = rig.model.get();

    std::vector<CellSpec> cells;
    {
        EpisodeSetup setup = base_setup(cfg, rig);
        cells.push_back({"unguided", std::move(setup), make_scene});
    }
    {
        EpisodeSetup setup = base_setup(cfg, rig);
        const ExperimentConfig cfg_copy = cfg;
        setup.post_sampler = [cfg_copy, model](ActionChunk chunk, const Scene& scene,
                                               const RobotState& state, std::string& note) {
            bool diverged = false;
            ActionChunk out = posthoc_optimize(chunk, scene, *model, state, cfg_copy, &diverged);
            if (diverged) note = "posthoc optimizer diverged";
            return out;
        };
        cells.push_back({"posthoc", std::move(setup), make_scene});
    }
    {
        EpisodeSetup setup = base_setup(cfg, rig);
        setup.fields.collision.enabled = true;
        setup.mode = GuidanceMode::denoise_only();
        cells.push_back({"guided", std::move(setup), make_scene});
    }
    return run_cells(cells, cfg, "posthoc");
}

ResultTable cmd_demo_follow(const ExperimentConfig& cfg) {
    Rig rig = make_rig(cfg);
    auto make_scene = scene_maker(cfg);

    std::vector<CellSpec> cells;
    const std::pair<std::string, GuidanceMode> arms[] = {
        {"none", GuidanceMode::none()},
        // the demonstration only shapes the initial noise distribution
        {"init_only", GuidanceMode::init_only()},
        {"full", GuidanceMode::both()},
    };
    for (const auto& [name, mode] : arms) {
        EpisodeSetup setup = base_setup(cfg, rig);
        setup.fields.collision.enabled = false;
        setup.fields.semantic.enabled = false;
        setup.fields.human.enabled = true;
        setup.mode = mode;
        cells.push_back({name, std::move(setup), make_scene});
    }
    return run_cells(cells, cfg, "demo-follow");
}

// ---------------------------------------------------------------------------
// Latency

namespace {

struct StageTimer {
    double ms = 0.0;
};

class TimedField : public EnergyField {
public:
    TimedField(std::shared_ptr<const EnergyField> inner, StageTimer* timer)
        : inner_(std::move(inner)), timer_(timer) {}
    const std::string& id() const override { return inner_->id(); }
    bool needs_orientations() const override { return inner_->needs_orientations(); }
    double energy(const CartesianTrajectory& x) const override {
        const double t0 = now_ms();
        const double e = inner_->energy(x);
        timer_->ms += now_ms() - t0;
        return e;
    }
    void add_gradient(const CartesianTrajectory& x, double scale,
                      TrajectoryCotangent& cot) const override {
        const double t0 = now_ms();
        inner_->add_gradient(x, scale, cot);
        timer_->ms += now_ms() - t0;
    }

private:
    std::shared_ptr<const EnergyField> inner_;
    StageTimer* timer_;
};

}  // namespace

LatencyReport cmd_latency(const ExperimentConfig& cfg) {
    // Default to an MLP backbone sized so policy evaluation dominates the way
    // it does for a full-size action expert; configs may override.
    ExperimentConfig local = cfg;
    if (local.policy_type == "family") {
        local.policy_type = "mlp_random";
        local.hidden_sizes = {512, 512};
    }
    Rig rig = make_rig(local);

    const Scene scene = scene_maker(local)(0);
    const Observation obs = scenes::observation_at(scene.start_state.position, scene.obs_id);

    StageTimer sdf_timer;
    std::vector<WeightedField> fields;
    FieldSetup fs = local.fields;
    fs.collision.enabled = true;
    fs.semantic.enabled = true;
    for (auto& wf : instantiate_fields(fs, scene)) {
        if (wf.field->id() == "collision")
            fields.push_back({std::make_shared<TimedField>(wf.field, &sdf_timer), wf.lambda});
        else
            fields.push_back(wf);
    }

    GuidanceChain chain{LatentDecoder(), rig.model.get(), scene.start_state, local.jacobian};
    SamplerConfig sampler = local.sampler;

    LatencyReport report;
    report.chunks = local.latency_chunks;

    Rng rng(local.master_seed);
    const double t_unguided = now_ms();
    for (int c = 0; c < report.chunks; ++c) {
        sampler.seed = rng.next_u64();
        (void)sample_unguided(*rig.policy, obs, sampler);
    }
    report.unguided_chunk_ms = (now_ms() - t_unguided) / report.chunks;

    rng = Rng(local.master_seed);
    double velocity_ms = 0.0, guidance_ms = 0.0;
    const double t_guided = now_ms();
    for (int c = 0; c < report.chunks; ++c) {
        sampler.seed = rng.next_u64();
        const GuidedSample s = sample_guided(*rig.policy, obs, fields, chain, sampler);
        velocity_ms += s.diagnostics.velocity_ms;
        guidance_ms += s.diagnostics.guidance_ms;
    }
    report.guided_chunk_ms = (now_ms() - t_guided) / report.chunks;
    report.ratio = report.guided_chunk_ms / report.unguided_chunk_ms;
    report.velocity_ms_per_chunk = velocity_ms / report.chunks;
    report.guidance_ms_per_chunk = guidance_ms / report.chunks;
    report.sdf_query_ms_per_chunk = sdf_timer.ms / report.chunks;
    report.unguided_step_ms = report.unguided_chunk_ms / sampler.num_steps;
    report.guided_step_ms = report.guided_chunk_ms / sampler.num_steps;

    // 64^3 rebuild benchmark (occupancy + exact EDT)
    {
        Rng cloud_rng(7);
        PointCloud cloud;
        cloud.points.resize(3, 20000);
        for (int m = 0; m < cloud.points.cols(); ++m)
            cloud.points.col(m) =
                Vec3(cloud_rng.uniform(0.0, 0.64), cloud_rng.uniform(0.0, 0.64), cloud_rng.uniform(0.0, 0.64));
        GridBounds bounds;
        bounds.min = Vec3::Zero();
        bounds.max = Vec3(0.64, 0.64, 0.64);
        const double t0 = now_ms();
        const OccupancyGrid occ = build_occupancy(cloud, 0.01, bounds);
        const SdfGrid sdf = compute_sdf(occ);
        report.grid_rebuild_ms = now_ms() - t0;
        if (sdf.dims != Eigen::Vector3i(64, 64, 64))
            throw std::logic_error("cmd_latency: rebuild benchmark grid is not 64^3");
    }

    if (!local.out_dir.empty()) {
        std::filesystem::create_directories(local.out_dir);
        report.write_json((std::filesystem::path(local.out_dir) / "latency.json").string());
        write_meta(local, "latency");
    }
    return report;
}

void LatencyReport::write_json(const std::string& path) const {
    json j;
    j["chunks"] = chunks;
    j["unguided_chunk_ms"] = unguided_chunk_ms;
    j["guided_chunk_ms"] = guided_chunk_ms;
    j["ratio"] = ratio;
    j["velocity_ms_per_chunk"] = velocity_ms_per_chunk;
    j["guidance_ms_per_chunk"] = guidance_ms_per_chunk;
    j["sdf_query_ms_per_chunk"] = sdf_query_ms_per_chunk;
    j["grid_rebuild_ms_64cubed"] = grid_rebuild_ms;
    j["unguided_step_ms"] = unguided_step_ms;
    j["guided_step_ms"] = guided_step_ms;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("LatencyReport: cannot open " + path);
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Utility commands

void cmd_train_policy(const ExperimentConfig& cfg) {
    if (cfg.out_dir.empty()) throw std::runtime_error("train-policy: --out required");
    std::filesystem::create_directories(cfg.out_dir);

    std::vector<std::pair<Observation, ActionChunk>> dataset;
    if (!cfg.dataset_file.empty()) {
        dataset = load_chunk_dataset(cfg.dataset_file);
    } else {
        const RobotModel model = cfg.robot_file.empty() ? RobotModel::default_free_gripper()
                                                        : RobotModel::load_json(cfg.robot_file);
        const Scene scene = scene_maker(cfg)(0);
        dataset = generate_dataset(scene, model, cfg.execution.horizon, cfg.dataset_episodes,
                                   cfg.master_seed);
        save_chunk_dataset(dataset, (std::filesystem::path(cfg.out_dir) / "dataset.csv").string());
    }

    std::vector<TrainingRecord> log;
    const MlpPolicy policy =
        train_flow_policy(dataset, cfg.hidden_sizes, cfg.train_epochs, cfg.train_lr, cfg.master_seed,
                          &log);
    save_policy(policy, (std::filesystem::path(cfg.out_dir) / "policy.json").string());

    std::ofstream loss_csv(std::filesystem::path(cfg.out_dir) / "training_loss.csv");
    loss_csv << "epoch,mean_loss\n";
    for (const auto& rec : log) loss_csv << rec.epoch << "," << rec.mean_loss << "\n";
    write_meta(cfg, "train-policy");
}

void cmd_build_grid(const ExperimentConfig& cfg) {
    if (cfg.out_dir.empty()) throw std::runtime_error("build-grid: --out required");
    std::filesystem::create_directories(cfg.out_dir);

    PointCloud cloud;
    GridBounds bounds;
    if (!cfg.cloud_file.empty()) {
        cloud = cfg.cloud_file.ends_with(".ply") ? load_ply(cfg.cloud_file)
                                                 : load_cloud_csv(cfg.cloud_file);
        bounds.min = cloud.points.rowwise().minCoeff().array() - 0.05;
        bounds.max = cloud.points.rowwise().maxCoeff().array() + 0.05;
    } else {
        const Scene scene = scene_maker(cfg)(0);
        cloud = scene_point_cloud(scene, cfg.fields.cloud_spacing, /*include_target_blobs=*/true);
        bounds = scene.bounds;
    }

    const int before = cloud.size();
    if (!cfg.filter_label.empty())
        cloud = filter_task_relevant(cloud, label_match_scorer(cfg.filter_label), cfg.filter_percentile);
    else if (cloud.has_scores())
        cloud = filter_task_relevant_by_file_scores(cloud, cfg.filter_percentile);

    const OccupancyGrid occ = build_occupancy(cloud, cfg.fields.voxel_size, bounds);
    const SdfGrid sdf = compute_sdf(occ, cfg.fields.collision.barrier_d);

    const auto dir = std::filesystem::path(cfg.out_dir);
    export_sdf(sdf, (dir / "sdf.bin").string(), (dir / "sdf_meta.json").string());

    json stats;
    stats["points_in"] = before;
    stats["points_after_filter"] = cloud.size();
    stats["dropped_out_of_bounds"] = occ.dropped_points;
    stats["dims"] = {sdf.dims.x(), sdf.dims.y(), sdf.dims.z()};
    int occupied = 0;
    for (auto v : occ.occupied) occupied += v;
    stats["occupied_voxels"] = occupied;
    std::ofstream out(dir / "grid_stats.json");
    out << stats.dump(2) << "\n";
    write_meta(cfg, "build-grid");
}

}  // namespace flowguide::bench
