#include "flowguide/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flowguide/rng.hpp"

namespace flowguide {

double Obstacle::signed_distance(const Vec3& p) const {
    if (shape == Shape::Sphere) return (p - center).norm() - radius;
    const Vec3 q = (p - center).cwiseAbs() - half_extents;
    const double outside = q.cwiseMax(0.0).norm();
    const double inside = std::min(q.maxCoeff(), 0.0);
    return outside + inside;
}

const SceneTarget& Scene::correct_target() const {
    for (const auto& t : targets)
        if (t.label == correct_target_label) return t;
    throw std::runtime_error("Scene '" + id + "': correct target label '" + correct_target_label +
                             "' not present");
}

double Scene::clearance(const Vec3& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& o : obstacles) d = std::min(d, o.signed_distance(p));
    return d;
}

Eigen::Matrix3Xd Scene::resolved_demo() const {
    if (demo.cols() > 0) return demo;
    if (!demo_file.empty()) return load_demo_csv(demo_file);
    throw std::runtime_error("Scene '" + id + "': no demonstration attached");
}

void Scene::validate(const RobotModel& model) const {
    bounds.validate();
    correct_target();
    // start state must be collision free at every probe point
    Eigen::Matrix3Xd probes(3, model.probe_count());
    if (model.variant == RobotVariant::PlanarArm) {
        probes = forward_kinematics(model, start_state.joint_angles);
    } else {
        for (int j = 0; j < model.probe_count(); ++j)
            probes.col(j) = start_state.position + start_state.rotation * model.probes[j].local;
    }
    for (int j = 0; j < probes.cols(); ++j)
        if (clearance(probes.col(j)) < 0.0)
            throw std::runtime_error("Scene '" + id + "': start state collides with obstacles");
}

// ---------------------------------------------------------------------------
// Scene point cloud

namespace {

void sample_box_surface(const Obstacle& box, double spacing, std::vector<Vec3>& out) {
    const Vec3 lo = box.center - box.half_extents;
    const Vec3 hi = box.center + box.half_extents;
    for (int axis = 0; axis < 3; ++axis) {
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        const int n1 = std::max(2, static_cast<int>(std::round((hi(a1) - lo(a1)) / spacing)) + 1);
        const int n2 = std::max(2, static_cast<int>(std::round((hi(a2) - lo(a2)) / spacing)) + 1);
        for (int side = 0; side < 2; ++side)
            for (int i = 0; i < n1; ++i)
                for (int j = 0; j < n2; ++j) {
                    Vec3 p;
                    p(axis) = side ? hi(axis) : lo(axis);
                    p(a1) = lo(a1) + (hi(a1) - lo(a1)) * i / (n1 - 1);
                    p(a2) = lo(a2) + (hi(a2) - lo(a2)) * j / (n2 - 1);
                    out.push_back(p);
                }
    }
}

void sample_sphere_surface(const Obstacle& sphere, double spacing, std::vector<Vec3>& out) {
    const double area = 4.0 * M_PI * sphere.radius * sphere.radius;
    const int n = std::max(8, static_cast<int>(std::ceil(area / (spacing * spacing))));
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i;
        out.push_back(sphere.center +
                      sphere.radius * Vec3(r * std::cos(phi), r * std::sin(phi), z));
    }
}

}  // namespace

PointCloud scene_point_cloud(const Scene& scene, double spacing, bool include_target_blobs) {
    if (spacing <= 0.0) throw std::invalid_argument("scene_point_cloud: spacing must be positive");
    std::vector<Vec3> pts;
    std::vector<std::string> labels;
    for (const auto& o : scene.obstacles) {
        const size_t before = pts.size();
        if (o.shape == Obstacle::Shape::Box)
            sample_box_surface(o, spacing, pts);
        else
            sample_sphere_surface(o, spacing, pts);
        labels.insert(labels.end(), pts.size() - before, o.id.empty() ? "obstacle" : o.id);
    }
    if (include_target_blobs) {
        auto add_blob = [&](const SceneTarget& t) {
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        pts.push_back(t.position + 0.5 * spacing * Vec3(dx, dy, dz));
                        labels.push_back(t.label);
                    }
        };
        for (const auto& t : scene.targets) add_blob(t);
        for (const auto& t : scene.distractors) add_blob(t);
    }
    PointCloud cloud;
    cloud.points.resize(3, static_cast<Eigen::Index>(pts.size()));
    for (size_t m = 0; m < pts.size(); ++m) cloud.points.col(static_cast<Eigen::Index>(m)) = pts[m];
    cloud.labels = std::move(labels);
    return cloud;
}

OccupancyGrid scene_occupancy(const Scene& scene, double voxel_size, double spacing) {
    OccupancyGrid occ = build_occupancy(scene_point_cloud(scene, spacing), voxel_size, scene.bounds);
    for (int k = 0; k < occ.dims.z(); ++k)
        for (int j = 0; j < occ.dims.y(); ++j)
            for (int i = 0; i < occ.dims.x(); ++i) {
                if (occ.at(i, j, k)) continue;
                if (scene.clearance(occ.voxel_center(i, j, k)) <= 0.0)
                    occ.occupied[occ.index(i, j, k)] = 1;
            }
    return occ;
}

bool dynamic_scene_update(Scene& scene, int chunk_index) {
    bool changed = false;
    for (const auto& event : scene.dynamics) {
        if (event.chunk_index != chunk_index) continue;
        bool replaced = false;
        for (auto& o : scene.obstacles)
            if (!event.obstacle.id.empty() && o.id == event.obstacle.id) {
                o = event.obstacle;
                replaced = true;
                break;
            }
        if (!replaced) scene.obstacles.push_back(event.obstacle);
        changed = true;
    }
    return changed;
}

void ExecutionConfig::validate() const {
    if (horizon < 1) throw std::invalid_argument("ExecutionConfig: horizon must be >= 1");
    if (executed_steps < 1 || executed_steps > horizon)
        throw std::invalid_argument("ExecutionConfig: executed_steps must be in [1, horizon]");
    if (max_chunks < 1) throw std::invalid_argument("ExecutionConfig: max_chunks must be >= 1");
    if (success_radius <= 0.0) throw std::invalid_argument("ExecutionConfig: success_radius must be positive");
}

std::vector<WeightedField> instantiate_fields(const FieldSetup& setup, const Scene& scene) {
    std::vector<WeightedField> fields;
    if (setup.collision.enabled) {
        const OccupancyGrid occ = scene_occupancy(scene, setup.voxel_size, setup.cloud_spacing);
        auto sdf = std::make_shared<SdfGrid>(compute_sdf(occ, setup.collision.barrier_d));
        fields.push_back({std::make_shared<CollisionField>(std::move(sdf), setup.collision.barrier_d,
                                                           setup.collision.floor_eps),
                          setup.collision.lambda});
    }
    if (setup.semantic.enabled) {
        std::optional<SemanticField::OrientationTerm> orient;
        if (setup.semantic.orientation)
            orient = SemanticField::OrientationTerm{setup.semantic.gripper_axis, setup.semantic.sigma_r,
                                                    setup.semantic.orientation_weight, true};
        fields.push_back({std::make_shared<SemanticField>(scene.correct_target().position,
                                                          setup.semantic.sigma, setup.semantic.all_steps,
                                                          orient),
                          setup.semantic.lambda});
    }
    if (setup.human.enabled && scene.has_demo()) {
        fields.push_back(
            {std::make_shared<HumanTrajectoryField>(scene.resolved_demo(), setup.human.sigma),
             setup.human.lambda});
    }
    return fields;
}

namespace {

Vec3 end_effector_position(const RobotModel& model, const RobotState& state) {
    const int ee = model.end_effector_index();
    if (model.variant == RobotVariant::PlanarArm)
        return forward_kinematics(model, state.joint_angles).col(ee);
    return state.position + state.rotation * model.probes[ee].local;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

EpisodeResult run_episode(const Scene& scene_in, const EpisodeSetup& setup, uint64_t seed) {
    if (!setup.policy || !setup.model) throw std::invalid_argument("run_episode: policy/model required");
    setup.execution.validate();
    Scene scene = scene_in;  // episodes own their scene copy
    scene.validate(*setup.model);

    const RobotModel& model = *setup.model;
    const Vec3 goal = scene.correct_target().position;
    Observation obs;
    obs.scene_id = scene.obs_id;
    obs.embedding = scene.start_state.position;  // closed-loop priors condition on this

    EpisodeResult result;
    RobotState state = scene.start_state;
    Rng rng = Rng::for_episode(seed, 0);

    std::vector<Vec3> path;
    const bool guidance_wanted = (setup.mode.init_noise || setup.mode.denoising);
    std::vector<WeightedField> fields =
        guidance_wanted && setup.fields.any_enabled() ? instantiate_fields(setup.fields, scene)
                                                      : std::vector<WeightedField>{};

    if ((end_effector_position(model, state) - goal).norm() <= setup.execution.success_radius) {
        result.success = true;
        result.executed_path.resize(3, 0);
        result.final_target_distance = (end_effector_position(model, state) - goal).norm();
        return result;
    }

    std::optional<Eigen::Matrix3Xd> demo;
    if (scene.has_demo()) demo = scene.resolved_demo();

    bool done = false;
    for (int c = 0; c < setup.execution.max_chunks && !done; ++c) {
        if (dynamic_scene_update(scene, c) && !fields.empty())
            fields = instantiate_fields(setup.fields, scene);

        GuidanceChain chain{setup.decoder, &model, state, setup.jacobian};
        obs.embedding = state.position;
        SamplerConfig cfg = setup.sampler;
        cfg.seed = rng.next_u64();

        const double t0 = now_ms();
        ActionChunk chunk;
        try {
            std::optional<ActionChunk> a0;
            if (setup.mode.init_noise && !fields.empty())
                a0 = select_initial_noise(*setup.policy, obs, fields, chain, cfg.init_candidates,
                                          cfg.init_denoise_steps, cfg.seed);
            if (setup.mode.denoising && !fields.empty())
                chunk = sample_guided(*setup.policy, obs, fields, chain, cfg, a0 ? &*a0 : nullptr)
                            .chunk;
            else
                chunk = sample_unguided(*setup.policy, obs, cfg, a0 ? &*a0 : nullptr);
        } catch (const std::exception& err) {
            result.success = false;
            result.failure_reason = std::string("sampler failure at chunk ") + std::to_string(c) +
                                    ": " + err.what();
            break;
        }
        if (setup.post_sampler) {
            std::string note;
            chunk = setup.post_sampler(std::move(chunk), scene, state, note);
            if (!note.empty()) {
                if (!result.notes.empty()) result.notes += "; ";
                result.notes += "chunk " + std::to_string(c) + ": " + note;
            }
        }
        result.chunk_wall_ms.push_back(now_ms() - t0);
        ++result.chunks_used;

        // execute the first h steps against analytic geometry
        const CartesianTrajectory traj = rollout_relative(model, state, chunk);
        const int h = std::min(setup.execution.executed_steps, chunk.horizon());
        int executed = 0;
        for (int i = 0; i < h; ++i) {
            ++executed;
            bool step_collides = false;
            for (int j = 0; j < traj.positions[i].cols(); ++j) {
                const double d = scene.clearance(traj.positions[i].col(j));
                result.min_clearance = std::min(result.min_clearance, std::max(d, 0.0));
                if (d < 0.0) step_collides = true;
            }
            if (step_collides) ++result.collision_count;
            const Vec3 ee = traj.positions[i].col(traj.ee_index);
            path.push_back(ee);
            if ((ee - goal).norm() <= setup.execution.success_radius) {
                result.success = true;
                done = true;
                break;
            }
        }
        state = advance_state(model, state, chunk, executed);
    }

    result.safe = result.collision_count == 0;
    result.executed_path.resize(3, static_cast<Eigen::Index>(path.size()));
    for (size_t i = 0; i < path.size(); ++i)
        result.executed_path.col(static_cast<Eigen::Index>(i)) = path[i];
    result.final_target_distance = (end_effector_position(model, state) - goal).norm();
    if (!std::isfinite(result.min_clearance)) result.min_clearance = 0.0;

    if (demo && result.executed_path.cols() > 0) {
        double dev = 0.0;
        const auto matches = monotonic_align(result.executed_path, *demo);
        for (const auto& [t, k] : matches)
            dev += (result.executed_path.col(t) - demo->col(k)).norm();
        result.demo_mean_deviation = dev / static_cast<double>(matches.size());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Scripted data generation

ActionChunk chunk_from_path(const RobotModel& model, const RobotState& state,
                            const std::vector<Vec3>& path) {
    if (model.variant != RobotVariant::FreeGripper)
        throw std::invalid_argument("chunk_from_path: free-gripper variant required");
    if (path.empty()) throw std::invalid_argument("chunk_from_path: empty path");
    ActionChunk chunk(static_cast<int>(path.size()), model.action_dim());
    Vec3 prev = state.position;
    for (size_t i = 0; i < path.size(); ++i) {
        const Vec3 delta = path[i] - prev;
        chunk.values.row(static_cast<Eigen::Index>(i)).segment<3>(0) =
            delta.cwiseQuotient(model.gamma_x).transpose();
        prev = path[i];
    }
    return chunk;
}

namespace {

/// Piecewise-linear reach path with an optional lateral via offset, H steps.
std::vector<Vec3> scripted_reach_path(const Vec3& start, const Vec3& goal, const Vec3& via_offset,
                                      int steps) {
    const Vec3 mid = 0.5 * (start + goal) + via_offset;
    std::vector<Vec3> path;
    path.reserve(static_cast<size_t>(steps));
    // two legs of equal step counts; arc-length split keeps per-step motion even
    const int first = steps / 2;
    for (int i = 1; i <= first; ++i)
        path.push_back(start + (mid - start) * (static_cast<double>(i) / first));
    const int second = steps - first;
    for (int i = 1; i <= second; ++i)
        path.push_back(mid + (goal - mid) * (static_cast<double>(i) / second));
    return path;
}

}  // namespace

std::vector<std::pair<Observation, ActionChunk>> generate_dataset(const Scene& scene,
                                                                  const RobotModel& model,
                                                                  int horizon, int n_episodes,
                                                                  uint64_t seed) {
    if (n_episodes < 1) throw std::invalid_argument("generate_dataset: n_episodes must be >= 1");
    Rng rng(seed);
    const Vec3 goal = scene.correct_target().position;
    const Vec3 start = scene.start_state.position;

    // Straight through when nothing blocks; otherwise arc left or right
    // around the blocking obstacle with 50/50 mixing.
    bool blocked = false;
    for (int s = 1; s < 10 && !blocked; ++s) {
        const Vec3 p = start + (goal - start) * (s / 10.0);
        blocked = scene.clearance(p) < 0.02;
    }

    std::vector<std::pair<Observation, ActionChunk>> data;
    data.reserve(static_cast<size_t>(n_episodes));
    for (int n = 0; n < n_episodes; ++n) {
        Vec3 via = Vec3::Zero();
        if (blocked) {
            const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
            via = Vec3(0.0, side * 0.12, 0.0);
        }
        via += Vec3(0.0, 0.01 * rng.normal(), 0.01 * rng.normal());
        const auto path = scripted_reach_path(start, goal, via, horizon);
        Observation obs;
        obs.scene_id = scene.obs_id;
        data.emplace_back(obs, chunk_from_path(model, scene.start_state, path));
    }
    return data;
}

Eigen::Matrix3Xd generate_pseudo_demo(const std::vector<Vec3>& waypoints, int n_points,
                                      double noise_sigma, uint64_t seed) {
    if (waypoints.size() < 2) throw std::invalid_argument("generate_pseudo_demo: need >= 2 waypoints");
    if (n_points < 2) throw std::invalid_argument("generate_pseudo_demo: n_points must be >= 2");

    std::vector<double> cumulative{0.0};
    for (size_t i = 1; i < waypoints.size(); ++i)
        cumulative.push_back(cumulative.back() + (waypoints[i] - waypoints[i - 1]).norm());
    const double total = cumulative.back();

    Rng rng(seed);
    Eigen::Matrix3Xd demo(3, n_points);
    for (int n = 0; n < n_points; ++n) {
        const double s = total * n / (n_points - 1);
        size_t seg = 1;
        while (seg + 1 < cumulative.size() && cumulative[seg] < s) ++seg;
        const double seg_len = cumulative[seg] - cumulative[seg - 1];
        const double t = seg_len > 0.0 ? (s - cumulative[seg - 1]) / seg_len : 0.0;
        Vec3 p = waypoints[seg - 1] + t * (waypoints[seg] - waypoints[seg - 1]);
        for (int a = 0; a < 3; ++a) p(a) += noise_sigma * rng.normal();
        demo.col(n) = p;
    }
    return demo;
}

void save_demo_csv(const Eigen::Matrix3Xd& demo, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_demo_csv: cannot open " + path);
    out << "t,x,y,z\n";
    out.precision(17);
    for (int n = 0; n < demo.cols(); ++n)
        out << n << "," << demo(0, n) << "," << demo(1, n) << "," << demo(2, n) << "\n";
}

Eigen::Matrix3Xd load_demo_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_demo_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_demo_csv: empty file");
    std::vector<Vec3> pts;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        if (vals.size() < 4) throw std::runtime_error("load_demo_csv: malformed row");
        pts.emplace_back(vals[1], vals[2], vals[3]);
    }
    Eigen::Matrix3Xd demo(3, static_cast<Eigen::Index>(pts.size()));
    for (size_t n = 0; n < pts.size(); ++n) demo.col(static_cast<Eigen::Index>(n)) = pts[n];
    return demo;
}

// ---------------------------------------------------------------------------
// Scene files

namespace {
using nlohmann::json;

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from_json(const json& a) { return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>()); }

json obstacle_to_json(const Obstacle& o) {
    json j;
    j["id"] = o.id;
    if (o.shape == Obstacle::Shape::Box) {
        j["shape"] = "box";
        j["center"] = vec3_to_json(o.center);
        j["half_extents"] = vec3_to_json(o.half_extents);
    } else {
        j["shape"] = "sphere";
        j["center"] = vec3_to_json(o.center);
        j["radius"] = o.radius;
    }
    return j;
}

Obstacle obstacle_from_json(const json& j) {
    Obstacle o;
    o.id = j.value("id", "");
    o.center = vec3_from_json(j.at("center"));
    if (j.at("shape").get<std::string>() == "box") {
        o.shape = Obstacle::Shape::Box;
        o.half_extents = vec3_from_json(j.at("half_extents"));
    } else {
        o.shape = Obstacle::Shape::Sphere;
        o.radius = j.at("radius").get<double>();
    }
    return o;
}
}  // namespace

Scene Scene::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("Scene::load_json: cannot open " + path);
    json doc = json::parse(in);
    Scene s;
    s.id = doc.value("id", "scene");
    s.obs_id = doc.value("obs_id", 0);
    for (const auto& o : doc.value("obstacles", json::array())) s.obstacles.push_back(obstacle_from_json(o));
    for (const auto& t : doc.value("targets", json::array()))
        s.targets.push_back({t.at("label").get<std::string>(), vec3_from_json(t.at("position"))});
    for (const auto& t : doc.value("distractors", json::array()))
        s.distractors.push_back({t.at("label").get<std::string>(), vec3_from_json(t.at("position"))});
    s.correct_target_label = doc.value("correct_target_label", "");
    s.demo_file = doc.value("demo_file", "");
    if (doc.contains("start_state")) {
        const auto& st = doc["start_state"];
        if (st.contains("position")) s.start_state.position = vec3_from_json(st["position"]);
        if (st.contains("joint_angles")) {
            const auto a = st["joint_angles"].get<std::vector<double>>();
            s.start_state.joint_angles =
                Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
        }
    }
    if (doc.contains("bounds")) {
        s.bounds.min = vec3_from_json(doc["bounds"].at("min"));
        s.bounds.max = vec3_from_json(doc["bounds"].at("max"));
    }
    for (const auto& e : doc.value("dynamics", json::array()))
        s.dynamics.push_back({e.at("chunk_index").get<int>(), obstacle_from_json(e.at("obstacle"))});
    return s;
}

void Scene::save_json(const std::string& path) const {
    json doc;
    doc["id"] = id;
    doc["obs_id"] = obs_id;
    json obstacles_json = json::array();
    for (const auto& o : obstacles) obstacles_json.push_back(obstacle_to_json(o));
    doc["obstacles"] = obstacles_json;
    json targets_json = json::array();
    for (const auto& t : targets)
        targets_json.push_back({{"label", t.label}, {"position", vec3_to_json(t.position)}});
    doc["targets"] = targets_json;
    json distractors_json = json::array();
    for (const auto& t : distractors)
        distractors_json.push_back({{"label", t.label}, {"position", vec3_to_json(t.position)}});
    doc["distractors"] = distractors_json;
    doc["correct_target_label"] = correct_target_label;
    if (!demo_file.empty()) doc["demo_file"] = demo_file;
    doc["start_state"] = {{"position", vec3_to_json(start_state.position)}};
    if (start_state.joint_angles.size() > 0) {
        std::vector<double> a(start_state.joint_angles.data(),
                              start_state.joint_angles.data() + start_state.joint_angles.size());
        doc["start_state"]["joint_angles"] = a;
    }
    doc["bounds"] = {{"min", vec3_to_json(bounds.min)}, {"max", vec3_to_json(bounds.max)}};
    json dynamics_json = json::array();
    for (const auto& e : dynamics)
        dynamics_json.push_back(
            {{"chunk_index", e.chunk_index}, {"obstacle", obstacle_to_json(e.obstacle)}});
    doc["dynamics"] = dynamics_json;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("Scene::save_json: cannot open " + path);
    out << doc.dump(2) << "\n";
}

}  // namespace flowguide
