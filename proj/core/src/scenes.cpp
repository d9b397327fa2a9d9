#include "flowguide/scenes.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "flowguide/rng.hpp"

namespace flowguide::scenes {

namespace {

constexpr double kDeskZ = 0.12;  // working height
const Vec3 kStart(0.0, 0.0, kDeskZ);

Obstacle box(const std::string& id, const Vec3& center, const Vec3& half) {
    Obstacle o;
    o.shape = Obstacle::Shape::Box;
    o.id = id;
    o.center = center;
    o.half_extents = half;
    return o;
}

Scene base_scene(const std::string& id, int obs_id) {
    Scene s;
    s.id = id;
    s.obs_id = obs_id;
    s.start_state.position = kStart;
    s.start_state.rotation = Mat3::Identity();
    s.bounds = workspace_bounds();
    return s;
}

Scene corridor() {
    // walls reach almost to the goal, so the goal sits inside the barrier
    // shell: overly strong repulsion blocks the final approach
    Scene s = base_scene("corridor", 1);
    s.obstacles = {
        box("wall_upper", Vec3(0.30, 0.135, kDeskZ), Vec3(0.15, 0.035, 0.10)),
        box("wall_lower", Vec3(0.30, -0.135, kDeskZ), Vec3(0.15, 0.035, 0.10)),
    };
    s.targets = {{"goal", Vec3(0.5, 0.0, kDeskZ)}};
    s.correct_target_label = "goal";
    return s;
}

Scene corridor_dynamic() {
    Scene s = corridor();
    s.id = "corridor_dynamic";
    // appears after the first chunk, blocking the upper half of the passage
    // but leaving a gripper-wide window along the lower wall
    DynamicEvent e;
    e.chunk_index = 1;
    e.obstacle = box("popup", Vec3(0.38, 0.05, kDeskZ), Vec3(0.025, 0.03, 0.08));
    s.dynamics.push_back(e);
    return s;
}

Scene cluttered() {
    // staggered slalom: every prior mode grazes a box face, so a few
    // centimeters of lateral deflection separate safe from colliding
    Scene s = base_scene("cluttered", 2);
    s.obstacles = {
        box("clutter_a", Vec3(0.22, 0.07, kDeskZ), Vec3(0.04, 0.05, 0.10)),
        box("clutter_b", Vec3(0.34, -0.07, kDeskZ), Vec3(0.04, 0.05, 0.10)),
    };
    s.targets = {{"goal", Vec3(0.5, 0.0, kDeskZ)}};
    s.correct_target_label = "goal";
    return s;
}

const std::array<double, 4> kSlotY = {-0.18, -0.06, 0.06, 0.18};
const std::array<const char*, 4> kSlotLabels = {"mug", "bowl", "can", "box"};

Scene multichoice(uint64_t trial_seed) {
    Scene s = base_scene("multichoice", 3);
    s.obstacles = {
        box("clutter_upper", Vec3(0.25, 0.11, kDeskZ), Vec3(0.04, 0.04, 0.08)),
        box("clutter_lower", Vec3(0.25, -0.11, kDeskZ), Vec3(0.04, 0.04, 0.08)),
    };
    // Labels permute across the fixed slots per trial; the correct label is
    // drawn uniformly, so the prior is target-agnostic by construction.
    std::array<int, 4> order = {0, 1, 2, 3};
    Rng rng(trial_seed ^ 0xC0FFEEull);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    for (size_t k = 0; k < kSlotY.size(); ++k)
        s.targets.push_back(
            {kSlotLabels[static_cast<size_t>(order[k])], Vec3(0.45, kSlotY[k], kDeskZ)});
    s.correct_target_label = kSlotLabels[static_cast<size_t>(rng.uniform_int(4))];
    return s;
}

std::vector<Vec3> demo_waypoints() {
    return {kStart, Vec3(0.15, 0.0, 0.24), Vec3(0.30, 0.0, 0.26), Vec3(0.45, 0.0, kDeskZ)};
}

Scene demo_follow(uint64_t /*trial_seed*/) {
    Scene s = base_scene("demo_follow", 4);
    s.targets = {{"demo_end", Vec3(0.45, 0.0, kDeskZ)}};
    s.correct_target_label = "demo_end";
    // one recorded demonstration shared by every trial; N = 2H decouples the
    // demo length from the planning horizon
    s.demo = generate_pseudo_demo(demo_waypoints(), 30, 0.002, 99);
    return s;
}

std::vector<Vec3> reach_path(const Vec3& start, const Vec3& goal, const Vec3& via_offset, int steps) {
    const Vec3 mid = 0.5 * (start + goal) + via_offset;
    std::vector<Vec3> path;
    path.reserve(static_cast<size_t>(steps));
    const int first = steps / 2;
    for (int i = 1; i <= first; ++i)
        path.push_back(start + (mid - start) * (static_cast<double>(i) / first));
    const int second = steps - first;
    for (int i = 1; i <= second; ++i)
        path.push_back(mid + (goal - mid) * (static_cast<double>(i) / second));
    return path;
}

GmmPolicy::Component mode_component(const RobotModel& model, const RobotState& state,
                                    const Vec3& goal, const Vec3& via, int horizon, double weight,
                                    double sigma) {
    const ActionChunk chunk = chunk_from_path(model, state, reach_path(state.position, goal, via, horizon));
    return {weight, chunk.flat(), sigma};
}

}  // namespace

GridBounds workspace_bounds() {
    GridBounds b;
    b.min = Vec3(-0.10, -0.35, 0.0);
    b.max = Vec3(0.70, 0.35, 0.35);
    return b;
}

Scene make_scene(const std::string& family, uint64_t trial_seed) {
    if (family == "corridor") return corridor();
    if (family == "corridor_dynamic") return corridor_dynamic();
    if (family == "cluttered") return cluttered();
    if (family == "multichoice") return multichoice(trial_seed);
    if (family == "demo_follow") return demo_follow(trial_seed);
    throw std::invalid_argument("make_scene: unknown family '" + family + "'");
}

ScenePrior::ScenePrior(RobotModel model, int horizon, std::vector<Mode> modes, double action_sigma,
                       double via_fade_begin, double via_fade_end)
    : model_(std::move(model)), horizon_(horizon), modes_(std::move(modes)), sigma_(action_sigma),
      via_fade_begin_(via_fade_begin), via_fade_end_(via_fade_end) {
    if (model_.variant != RobotVariant::FreeGripper)
        throw std::invalid_argument("ScenePrior: free-gripper robot required");
    if (modes_.empty()) throw std::invalid_argument("ScenePrior: no modes");
    if (via_fade_end_ <= via_fade_begin_)
        throw std::invalid_argument("ScenePrior: fade interval must be increasing");
}

GmmPolicy ScenePrior::conditioned(const Observation& obs) const {
    if (obs.embedding.size() < 3)
        throw std::invalid_argument("ScenePrior: observation embedding must carry the position");
    RobotState state;
    state.position = obs.embedding.head<3>();
    state.rotation = Mat3::Identity();
    const double fade = std::clamp(
        (via_fade_end_ - state.position.x()) / (via_fade_end_ - via_fade_begin_), 0.0, 1.0);
    std::vector<GmmPolicy::Component> comps;
    comps.reserve(modes_.size());
    for (const auto& m : modes_)
        comps.push_back(mode_component(model_, state, m.target, fade * m.via_offset, horizon_,
                                       m.weight, sigma_));
    return GmmPolicy(horizon_, model_.action_dim(), std::move(comps));
}

Eigen::VectorXd ScenePrior::velocity(const Eigen::VectorXd& x, double tau,
                                     const Observation& obs) const {
    return conditioned(obs).velocity(x, tau, obs);
}

Eigen::VectorXd ScenePrior::velocity_vjp(const Eigen::VectorXd& x, double tau,
                                         const Observation& obs,
                                         const Eigen::VectorXd& cotangent) const {
    return conditioned(obs).velocity_vjp(x, tau, obs, cotangent);
}

Observation observation_at(const Vec3& position, int scene_id) {
    Observation obs;
    obs.scene_id = scene_id;
    obs.embedding = position;
    return obs;
}

ScenePrior family_prior(const std::string& family, const RobotModel& model, int horizon,
                        double action_sigma) {
    std::vector<ScenePrior::Mode> modes;
    if (family == "corridor" || family == "corridor_dynamic") {
        const Vec3 goal(0.5, 0.0, kDeskZ);
        modes = {{0.4, goal, Vec3::Zero()},
                 {0.3, goal, Vec3(0.0, 0.13, 0.0)},
                 {0.3, goal, Vec3(0.0, -0.13, 0.0)}};
    } else if (family == "cluttered") {
        const Vec3 goal(0.5, 0.0, kDeskZ);
        modes = {{0.34, goal, Vec3::Zero()},
                 {0.33, goal, Vec3(0.0, 0.13, 0.0)},
                 {0.33, goal, Vec3(0.0, -0.13, 0.0)}};
    } else if (family == "multichoice") {
        for (double y : kSlotY) modes.push_back({0.25, Vec3(0.45, y, kDeskZ), Vec3::Zero()});
    } else if (family == "demo_follow") {
        const Vec3 goal(0.45, 0.0, kDeskZ);
        modes = {{0.5, goal, Vec3::Zero()}, {0.5, goal, Vec3(0.0, 0.0, 0.14)}};
    } else {
        throw std::invalid_argument("family_prior: unknown family '" + family + "'");
    }
    return ScenePrior(model, horizon, std::move(modes), action_sigma);
}

std::vector<std::string> family_names() {
    return {"corridor", "corridor_dynamic", "cluttered", "multichoice", "demo_follow"};
}

}  // namespace flowguide::scenes
