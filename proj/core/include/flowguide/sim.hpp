#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowguide/fields.hpp"
#include "flowguide/flow.hpp"
#include "flowguide/kinematics.hpp"
#include "flowguide/sdf.hpp"

namespace flowguide {

struct Obstacle {
    enum class Shape { Box, Sphere };
    Shape shape = Shape::Box;
    std::string id;
    Vec3 center = Vec3::Zero();
    Vec3 half_extents = Vec3::Zero();  // box
    double radius = 0.0;               // sphere

    /// Signed clearance: positive outside, negative inside.
    double signed_distance(const Vec3& p) const;
};

struct SceneTarget {
    std::string label;
    Vec3 position = Vec3::Zero();
};

struct DynamicEvent {
    int chunk_index = 0;
    Obstacle obstacle;  // replaces an existing obstacle with the same id, else inserts
};

struct Scene {
    std::string id;
    std::vector<Obstacle> obstacles;
    std::vector<SceneTarget> targets;
    std::vector<SceneTarget> distractors;
    RobotState start_state;
    std::string correct_target_label;
    std::string demo_file;      // optional (t,x,y,z) CSV
    Eigen::Matrix3Xd demo;      // optional in-memory demonstration
    std::vector<DynamicEvent> dynamics;
    GridBounds bounds;
    int obs_id = 0;

    const SceneTarget& correct_target() const;
    bool has_demo() const { return demo.cols() > 0 || !demo_file.empty(); }
    Eigen::Matrix3Xd resolved_demo() const;  // loads demo_file when needed

    /// Minimum signed clearance of a point against all obstacles
    /// (+inf with no obstacles).
    double clearance(const Vec3& p) const;

    void validate(const RobotModel& model) const;
    static Scene load_json(const std::string& path);
    void save_json(const std::string& path) const;
};

/// Deterministic surface sampling of scene obstacles, standing in for a
/// depth-captured environment cloud.
PointCloud scene_point_cloud(const Scene& scene, double spacing,
                             bool include_target_blobs = false);

/// Ground-truth occupancy for guidance grids: surface samples plus filled
/// interiors. Filling keeps the unsigned SDF from treating solid cores as
/// free space, which would otherwise attract trajectories into obstacles.
OccupancyGrid scene_occupancy(const Scene& scene, double voxel_size, double spacing);

/// Apply all dynamic events scheduled at chunk_index; returns true if the
/// scene changed (callers rebuild the SDF snapshot then).
bool dynamic_scene_update(Scene& scene, int chunk_index);

struct ExecutionConfig {
    int horizon = 15;        // H
    int executed_steps = 8;  // h <= H
    int max_chunks = 8;
    double success_radius = 0.05;

    void validate() const;
};

/// Which guidance stages are active (the standard ablation arms).
struct GuidanceMode {
    bool init_noise = false;
    bool denoising = false;

    static GuidanceMode none() { return {false, false}; }
    static GuidanceMode init_only() { return {true, false}; }
    static GuidanceMode denoise_only() { return {false, true}; }
    static GuidanceMode both() { return {true, true}; }
};

/// Field construction recipe; concrete fields are instantiated per scene
/// (collision needs the scene's SDF snapshot, semantic needs the target).
struct FieldSetup {
    struct Collision {
        bool enabled = false;
        double lambda = 0.02;
        double barrier_d = 0.15;
        double floor_eps = 1e-4;
    } collision;
    struct Semantic {
        bool enabled = false;
        double lambda = 5.0;
        double sigma = 0.05;
        bool all_steps = false;
        bool orientation = false;
        double orientation_weight = 0.02;
        double sigma_r = 1.0;
        Vec3 gripper_axis = Vec3(0.0, 0.0, 1.0);
    } semantic;
    struct Human {
        bool enabled = false;
        double lambda = 1.0;
        double sigma = 0.05;
    } human;
    double voxel_size = 0.02;
    double cloud_spacing = 0.01;

    bool any_enabled() const { return collision.enabled || semantic.enabled || human.enabled; }
};

/// Concrete per-scene field instances (shared SDF snapshot kept alive here).
std::vector<WeightedField> instantiate_fields(const FieldSetup& setup, const Scene& scene);

struct EpisodeResult {
    bool success = false;
    bool safe = true;
    int collision_count = 0;
    double min_clearance = std::numeric_limits<double>::infinity();
    double final_target_distance = 0.0;
    Eigen::Matrix3Xd executed_path;  // end-effector positions per executed step
    std::vector<double> chunk_wall_ms;
    int chunks_used = 0;
    double demo_mean_deviation = std::numeric_limits<double>::quiet_NaN();
    std::string failure_reason;
    std::string notes;  // e.g. per-chunk post-processing diagnostics
};

struct EpisodeSetup {
    const VelocityPolicy* policy = nullptr;
    const RobotModel* model = nullptr;
    LatentDecoder decoder;
    TweedieJacobian jacobian = TweedieJacobian::Scaled;
    FieldSetup fields;
    ExecutionConfig execution;
    SamplerConfig sampler;
    GuidanceMode mode;
    /// Optional chunk post-processing hook (the post-hoc optimizer baseline);
    /// anything written to `note` is collected into EpisodeResult::notes.
    std::function<ActionChunk(ActionChunk, const Scene&, const RobotState&, std::string& note)>
        post_sampler;
};

/// Chunked replanning loop: sample -> execute h steps -> collision-check
/// against analytic scene geometry -> advance state -> repeat until the
/// end-effector reaches the correct target or max_chunks is exhausted.
/// Deterministic given (scene, setup, seed).
EpisodeResult run_episode(const Scene& scene, const EpisodeSetup& setup, uint64_t seed);

/// Scripted multimodal reaching trajectories converted to relative action
/// chunks via the inverse rollout recurrence. obs-id tags the scene family.
std::vector<std::pair<Observation, ActionChunk>> generate_dataset(const Scene& scene,
                                                                  const RobotModel& model,
                                                                  int horizon, int n_episodes,
                                                                  uint64_t seed);

/// Noisy arc-length resampling of a waypoint polyline; the demonstration
/// length is decoupled from the policy horizon.
Eigen::Matrix3Xd generate_pseudo_demo(const std::vector<Vec3>& waypoints, int n_points,
                                      double noise_sigma, uint64_t seed);

void save_demo_csv(const Eigen::Matrix3Xd& demo, const std::string& path);
Eigen::Matrix3Xd load_demo_csv(const std::string& path);

/// Exact Cartesian waypoint path -> relative free-gripper chunk (inverse of
/// rollout_relative for the position block; rotation deltas are zero).
ActionChunk chunk_from_path(const RobotModel& model, const RobotState& state,
                            const std::vector<Vec3>& path);

}  // namespace flowguide
