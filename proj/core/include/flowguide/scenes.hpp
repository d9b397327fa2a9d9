#pragma once

#include <string>

#include "flowguide/policy.hpp"
#include "flowguide/sim.hpp"

namespace flowguide::scenes {

/// Desk-scale benchmark families. Geometry is deterministic per family;
/// multi-choice permutes target labels by trial seed.
///   corridor          two walls with a straight passage to the goal
///   corridor_dynamic  corridor plus an obstacle inserted after chunk 1
///   cluttered         central blocker with two flanking walls and side gaps
///   multichoice       four target slots behind clutter, labels permuted
///   demo_follow       open scene with a recorded overhead-arc demonstration
Scene make_scene(const std::string& family, uint64_t trial_seed);

/// Closed-loop analytic action prior for a family. At every query the
/// mixture components are scripted reach chunks (straight / around variants)
/// regenerated from the robot position carried in obs.embedding, standing in
/// for an observation-conditioned policy under chunked replanning.
class ScenePrior : public VelocityPolicy {
public:
    struct Mode {
        double weight;
        Vec3 target;
        Vec3 via_offset;
    };

    ScenePrior(RobotModel model, int horizon, std::vector<Mode> modes, double action_sigma,
               double via_fade_begin = 0.35, double via_fade_end = 0.45);

    int horizon() const override { return horizon_; }
    int dim() const override { return model_.action_dim(); }
    Eigen::VectorXd velocity(const Eigen::VectorXd& x, double tau,
                             const Observation& obs) const override;
    bool has_velocity_vjp() const override { return true; }
    Eigen::VectorXd velocity_vjp(const Eigen::VectorXd& x, double tau, const Observation& obs,
                                 const Eigen::VectorXd& cotangent) const override;

    /// The mixture this prior reduces to at a fixed observation.
    GmmPolicy conditioned(const Observation& obs) const;

private:
    RobotModel model_;
    int horizon_;
    std::vector<Mode> modes_;
    double sigma_;
    // detour amplitude fades out as the robot passes the obstacle region,
    // mimicking an observation-conditioned policy's straightening behavior
    double via_fade_begin_;
    double via_fade_end_;
};

/// Analytic prior for a family; modes match the family geometry.
ScenePrior family_prior(const std::string& family, const RobotModel& model, int horizon,
                        double action_sigma = 0.3);

/// Observation carrying the robot position (what ScenePrior conditions on).
Observation observation_at(const Vec3& position, int scene_id);

std::vector<std::string> family_names();

GridBounds workspace_bounds();

}  // namespace flowguide::scenes
