#pragma once

#include <string>
#include <vector>

#include "flowguide/chunk.hpp"

namespace flowguide {

enum class RobotVariant { FreeGripper, PlanarArm, Identity };

/// A point rigidly attached to the robot at which Cartesian energies are
/// evaluated. For the planar arm, `link` selects the parent link (local.x is
/// the offset along the link); for the free gripper, `local` is expressed in
/// the gripper frame.
struct ProbePoint {
    std::string name;
    Vec3 local = Vec3::Zero();
    bool end_effector = false;
    int link = -1;
};

struct RobotModel {
    RobotVariant variant = RobotVariant::FreeGripper;

    // free gripper: per-axis action-to-displacement scales
    Vec3 gamma_x = Vec3(0.011, 0.011, 0.02);
    Vec3 gamma_r = Vec3(0.15, 0.15, 0.15);

    // planar arm
    std::vector<double> link_lengths;
    Vec3 base_position = Vec3::Zero();
    double base_angle = 0.0;
    Eigen::VectorXd gamma_joint;  // per-joint action scale

    int identity_dim = 3;  // Identity variant: columns read as position

    std::vector<ProbePoint> probes;

    int action_dim() const;
    int probe_count() const { return static_cast<int>(probes.size()); }
    int end_effector_index() const;
    void validate() const;

    /// Gripper tip plus two finger points; tip is the end-effector.
    static RobotModel default_free_gripper();
    /// One probe per link midpoint plus the tip (end-effector).
    static RobotModel default_planar_arm(std::vector<double> link_lengths);
    /// Chunk rows are read directly as end-effector positions (rows padded
    /// with zeros to 3D). Used by analytic-oracle setups.
    static RobotModel identity_model(int dim);

    static RobotModel load_json(const std::string& path);
    void save_json(const std::string& path) const;
};

struct RobotState {
    Vec3 position = Vec3::Zero();
    Mat3 rotation = Mat3::Identity();
    Eigen::VectorXd joint_angles;  // planar arm only

    void validate(const RobotModel& model) const;
};

/// Probe positions and end-effector orientations over a chunk horizon.
struct CartesianTrajectory {
    std::vector<Eigen::Matrix3Xd> positions;  // per step: 3 x P, meters
    std::vector<Mat3> orientations;           // per step: end-effector frame
    int ee_index = 0;

    int steps() const { return static_cast<int>(positions.size()); }
    int probe_count() const { return positions.empty() ? 0 : static_cast<int>(positions[0].cols()); }
    bool all_finite() const;
};

/// Cotangent on a CartesianTrajectory: dL/d(positions) and dL/d(orientations).
struct TrajectoryCotangent {
    std::vector<Eigen::Matrix3Xd> d_positions;
    std::vector<Mat3> d_orientations;

    static TrajectoryCotangent zeros(int steps, int probes);
};

/// Integrate a relative-action chunk into world-frame probe trajectories:
///   x_i = x_{i-1} + gamma_x .* dx_i,  R_i = exp((gamma_r .* dr_i)^) R_{i-1}.
/// Planar arm rows are joint-angle deltas; Identity rows are absolute poses.
CartesianTrajectory rollout_relative(const RobotModel& model, const RobotState& state,
                                     const ActionChunk& chunk);

/// Planar-arm probe positions for a single joint configuration.
Eigen::Matrix3Xd forward_kinematics(const RobotModel& model, const Eigen::VectorXd& angles);

/// Exact adjoint of rollout_relative: maps a trajectory cotangent to a
/// gradient on the action chunk.
Eigen::MatrixXd vjp(const RobotModel& model, const RobotState& state, const ActionChunk& chunk,
                    const TrajectoryCotangent& cotangent);

/// Advance a robot state by the first `steps` rows of a chunk (execution).
RobotState advance_state(const RobotModel& model, const RobotState& state, const ActionChunk& chunk,
                         int steps);

}  // namespace flowguide
