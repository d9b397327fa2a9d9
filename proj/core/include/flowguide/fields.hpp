#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowguide/kinematics.hpp"
#include "flowguide/policy.hpp"
#include "flowguide/sdf.hpp"

namespace flowguide {

/// Scalar energy over a Cartesian probe trajectory together with its spatial
/// gradient. Gradients are accumulated into a shared cotangent so weighted
/// composition stays exactly linear.
class EnergyField {
public:
    virtual ~EnergyField() = default;
    virtual const std::string& id() const = 0;
    virtual bool needs_orientations() const { return false; }
    virtual double energy(const CartesianTrajectory& x) const = 0;
    /// Accumulate scale * dE/dX into the cotangent.
    virtual void add_gradient(const CartesianTrajectory& x, double scale,
                              TrajectoryCotangent& cot) const = 0;
};

struct WeightedField {
    std::shared_ptr<const EnergyField> field;
    double lambda = 0.0;
};

/// Repulsive barrier -log(SDF) on the risk shell {SDF <= d}, summed over all
/// probe points and steps. Points on occupied voxels hit the floor_eps clamp.
class CollisionField : public EnergyField {
public:
    CollisionField(std::shared_ptr<const SdfGrid> sdf, double barrier_d = 0.15,
                   double floor_eps = 1e-4, std::string id = "collision");

    const std::string& id() const override { return id_; }
    double energy(const CartesianTrajectory& x) const override;
    void add_gradient(const CartesianTrajectory& x, double scale,
                      TrajectoryCotangent& cot) const override;

    double barrier_d() const { return barrier_d_; }
    const SdfGrid& sdf() const { return *sdf_; }

private:
    std::shared_ptr<const SdfGrid> sdf_;
    double barrier_d_;
    double floor_eps_;
    std::string id_;
};

/// Quadratic attractor on the end-effector position at designated steps
/// (default: the final step), optionally with a gripper-orientation term
/// aligning R*g with the approach direction (x* - x)/|x* - x|.
class SemanticField : public EnergyField {
public:
    struct OrientationTerm {
        Vec3 gripper_axis = Vec3(0.0, 0.0, 1.0);  // unit vector in the gripper frame
        double sigma_r = 1.0;
        double weight = 0.02;  // relative to the position term's lambda
        bool squared = true;   // |r - r*|^2 form; the unsquared variant is kept for comparison
    };

    SemanticField(const Vec3& target, double sigma_s, bool all_steps = false,
                  std::optional<OrientationTerm> orientation = std::nullopt,
                  std::string id = "semantic");

    const std::string& id() const override { return id_; }
    bool needs_orientations() const override { return orientation_.has_value(); }
    double energy(const CartesianTrajectory& x) const override;
    void add_gradient(const CartesianTrajectory& x, double scale,
                      TrajectoryCotangent& cot) const override;

    const Vec3& target() const { return target_; }

private:
    std::vector<int> active_steps(int horizon) const;

    Vec3 target_;
    double sigma_s_;
    bool all_steps_;
    std::optional<OrientationTerm> orientation_;
    std::string id_;
};

/// Greedy monotonic nearest-neighbor matching of trajectory steps to a
/// reference path; reference indices never decrease and the loop stops once
/// the reference is exhausted. Returns (trajectory step, reference index).
std::vector<std::pair<int, int>> monotonic_align(const Eigen::Matrix3Xd& trajectory,
                                                 const Eigen::Matrix3Xd& reference);

/// Trajectory-level attractor toward a recorded demonstration; quadratic
/// terms over the matched pairs only, correspondence frozen for gradients.
class HumanTrajectoryField : public EnergyField {
public:
    HumanTrajectoryField(Eigen::Matrix3Xd reference, double sigma_h, std::string id = "human");

    const std::string& id() const override { return id_; }
    double energy(const CartesianTrajectory& x) const override;
    void add_gradient(const CartesianTrajectory& x, double scale,
                      TrajectoryCotangent& cot) const override;

    const Eigen::Matrix3Xd& reference() const { return reference_; }

private:
    Eigen::Matrix3Xd reference_;
    double sigma_h_;
    std::string id_;
};

/// How the cotangent on the clean estimate is mapped back to the noisy chunk.
///   Scaled:   identity pullback times (1 - tau); the sampler default.
///   Identity: plain identity pullback (frozen-velocity approximation).
///   Exact:    full Jacobian of A~ = A + (1-tau) v(A) via the policy VJP.
enum class TweedieJacobian { Scaled, Identity, Exact };

/// The differentiable chain from a noisy chunk to Cartesian energies: clean
/// estimate -> decode -> kinematic rollout -> fields, plus its adjoint.
struct GuidanceChain {
    LatentDecoder decoder;
    const RobotModel* model = nullptr;
    RobotState state;
    TweedieJacobian jacobian = TweedieJacobian::Scaled;
};

struct ChainEval {
    Eigen::MatrixXd gradient;  // sum_i lambda_i dL_i/dA_tau, unclipped
    /// sum_i lambda_i clip(dL_i/dA_tau, alpha): the samplers' update term
    /// (clipping acts on each field's raw gradient, weights stay outside).
    Eigen::MatrixXd clipped_gradient;
    double total_energy = 0.0;
    std::map<std::string, double> field_energy;  // unweighted, keyed by field id
};

/// Weighted guidance gradient via one chain adjoint pass per field. Throws
/// with the failing field id on non-finite energies. clip_alpha <= 0 skips
/// the clipped accumulator. v_precomputed, when given, must equal
/// policy.velocity(a_tau.flat(), tau) and saves a policy evaluation.
ChainEval composite_gradient(const GuidanceChain& chain, const VelocityPolicy& policy,
                             const Observation& obs, const std::vector<WeightedField>& fields,
                             const ActionChunk& a_tau, double tau,
                             const Eigen::VectorXd* v_precomputed = nullptr,
                             double clip_alpha = 0.0);

/// Weighted total energy of an (already clean) chunk through decode+rollout.
/// Used for initial-noise selection and diagnostics.
double chain_energy(const GuidanceChain& chain, const std::vector<WeightedField>& fields,
                    const ActionChunk& clean_chunk);

}  // namespace flowguide
