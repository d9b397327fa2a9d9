#include "flowguide/fields.hpp"

#include <cmath>

namespace flowguide {

CollisionField::CollisionField(std::shared_ptr<const SdfGrid> sdf, double barrier_d,
                               double floor_eps, std::string id)
    : sdf_(std::move(sdf)), barrier_d_(barrier_d), floor_eps_(floor_eps), id_(std::move(id)) {
    if (!sdf_) throw std::invalid_argument("CollisionField: null SDF");
    if (barrier_d_ <= 0.0) throw std::invalid_argument("CollisionField: barrier_d must be positive");
    if (floor_eps_ <= 0.0) throw std::invalid_argument("CollisionField: floor_eps must be positive");
}

double CollisionField::energy(const CartesianTrajectory& x) const {
    double e = 0.0;
    for (const auto& step : x.positions)
        for (int j = 0; j < step.cols(); ++j) {
            const double s = query_sdf(*sdf_, step.col(j));
            if (s <= barrier_d_)  // on-occupied queries (s == 0) hit the floor
                e += -std::log(std::max(s, floor_eps_));
        }
    return e;
}

void CollisionField::add_gradient(const CartesianTrajectory& x, double scale,
                                  TrajectoryCotangent& cot) const {
    for (int i = 0; i < x.steps(); ++i)
        for (int j = 0; j < x.positions[i].cols(); ++j) {
            const Vec3 p = x.positions[i].col(j);
            const double s = query_sdf(*sdf_, p);
            if (s > barrier_d_) continue;
            // dE/dx = -grad(SDF)/max(SDF, eps); descent points away from the obstacle
            cot.d_positions[i].col(j) -= scale / std::max(s, floor_eps_) * query_sdf_gradient(*sdf_, p);
        }
}

SemanticField::SemanticField(const Vec3& target, double sigma_s, bool all_steps,
                             std::optional<OrientationTerm> orientation, std::string id)
    : target_(target), sigma_s_(sigma_s), all_steps_(all_steps), orientation_(std::move(orientation)),
      id_(std::move(id)) {
    if (sigma_s_ <= 0.0) throw std::invalid_argument("SemanticField: sigma_s must be positive");
    if (orientation_) {
        if (std::abs(orientation_->gripper_axis.norm() - 1.0) > 1e-9)
            throw std::invalid_argument("SemanticField: gripper axis must be unit length");
        if (orientation_->sigma_r <= 0.0)
            throw std::invalid_argument("SemanticField: sigma_r must be positive");
    }
}

std::vector<int> SemanticField::active_steps(int horizon) const {
    if (all_steps_) {
        std::vector<int> steps(static_cast<size_t>(horizon));
        for (int i = 0; i < horizon; ++i) steps[static_cast<size_t>(i)] = i;
        return steps;
    }
    return {horizon - 1};
}

double SemanticField::energy(const CartesianTrajectory& x) const {
    double e = 0.0;
    for (int i : active_steps(x.steps())) {
        const Vec3 pos = x.positions[i].col(x.ee_index);
        e += (pos - target_).squaredNorm() / (2.0 * sigma_s_ * sigma_s_);
        if (orientation_) {
            const Vec3 u = target_ - pos;
            const double dist = u.norm();
            if (dist <= 1e-12) continue;  // approach direction undefined at the target
            const Vec3 r = x.orientations[i] * orientation_->gripper_axis;
            const Vec3 rstar = u / dist;
            const double s2 = 2.0 * orientation_->sigma_r * orientation_->sigma_r;
            e += orientation_->weight *
                 (orientation_->squared ? (r - rstar).squaredNorm() / s2 : (r - rstar).norm() / s2);
        }
    }
    return e;
}

void SemanticField::add_gradient(const CartesianTrajectory& x, double scale,
                                 TrajectoryCotangent& cot) const {
    for (int i : active_steps(x.steps())) {
        const Vec3 pos = x.positions[i].col(x.ee_index);
        cot.d_positions[i].col(x.ee_index) += scale / (sigma_s_ * sigma_s_) * (pos - target_);
        if (orientation_) {
            const Vec3 u = target_ - pos;
            const double dist = u.norm();
            if (dist <= 1e-12) continue;
            const Vec3 r = x.orientations[i] * orientation_->gripper_axis;
            const Vec3 rstar = u / dist;
            const double s2 = 2.0 * orientation_->sigma_r * orientation_->sigma_r;

            Vec3 dE_dr;
            if (orientation_->squared) {
                dE_dr = 2.0 / s2 * (r - rstar);
            } else {
                const double nrm = (r - rstar).norm();
                if (nrm <= 1e-12) continue;
                dE_dr = (r - rstar) / (nrm * s2);
            }
            dE_dr *= orientation_->weight;
            // through the rotation: dE/dR = dE_dr * g^T
            cot.d_orientations[i] += scale * dE_dr * orientation_->gripper_axis.transpose();
            // through the approach direction r*(x): dr*/dx = -(I - r* r*^T)/dist
            const Vec3 dE_drstar = -dE_dr;
            cot.d_positions[i].col(x.ee_index) +=
                scale * (-(dE_drstar - rstar * rstar.dot(dE_drstar)) / dist);
        }
    }
}

std::vector<std::pair<int, int>> monotonic_align(const Eigen::Matrix3Xd& trajectory,
                                                 const Eigen::Matrix3Xd& reference) {
    const int h = static_cast<int>(trajectory.cols());
    const int n = static_cast<int>(reference.cols());
    if (h < 1 || n < 1) throw std::invalid_argument("monotonic_align: empty trajectory or reference");

    std::vector<std::pair<int, int>> matches;
    matches.reserve(static_cast<size_t>(std::min(h, n)));
    int k_curr = 0;
    for (int t = 0; t < h; ++t) {
        int k_best = k_curr;
        double best = (trajectory.col(t) - reference.col(k_curr)).squaredNorm();
        for (int k = k_curr + 1; k < n; ++k) {
            const double d = (trajectory.col(t) - reference.col(k)).squaredNorm();
            if (d < best) {  // ties keep the smallest k
                best = d;
                k_best = k;
            }
        }
        matches.emplace_back(t, k_best);
        k_curr = k_best;
        if (k_curr == n - 1) break;
    }
    return matches;
}

HumanTrajectoryField::HumanTrajectoryField(Eigen::Matrix3Xd reference, double sigma_h, std::string id)
    : reference_(std::move(reference)), sigma_h_(sigma_h), id_(std::move(id)) {
    if (reference_.cols() < 1) throw std::invalid_argument("HumanTrajectoryField: empty reference");
    if (!reference_.allFinite()) throw std::invalid_argument("HumanTrajectoryField: non-finite reference");
    if (sigma_h_ <= 0.0) throw std::invalid_argument("HumanTrajectoryField: sigma_h must be positive");
}

namespace {
Eigen::Matrix3Xd ee_positions(const CartesianTrajectory& x) {
    Eigen::Matrix3Xd out(3, x.steps());
    for (int i = 0; i < x.steps(); ++i) out.col(i) = x.positions[i].col(x.ee_index);
    return out;
}
}  // namespace

double HumanTrajectoryField::energy(const CartesianTrajectory& x) const {
    const Eigen::Matrix3Xd ee = ee_positions(x);
    double e = 0.0;
    for (const auto& [t, k] : monotonic_align(ee, reference_))
        e += (ee.col(t) - reference_.col(k)).squaredNorm();
    return e / (2.0 * sigma_h_ * sigma_h_);
}

void HumanTrajectoryField::add_gradient(const CartesianTrajectory& x, double scale,
                                        TrajectoryCotangent& cot) const {
    const Eigen::Matrix3Xd ee = ee_positions(x);
    // Matched pairs are fixed during differentiation; unmatched steps get 0.
    for (const auto& [t, k] : monotonic_align(ee, reference_))
        cot.d_positions[t].col(x.ee_index) +=
            scale / (sigma_h_ * sigma_h_) * (ee.col(t) - reference_.col(k));
}

// ---------------------------------------------------------------------------
// The guidance chain

ChainEval composite_gradient(const GuidanceChain& chain, const VelocityPolicy& policy,
                             const Observation& obs, const std::vector<WeightedField>& fields,
                             const ActionChunk& a_tau, double tau,
                             const Eigen::VectorXd* v_precomputed, double clip_alpha) {
    if (!chain.model) throw std::invalid_argument("composite_gradient: chain has no robot model");

    ChainEval out;
    out.gradient = Eigen::MatrixXd::Zero(a_tau.horizon(), a_tau.dim());
    if (clip_alpha > 0.0) out.clipped_gradient = out.gradient;
    if (fields.empty()) return out;

    // 1. clean estimate
    const Eigen::VectorXd x = a_tau.flat();
    const Eigen::VectorXd v = v_precomputed ? *v_precomputed : policy.velocity(x, tau, obs);
    const ActionChunk clean =
        ActionChunk::from_flat(x + (1.0 - tau) * v, a_tau.horizon(), a_tau.dim());
    // 2. decode to joint space
    const ActionChunk joint = chain.decoder.decode(clean);
    // 3. Cartesian rollout
    const CartesianTrajectory traj = rollout_relative(*chain.model, chain.state, joint);
    if (!traj.all_finite()) throw std::runtime_error("composite_gradient: non-finite trajectory");

    // 4.-7. per field: Cartesian gradient, kinematics adjoint, decoder
    // pullback, Tweedie-map pullback. Clipping acts on each field's raw
    // gradient; the field weight stays outside the clip.
    for (const auto& wf : fields) {
        const double e = wf.field->energy(traj);
        if (!std::isfinite(e))
            throw std::runtime_error("composite_gradient: non-finite energy from field '" +
                                     wf.field->id() + "'");
        out.field_energy[wf.field->id()] = e;
        out.total_energy += wf.lambda * e;
        if (wf.lambda == 0.0) continue;

        TrajectoryCotangent cot = TrajectoryCotangent::zeros(traj.steps(), traj.probe_count());
        wf.field->add_gradient(traj, 1.0, cot);
        const Eigen::MatrixXd grad_clean =
            chain.decoder.pullback(vjp(*chain.model, chain.state, joint, cot));

        Eigen::MatrixXd grad_field;
        switch (chain.jacobian) {
            case TweedieJacobian::Scaled:
                grad_field = (1.0 - tau) * grad_clean;
                break;
            case TweedieJacobian::Identity:
                grad_field = grad_clean;
                break;
            case TweedieJacobian::Exact: {
                if (!policy.has_velocity_vjp())
                    throw std::runtime_error(
                        "composite_gradient: exact Tweedie Jacobian needs a policy velocity VJP");
                // dA~/dA = I + (1-tau) dv/dA
                const Eigen::VectorXd g = ActionChunk(grad_clean).flat();
                const Eigen::VectorXd pulled =
                    g + (1.0 - tau) * policy.velocity_vjp(x, tau, obs, g);
                grad_field = ActionChunk::from_flat(pulled, a_tau.horizon(), a_tau.dim()).values;
                break;
            }
        }
        out.gradient += wf.lambda * grad_field;
        if (clip_alpha > 0.0)
            out.clipped_gradient +=
                wf.lambda * grad_field.cwiseMax(-clip_alpha).cwiseMin(clip_alpha);
    }
    return out;
}

double chain_energy(const GuidanceChain& chain, const std::vector<WeightedField>& fields,
                    const ActionChunk& clean_chunk) {
    if (!chain.model) throw std::invalid_argument("chain_energy: chain has no robot model");
    const ActionChunk joint = chain.decoder.decode(clean_chunk);
    const CartesianTrajectory traj = rollout_relative(*chain.model, chain.state, joint);
    double total = 0.0;
    for (const auto& wf : fields) {
        const double e = wf.field->energy(traj);
        if (!std::isfinite(e))
            throw std::runtime_error("chain_energy: non-finite energy from field '" + wf.field->id() +
                                     "'");
        total += wf.lambda * e;
    }
    return total;
}

}  // namespace flowguide
