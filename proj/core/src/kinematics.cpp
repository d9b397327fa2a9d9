#include "flowguide/kinematics.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "flowguide/so3.hpp"

namespace flowguide {

int RobotModel::action_dim() const {
    switch (variant) {
        case RobotVariant::FreeGripper: return 7;  // dx(3), dr(3), gripper
        case RobotVariant::PlanarArm: return static_cast<int>(link_lengths.size());
        case RobotVariant::Identity: return identity_dim;
    }
    return 0;
}

int RobotModel::end_effector_index() const {
    for (size_t i = 0; i < probes.size(); ++i)
        if (probes[i].end_effector) return static_cast<int>(i);
    throw std::logic_error("RobotModel: no end-effector probe designated");
}

void RobotModel::validate() const {
    if (probes.empty()) throw std::invalid_argument("RobotModel: at least one probe point required");
    end_effector_index();
    if (variant == RobotVariant::PlanarArm) {
        if (link_lengths.empty()) throw std::invalid_argument("RobotModel: planar arm needs links");
        for (double l : link_lengths)
            if (l <= 0.0) throw std::invalid_argument("RobotModel: link lengths must be positive");
        if (gamma_joint.size() != static_cast<Eigen::Index>(link_lengths.size()))
            throw std::invalid_argument("RobotModel: gamma_joint size != link count");
        if ((gamma_joint.array() <= 0.0).any())
            throw std::invalid_argument("RobotModel: gamma entries must be positive");
        for (const auto& p : probes)
            if (p.link < 0 || p.link >= static_cast<int>(link_lengths.size()))
                throw std::invalid_argument("RobotModel: probe '" + p.name + "' has invalid link");
    }
    if (variant == RobotVariant::FreeGripper) {
        if ((gamma_x.array() <= 0.0).any() || (gamma_r.array() <= 0.0).any())
            throw std::invalid_argument("RobotModel: gamma entries must be positive");
    }
}

RobotModel RobotModel::default_free_gripper() {
    RobotModel m;
    m.variant = RobotVariant::FreeGripper;
    m.probes = {
        {"tip", Vec3(0.0, 0.0, 0.0), true, -1},
        {"finger_left", Vec3(-0.04, 0.0, 0.02), false, -1},
        {"finger_right", Vec3(0.04, 0.0, 0.02), false, -1},
    };
    return m;
}

RobotModel RobotModel::default_planar_arm(std::vector<double> link_lengths) {
    RobotModel m;
    m.variant = RobotVariant::PlanarArm;
    m.link_lengths = std::move(link_lengths);
    const int n = static_cast<int>(m.link_lengths.size());
    m.gamma_joint = Eigen::VectorXd::Constant(n, 0.1);
    for (int k = 0; k < n; ++k)
        m.probes.push_back({"link" + std::to_string(k) + "_mid",
                            Vec3(0.5 * m.link_lengths[k], 0.0, 0.0), false, k});
    m.probes.push_back({"tip", Vec3(m.link_lengths[n - 1], 0.0, 0.0), true, n - 1});
    return m;
}

RobotModel RobotModel::identity_model(int dim) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("identity_model: dim must be 1..3");
    RobotModel m;
    m.variant = RobotVariant::Identity;
    m.identity_dim = dim;
    m.probes = {{"ee", Vec3::Zero(), true, -1}};
    return m;
}

void RobotState::validate(const RobotModel& model) const {
    if (model.variant == RobotVariant::PlanarArm) {
        if (joint_angles.size() != static_cast<Eigen::Index>(model.link_lengths.size()))
            throw std::invalid_argument("RobotState: joint angle count != link count");
    } else if (model.variant == RobotVariant::FreeGripper) {
        if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-8)
            throw std::invalid_argument("RobotState: rotation not orthonormal");
    }
}

bool CartesianTrajectory::all_finite() const {
    for (const auto& p : positions)
        if (!p.allFinite()) return false;
    for (const auto& r : orientations)
        if (!r.allFinite()) return false;
    return true;
}

TrajectoryCotangent TrajectoryCotangent::zeros(int steps, int probes) {
    TrajectoryCotangent c;
    c.d_positions.assign(steps, Eigen::Matrix3Xd::Zero(3, probes));
    c.d_orientations.assign(steps, Mat3::Zero());
    return c;
}

namespace {

Eigen::Matrix3Xd planar_probe_positions(const RobotModel& model, const Eigen::VectorXd& angles) {
    const int n = static_cast<int>(model.link_lengths.size());
    std::vector<double> phi(n);
    double acc = model.base_angle;
    for (int k = 0; k < n; ++k) {
        acc += angles(k);
        phi[k] = acc;
    }
    std::vector<Vec3> joints(n + 1);
    joints[0] = Vec3(model.base_position.x(), model.base_position.y(), 0.0);
    for (int k = 0; k < n; ++k)
        joints[k + 1] = joints[k] + model.link_lengths[k] * Vec3(std::cos(phi[k]), std::sin(phi[k]), 0.0);

    Eigen::Matrix3Xd out(3, model.probe_count());
    for (int m = 0; m < model.probe_count(); ++m) {
        const auto& p = model.probes[m];
        const double c = std::cos(phi[p.link]), s = std::sin(phi[p.link]);
        out.col(m) = joints[p.link] + p.local.x() * Vec3(c, s, 0.0) + p.local.y() * Vec3(-s, c, 0.0);
    }
    return out;
}

Mat3 rot_z(double phi) {
    Mat3 r = Mat3::Identity();
    const double c = std::cos(phi), s = std::sin(phi);
    r(0, 0) = c; r(0, 1) = -s;
    r(1, 0) = s; r(1, 1) = c;
    return r;
}

/// Cotangent on the absolute link angles phi for one planar configuration.
Eigen::VectorXd planar_phi_cotangent(const RobotModel& model, const Eigen::VectorXd& angles,
                                     const Eigen::Matrix3Xd& d_positions, const Mat3& d_orientation) {
    const int n = static_cast<int>(model.link_lengths.size());
    std::vector<double> phi(n);
    double acc = model.base_angle;
    for (int k = 0; k < n; ++k) {
        acc += angles(k);
        phi[k] = acc;
    }
    Eigen::VectorXd phi_bar = Eigen::VectorXd::Zero(n);
    for (int m = 0; m < model.probe_count(); ++m) {
        const auto& p = model.probes[m];
        const Vec3 g = d_positions.col(m);
        for (int l = 0; l < p.link; ++l)
            phi_bar(l) += model.link_lengths[l] * g.dot(Vec3(-std::sin(phi[l]), std::cos(phi[l]), 0.0));
        const double c = std::cos(phi[p.link]), s = std::sin(phi[p.link]);
        phi_bar(p.link) += p.local.x() * g.dot(Vec3(-s, c, 0.0)) - p.local.y() * g.dot(Vec3(c, s, 0.0));
    }
    // end-effector orientation Rz(phi_n)
    const double c = std::cos(phi[n - 1]), s = std::sin(phi[n - 1]);
    phi_bar(n - 1) += -s * (d_orientation(0, 0) + d_orientation(1, 1)) +
                      c * (d_orientation(1, 0) - d_orientation(0, 1));
    return phi_bar;
}

}  // namespace

CartesianTrajectory rollout_relative(const RobotModel& model, const RobotState& state,
                                     const ActionChunk& chunk) {
    chunk.require_finite("rollout_relative");
    if (chunk.dim() != model.action_dim())
        throw std::invalid_argument("rollout_relative: chunk dim " + std::to_string(chunk.dim()) +
                                    " != robot action dim " + std::to_string(model.action_dim()));
    const int H = chunk.horizon();
    const int P = model.probe_count();

    CartesianTrajectory traj;
    traj.positions.reserve(H);
    traj.orientations.reserve(H);
    traj.ee_index = model.end_effector_index();

    switch (model.variant) {
        case RobotVariant::FreeGripper: {
            Vec3 x = state.position;
            Mat3 r = state.rotation;
            for (int i = 0; i < H; ++i) {
                x += model.gamma_x.cwiseProduct(chunk.values.row(i).segment<3>(0).transpose());
                const Vec3 w = model.gamma_r.cwiseProduct(chunk.values.row(i).segment<3>(3).transpose());
                r = so3::exp_map(w) * r;
                Eigen::Matrix3Xd pos(3, P);
                for (int j = 0; j < P; ++j) pos.col(j) = x + r * model.probes[j].local;
                traj.positions.push_back(std::move(pos));
                traj.orientations.push_back(r);
            }
            break;
        }
        case RobotVariant::PlanarArm: {
            Eigen::VectorXd angles = state.joint_angles;
            for (int i = 0; i < H; ++i) {
                angles += model.gamma_joint.cwiseProduct(chunk.values.row(i).transpose());
                traj.positions.push_back(planar_probe_positions(model, angles));
                double phi = model.base_angle + angles.sum();
                traj.orientations.push_back(rot_z(phi));
            }
            break;
        }
        case RobotVariant::Identity: {
            for (int i = 0; i < H; ++i) {
                Eigen::Matrix3Xd pos = Eigen::Matrix3Xd::Zero(3, 1);
                for (int c = 0; c < std::min(chunk.dim(), 3); ++c) pos(c, 0) = chunk.values(i, c);
                traj.positions.push_back(std::move(pos));
                traj.orientations.push_back(Mat3::Identity());
            }
            break;
        }
    }
    return traj;
}

Eigen::Matrix3Xd forward_kinematics(const RobotModel& model, const Eigen::VectorXd& angles) {
    if (model.variant != RobotVariant::PlanarArm)
        throw std::invalid_argument("forward_kinematics: planar-arm variant required");
    if (angles.size() != static_cast<Eigen::Index>(model.link_lengths.size()))
        throw std::invalid_argument("forward_kinematics: angle count != link count");
    return planar_probe_positions(model, angles);
}

Eigen::MatrixXd vjp(const RobotModel& model, const RobotState& state, const ActionChunk& chunk,
                    const TrajectoryCotangent& cotangent) {
    const int H = chunk.horizon();
    const int P = model.probe_count();
    if (static_cast<int>(cotangent.d_positions.size()) != H ||
        static_cast<int>(cotangent.d_orientations.size()) != H)
        throw std::invalid_argument("vjp: cotangent step count mismatch");
    for (const auto& dp : cotangent.d_positions)
        if (dp.cols() != P) throw std::invalid_argument("vjp: cotangent probe count mismatch");

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(H, chunk.dim());

    switch (model.variant) {
        case RobotVariant::FreeGripper: {
            // Replay the forward pass to cache poses.
            std::vector<Vec3> xs(H + 1);
            std::vector<Mat3> rs(H + 1), qs(H);
            std::vector<Vec3> ws(H);
            xs[0] = state.position;
            rs[0] = state.rotation;
            for (int i = 0; i < H; ++i) {
                xs[i + 1] = xs[i] + model.gamma_x.cwiseProduct(chunk.values.row(i).segment<3>(0).transpose());
                ws[i] = model.gamma_r.cwiseProduct(chunk.values.row(i).segment<3>(3).transpose());
                qs[i] = so3::exp_map(ws[i]);
                rs[i + 1] = qs[i] * rs[i];
            }
            Vec3 x_bar = Vec3::Zero();
            Mat3 r_bar = Mat3::Zero();
            for (int i = H - 1; i >= 0; --i) {
                Mat3 r_step = cotangent.d_orientations[i];
                for (int j = 0; j < P; ++j) {
                    const Vec3 g = cotangent.d_positions[i].col(j);
                    x_bar += g;
                    r_step += g * model.probes[j].local.transpose();
                }
                r_bar += r_step;
                grad.row(i).segment<3>(0) = model.gamma_x.cwiseProduct(x_bar).transpose();
                const Mat3 q_bar = r_bar * rs[i].transpose();
                const Vec3 w_bar =
                    so3::left_jacobian(ws[i]).transpose() * so3::unskew_twice(q_bar * qs[i].transpose());
                grad.row(i).segment<3>(3) = model.gamma_r.cwiseProduct(w_bar).transpose();
                r_bar = qs[i].transpose() * r_bar;
            }
            break;
        }
        case RobotVariant::PlanarArm: {
            const int n = static_cast<int>(model.link_lengths.size());
            std::vector<Eigen::VectorXd> angle_states(H + 1);
            angle_states[0] = state.joint_angles;
            for (int i = 0; i < H; ++i)
                angle_states[i + 1] =
                    angle_states[i] + model.gamma_joint.cwiseProduct(chunk.values.row(i).transpose());
            Eigen::VectorXd theta_bar = Eigen::VectorXd::Zero(n);
            for (int i = H - 1; i >= 0; --i) {
                const Eigen::VectorXd phi_bar = planar_phi_cotangent(
                    model, angle_states[i + 1], cotangent.d_positions[i], cotangent.d_orientations[i]);
                // phi_k = base + sum_{j<=k} theta_j  =>  theta_bar_j += sum_{k>=j} phi_bar_k
                double suffix = 0.0;
                for (int j = n - 1; j >= 0; --j) {
                    suffix += phi_bar(j);
                    theta_bar(j) += suffix;
                }
                grad.row(i) = model.gamma_joint.cwiseProduct(theta_bar).transpose();
            }
            break;
        }
        case RobotVariant::Identity: {
            for (int i = 0; i < H; ++i)
                for (int c = 0; c < std::min(chunk.dim(), 3); ++c)
                    grad(i, c) = cotangent.d_positions[i](c, 0);
            break;
        }
    }
    return grad;
}

RobotState advance_state(const RobotModel& model, const RobotState& state, const ActionChunk& chunk,
                         int steps) {
    if (steps < 0 || steps > chunk.horizon())
        throw std::invalid_argument("advance_state: steps outside [0, H]");
    RobotState out = state;
    switch (model.variant) {
        case RobotVariant::FreeGripper:
            for (int i = 0; i < steps; ++i) {
                out.position += model.gamma_x.cwiseProduct(chunk.values.row(i).segment<3>(0).transpose());
                const Vec3 w = model.gamma_r.cwiseProduct(chunk.values.row(i).segment<3>(3).transpose());
                out.rotation = so3::exp_map(w) * out.rotation;
            }
            break;
        case RobotVariant::PlanarArm:
            for (int i = 0; i < steps; ++i)
                out.joint_angles += model.gamma_joint.cwiseProduct(chunk.values.row(i).transpose());
            break;
        case RobotVariant::Identity:
            if (steps > 0) {
                out.position = Vec3::Zero();
                for (int c = 0; c < std::min(chunk.dim(), 3); ++c)
                    out.position(c) = chunk.values(steps - 1, c);
            }
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Robot description files

namespace {
using nlohmann::json;

Vec3 vec3_from_json(const json& a) { return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>()); }
json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
}  // namespace

RobotModel RobotModel::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("RobotModel::load_json: cannot open " + path);
    json doc = json::parse(in);
    RobotModel m;
    const std::string variant = doc.at("variant").get<std::string>();
    if (variant == "free_gripper") {
        m.variant = RobotVariant::FreeGripper;
        if (doc.contains("gamma_x")) m.gamma_x = vec3_from_json(doc["gamma_x"]);
        if (doc.contains("gamma_r")) m.gamma_r = vec3_from_json(doc["gamma_r"]);
    } else if (variant == "planar_arm") {
        m.variant = RobotVariant::PlanarArm;
        m.link_lengths = doc.at("link_lengths").get<std::vector<double>>();
        if (doc.contains("base_position")) m.base_position = vec3_from_json(doc["base_position"]);
        if (doc.contains("base_angle")) m.base_angle = doc["base_angle"].get<double>();
        if (doc.contains("gamma_joint")) {
            const auto g = doc["gamma_joint"].get<std::vector<double>>();
            m.gamma_joint = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
        } else {
            m.gamma_joint = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m.link_lengths.size()), 0.1);
        }
    } else if (variant == "identity") {
        return identity_model(doc.value("dim", 3));
    } else {
        throw std::runtime_error("RobotModel::load_json: unknown variant '" + variant + "'");
    }
    if (doc.contains("probe_points")) {
        m.probes.clear();
        for (const auto& p : doc["probe_points"])
            m.probes.push_back({p.at("name").get<std::string>(), vec3_from_json(p.at("local")),
                                p.value("end_effector", false), p.value("link", -1)});
    } else if (m.variant == RobotVariant::FreeGripper) {
        m.probes = default_free_gripper().probes;
    } else {
        m.probes = default_planar_arm(m.link_lengths).probes;
    }
    m.validate();
    return m;
}

void RobotModel::save_json(const std::string& path) const {
    json doc;
    switch (variant) {
        case RobotVariant::FreeGripper:
            doc["variant"] = "free_gripper";
            doc["gamma_x"] = vec3_to_json(gamma_x);
            doc["gamma_r"] = vec3_to_json(gamma_r);
            break;
        case RobotVariant::PlanarArm: {
            doc["variant"] = "planar_arm";
            doc["link_lengths"] = link_lengths;
            doc["base_position"] = vec3_to_json(base_position);
            doc["base_angle"] = base_angle;
            std::vector<double> g(gamma_joint.data(), gamma_joint.data() + gamma_joint.size());
            doc["gamma_joint"] = g;
            break;
        }
        case RobotVariant::Identity:
            doc["variant"] = "identity";
            doc["dim"] = identity_dim;
            break;
    }
    json probes_json = json::array();
    for (const auto& p : probes)
        probes_json.push_back({{"name", p.name},
                               {"local", vec3_to_json(p.local)},
                               {"end_effector", p.end_effector},
                               {"link", p.link}});
    doc["probe_points"] = probes_json;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("RobotModel::save_json: cannot open " + path);
    out << doc.dump(2) << "\n";
}

}  // namespace flowguide
