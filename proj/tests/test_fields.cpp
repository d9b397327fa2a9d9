#include <doctest.h>

#include <cmath>

#include "flowguide/fields.hpp"
#include "flowguide/flow.hpp"
#include "flowguide/rng.hpp"
#include "flowguide/so3.hpp"

using namespace flowguide;

namespace {

/// Wall slab at x ~ 0 inside a 0.48 m cube, 2 cm voxels.
std::shared_ptr<SdfGrid> wall_sdf(double barrier_d = 0.15) {
    PointCloud cloud;
    std::vector<Vec3> pts;
    for (double y = 0.0; y <= 0.48; y += 0.005)
        for (double z = 0.0; z <= 0.48; z += 0.005) pts.emplace_back(0.01, y, z);
    cloud.points.resize(3, static_cast<Eigen::Index>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i) cloud.points.col(static_cast<Eigen::Index>(i)) = pts[i];
    GridBounds bounds;
    bounds.min = Vec3::Zero();
    bounds.max = Vec3::Constant(0.48);
    return std::make_shared<SdfGrid>(compute_sdf(build_occupancy(cloud, 0.02, bounds), barrier_d));
}

CartesianTrajectory single_point_traj(const Vec3& p) {
    CartesianTrajectory t;
    t.positions.push_back(p);
    t.orientations.push_back(Mat3::Identity());
    t.ee_index = 0;
    return t;
}

ActionChunk random_chunk(int h, int d, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    ActionChunk c(h, d);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < d; ++j) c.values(i, j) = scale * rng.normal();
    return c;
}

/// Total weighted energy as a plain function of the noisy chunk; the test
/// oracle the chain gradient is finite-differenced against.
double total_energy_of(const GuidanceChain& chain, const VelocityPolicy& policy,
                       const Observation& obs, const std::vector<WeightedField>& fields,
                       const ActionChunk& a_tau, double tau) {
    const Eigen::VectorXd v = policy.velocity(a_tau.flat(), tau, obs);
    const ActionChunk clean =
        ActionChunk::from_flat(a_tau.flat() + (1.0 - tau) * v, a_tau.horizon(), a_tau.dim());
    return chain_energy(chain, fields, clean);
}

Eigen::MatrixXd fd_gradient(const GuidanceChain& chain, const VelocityPolicy& policy,
                            const Observation& obs, const std::vector<WeightedField>& fields,
                            const ActionChunk& a_tau, double tau, double eps) {
    Eigen::MatrixXd g(a_tau.horizon(), a_tau.dim());
    for (int i = 0; i < a_tau.horizon(); ++i)
        for (int j = 0; j < a_tau.dim(); ++j) {
            ActionChunk hi = a_tau, lo = a_tau;
            hi.values(i, j) += eps;
            lo.values(i, j) -= eps;
            g(i, j) = (total_energy_of(chain, policy, obs, fields, hi, tau) -
                       total_energy_of(chain, policy, obs, fields, lo, tau)) /
                      (2.0 * eps);
        }
    return g;
}

/// Direct transcription of the greedy monotonic matching loop, kept separate
/// from the library implementation on purpose.
std::vector<std::pair<int, int>> align_reference(const Eigen::Matrix3Xd& x,
                                                 const Eigen::Matrix3Xd& h) {
    std::vector<std::pair<int, int>> m;
    int k_curr = 0;
    const int H = static_cast<int>(x.cols()), N = static_cast<int>(h.cols());
    for (int t = 0; t < H; ++t) {
        int k_star = k_curr;
        double best = (x.col(t) - h.col(k_curr)).norm();
        for (int k = k_curr; k < N; ++k) {
            const double d = (x.col(t) - h.col(k)).norm();
            if (d < best) {
                best = d;
                k_star = k;
            }
        }
        m.emplace_back(t, k_star);
        k_curr = k_star;
        if (k_curr == N - 1) break;
    }
    return m;
}

}  // namespace

TEST_CASE("collision field: support, closed-form value, monotonicity") {
    auto sdf = wall_sdf();
    const CollisionField field(sdf, 0.15);

    // beyond the barrier distance the energy is exactly zero
    CHECK(field.energy(single_point_traj(Vec3(0.40, 0.24, 0.24))) == 0.0);

    // SDF = d/e gives -log(d/e) = -log d + 1  (wall: SDF(x) = x - 0.01)
    const double d = 0.15;
    const Vec3 probe(0.01 + d / M_E, 0.24, 0.24);
    CHECK(field.energy(single_point_traj(probe)) ==
          doctest::Approx(-std::log(d) + 1.0).epsilon(1e-6));

    // moving away from the obstacle strictly decreases energy
    const double e_near = field.energy(single_point_traj(Vec3(0.06, 0.24, 0.24)));
    const double e_far = field.energy(single_point_traj(Vec3(0.11, 0.24, 0.24)));
    CHECK(e_near > e_far);
    CHECK(e_far > 0.0);
}

TEST_CASE("collision gradient: direction and magnitude") {
    auto sdf = wall_sdf();
    const CollisionField field(sdf, 0.15);

    // outside the risk shell: zero
    auto cot = TrajectoryCotangent::zeros(1, 1);
    field.add_gradient(single_point_traj(Vec3(0.40, 0.24, 0.24)), 1.0, cot);
    CHECK(cot.d_positions[0].cwiseAbs().maxCoeff() == 0.0);

    // at SDF ~= 0.1: descent direction ~ +x with magnitude ~ 1/SDF = 10
    const Vec3 p(0.11, 0.24, 0.24);
    cot = TrajectoryCotangent::zeros(1, 1);
    field.add_gradient(single_point_traj(p), 1.0, cot);
    const Vec3 descent = -cot.d_positions[0].col(0);
    CHECK(descent.x() == doctest::Approx(10.0).epsilon(0.05));
    CHECK(descent.normalized().dot(query_sdf_gradient(*sdf, p)) > 0.99);

    // matches central finite differences of the energy away from boundaries
    Rng rng(3);
    for (int n = 0; n < 40; ++n) {
        const Vec3 x(rng.uniform(0.05, 0.13), rng.uniform(0.1, 0.38), rng.uniform(0.1, 0.38));
        cot = TrajectoryCotangent::zeros(1, 1);
        field.add_gradient(single_point_traj(x), 1.0, cot);
        const double eps = 1e-6;
        Vec3 fd;
        for (int a = 0; a < 3; ++a) {
            Vec3 hi = x, lo = x;
            hi(a) += eps;
            lo(a) -= eps;
            fd(a) = (field.energy(single_point_traj(hi)) - field.energy(single_point_traj(lo))) /
                    (2.0 * eps);
        }
        CHECK((cot.d_positions[0].col(0) - fd).norm() <= 5e-2 * std::max(1.0, fd.norm()));
    }
}

TEST_CASE("semantic field: position term") {
    const SemanticField field(Vec3(1.0, 2.0, 3.0), 1.0);
    CHECK(field.energy(single_point_traj(Vec3(1.0, 2.0, 3.0))) == 0.0);
    auto cot = TrajectoryCotangent::zeros(1, 1);
    field.add_gradient(single_point_traj(Vec3(1.0, 2.0, 3.0)), 1.0, cot);
    CHECK(cot.d_positions[0].cwiseAbs().maxCoeff() == 0.0);

    // sigma = 1, offset (2,0,0): energy 2, descent toward the target
    const SemanticField offset(Vec3(0.0, 0.0, 0.0), 1.0);
    const Vec3 x(2.0, 0.0, 0.0);
    CHECK(offset.energy(single_point_traj(x)) == doctest::Approx(2.0));
    cot = TrajectoryCotangent::zeros(1, 1);
    offset.add_gradient(single_point_traj(x), 1.0, cot);
    CHECK((-cot.d_positions[0].col(0)).normalized().dot((Vec3::Zero() - x).normalized()) ==
          doctest::Approx(1.0));

    // attraction invariant: descent direction has positive inner product with x* - x
    Rng rng(9);
    for (int n = 0; n < 20; ++n) {
        const Vec3 p(rng.normal(), rng.normal(), rng.normal());
        if ((p - Vec3(1, 2, 3)).norm() < 1e-9) continue;
        cot = TrajectoryCotangent::zeros(1, 1);
        field.add_gradient(single_point_traj(p), 1.0, cot);
        CHECK((-cot.d_positions[0].col(0)).dot(Vec3(1, 2, 3) - p) > 0.0);
    }
}

TEST_CASE("semantic field: orientation term") {
    SemanticField::OrientationTerm orient;
    orient.gripper_axis = Vec3(0.0, 0.0, 1.0);
    orient.sigma_r = 1.0;
    orient.weight = 1.0;

    // target directly above, gripper axis already pointing up: zero
    const SemanticField field(Vec3(0.0, 0.0, 1.0), 1.0, false, orient);
    CartesianTrajectory traj = single_point_traj(Vec3(0.0, 0.0, 0.0));
    const double base = (Vec3(0, 0, 0) - Vec3(0, 0, 1)).squaredNorm() / 2.0;
    CHECK(field.energy(traj) == doctest::Approx(base));  // orientation adds nothing

    // misaligned gripper adds |r - r*|^2 / (2 sigma^2)
    CartesianTrajectory rot = traj;
    rot.orientations[0] = so3::exp_map(Vec3(M_PI / 2.0, 0.0, 0.0));
    const Vec3 r = rot.orientations[0] * Vec3(0, 0, 1);
    CHECK(field.energy(rot) == doctest::Approx(base + (r - Vec3(0, 0, 1)).squaredNorm() / 2.0));

    // orientation skipped when x coincides with the target
    const SemanticField at_target(Vec3(0.0, 0.0, 0.0), 1.0, false, orient);
    CHECK(at_target.energy(traj) == 0.0);

    // unsquared variant: |r - r*| / (2 sigma^2), gradient matches FD
    SemanticField::OrientationTerm unsq = orient;
    unsq.squared = false;
    const SemanticField raw(Vec3(0.1, 0.2, 0.9), 0.7, false, unsq);
    const Vec3 p(0.3, -0.1, 0.0);
    auto make_traj = [&](const Vec3& q) {
        CartesianTrajectory t = single_point_traj(q);
        t.orientations[0] = so3::exp_map(Vec3(0.4, -0.2, 0.1));
        return t;
    };
    auto cot2 = TrajectoryCotangent::zeros(1, 1);
    raw.add_gradient(make_traj(p), 1.0, cot2);
    const double eps = 1e-7;
    for (int a = 0; a < 3; ++a) {
        Vec3 hi = p, lo = p;
        hi(a) += eps;
        lo(a) -= eps;
        const double fd = (raw.energy(make_traj(hi)) - raw.energy(make_traj(lo))) / (2.0 * eps);
        CHECK(cot2.d_positions[0](a, 0) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("semantic field: all-steps mode sums per-step terms") {
    const SemanticField last_only(Vec3(1.0, 0.0, 0.0), 1.0, false);
    const SemanticField all(Vec3(1.0, 0.0, 0.0), 1.0, true);
    CartesianTrajectory traj;
    for (int i = 0; i < 3; ++i) {
        traj.positions.push_back(Vec3(i * 1.0, 0.0, 0.0));
        traj.orientations.push_back(Mat3::Identity());
    }
    traj.ee_index = 0;
    // distances to the target: 1, 0, 1
    CHECK(last_only.energy(traj) == doctest::Approx(0.5));
    CHECK(all.energy(traj) == doctest::Approx(1.0));
    auto cot = TrajectoryCotangent::zeros(3, 1);
    all.add_gradient(traj, 1.0, cot);
    CHECK(cot.d_positions[0].cwiseAbs().maxCoeff() > 0.0);
    CHECK(cot.d_positions[1].cwiseAbs().maxCoeff() == 0.0);  // at the target
    CHECK(cot.d_positions[2].cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("monotonic_align: identity, hand trace, single reference") {
    Eigen::Matrix3Xd x(3, 3);
    x.col(0) = Vec3(0, 0, 0);
    x.col(1) = Vec3(1, 0, 0);
    x.col(2) = Vec3(2, 0, 0);

    const auto identity = monotonic_align(x, x);
    REQUIRE(identity.size() == 3);
    for (int t = 0; t < 3; ++t) {
        CHECK(identity[static_cast<size_t>(t)].first == t);
        CHECK(identity[static_cast<size_t>(t)].second == t);
    }

    // hand trace from the two-point reference
    Eigen::Matrix3Xd h(3, 2);
    h.col(0) = Vec3(0.1, 0, 0);
    h.col(1) = Vec3(2.1, 0, 0);
    const auto m = monotonic_align(x, h);
    REQUIRE(m.size() == 3);
    CHECK(m[0] == std::pair<int, int>(0, 0));
    CHECK(m[1] == std::pair<int, int>(1, 0));
    CHECK(m[2] == std::pair<int, int>(2, 1));

    // N = 1: the loop breaks after the first pair
    Eigen::Matrix3Xd h1(3, 1);
    h1.col(0) = Vec3(5, 0, 0);
    const auto single = monotonic_align(x, h1);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == std::pair<int, int>(0, 0));
}

TEST_CASE("monotonic_align matches the reference transcription on 1000 random instances") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const int H = 1 + rng.uniform_int(32);
        const int N = 1 + rng.uniform_int(32);
        Eigen::Matrix3Xd x(3, H), h(3, N);
        for (int t = 0; t < H; ++t) x.col(t) = Vec3(rng.normal(), rng.normal(), rng.normal());
        for (int k = 0; k < N; ++k) h.col(k) = Vec3(rng.normal(), rng.normal(), rng.normal());

        const auto got = monotonic_align(x, h);
        const auto expect = align_reference(x, h);
        REQUIRE(got.size() == expect.size());
        for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expect[i]);

        // monotonicity and termination properties
        CHECK(got.size() <= static_cast<size_t>(H));
        for (size_t i = 1; i < got.size(); ++i) CHECK(got[i].second >= got[i - 1].second);
    }
}

TEST_CASE("human trajectory field") {
    Eigen::Matrix3Xd demo(3, 4);
    demo.col(0) = Vec3(0, 0, 0);
    demo.col(1) = Vec3(1, 0, 0);
    demo.col(2) = Vec3(2, 0, 0);
    demo.col(3) = Vec3(3, 0, 0);
    const HumanTrajectoryField field(demo, 1.0);

    // a prefix of the demo has zero energy
    CartesianTrajectory prefix;
    for (int i = 0; i < 2; ++i) {
        prefix.positions.push_back(demo.col(i));
        prefix.orientations.push_back(Mat3::Identity());
    }
    prefix.ee_index = 0;
    CHECK(field.energy(prefix) == 0.0);

    // one matched pair at distance 1 with sigma 1: energy 1/2
    Eigen::Matrix3Xd one(3, 1);
    one.col(0) = Vec3(0, 1, 0);
    const HumanTrajectoryField single(one, 1.0);
    CHECK(single.energy(single_point_traj(Vec3(0, 0, 0))) == doctest::Approx(0.5));

    // unmatched trajectory steps carry exactly zero gradient
    Eigen::Matrix3Xd short_demo(3, 1);
    short_demo.col(0) = Vec3(0, 0, 0);
    const HumanTrajectoryField short_field(short_demo, 1.0);
    CartesianTrajectory long_traj;
    for (int i = 0; i < 5; ++i) {
        long_traj.positions.push_back(Vec3(i, 0.5, 0));
        long_traj.orientations.push_back(Mat3::Identity());
    }
    long_traj.ee_index = 0;
    auto cot = TrajectoryCotangent::zeros(5, 1);
    short_field.add_gradient(long_traj, 1.0, cot);
    CHECK(cot.d_positions[0].cwiseAbs().maxCoeff() > 0.0);
    for (int i = 1; i < 5; ++i) CHECK(cot.d_positions[i].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("composite_gradient: zero weights, tau=0 closed form") {
    const RobotModel model = RobotModel::identity_model(3);
    const GmmPolicy prior = GmmPolicy::standard_normal(1, 3);
    GuidanceChain chain{LatentDecoder(), &model, RobotState{}, TweedieJacobian::Identity};
    Observation obs;

    std::vector<WeightedField> fields{
        {std::make_shared<SemanticField>(Vec3(0.5, -0.2, 0.1), 0.7), 0.0}};
    const ActionChunk a = random_chunk(1, 3, 5);
    CHECK(composite_gradient(chain, prior, obs, fields, a, 0.3).gradient.cwiseAbs().maxCoeff() ==
          0.0);

    // tau = 0, identity chain: gradient is (x~ - x*)/sigma^2 at the end effector
    fields[0].lambda = 1.0;
    const double tau = 0.0;
    const auto eval = composite_gradient(chain, prior, obs, fields, a, tau);
    const Eigen::VectorXd v = prior.velocity(a.flat(), tau, obs);
    const Vec3 clean = (a.flat() + v).head<3>();
    const Vec3 expect = (clean - Vec3(0.5, -0.2, 0.1)) / (0.7 * 0.7);
    CHECK((eval.gradient.row(0).transpose() - expect).norm() < 1e-12);
}

TEST_CASE("composite_gradient matches finite differences (exact Tweedie Jacobian)") {
    const RobotModel model = RobotModel::default_free_gripper();
    RobotState state;
    state.position = Vec3(0.10, 0.24, 0.24);
    const int H = 3;
    const GmmPolicy prior = GmmPolicy::standard_normal(H, 7);
    Observation obs;
    GuidanceChain chain{LatentDecoder(), &model, state, TweedieJacobian::Exact};

    Eigen::Matrix3Xd demo(3, 5);
    for (int k = 0; k < 5; ++k) demo.col(k) = Vec3(0.10 + 0.01 * k, 0.24, 0.25);

    SemanticField::OrientationTerm orient;
    orient.weight = 0.5;
    orient.sigma_r = 1.3;

    const std::vector<WeightedField> semantic{
        {std::make_shared<SemanticField>(Vec3(0.2, 0.3, 0.2), 0.1), 2.0}};
    const std::vector<WeightedField> semantic_orient{
        {std::make_shared<SemanticField>(Vec3(0.2, 0.3, 0.2), 0.1, false, orient), 1.5}};
    const std::vector<WeightedField> human{
        {std::make_shared<HumanTrajectoryField>(demo, 0.2), 1.0}};

    for (const auto& fields : {semantic, semantic_orient, human}) {
        Rng rng(91);
        for (int n = 0; n < 10; ++n) {
            const ActionChunk a = random_chunk(H, 7, 400 + n, 0.5);
            const double tau = rng.uniform(0.05, 0.9);
            const auto eval = composite_gradient(chain, prior, obs, fields, a, tau);
            const Eigen::MatrixXd fd = fd_gradient(chain, prior, obs, fields, a, tau, 1e-6);
            const double scale = std::max(1.0, fd.norm());
            CHECK((eval.gradient - fd).norm() / scale < 1e-4);
        }
    }
}

TEST_CASE("composite_gradient matches finite differences for the collision field") {
    const RobotModel model = RobotModel::default_free_gripper();
    RobotState state;
    state.position = Vec3(0.08, 0.24, 0.24);  // inside the wall's risk shell
    const int H = 2;
    const GmmPolicy prior = GmmPolicy::standard_normal(H, 7);
    Observation obs;
    GuidanceChain chain{LatentDecoder(), &model, state, TweedieJacobian::Exact};

    const std::vector<WeightedField> fields{{std::make_shared<CollisionField>(wall_sdf()), 0.5}};
    Rng rng(17);
    int checked = 0;
    for (int n = 0; n < 20; ++n) {
        const ActionChunk a = random_chunk(H, 7, 700 + n, 0.3);
        const double tau = rng.uniform(0.1, 0.9);
        const auto eval = composite_gradient(chain, prior, obs, fields, a, tau);
        if (eval.total_energy <= 0.0) continue;  // rolled out of the shell
        const Eigen::MatrixXd fd = fd_gradient(chain, prior, obs, fields, a, tau, 1e-6);
        const double scale = std::max(1.0, fd.norm());
        CHECK((eval.gradient - fd).norm() / scale < 5e-2);
        ++checked;
    }
    CHECK(checked >= 10);
}

TEST_CASE("composition linearity and repulsion/attraction directions") {
    const RobotModel model = RobotModel::default_free_gripper();
    RobotState state;
    state.position = Vec3(0.08, 0.24, 0.24);
    const GmmPolicy prior = GmmPolicy::standard_normal(2, 7);
    Observation obs;
    GuidanceChain chain{LatentDecoder(), &model, state, TweedieJacobian::Scaled};

    auto collision = std::make_shared<CollisionField>(wall_sdf());
    auto semantic = std::make_shared<SemanticField>(Vec3(0.3, 0.3, 0.2), 0.1);
    const std::vector<WeightedField> both{{collision, 0.7}, {semantic, 2.0}};
    const std::vector<WeightedField> only_c{{collision, 0.7}};
    const std::vector<WeightedField> only_s{{semantic, 2.0}};

    const ActionChunk a = random_chunk(2, 7, 19, 0.3);
    const double tau = 0.4;
    const auto g_both = composite_gradient(chain, prior, obs, both, a, tau).gradient;
    const auto g_c = composite_gradient(chain, prior, obs, only_c, a, tau).gradient;
    const auto g_s = composite_gradient(chain, prior, obs, only_s, a, tau).gradient;
    CHECK((g_both - (g_c + g_s)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("translation equivariance of the full chain") {
    const Vec3 shift(0.04, -0.02, 0.06);  // whole voxels, so the grids align

    auto make_setup = [&](const Vec3& offset) {
        RobotState state;
        state.position = Vec3(0.08, 0.24, 0.24) + offset;

        PointCloud cloud;
        std::vector<Vec3> pts;
        for (double y = 0.0; y <= 0.48; y += 0.005)
            for (double z = 0.0; z <= 0.48; z += 0.005) pts.push_back(Vec3(0.01, y, z) + offset);
        cloud.points.resize(3, static_cast<Eigen::Index>(pts.size()));
        for (size_t i = 0; i < pts.size(); ++i)
            cloud.points.col(static_cast<Eigen::Index>(i)) = pts[i];
        GridBounds bounds;
        bounds.min = offset;
        bounds.max = Vec3::Constant(0.48) + offset;
        auto sdf = std::make_shared<SdfGrid>(compute_sdf(build_occupancy(cloud, 0.02, bounds), 0.15));

        std::vector<WeightedField> fields{
            {std::make_shared<CollisionField>(std::move(sdf)), 0.5},
            {std::make_shared<SemanticField>(Vec3(0.3, 0.3, 0.2) + offset, 0.1), 1.0}};
        return std::make_pair(state, fields);
    };

    const RobotModel model = RobotModel::default_free_gripper();
    const GmmPolicy prior = GmmPolicy::standard_normal(2, 7);
    Observation obs;
    const ActionChunk a = random_chunk(2, 7, 73, 0.3);

    auto [state0, fields0] = make_setup(Vec3::Zero());
    auto [state1, fields1] = make_setup(shift);
    GuidanceChain chain0{LatentDecoder(), &model, state0, TweedieJacobian::Scaled};
    GuidanceChain chain1{LatentDecoder(), &model, state1, TweedieJacobian::Scaled};

    const auto eval0 = composite_gradient(chain0, prior, obs, fields0, a, 0.35);
    const auto eval1 = composite_gradient(chain1, prior, obs, fields1, a, 0.35);
    CHECK(eval0.total_energy == doctest::Approx(eval1.total_energy).epsilon(1e-12));
    CHECK((eval0.gradient - eval1.gradient).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("non-finite energy reports the failing field") {
    const RobotModel model = RobotModel::identity_model(3);
    const GmmPolicy prior = GmmPolicy::standard_normal(1, 3);
    GuidanceChain chain{LatentDecoder(), &model, RobotState{}, TweedieJacobian::Scaled};

    struct BadField : EnergyField {
        std::string name = "bad_field";
        const std::string& id() const override { return name; }
        double energy(const CartesianTrajectory&) const override {
            return std::numeric_limits<double>::quiet_NaN();
        }
        void add_gradient(const CartesianTrajectory&, double, TrajectoryCotangent&) const override {}
    };
    std::vector<WeightedField> fields{{std::make_shared<BadField>(), 1.0}};
    CHECK_THROWS_WITH_AS(
        composite_gradient(chain, prior, {}, fields, random_chunk(1, 3, 1), 0.5),
        doctest::Contains("bad_field"), std::runtime_error);
}
