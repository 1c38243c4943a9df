#include "fbdyn/dynamics.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <random>

using namespace fbdyn;

namespace {

RobotModel pendulum() { return load_model_file(fixture_path("models/pendulum.xml")); }
RobotModel biped() { return load_model_file(fixture_path("models/biped5.xml")); }

FloatingBaseState random_state(const RobotModel& model, std::mt19937_64& rng, double q_range = 1.2) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FloatingBaseState s = neutral_state(model);
    const Quat quat(u(rng), u(rng), u(rng), u(rng));
    s.base_orientation = quat.normalized();
    s.base_position = Vec3(u(rng), u(rng), u(rng));
    for (int i = 0; i < s.q.size(); ++i) s.q[i] = q_range * u(rng);
    for (int i = 0; i < s.nu.size(); ++i) s.nu[i] = u(rng);
    return s;
}

// Central differences of forward kinematics along each nu direction: position rows directly,
// angular rows through the rotation log-map.
MatX jacobian_fd(const RobotModel& model, const FloatingBaseState& state, const std::string& frame,
                 double h) {
    const int nv = 6 + model.n();
    MatX jac(6, nv);
    for (int k = 0; k < nv; ++k) {
        auto perturb = [&](double eps) {
            FloatingBaseState s = state;
            if (k < 3) {
                s.base_position[k] += eps;
            } else if (k < 6) {
                Vec3 omega = Vec3::Zero();
                omega[k - 3] = eps;
                s.base_orientation = (quat_exp(omega) * s.base_orientation).normalized();
            } else {
                s.q[k - 6] += eps;
            }
            return forward_kinematics(model, s, frame);
        };
        const Pose plus = perturb(h);
        const Pose minus = perturb(-h);
        jac.block<3, 1>(0, k) = (plus.translation - minus.translation) / (2.0 * h);
        jac.block<3, 1>(3, k) = rotation_log(plus.rotation * minus.rotation.transpose()) / (2.0 * h);
    }
    return jac;
}

// Advance the configuration along nu by eps (the same exponential update the integrator uses).
FloatingBaseState advance(const RobotModel& model, const FloatingBaseState& state, double eps) {
    FloatingBaseState s = state;
    s.base_position += eps * state.nu.head<3>();
    s.base_orientation = (quat_exp(eps * state.nu.segment<3>(3)) * state.base_orientation).normalized();
    s.q += eps * state.nu.tail(model.n());
    return s;
}

} // namespace

TEST_CASE("forward kinematics: pendulum closed form") {
    const RobotModel model = pendulum();
    FloatingBaseState state = neutral_state(model);

    Pose tip = forward_kinematics(model, state, "tip");
    CHECK(tip.translation.isApprox(Vec3(0, 0, -1), 1e-12));

    state.q[0] = M_PI / 2.0; // axis -y: tip swings to +x
    tip = forward_kinematics(model, state, "tip");
    CHECK(tip.translation.x() == doctest::Approx(1.0));
    CHECK(tip.translation.y() == doctest::Approx(0.0));
    CHECK(tip.translation.z() == doctest::Approx(0.0).epsilon(1e-9));

    // Rigid translation invariance.
    const Vec3 d(0.3, -0.2, 1.7);
    FloatingBaseState moved = state;
    moved.base_position += d;
    const Pose tip_moved = forward_kinematics(model, moved, "tip");
    CHECK((tip_moved.translation - tip.translation - d).norm() < 1e-14);

    CHECK_THROWS_AS(forward_kinematics(model, state, "nope"), Error);
}

TEST_CASE("frame jacobian: structure and finite differences") {
    const RobotModel model = pendulum();
    std::mt19937_64 rng(7);
    const FloatingBaseState state = random_state(model, rng);

    const MatX jac = frame_jacobian(model, state, "tip");
    CHECK(jac.rows() == 6);
    CHECK(jac.cols() == 7);
    CHECK(jac.block<3, 3>(0, 0).isApprox(Mat3::Identity(), 1e-12));

    const MatX fd = jacobian_fd(model, state, "tip", 1e-6);
    CHECK((jac - fd).cwiseAbs().maxCoeff() < 1e-6);

    // Frames on the base link have zero joint columns.
    const MatX base_jac = frame_jacobian(model, state, "pivot_b");
    CHECK(base_jac.col(6).norm() == 0.0);
}

TEST_CASE("bias acceleration: pendulum centripetal term and FD oracle") {
    const RobotModel model = pendulum();
    FloatingBaseState state = neutral_state(model);

    SUBCASE("zero velocity gives zero bias") {
        CHECK(bias_acceleration(model, state, "tip").norm() == 0.0);
    }

    SUBCASE("spinning pendulum: l*qdot^2 toward the pivot") {
        state.nu[6] = 1.0; // qdot = 1 at q = 0, tip 1 m below the pivot
        const Vec6 bias = bias_acceleration(model, state, "tip");
        CHECK(bias.head<3>().isApprox(Vec3(0, 0, 1.0), 1e-12));
    }

    SUBCASE("matches (J(state + eps*nu) - J(state))/eps * nu") {
        std::mt19937_64 rng(21);
        const FloatingBaseState s = random_state(model, rng);
        const double eps = 1e-6;
        const MatX j0 = frame_jacobian(model, s, "tip");
        const MatX j1 = frame_jacobian(model, advance(model, s, eps), "tip");
        const VecX fd = ((j1 - j0) / eps) * s.nu;
        const Vec6 bias = bias_acceleration(model, s, "tip");
        CHECK((bias - fd).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("rnea: gravity closed form for the pendulum") {
    const RobotModel model = pendulum();
    FloatingBaseState state = neutral_state(model);
    state.q[0] = 0.6;
    const VecX zero = VecX::Zero(7);

    const VecX g = rnea(model, state, zero);
    // Point-mass rod 1 m below the pin: m g l sin(q).
    CHECK(g[6] == doctest::Approx(1.0 * kStandardGravity * 1.0 * std::sin(0.6)).epsilon(1e-10));

    // Gravity off, statics: all zero.
    CHECK(rnea(model, state, zero, {}, Vec3::Zero()).norm() == 0.0);

    // Base rows carry the total weight at rest.
    CHECK(g.head<3>().isApprox(Vec3(0, 0, 2.0 * kStandardGravity), 1e-10));
}

TEST_CASE("rnea: external wrench cancelling gravity") {
    const RobotModel model = biped();
    std::mt19937_64 rng(3);
    FloatingBaseState state = random_state(model, rng);
    state.nu.setZero();

    const Kinematics kin(model, state);
    SpatialWrench support;
    support.force = Vec3(0, 0, kin.total_mass() * kStandardGravity);
    support.torque = (kin.com() - kin.frame_pose("torso").translation).cross(support.force);
    const VecX residual = rnea(model, state, VecX::Zero(10), {{"torso", support}});
    CHECK(residual.head<6>().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mass matrix: structure and CRBA/RNEA consistency") {
    const RobotModel model = biped();
    std::mt19937_64 rng(11);

    for (int trial = 0; trial < 10; ++trial) {
        const FloatingBaseState state = random_state(model, rng);
        const MatX m = mass_matrix(model, state);

        CHECK((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(m.block<3, 3>(0, 0).isApprox(15.2 * Mat3::Identity(), 1e-12)); // total mass 15.2 kg

        // Column-by-column assembly via RNEA: unit nudot, zero velocity, gravity off.
        FloatingBaseState rest = state;
        rest.nu.setZero();
        MatX assembled(10, 10);
        for (int k = 0; k < 10; ++k) {
            VecX e = VecX::Zero(10);
            e[k] = 1.0;
            assembled.col(k) = rnea(model, rest, e, {}, Vec3::Zero());
        }
        const double rel = (m - assembled).norm() / assembled.norm();
        CHECK(rel < 1e-8);

        Eigen::LLT<MatX> llt(m);
        CHECK(llt.info() == Eigen::Success); // positive definite
    }
}

TEST_CASE("mass matrix: pendulum joint entry is I + m l^2") {
    const RobotModel model = pendulum();
    FloatingBaseState state = neutral_state(model);
    state.q[0] = 0.37; // entry is configuration-independent for this fixture
    const MatX m = mass_matrix(model, state);
    CHECK(m(6, 6) == doctest::Approx(0.02 + 1.0 * 1.0).epsilon(1e-12));
}

TEST_CASE("bias forces equal rnea at zero acceleration, bit for bit") {
    const RobotModel model = biped();
    std::mt19937_64 rng(5);
    const FloatingBaseState state = random_state(model, rng);
    const VecX via_rnea = rnea(model, state, VecX::Zero(10));
    const VecX via_bias = bias_forces(model, state);
    CHECK((via_rnea - via_bias).norm() == 0.0);

    FloatingBaseState rest = state;
    rest.nu.setZero();
    CHECK((bias_forces(model, rest) - gravity_forces(model, rest)).norm() == 0.0);
}

TEST_CASE("gravity forces: first rows are the total weight") {
    const RobotModel model = biped();
    std::mt19937_64 rng(9);
    const FloatingBaseState state = random_state(model, rng);
    const VecX g = gravity_forces(model, state);
    CHECK(g.head<3>().isApprox(Vec3(0, 0, 15.2 * kStandardGravity), 1e-10));
}

TEST_CASE("centroidal momentum") {
    const RobotModel model = biped();
    FloatingBaseState state = neutral_state(model);

    SUBCASE("zero velocity gives zero momentum") {
        CHECK(centroidal_momentum(model, state).h.norm() == 0.0);
    }

    SUBCASE("pure base translation: linear m*v, zero angular") {
        state.nu.head<3>() = Vec3(0.4, -0.1, 0.9);
        const CentroidalMomentum h = centroidal_momentum(model, state);
        CHECK(h.h.head<3>().isApprox(15.2 * Vec3(0.4, -0.1, 0.9), 1e-12));
        CHECK(h.h.tail<3>().norm() < 1e-12);
    }

    SUBCASE("linear part matches finite differences of the CoM") {
        std::mt19937_64 rng(13);
        const FloatingBaseState s = random_state(model, rng);
        const double eps = 1e-6;
        const Vec3 com_plus = Kinematics(model, advance(model, s, eps)).com();
        const Vec3 com_minus = Kinematics(model, advance(model, s, -eps)).com();
        const Vec3 vcom_fd = (com_plus - com_minus) / (2.0 * eps);
        const CentroidalMomentum h = centroidal_momentum(model, s);
        CHECK((h.h.head<3>() - 15.2 * vcom_fd).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("contact map: lever arm structure") {
    const Vec3 com(0.1, 0.2, 0.5);

    SUBCASE("contact at the CoM: [I; 0]") {
        const MatX x = contact_map({com}, com);
        CHECK(x.block<3, 3>(0, 0).isApprox(Mat3::Identity(), 1e-15));
        CHECK(x.block<3, 3>(3, 0).norm() == 0.0);
    }

    SUBCASE("1 m below the CoM, force +x gives torque -y") {
        // tau = (p - c) x f = (0,0,-1) x (1,0,0) = (0,-1,0): the bottom of the body is pushed
        // toward +x, which is a negative rotation about y.
        const MatX x = contact_map({com - Vec3(0, 0, 1)}, com);
        const Vec6 hdot = x * Vec3(1, 0, 0);
        CHECK(hdot.head<3>().isApprox(Vec3(1, 0, 0), 1e-15));
        CHECK(hdot.tail<3>().isApprox(Vec3(0, -1, 0), 1e-15));
    }
}

TEST_CASE("contact set: jacobian rows match frame jacobians, cones reject steep forces") {
    const RobotModel model = biped();
    FloatingBaseState state = neutral_state(model);
    state.q << 0.3, -0.3, 0.3, -0.3; // hip_l, knee_l, hip_r, knee_r: shanks vertical
    const Kinematics kin(model, state);
    const ContactSet contacts(kin, {"left_foot", "right_foot"});

    CHECK(contacts.point_count() == 2);
    CHECK(contacts.jacobian().rows() == 6);
    CHECK(contacts.centroidal_map().cols() == 6);

    const MatX full = frame_jacobian(model, state, "left_foot");
    CHECK((contacts.jacobian().topRows<3>() - full.topRows<3>()).cwiseAbs().maxCoeff() < 1e-14);

    // Vertical force: comfortably inside; 45-degree force with mu=0.8: outside the inner cone.
    VecX ok(6), steep(6);
    ok << 0, 0, 10, 0, 0, 10;
    steep << 10, 0, 10, 0, 0, 10;
    CHECK(contacts.cone_margin(ok) > 0.0);
    CHECK(contacts.cone_margin(steep) < 0.0);
    CHECK(contacts.cone_margin(contacts.interior_forces()) > 0.0);
}

TEST_CASE("moving one joint only moves its subtree") {
    const RobotModel model = biped();
    FloatingBaseState a = neutral_state(model);
    a.q << 0.2, -0.1, 0.4, 0.3;
    FloatingBaseState b = a;
    const int knee_l = model.joint_q_index(model.joint_index("knee_l"));
    b.q[knee_l] += 0.5;

    for (const char* frame : {"torso", "thigh_l", "thigh_r", "shank_r", "right_foot"}) {
        const Pose pa = forward_kinematics(model, a, frame);
        const Pose pb = forward_kinematics(model, b, frame);
        CHECK((pa.translation - pb.translation).norm() < 1e-15);
    }
    const Pose pa = forward_kinematics(model, a, "left_foot");
    const Pose pb = forward_kinematics(model, b, "left_foot");
    CHECK((pa.translation - pb.translation).norm() > 1e-3);
}

TEST_CASE("base rows follow the Newton sum over links") {
    const RobotModel model = biped();
    std::mt19937_64 rng(17);
    const FloatingBaseState state = random_state(model, rng);
    VecX nudot(10);
    for (int i = 0; i < 10; ++i) nudot[i] = std::sin(0.3 * i) - 0.2;

    const VecX forces = rnea(model, state, nudot);
    // Total force = d/dt (m v_com) - m g, via finite differences of the linear momentum.
    const double eps = 1e-6;
    FloatingBaseState plus = advance(model, state, eps);
    plus.nu += eps * nudot;
    FloatingBaseState minus = advance(model, state, -eps);
    minus.nu -= eps * nudot;
    const Vec3 p_plus = 15.2 * Kinematics(model, plus).com_velocity();
    const Vec3 p_minus = 15.2 * Kinematics(model, minus).com_velocity();
    const Vec3 pdot_fd = (p_plus - p_minus) / (2.0 * eps);
    const Vec3 expected = pdot_fd - 15.2 * kDefaultGravity;
    CHECK((forces.head<3>() - expected).cwiseAbs().maxCoeff() < 1e-4);
}
