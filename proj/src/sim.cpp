#include "fbdyn/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fbdyn {

namespace {

std::vector<int> sea_joints(const RobotModel& model) {
    std::vector<int> out;
    for (int j : model.actuated_joints())
        if (model.joints()[j].sea) out.push_back(j);
    return out;
}

bool all_finite(const VecX& v) { return v.allFinite(); }

} // namespace

namespace {

// KKT solve shared by the public entry point and the integrator: rhs is the full generalized
// applied force (B tau plus any external J^T w), bias already subtracted by the caller.
ConstrainedDynamicsResult solve_kkt(const Kinematics& kin, const ContactSet& contacts,
                                    const VecX& rhs, const SimConfig& config, const VecX& drift) {
    const MatX m = mass_matrix(kin.model(), kin.state());
    const Eigen::LLT<MatX> m_chol(m);

    ConstrainedDynamicsResult result;
    const int nc = contacts.force_dim();
    if (nc == 0) {
        result.nudot = m_chol.solve(rhs);
        result.contact_forces = VecX();
        return result;
    }

    const MatX& jac = contacts.jacobian();
    VecX constraint_rhs = -contacts.bias();
    constraint_rhs -= 2.0 * config.baumgarte_alpha * (jac * kin.state().nu);
    if (drift.size() == nc)
        constraint_rhs -= config.baumgarte_beta * config.baumgarte_beta * drift;

    // Schur complement of the KKT system. Redundant contacts make it singular; the
    // rank-revealing solve picks the minimum-norm force distribution.
    const MatX m_inv_jt = m_chol.solve(jac.transpose());
    const MatX schur = jac * m_inv_jt;
    const VecX target = constraint_rhs - jac * m_chol.solve(rhs);
    Eigen::CompleteOrthogonalDecomposition<MatX> cod(schur);
    cod.setThreshold(1e-12);
    result.contact_forces = cod.solve(target);
    result.kkt_singular = cod.rank() < nc;
    result.nudot = m_chol.solve(rhs + jac.transpose() * result.contact_forces);
    return result;
}

} // namespace

ConstrainedDynamicsResult constrained_forward_dynamics(const Kinematics& kin,
                                                       const ContactSet& contacts, const VecX& tau,
                                                       const SimConfig& config,
                                                       const VecX& position_drift) {
    const RobotModel& model = kin.model();
    if (tau.size() != model.n()) throw Error("tau dimension mismatch");
    VecX rhs = -bias_forces(model, kin.state(), config.gravity);
    rhs.tail(model.n()) += tau;
    return solve_kkt(kin, contacts, rhs, config, position_drift);
}

SeaState make_sea_state(const RobotModel& model, const FloatingBaseState& state) {
    const auto joints = sea_joints(model);
    SeaState sea;
    sea.motor_position.resize(joints.size());
    sea.motor_velocity.resize(joints.size());
    for (size_t k = 0; k < joints.size(); ++k) {
        const int qi = model.joint_q_index(joints[k]);
        sea.motor_position[k] = state.q[qi];
        sea.motor_velocity[k] = state.nu[6 + qi];
    }
    return sea;
}

StepResult step(const RobotModel& model, const FloatingBaseState& state, const VecX& tau,
                const ActiveContacts& contacts, const SimConfig& config,
                const std::optional<SeaState>& sea_state,
                const std::map<std::string, SpatialWrench>& external) {
    const Kinematics kin(model, state);
    const int n = model.n();
    const auto sea_list = sea_joints(model);
    if (sea_state && static_cast<int>(sea_list.size()) != sea_state->motor_position.size())
        throw Error("sea state dimension mismatch");

    // Link-side torques: spring force for SEA joints, commanded torque otherwise.
    VecX link_tau = tau;
    VecX spring_tau;
    if (sea_state) {
        spring_tau.resize(sea_list.size());
        for (size_t k = 0; k < sea_list.size(); ++k) {
            const int qi = model.joint_q_index(sea_list[k]);
            const auto& sea = *model.joints()[sea_list[k]].sea;
            spring_tau[k] = sea.stiffness * (sea_state->motor_position[k] - state.q[qi]) +
                            sea.damping * (sea_state->motor_velocity[k] - state.nu[6 + qi]);
            link_tau[qi] = spring_tau[k];
        }
    }

    ContactSet contact_set(kin, contacts.names);
    VecX drift;
    if (contact_set.point_count() > 0 &&
        static_cast<int>(contacts.anchors.size()) == contact_set.point_count()) {
        drift.resize(contact_set.force_dim());
        for (int i = 0; i < contact_set.point_count(); ++i)
            drift.segment<3>(3 * i) = contact_set.points()[i].position - contacts.anchors[i];
    }

    // External wrenches enter as generalized forces through the frame Jacobians.
    VecX rhs = -bias_forces(model, state, config.gravity);
    rhs.tail(n) += link_tau;
    for (const auto& [frame, wrench] : external) {
        const MatX jac = frame_jacobian(model, state, frame);
        rhs += jac.transpose() * wrench.vector();
    }

    const ConstrainedDynamicsResult dyn = solve_kkt(kin, contact_set, rhs, config, drift);
    StepResult result;
    result.contact_forces = dyn.contact_forces;
    result.nudot = dyn.nudot;
    result.kkt_singular = dyn.kkt_singular;

    // Semi-implicit Euler: velocities first, then poses with the new velocities.
    FloatingBaseState next = state;
    next.nu = state.nu + config.dt * result.nudot;
    next.base_position = state.base_position + config.dt * next.nu.head<3>();
    const Vec3 omega_dt = config.dt * next.nu.segment<3>(3);
    next.base_orientation = (quat_exp(omega_dt) * state.base_orientation).normalized();
    next.q = state.q + config.dt * next.nu.tail(n);

    if (sea_state) {
        SeaState next_sea = *sea_state;
        for (size_t k = 0; k < sea_list.size(); ++k) {
            const auto& sea = *model.joints()[sea_list[k]].sea;
            const int qi = model.joint_q_index(sea_list[k]);
            const double motor_acc = (tau[qi] - spring_tau[k]) / sea.motor_inertia;
            next_sea.motor_velocity[k] += config.dt * motor_acc;
            next_sea.motor_position[k] += config.dt * next_sea.motor_velocity[k];
        }
        result.sea = next_sea;
    }

    if (!all_finite(next.nu) || !next.base_position.allFinite() || !all_finite(next.q))
        throw Error("simulation diverged: non-finite state");

    result.state = std::move(next);
    return result;
}

double kinetic_energy(const Kinematics& kin) {
    const MatX m = mass_matrix(kin.model(), kin.state());
    return 0.5 * kin.state().nu.dot(m * kin.state().nu);
}

double potential_energy(const Kinematics& kin, const Vec3& gravity) {
    double e = 0.0;
    for (int li : kin.model().topological_order()) {
        const auto& spec = kin.model().links()[li];
        e -= spec.mass * gravity.dot(kin.link(li).com);
    }
    return e;
}

void drop_to_ground(const RobotModel& model, FloatingBaseState& state,
                    const std::vector<std::string>& contact_names) {
    if (contact_names.empty()) return;
    const Kinematics kin(model, state);
    const ContactSet contacts(kin, contact_names);
    double zmin = std::numeric_limits<double>::infinity();
    for (const auto& point : contacts.points()) zmin = std::min(zmin, point.position.z());
    if (std::isfinite(zmin)) state.base_position.z() -= zmin;
}

ScenarioResult run_scenario(const RobotModel& model, const FloatingBaseState& initial_state,
                            const ControllerHook& controller, const ScenarioScript& script,
                            const SimConfig& config, const Vec3& initial_com_reference,
                            std::optional<SeaState> sea0) {
    const int n = model.n();
    const int steps = static_cast<int>(std::llround(script.duration / config.dt));

    FloatingBaseState state = initial_state;
    std::optional<SeaState> sea = std::move(sea0);
    Vec3 com_reference = initial_com_reference;

    ActiveContacts active;
    auto anchor_contacts = [&](const std::vector<std::string>& names) {
        active.names = names;
        active.anchors.clear();
        if (names.empty()) return;
        const Kinematics kin(model, state);
        const ContactSet set(kin, names);
        for (const auto& point : set.points()) active.anchors.push_back(point.position);
    };
    anchor_contacts(script.initial_contacts);

    std::vector<TimedEvent> events = script.events;
    std::stable_sort(events.begin(), events.end(),
                     [](const TimedEvent& a, const TimedEvent& b) { return a.time < b.time; });
    size_t next_event = 0;

    std::vector<std::string> contact_names;
    for (const auto& c : model.contacts()) contact_names.push_back(c.name);

    ScenarioResult result;
    result.trajectory.dt = config.dt;
    result.trajectory.samples.reserve(steps);

    for (int k = 0; k < steps; ++k) {
        const double t = k * config.dt;

        while (next_event < events.size() && events[next_event].time <= t + 1e-12) {
            const TimedEvent& event = events[next_event++];
            std::vector<std::string> names = active.names;
            switch (event.kind) {
            case TimedEvent::Kind::kContactOn:
                if (std::find(names.begin(), names.end(), event.name) == names.end()) {
                    names.push_back(event.name);
                    anchor_contacts(names);
                }
                break;
            case TimedEvent::Kind::kContactOff:
                names.erase(std::remove(names.begin(), names.end(), event.name), names.end());
                anchor_contacts(names);
                break;
            case TimedEvent::Kind::kComReference:
                com_reference = event.value;
                break;
            }
        }

        std::map<std::string, SpatialWrench> external;
        for (const auto& push : script.pushes) {
            if (t >= push.start && t < push.start + push.duration) {
                SpatialWrench w = SpatialWrench::from_vector(push.wrench, push.frame);
                auto [it, inserted] = external.emplace(push.frame, w);
                if (!inserted) {
                    it->second.force += w.force;
                    it->second.torque += w.torque;
                }
            }
        }

        const VecX tau = controller ? controller(t, state, active, com_reference, sea) : VecX::Zero(n);

        TrajectorySample sample;
        sample.time = t;
        sample.state = state;
        sample.tau = tau;
        sample.contact_names = contact_names;
        sample.momentum = centroidal_momentum(model, state).h;
        {
            const Kinematics kin(model, state);
            sample.kinetic_energy = kinetic_energy(kin);
            sample.potential_energy = potential_energy(kin, config.gravity);
        }

        const StepResult stepped = step(model, state, tau, active, config, sea, external);

        // Per declared contact frame: total world force (vertex forces summed), zero if inactive.
        sample.contact_forces = VecX::Zero(3 * contact_names.size());
        if (stepped.contact_forces.size() > 0) {
            const Kinematics kin(model, state);
            const ContactSet set(kin, active.names);
            for (int i = 0; i < set.point_count(); ++i) {
                const std::string& point_name = set.points()[i].name;
                const std::string frame = point_name.substr(0, point_name.find('#'));
                for (size_t f = 0; f < contact_names.size(); ++f)
                    if (contact_names[f] == frame)
                        sample.contact_forces.segment<3>(3 * f) += stepped.contact_forces.segment<3>(3 * i);
            }
        }
        sample.nudot = stepped.nudot;
        result.trajectory.samples.push_back(std::move(sample));

        state = stepped.state;
        if (stepped.sea) sea = stepped.sea;
    }

    result.final_com_reference = com_reference;
    return result;
}

namespace {
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
} // namespace

std::string trajectory_csv(const RobotModel& model, const Trajectory& trajectory) {
    const int n = model.n();
    std::string out = "time";
    for (int i = 0; i < n; ++i) out += ",q" + std::to_string(i);
    out += ",quat_w,quat_x,quat_y,quat_z,pos_x,pos_y,pos_z";
    for (int i = 0; i < 6 + n; ++i) out += ",nu" + std::to_string(i);
    for (int i = 0; i < n; ++i) out += ",tau" + std::to_string(i);
    for (const auto& c : model.contacts())
        out += ",f_" + c.name + "_x,f_" + c.name + "_y,f_" + c.name + "_z";
    for (int i = 0; i < 6; ++i) out += ",H" + std::to_string(i);
    out += ",E_kin,E_pot\n";

    for (const auto& s : trajectory.samples) {
        out += fmt(s.time);
        for (int i = 0; i < n; ++i) out += "," + fmt(s.state.q[i]);
        out += "," + fmt(s.state.base_orientation.w()) + "," + fmt(s.state.base_orientation.x()) +
               "," + fmt(s.state.base_orientation.y()) + "," + fmt(s.state.base_orientation.z());
        for (int i = 0; i < 3; ++i) out += "," + fmt(s.state.base_position[i]);
        for (int i = 0; i < 6 + n; ++i) out += "," + fmt(s.state.nu[i]);
        for (int i = 0; i < n; ++i) out += "," + fmt(s.tau.size() == n ? s.tau[i] : 0.0);
        for (int i = 0; i < s.contact_forces.size(); ++i) out += "," + fmt(s.contact_forces[i]);
        for (int i = 0; i < 6; ++i) out += "," + fmt(s.momentum[i]);
        out += "," + fmt(s.kinetic_energy) + "," + fmt(s.potential_energy) + "\n";
    }
    return out;
}

} // namespace fbdyn
