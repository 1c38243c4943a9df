#include "fbdyn/scenario.hpp"

#include "fbdyn/motor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fbdyn {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    const size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

std::vector<std::string> tokens(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

double to_double(const std::string& s, int line, const std::string& what) {
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw ParseError("invalid number '" + s + "' in " + what, line);
    }
}

std::string join_path(const std::string& base, const std::string& rel) {
    if (rel.empty() || rel.front() == '/' || base.empty()) return rel;
    return base + "/" + rel;
}

} // namespace

ScenarioSpec load_scenario(const std::string& text, const std::string& base_dir) {
    ScenarioSpec spec;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (!trim(line).empty()) throw ParseError("expected 'key = value'", line_no);
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto parts = tokens(value);

        if (key == "model") {
            spec.model_path = join_path(base_dir, value);
        } else if (key == "controller") {
            if (value != "none") spec.controller_path = join_path(base_dir, value);
        } else if (key == "dt") {
            spec.sim.dt = to_double(value, line_no, "dt");
        } else if (key == "duration") {
            spec.duration = to_double(value, line_no, "duration");
            spec.script.duration = spec.duration;
        } else if (key == "seed") {
            spec.sim.seed = static_cast<std::uint64_t>(to_double(value, line_no, "seed"));
        } else if (key == "gravity") {
            if (parts.size() != 3) throw ParseError("gravity needs 3 numbers", line_no);
            for (int i = 0; i < 3; ++i) spec.sim.gravity[i] = to_double(parts[i], line_no, "gravity");
        } else if (key == "baumgarte_alpha") {
            spec.sim.baumgarte_alpha = to_double(value, line_no, key);
        } else if (key == "baumgarte_beta") {
            spec.sim.baumgarte_beta = to_double(value, line_no, key);
        } else if (key == "init_q") {
            if (parts.size() != 2) throw ParseError("init_q needs 'joint value'", line_no);
            spec.initial_q[parts[0]] = to_double(parts[1], line_no, "init_q");
        } else if (key == "init_qd") {
            if (parts.size() != 2) throw ParseError("init_qd needs 'joint value'", line_no);
            spec.initial_qd[parts[0]] = to_double(parts[1], line_no, "init_qd");
        } else if (key == "init_base_velocity") {
            if (parts.size() != 6) throw ParseError("init_base_velocity needs 6 numbers", line_no);
            for (int i = 0; i < 6; ++i)
                spec.initial_base_velocity[i] = to_double(parts[i], line_no, "init_base_velocity");
        } else if (key == "place_on_ground") {
            spec.place_on_ground = (value == "true" || value == "1");
        } else if (key == "contact") {
            spec.script.initial_contacts.push_back(value);
        } else if (key == "com_ref") {
            if (value == "auto") {
                spec.com_ref_auto = true;
            } else {
                if (parts.size() != 3) throw ParseError("com_ref needs 'auto' or 3 numbers", line_no);
                spec.com_ref_auto = false;
                for (int i = 0; i < 3; ++i) spec.com_ref[i] = to_double(parts[i], line_no, "com_ref");
            }
        } else if (key == "push") {
            if (parts.size() != 9)
                throw ParseError("push needs 'frame fx fy fz tx ty tz start duration'", line_no);
            TimedPush push;
            push.frame = parts[0];
            for (int i = 0; i < 6; ++i) push.wrench[i] = to_double(parts[1 + i], line_no, "push");
            push.start = to_double(parts[7], line_no, "push");
            push.duration = to_double(parts[8], line_no, "push");
            spec.script.pushes.push_back(push);
        } else if (key == "event") {
            if (parts.size() < 2) throw ParseError("event needs 'time kind ...'", line_no);
            TimedEvent event;
            event.time = to_double(parts[0], line_no, "event");
            if (parts[1] == "contact_on" || parts[1] == "contact_off") {
                if (parts.size() != 3) throw ParseError("contact event needs a contact name", line_no);
                event.kind = parts[1] == "contact_on" ? TimedEvent::Kind::kContactOn
                                                      : TimedEvent::Kind::kContactOff;
                event.name = parts[2];
            } else if (parts[1] == "com_ref") {
                if (parts.size() != 5) throw ParseError("com_ref event needs 3 numbers", line_no);
                event.kind = TimedEvent::Kind::kComReference;
                for (int i = 0; i < 3; ++i) event.value[i] = to_double(parts[2 + i], line_no, "event");
            } else {
                throw ParseError("unknown event kind '" + parts[1] + "'", line_no);
            }
            spec.script.events.push_back(event);
        } else if (key == "sensor") {
            if (parts.size() != 10)
                throw ParseError("sensor needs 'name joint x y z roll pitch yaw sigma_f sigma_t'", line_no);
            FtSensorSpec sensor;
            sensor.name = parts[0];
            sensor.joint = parts[1];
            for (int i = 0; i < 3; ++i) sensor.frame_xyz[i] = to_double(parts[2 + i], line_no, "sensor");
            for (int i = 0; i < 3; ++i) sensor.frame_rpy[i] = to_double(parts[5 + i], line_no, "sensor");
            sensor.noise_sigma_force = to_double(parts[8], line_no, "sensor");
            sensor.noise_sigma_torque = to_double(parts[9], line_no, "sensor");
            spec.sensors.push_back(sensor);
        } else if (key == "hypothesis") {
            if (parts.size() != 2 || (parts[1] != "force" && parts[1] != "wrench"))
                throw ParseError("hypothesis needs 'frame force|wrench'", line_no);
            ContactHypothesis hyp;
            hyp.frame = parts[0];
            hyp.kind = parts[1] == "force" ? HypothesisKind::kPureForce : HypothesisKind::kFullWrench;
            spec.hypotheses.push_back(hyp);
        } else if (key == "passive_torques") {
            if (value == "gravity_comp") spec.gravity_compensation_torques = true;
            else if (value == "zero") spec.gravity_compensation_torques = false;
            else throw ParseError("passive_torques is 'zero' or 'gravity_comp'", line_no);
        } else {
            throw ParseError("unknown key '" + key + "'", line_no);
        }
    }
    if (spec.model_path.empty()) throw ParseError("scenario declares no model", 0);
    return spec;
}

ScenarioSpec load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const size_t slash = path.find_last_of('/');
    const std::string dir = slash == std::string::npos ? std::string() : path.substr(0, slash);
    return load_scenario(buffer.str(), dir);
}

ScenarioSetup prepare_scenario(const ScenarioSpec& spec) {
    RobotModel model = load_model_file(spec.model_path);
    FloatingBaseState state = neutral_state(model);
    for (const auto& [joint, value] : spec.initial_q) {
        const int j = model.joint_index(joint);
        if (j < 0 || model.joint_q_index(j) < 0)
            throw Error("init_q names unknown or fixed joint '" + joint + "'");
        state.q[model.joint_q_index(j)] = value;
    }
    for (const auto& [joint, value] : spec.initial_qd) {
        const int j = model.joint_index(joint);
        if (j < 0 || model.joint_q_index(j) < 0)
            throw Error("init_qd names unknown or fixed joint '" + joint + "'");
        state.nu[6 + model.joint_q_index(j)] = value;
    }
    state.nu.head<6>() = spec.initial_base_velocity;
    if (spec.place_on_ground) drop_to_ground(model, state, spec.script.initial_contacts);

    Vec3 com_ref = spec.com_ref;
    if (spec.com_ref_auto) {
        const Kinematics kin(model, state);
        com_ref = kin.com();
        if (!spec.script.initial_contacts.empty()) {
            const ContactSet contacts(kin, spec.script.initial_contacts);
            Vec3 centroid = Vec3::Zero();
            for (const auto& p : contacts.points()) centroid += p.position;
            centroid /= contacts.point_count();
            com_ref.head<2>() = centroid.head<2>();
        }
    }

    ScenarioSetup setup{std::move(model), std::move(state), com_ref, std::nullopt};
    if (spec.controller_path) setup.controller = load_controller_config_file(*spec.controller_path);
    return setup;
}

std::string ScenarioSummary::to_text() const {
    std::string out;
    out += "steps " + std::to_string(steps) + "\n";
    out += "max_com_deviation " + format_double(max_com_deviation) + "\n";
    out += "min_cone_margin " + format_double(min_cone_margin) + "\n";
    out += "qp_failures " + std::to_string(qp_failures) + "\n";
    out += "wall_time_s " + format_double(wall_time_s) + "\n";
    return out;
}

namespace {

struct MotorLoopState {
    std::vector<TorqueLoopState> loops;
    VecX last_applied;
};

// Inner torque loop between the controller and the plant: per motorized joint, Eq-style PID with
// feedforward, then the exact transmission inverse as the electrical plant. Joints without motor
// parameters pass the desired torque through.
VecX apply_motor_loop(const RobotModel& model, const FloatingBaseState& state,
                      const std::optional<SeaState>& sea, const VecX& tau_desired,
                      const TorqueLoopGains& gains, double dt, MotorLoopState& motor_state) {
    const int n = model.n();
    if (motor_state.loops.empty()) {
        motor_state.loops.resize(n);
        motor_state.last_applied = tau_desired;
    }
    VecX tau_out = tau_desired;
    int sea_index = 0;
    for (int j : model.actuated_joints()) {
        const auto& joint = model.joints()[j];
        const int qi = model.joint_q_index(j);
        const bool has_sea = joint.sea.has_value();
        const int this_sea = has_sea ? sea_index++ : -1;
        if (!joint.motor) continue;

        double thetadot = state.nu[6 + qi];
        double tau_measured = motor_state.last_applied[qi];
        if (has_sea && sea) {
            thetadot = sea->motor_velocity[this_sea];
            tau_measured = joint.sea->stiffness * (sea->motor_position[this_sea] - state.q[qi]);
        }
        const double v = control_voltage(joint.motor->params, gains, motor_state.loops[qi],
                                         tau_desired[qi], tau_measured, thetadot, dt);
        tau_out[qi] = (v - model_voltage(joint.motor->params, 0.0, thetadot)) / joint.motor->params.k_t;
    }
    motor_state.last_applied = tau_out;
    return tau_out;
}

} // namespace

SimulateOutput simulate_scenario(const ScenarioSpec& spec) {
    const auto t_start = std::chrono::steady_clock::now();
    ScenarioSetup setup = prepare_scenario(spec);
    const RobotModel& model = setup.model;
    const int n = model.n();

    ScenarioSummary summary;
    std::string diag_csv = "time,status,qp_iterations,cone_margin,dynamics_residual,contact_residual";
    for (int i = 0; i < 6; ++i) diag_csv += ",hdot_des" + std::to_string(i);
    for (int i = 0; i < 6; ++i) diag_csv += ",hdot_achieved" + std::to_string(i);
    diag_csv += "\n";

    PosturalTask task;
    task.q_desired = setup.initial_state.q;
    ControllerConfig config;
    if (setup.controller) {
        config = *setup.controller;
        task.kp = VecX::Constant(n, config.kp_post);
        task.kd = VecX::Constant(n, config.kd_post);
    }

    MotorLoopState motor_state;
    ControllerHook hook;
    if (setup.controller) {
        hook = [&](double t, const FloatingBaseState& state, const ActiveContacts& active,
                   const Vec3& com_ref, const std::optional<SeaState>& sea) -> VecX {
            const Kinematics kin(model, state);
            const ContactSet contacts(kin, active.names);
            StepDiagnostics diag;
            VecX tau = control_step(kin, contacts, com_ref, task, config, &diag, spec.sim.gravity);
            if (diag.status != StepStatus::kOptimal) ++summary.qp_failures;
            if (contacts.point_count() > 0 && diag.f_star.size() > 0)
                summary.min_cone_margin = std::min(summary.min_cone_margin, diag.cone_margin);

            diag_csv += format_double(t);
            diag_csv += "," + std::to_string(static_cast<int>(diag.status));
            diag_csv += "," + std::to_string(diag.qp_iterations);
            diag_csv += "," + format_double(diag.cone_margin);
            diag_csv += "," + format_double(diag.dynamics_residual);
            diag_csv += "," + format_double(diag.contact_residual);
            for (int i = 0; i < 6; ++i) diag_csv += "," + format_double(diag.hdot_desired[i]);
            for (int i = 0; i < 6; ++i) diag_csv += "," + format_double(diag.achieved_hdot[i]);
            diag_csv += "\n";

            if (config.use_motor_loop)
                tau = apply_motor_loop(model, state, sea, tau, config.motor_gains, spec.sim.dt,
                                       motor_state);
            return tau;
        };
    } else if (spec.gravity_compensation_torques) {
        hook = [&](double, const FloatingBaseState& state, const ActiveContacts&, const Vec3&,
                   const std::optional<SeaState>&) -> VecX {
            return gravity_forces(model, state, spec.sim.gravity).tail(n);
        };
    }

    summary.min_cone_margin = std::numeric_limits<double>::infinity();

    std::optional<SeaState> sea0;
    for (int j : model.actuated_joints())
        if (model.joints()[j].sea) {
            sea0 = make_sea_state(model, setup.initial_state);
            break;
        }

    const ScenarioResult run = run_scenario(model, setup.initial_state, hook, spec.script, spec.sim,
                                            setup.com_reference, sea0);

    // Post-pass: CoM deviation vs the reference and the sim-side cone margins.
    for (const auto& sample : run.trajectory.samples) {
        const Kinematics kin(model, sample.state);
        const Vec3 com = kin.com();
        summary.max_com_deviation =
            std::max(summary.max_com_deviation, (com.head<2>() - setup.com_reference.head<2>()).norm());
        for (size_t f = 0; f < sample.contact_names.size(); ++f) {
            const Vec3 force = sample.contact_forces.segment<3>(3 * f);
            if (force.norm() < 1e-12) continue;
            const int ci = model.contact_index(sample.contact_names[f]);
            const auto& cf = model.contacts()[ci];
            const Pose pose = kin.frame_pose(cf.name);
            const Vec3 normal = pose.rotation.col(2);
            const double fn = normal.dot(force);
            const Vec3 ft = force - fn * normal;
            const double margin = cf.mu * std::cos(M_PI / cf.cone_facets) * fn - ft.norm();
            summary.min_cone_margin = std::min(summary.min_cone_margin, std::min(margin, fn));
        }
    }
    if (!std::isfinite(summary.min_cone_margin)) summary.min_cone_margin = 0.0;
    summary.steps = static_cast<int>(run.trajectory.samples.size());
    summary.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    SimulateOutput out;
    out.trajectory = run.trajectory;
    out.summary = summary;
    out.controller_diag_csv = std::move(diag_csv);
    return out;
}

EstimateOutput estimate_scenario(const ScenarioSpec& spec) {
    if (spec.sensors.empty()) throw Error("estimate scenario declares no FT sensors");
    if (spec.hypotheses.empty()) throw Error("estimate scenario declares no contact hypothesis");

    SimulateOutput sim = simulate_scenario(spec);
    ScenarioSetup setup = prepare_scenario(spec);
    const RobotModel& model = setup.model;
    const int n = model.n();

    EstimateOutput out;
    out.sensor_trace_csv = "time,sensor,fx,fy,fz,tx,ty,tz\n";
    out.estimation_csv = "time";
    for (const char* axis : {"x", "y", "z"}) out.estimation_csv += std::string(",f_true_") + axis;
    for (const char* axis : {"x", "y", "z"}) out.estimation_csv += std::string(",t_true_") + axis;
    for (const char* axis : {"x", "y", "z"}) out.estimation_csv += std::string(",f_est_") + axis;
    for (const char* axis : {"x", "y", "z"}) out.estimation_csv += std::string(",t_est_") + axis;
    for (int i = 0; i < n; ++i) out.estimation_csv += ",tau_true" + std::to_string(i);
    for (int i = 0; i < n; ++i) out.estimation_csv += ",tau_hat" + std::to_string(i);
    out.estimation_csv += "\n";

    const ContactHypothesis& hypothesis = spec.hypotheses.front();
    std::uint64_t step_index = 0;
    for (const auto& sample : sim.trajectory.samples) {
        // True externals at this step: the scripted pushes in their active window.
        std::map<std::string, SpatialWrench> true_externals;
        for (const auto& push : spec.script.pushes) {
            if (sample.time >= push.start && sample.time < push.start + push.duration) {
                SpatialWrench w = SpatialWrench::from_vector(push.wrench, push.frame);
                auto [it, inserted] = true_externals.emplace(push.frame, w);
                if (!inserted) {
                    it->second.force += w.force;
                    it->second.torque += w.torque;
                }
            }
        }

        std::map<std::string, Vec6> readings;
        for (const auto& sensor : spec.sensors) {
            const std::uint64_t seed =
                spec.sim.seed * 0x9e3779b97f4a7c15ull + step_index * 1000003ull +
                std::hash<std::string>{}(sensor.name);
            const Vec6 reading = synthesize_ft_reading(model, sample.state, sample.nudot,
                                                       true_externals, sensor, seed, spec.sim.gravity);
            readings[sensor.name] = reading;
            out.sensor_trace_csv += format_double(sample.time) + "," + sensor.name;
            for (int i = 0; i < 6; ++i) out.sensor_trace_csv += "," + format_double(reading[i]);
            out.sensor_trace_csv += "\n";
        }

        const EstimationResult est = estimate(model, sample.state, sample.nudot, spec.sensors,
                                              readings, spec.hypotheses, spec.sim.gravity);

        EstimationRow row;
        row.time = sample.time;
        const auto true_it = true_externals.find(hypothesis.frame);
        if (true_it != true_externals.end()) row.true_wrench = true_it->second.vector();
        for (const auto& west : est.wrenches)
            if (west.frame == hypothesis.frame) row.estimated_wrench = west.wrench.vector();
        row.tau_true = sample.tau;
        row.tau_hat = est.tau_hat;
        out.max_wrench_error =
            std::max(out.max_wrench_error, (row.estimated_wrench - row.true_wrench).cwiseAbs().maxCoeff());
        if (row.tau_true.size() == n)
            out.max_tau_error =
                std::max(out.max_tau_error, (row.tau_hat - row.tau_true).cwiseAbs().maxCoeff());

        out.estimation_csv += format_double(row.time);
        for (int i = 0; i < 6; ++i) out.estimation_csv += "," + format_double(row.true_wrench[i]);
        for (int i = 0; i < 6; ++i) out.estimation_csv += "," + format_double(row.estimated_wrench[i]);
        for (int i = 0; i < n; ++i)
            out.estimation_csv += "," + format_double(row.tau_true.size() == n ? row.tau_true[i] : 0.0);
        for (int i = 0; i < n; ++i) out.estimation_csv += "," + format_double(row.tau_hat[i]);
        out.estimation_csv += "\n";
        out.rows.push_back(std::move(row));
        ++step_index;
    }
    return out;
}

} // namespace fbdyn
