#include "fbdyn/wbc.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace fbdyn {

MomentumReference momentum_reference(const Kinematics& kin, const Vec3& com_desired,
                                     const Vec3& com_velocity_desired, const MomentumGains& gains) {
    MomentumReference ref;
    const double mass = kin.total_mass();
    const Vec3 com_error = com_desired - kin.com();
    const Vec3 vel_error = com_velocity_desired - kin.com_velocity();
    ref.hdot_desired.head<3>() =
        mass * (gains.kp_com.cwiseProduct(com_error) + gains.kd_com.cwiseProduct(vel_error));
    const CentroidalMomentum h = centroidal_momentum(kin.model(), kin.state());
    ref.hdot_desired.tail<3>() = -gains.k_angular.cwiseProduct(h.h.tail<3>());
    if (gains.kp_lean != 0.0 || gains.kd_lean != 0.0) {
        const Mat3 error = kin.state().base_orientation.toRotationMatrix() *
                           gains.attitude_reference.toRotationMatrix().transpose();
        const Vec3 tilt = rotation_log(error);
        // Tilt about +y leans the body toward +x; catch by accelerating the CoM the same way.
        const Vec3 catch_tilt(tilt.y(), -tilt.x(), 0.0);
        const Vec3 catch_rate(h.h[4], -h.h[3], 0.0);
        ref.hdot_desired.head<3>() +=
            mass * gains.kp_lean * catch_tilt + gains.kd_lean * catch_rate;
    }
    return ref;
}

ContactForceResult solve_contact_forces(const Vec6& hdot_desired, const ContactSet& contacts,
                                        double total_mass, const Vec3& gravity, double lambda,
                                        const QpSettings& settings) {
    if (contacts.point_count() == 0) throw Error("solve_contact_forces: empty contact set");
    const int dim = contacts.force_dim();
    const MatX& x_map = contacts.centroidal_map();

    Vec6 gravity_wrench = Vec6::Zero();
    gravity_wrench.head<3>() = total_mass * gravity;
    const Vec6 target = hdot_desired - gravity_wrench;

    QpProblem qp;
    qp.hessian = x_map.transpose() * x_map + lambda * MatX::Identity(dim, dim);
    qp.gradient = -x_map.transpose() * target;
    qp.a_in = contacts.cone_rows();
    qp.b_in = VecX::Zero(qp.a_in.rows());

    // A unit normal force per contact is strictly inside every cone; with that start and
    // lambda >= 0 the QP cannot be infeasible.
    const VecX start = contacts.interior_forces();
    QpSettings qp_settings = settings;
    qp_settings.initial_point = &start;
    const QpSolution sol = solve_qp(qp, qp_settings);

    ContactForceResult result;
    result.status = sol.status;
    result.qp_iterations = sol.iterations;
    result.forces = sol.x;
    if (sol.x.size() == dim) {
        result.achieved_hdot = x_map * sol.x + gravity_wrench;
        result.cone_margin = contacts.cone_margin(sol.x);
    }
    return result;
}

VecX postural_term(const RobotModel& model, const FloatingBaseState& state,
                   const PosturalTask& task, const Vec3& gravity) {
    const int n = model.n();
    if (task.q_desired.size() != n || task.kp.size() != n || task.kd.size() != n)
        throw Error("postural task dimensions do not match the model");
    const VecX g_joint = gravity_forces(model, state, gravity).tail(n);
    return g_joint - task.kp.cwiseProduct(state.q - task.q_desired) -
           task.kd.cwiseProduct(state.nu.tail(n));
}

TorqueSelectionResult solve_torques(const Kinematics& kin, const ContactSet& contacts,
                                    const VecX& f_star, const VecX& phi, const Vec3& gravity,
                                    double residual_tolerance) {
    const RobotModel& model = kin.model();
    const int n = model.n();
    const int nv = 6 + n;
    const int nc = contacts.force_dim();
    if (f_star.size() != nc) throw Error("f_star dimension mismatch");
    if (phi.size() != n) throw Error("phi dimension mismatch");

    const MatX m = mass_matrix(model, kin.state());
    const VecX h = bias_forces(model, kin.state(), gravity);
    const MatX& jac = contacts.jacobian();

    // Unknowns x = (tau, nudot). Constraints:
    //   -B tau + M nudot = J^T f* - h        (floating-base dynamics, f fixed)
    //          J nudot   = -Jdot nu          (contact points keep zero acceleration)
    const int rows = nv + nc;
    MatX c = MatX::Zero(rows, n + nv);
    VecX d = VecX::Zero(rows);
    c.block(6, 0, n, n) = -MatX::Identity(n, n); // B = [0; I]
    c.block(0, n, nv, nv) = m;
    d.head(nv) = -h;
    if (nc > 0) {
        d.head(nv) += jac.transpose() * f_star;
        c.block(nv, n, nc, nv) = jac;
        d.tail(nc) = -contacts.bias();
    }

    // Minimum-norm solution of the (possibly rank-deficient) constraint system, then the
    // postural objective over its null space.
    Eigen::CompleteOrthogonalDecomposition<MatX> cod(c);
    const VecX x_particular = cod.solve(d);
    const VecX constraint_residual = c * x_particular - d;

    TorqueSelectionResult result;
    const double residual_norm = constraint_residual.cwiseAbs().maxCoeff();
    if (residual_norm > residual_tolerance) {
        result.feasible = false;
        result.tau = x_particular.head(n);
        result.nudot = x_particular.tail(nv);
        result.dynamics_residual = constraint_residual.head(nv).cwiseAbs().maxCoeff();
        result.contact_residual = nc > 0 ? constraint_residual.tail(nc).cwiseAbs().maxCoeff() : 0.0;
        return result;
    }

    VecX x = x_particular;
    Eigen::FullPivLU<MatX> lu(c);
    lu.setThreshold(1e-10);
    const MatX kernel = lu.kernel();
    const bool has_null_space = lu.dimensionOfKernel() > 0 && kernel.cols() > 0 && kernel.norm() > 0;
    if (has_null_space) {
        const MatX tau_directions = kernel.topRows(n);
        const VecX tau_error = phi - x_particular.head(n);
        const VecX y =
            MatX(tau_directions).completeOrthogonalDecomposition().solve(tau_error);
        x += kernel * y;
    }

    result.feasible = true;
    result.tau = x.head(n);
    result.nudot = x.tail(nv);
    const VecX final_residual = c * x - d;
    result.dynamics_residual = final_residual.head(nv).cwiseAbs().maxCoeff();
    result.contact_residual = nc > 0 ? final_residual.tail(nc).cwiseAbs().maxCoeff() : 0.0;
    if (std::max(result.dynamics_residual, result.contact_residual) > residual_tolerance)
        result.feasible = false;
    return result;
}

VecX control_step(const Kinematics& kin, const ContactSet& contacts, const Vec3& com_desired,
                  const PosturalTask& task, const ControllerConfig& config,
                  StepDiagnostics* diagnostics, const Vec3& gravity) {
    const auto t_start = std::chrono::steady_clock::now();
    const RobotModel& model = kin.model();
    const int n = model.n();
    const VecX fallback = gravity_forces(model, kin.state(), gravity).tail(n);

    StepDiagnostics local;
    StepDiagnostics& diag = diagnostics ? *diagnostics : local;
    diag = StepDiagnostics{};

    auto finish = [&](const VecX& tau) {
        diag.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return tau;
    };

    const MomentumReference ref =
        momentum_reference(kin, com_desired, Vec3::Zero(), config.momentum);
    diag.hdot_desired = ref.hdot_desired;

    if (contacts.point_count() == 0) {
        // Contact-free: the torque stage alone (no force stage to run).
        const VecX phi = postural_term(model, kin.state(), task, gravity);
        const TorqueSelectionResult torques = solve_torques(kin, contacts, VecX(), phi, gravity,
                                                            config.residual_tolerance);
        diag.dynamics_residual = torques.dynamics_residual;
        if (!torques.feasible) {
            diag.status = StepStatus::kFallbackTorqueStage;
            return finish(fallback);
        }
        return finish(torques.tau);
    }

    QpSettings qp_settings;
    qp_settings.tolerance = config.qp_tolerance;
    qp_settings.max_iterations = config.qp_max_iterations;
    const ContactForceResult forces = solve_contact_forces(
        ref.hdot_desired, contacts, kin.total_mass(), gravity, config.lambda_reg, qp_settings);
    diag.qp_iterations = forces.qp_iterations;
    if (forces.status != QpStatus::kOptimal) {
        diag.status = StepStatus::kFallbackContactQp;
        return finish(fallback);
    }
    diag.f_star = forces.forces;
    diag.achieved_hdot = forces.achieved_hdot;
    diag.cone_margin = forces.cone_margin;

    const VecX phi = postural_term(model, kin.state(), task, gravity);
    const TorqueSelectionResult torques =
        solve_torques(kin, contacts, forces.forces, phi, gravity, config.residual_tolerance);
    diag.dynamics_residual = torques.dynamics_residual;
    diag.contact_residual = torques.contact_residual;
    if (!torques.feasible) {
        diag.status = StepStatus::kFallbackTorqueStage;
        return finish(fallback);
    }
    diag.status = StepStatus::kOptimal;
    return finish(torques.tau);
}

namespace {

double parse_value(const std::string& value, const std::string& key) {
    try {
        return std::stod(value);
    } catch (const std::exception&) {
        throw Error("controller config: invalid number for '" + key + "'");
    }
}

} // namespace

ControllerConfig load_controller_config(const std::string& text) {
    ControllerConfig config;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t\r");
            const size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) continue;

        if (key == "kp_com") config.momentum.kp_com.setConstant(parse_value(value, key));
        else if (key == "kd_com") config.momentum.kd_com.setConstant(parse_value(value, key));
        else if (key == "k_momentum_angular") config.momentum.k_angular.setConstant(parse_value(value, key));
        else if (key == "kp_lean") config.momentum.kp_lean = parse_value(value, key);
        else if (key == "kd_lean") config.momentum.kd_lean = parse_value(value, key);
        else if (key == "kp_post") config.kp_post = parse_value(value, key);
        else if (key == "kd_post") config.kd_post = parse_value(value, key);
        else if (key == "lambda_reg") config.lambda_reg = parse_value(value, key);
        else if (key == "cone_facets") config.cone_facets = static_cast<int>(parse_value(value, key));
        else if (key == "qp_tolerance") config.qp_tolerance = parse_value(value, key);
        else if (key == "qp_max_iter") config.qp_max_iterations = static_cast<int>(parse_value(value, key));
        else if (key == "residual_tolerance") config.residual_tolerance = parse_value(value, key);
        else if (key == "use_motor_loop") config.use_motor_loop = (value == "true" || value == "1");
        else if (key == "motor_kp") config.motor_gains.k_p = parse_value(value, key);
        else if (key == "motor_ki") config.motor_gains.k_i = parse_value(value, key);
        else if (key == "motor_ks") config.motor_gains.k_s = parse_value(value, key);
        else if (key == "motor_vmax") config.motor_gains.v_max = parse_value(value, key);
        else if (key == "motor_integral_limit") config.motor_gains.integral_limit = parse_value(value, key);
        else if (key == "fallback") { /* gravity_comp is the only policy */ }
        else throw Error("controller config: unknown key '" + key + "' (line " + std::to_string(line_no) + ")");
    }
    return config;
}

ControllerConfig load_controller_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open controller config '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return load_controller_config(buffer.str());
}

} // namespace fbdyn
