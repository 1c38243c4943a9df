#pragma once

#include "fbdyn/dynamics.hpp"
#include "fbdyn/qp.hpp"

#include <string>
#include <vector>

namespace fbdyn {

struct MomentumReference {
    Vec6 hdot_desired = Vec6::Zero(); // N / N*m about the CoM
};

struct MomentumGains {
    Vec3 kp_com = Vec3::Constant(50.0);  // 1/s^2
    Vec3 kd_com = Vec3::Constant(15.0);  // 1/s
    Vec3 k_angular = Vec3::Constant(5.0); // 1/s, damping on angular momentum
    // Optional lean-catching terms folded into the horizontal linear reference. On supports
    // with no fore-aft width the contact torque is slaved to the tangential force, so base
    // attitude can only be stabilized through CoM motion (cart-pole style); these gains map the
    // base tilt and the horizontal angular momentum into a catching CoM acceleration. Zero
    // reproduces the plain PD-plus-damping law.
    double kp_lean = 0.0; // 1/s^2 per rad of tilt
    double kd_lean = 0.0; // 1/(kg*m*s), applied to the angular momentum
    Quat attitude_reference = Quat::Identity();
};

struct PosturalTask {
    VecX q_desired;
    VecX kp; // per joint, >= 0
    VecX kd;
};

// PD on the CoM for the linear part, pure damping of the angular momentum. The generation law is
// an extension point; the optimization below consumes any finite hdot_desired.
MomentumReference momentum_reference(const Kinematics& kin, const Vec3& com_desired,
                                     const Vec3& com_velocity_desired, const MomentumGains& gains);

struct ContactForceResult {
    QpStatus status = QpStatus::kOptimal;
    VecX forces;          // stacked per point, world
    Vec6 achieved_hdot;   // X f + [m g; 0]
    double cone_margin = 0.0;
    int qp_iterations = 0;
};

// Momentum-rate QP: minimize |hdot_desired - X f - [m g; 0]|^2 + lambda |f|^2 subject to the
// linearized friction cones and normal-force positivity. lambda > 0 makes the Hessian strictly
// convex with redundant contacts; lambda = 0 is allowed when X has full column rank.
ContactForceResult solve_contact_forces(const Vec6& hdot_desired, const ContactSet& contacts,
                                        double total_mass, const Vec3& gravity, double lambda,
                                        const QpSettings& settings = {});

// phi = g_joint(q) - Kp (q - q_des) - Kd qdot: gravity compensation plus a PD toward the posture.
VecX postural_term(const RobotModel& model, const FloatingBaseState& state,
                   const PosturalTask& task, const Vec3& gravity = kDefaultGravity);

struct TorqueSelectionResult {
    bool feasible = false;
    VecX tau;
    VecX nudot;
    double dynamics_residual = 0.0; // max-norm of M nudot + h - B tau - J^T f*
    double contact_residual = 0.0;  // max-norm of J nudot + Jdot nu
};

// Equality-constrained least squares: minimize |tau - phi|^2 subject to the full floating-base
// dynamics with f = f_star and the contact acceleration constraint J nudot + Jdot nu = 0. The
// constraint system can be rank-deficient or inconsistent; it is solved by a rank-revealing
// factorization and the solve is rejected (feasible = false) when the constraint residual
// exceeds residual_tolerance. No constraint is silently relaxed.
TorqueSelectionResult solve_torques(const Kinematics& kin, const ContactSet& contacts,
                                    const VecX& f_star, const VecX& phi,
                                    const Vec3& gravity = kDefaultGravity,
                                    double residual_tolerance = 1e-8);

struct ControllerConfig {
    MomentumGains momentum;
    double kp_post = 20.0;
    double kd_post = 2.0;
    double lambda_reg = 1e-6;
    int cone_facets = 8; // informational; facet count lives on the contact frames
    double qp_tolerance = 1e-9;
    int qp_max_iterations = 200;
    double residual_tolerance = 1e-8;
    bool use_motor_loop = false;
    TorqueLoopGains motor_gains;
};

ControllerConfig load_controller_config(const std::string& text);
ControllerConfig load_controller_config_file(const std::string& path);

enum class StepStatus { kOptimal, kFallbackContactQp, kFallbackTorqueStage };

struct StepDiagnostics {
    StepStatus status = StepStatus::kOptimal;
    Vec6 hdot_desired = Vec6::Zero();
    Vec6 achieved_hdot = Vec6::Zero();
    VecX f_star;
    double cone_margin = 0.0;
    double dynamics_residual = 0.0;
    double contact_residual = 0.0;
    int qp_iterations = 0;
    double wall_time_s = 0.0; // excluded from CSV serialization to keep runs byte-reproducible
};

// One pass of the two-level controller: momentum reference -> contact-force QP -> postural term
// -> torque selection. The contact-force stage is solved first and enters the torque stage as a
// hard equality; on any stage failure the gravity-compensation fallback torque is returned with
// a flagged status.
VecX control_step(const Kinematics& kin, const ContactSet& contacts, const Vec3& com_desired,
                  const PosturalTask& task, const ControllerConfig& config,
                  StepDiagnostics* diagnostics = nullptr, const Vec3& gravity = kDefaultGravity);

} // namespace fbdyn
