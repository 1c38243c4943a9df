#pragma once

#include "fbdyn/dynamics.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fbdyn {

struct SimConfig {
    double dt = 1e-3;
    Vec3 gravity = kDefaultGravity;
    double baumgarte_alpha = 10.0; // 1/s, velocity-level stabilization
    double baumgarte_beta = 10.0;  // 1/s, position-level stabilization
    std::uint64_t seed = 0;
};

// Motor-side state of the series elastic joints: positions and velocities reflected at the link
// side. Deflection (theta_m - q) times stiffness is the transmitted joint torque.
struct SeaState {
    VecX motor_position; // rad, one entry per SEA joint in actuated order
    VecX motor_velocity; // rad/s
};

// Anchored bilateral contacts for the stance phases. Anchors are the world positions recorded at
// activation; Baumgarte terms drive the points back to them.
struct ActiveContacts {
    std::vector<std::string> names;
    std::vector<Vec3> anchors; // one per compiled contact point, in activation order
};

struct ConstrainedDynamicsResult {
    VecX nudot;
    VecX contact_forces; // stacked per point, world axes
    bool kkt_singular = false; // redundant contacts, solved by a minimum-norm factorization
};

// Solves [M  -J^T; J  0] [nudot; f] = [B tau - C nu - g; -Jdot nu - stabilization].
// Stabilization is 2*alpha*J*nu + beta^2*(position drift vs anchors); pass drift empty to
// disable the position term.
ConstrainedDynamicsResult constrained_forward_dynamics(const Kinematics& kin,
                                                       const ContactSet& contacts, const VecX& tau,
                                                       const SimConfig& config,
                                                       const VecX& position_drift = VecX());

struct StepResult {
    FloatingBaseState state;
    std::optional<SeaState> sea;
    VecX contact_forces;
    VecX nudot;
    bool kkt_singular = false;
};

// Semi-implicit Euler step. tau holds motor torques for SEA joints (their link-side torque is
// the spring force) and direct joint torques otherwise. External wrenches are applied at named
// frames on top of the contact forces. Throws Error when the state leaves the finite range.
StepResult step(const RobotModel& model, const FloatingBaseState& state, const VecX& tau,
                const ActiveContacts& contacts, const SimConfig& config,
                const std::optional<SeaState>& sea_state = std::nullopt,
                const std::map<std::string, SpatialWrench>& external = {});

SeaState make_sea_state(const RobotModel& model, const FloatingBaseState& state);

struct TrajectorySample {
    double time = 0.0;
    FloatingBaseState state;
    VecX tau;
    VecX contact_forces;          // stacked over the declared contact frames (zero when inactive)
    std::vector<std::string> contact_names;
    Vec6 momentum = Vec6::Zero();
    double kinetic_energy = 0.0;
    double potential_energy = 0.0;
    VecX nudot;
};

struct Trajectory {
    double dt = 0.0;
    std::vector<TrajectorySample> samples;
};

struct TimedPush {
    std::string frame;
    Vec6 wrench = Vec6::Zero();
    double start = 0.0;
    double duration = 0.0;
};

struct TimedEvent {
    double time = 0.0;
    enum class Kind { kContactOn, kContactOff, kComReference } kind = Kind::kComReference;
    std::string name;
    Vec3 value = Vec3::Zero();
};

struct ScenarioScript {
    double duration = 5.0;
    std::vector<std::string> initial_contacts;
    std::vector<TimedPush> pushes;
    std::vector<TimedEvent> events;
};

// Controller hook: maps (time, state, active contacts, current CoM reference, SEA state when the
// model has series elastic joints) to joint torques (motor torques for SEA joints).
using ControllerHook =
    std::function<VecX(double, const FloatingBaseState&, const ActiveContacts&,
                       const Vec3& com_reference, const std::optional<SeaState>&)>;

struct ScenarioResult {
    Trajectory trajectory;
    Vec3 final_com_reference = Vec3::Zero();
};

// Fixed-step loop: controller hook, pushes and timed events, then one integrator step; the
// trajectory records every step. Bit-deterministic for a fixed config and script.
ScenarioResult run_scenario(const RobotModel& model, const FloatingBaseState& initial_state,
                            const ControllerHook& controller, const ScenarioScript& script,
                            const SimConfig& config, const Vec3& initial_com_reference = Vec3::Zero(),
                            std::optional<SeaState> sea0 = std::nullopt);

double kinetic_energy(const Kinematics& kin);
double potential_energy(const Kinematics& kin, const Vec3& gravity = kDefaultGravity);

// Places the base so that the lowest active contact point sits at z = 0.
void drop_to_ground(const RobotModel& model, FloatingBaseState& state,
                    const std::vector<std::string>& contact_names);

std::string trajectory_csv(const RobotModel& model, const Trajectory& trajectory);

} // namespace fbdyn
