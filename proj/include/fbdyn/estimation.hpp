#pragma once

#include "fbdyn/dynamics.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fbdyn {

// Six-axis FT sensor embedded at a joint: it cuts the tree between the joint's parent side and
// child side. Measurement convention: wrench exerted by the parent side on the child side,
// expressed in the measurement frame (force and torque about the frame origin, frame axes).
struct FtSensorSpec {
    std::string name;
    std::string joint; // the cut
    Vec3 frame_xyz = Vec3::Zero(); // measurement frame in the child link frame
    Vec3 frame_rpy = Vec3::Zero();
    double noise_sigma_force = 0.0;  // N per axis, synthetic data only
    double noise_sigma_torque = 0.0; // N*m per axis

    Pose frame() const { return Pose{rpy_to_rotation(frame_rpy), frame_xyz}; }
};

enum class HypothesisKind { kPureForce, kFullWrench };

struct ContactHypothesis {
    std::string frame; // link or contact frame carrying the hypothesized external wrench
    HypothesisKind kind = HypothesisKind::kPureForce;
};

struct WrenchEstimate {
    std::string frame;
    HypothesisKind kind;
    SpatialWrench wrench;   // world axes, torque about the hypothesis frame origin
    bool degenerate = false; // least-squares was near-singular; pseudo-inverse solution
};

struct EstimationResult {
    VecX tau_hat; // n
    std::vector<WrenchEstimate> wrenches;
    // Per sensor: child-side sub-model mismatch left unexplained by the estimates, world axes,
    // torque about the hypothesis point when one exists (else the sub-model root origin).
    std::map<std::string, Vec6> residuals;
};

// Simultaneous estimation of external wrenches and joint torques. Newton-Euler runs through each
// sensor-delimited sub-model with the measured wrench as boundary condition; the mismatch at the
// hypothesis frame yields the external wrench estimate (exact for full-wrench hypotheses,
// least-squares for pure-force); a final inward recursion including the estimates yields the
// joint torques.
EstimationResult estimate(const RobotModel& model, const FloatingBaseState& state,
                          const VecX& nudot, const std::vector<FtSensorSpec>& sensors,
                          const std::map<std::string, Vec6>& measurements,
                          const std::vector<ContactHypothesis>& hypotheses,
                          const Vec3& gravity = kDefaultGravity);

// Exact RNEA-internal wrench at the sensor cut for the given motion and externals, plus Gaussian
// noise of the declared sigma. Deterministic for a given seed.
Vec6 synthesize_ft_reading(const RobotModel& model, const FloatingBaseState& state,
                           const VecX& nudot, const std::map<std::string, SpatialWrench>& external,
                           const FtSensorSpec& sensor, std::uint64_t seed,
                           const Vec3& gravity = kDefaultGravity);

} // namespace fbdyn
