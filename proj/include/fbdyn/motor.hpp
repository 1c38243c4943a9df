#pragma once

#include "fbdyn/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fbdyn {

// Transmission model coefficients: V = k_t*tau + viscous + Coulomb, with separate viscous and
// Coulomb coefficients for positive and negative rotation.
struct MotorModelParams {
    double k_t = 1.0;  // V/(N*m)
    double k_vp = 0.0; // V*s/rad, viscous, positive rotation
    double k_vn = 0.0; // V*s/rad, viscous, negative rotation
    double k_cp = 0.0; // V, Coulomb, positive rotation
    double k_cn = 0.0; // V, Coulomb, negative rotation
};

struct TorqueLoopGains {
    double k_p = 1.0;             // proportional gain on torque error
    double k_i = 0.0;             // 1/s, integral gain
    double k_s = 50.0;            // s/rad, tanh sharpness for the smoothed sign
    double integral_limit = 10.0; // N*m*s, hard clamp on the error integral
    double v_max = 24.0;          // V, output saturation
};

struct TorqueLoopState {
    double error_integral = 0.0; // N*m*s
    double last_voltage = 0.0;   // V
};

// Unit step with s(0) = 0, and sign with sign(0) = 0. Both branches vanish at zero velocity, so
// the model voltage at (tau=0, thetadot=0) is exactly zero.
inline double unit_step(double x) { return x > 0.0 ? 1.0 : 0.0; }
inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Open-loop transmission model: voltage required to produce torque tau at motor velocity thetadot.
double model_voltage(const MotorModelParams& params, double tau, double thetadot);

// One step of the inner torque loop: PID on the torque error plus the transmission-model
// feedforward, with the Coulomb term smoothed by tanh(k_s * thetadot). The integral is clamped
// and frozen while the output saturates.
double control_voltage(const MotorModelParams& params, const TorqueLoopGains& gains,
                       TorqueLoopState& loop_state, double tau_desired, double tau_measured,
                       double thetadot, double dt);

struct MotorSample {
    double voltage = 0.0;  // V
    double tau = 0.0;      // N*m
    double thetadot = 0.0; // rad/s
};

struct MotorFitReport {
    MotorModelParams params;
    double std_err[5] = {0, 0, 0, 0, 0}; // k_t, k_vp, k_vn, k_cp, k_cn
    double r_squared = 0.0;
    int sample_count = 0;
    std::string to_text() const;
};

struct IdentificationError : Error {
    explicit IdentificationError(std::vector<std::string> params_)
        : Error(format(params_)), unexcited(std::move(params_)) {}
    std::vector<std::string> unexcited;

private:
    static std::string format(const std::vector<std::string>& p) {
        std::string out = "identification regressor rank-deficient; unexcited:";
        for (const auto& name : p) out += " " + name;
        return out;
    }
};

// Linear least squares on the transmission model. Throws IdentificationError naming the
// parameters whose regressor columns are unexcited or collinear.
MotorFitReport identify(const std::vector<MotorSample>& dataset);

} // namespace fbdyn
