#include "fbdyn/motor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace fbdyn {

double model_voltage(const MotorModelParams& params, double tau, double thetadot) {
    const double viscous =
        (params.k_vp * unit_step(thetadot) + params.k_vn * unit_step(-thetadot)) * thetadot;
    const double coulomb =
        (params.k_cp * unit_step(thetadot) + params.k_cn * unit_step(-thetadot)) * sign0(thetadot);
    return params.k_t * tau + viscous + coulomb;
}

double control_voltage(const MotorModelParams& params, const TorqueLoopGains& gains,
                       TorqueLoopState& loop_state, double tau_desired, double tau_measured,
                       double thetadot, double dt) {
    const double error = tau_measured - tau_desired;
    const double trial_integral =
        std::clamp(loop_state.error_integral + error * dt, -gains.integral_limit, gains.integral_limit);

    const double viscous =
        (params.k_vp * unit_step(thetadot) + params.k_vn * unit_step(-thetadot)) * thetadot;
    const double coulomb = (params.k_cp * unit_step(thetadot) + params.k_cn * unit_step(-thetadot)) *
                           std::tanh(gains.k_s * thetadot);

    const double unsaturated =
        params.k_t * (tau_desired - gains.k_p * error - gains.k_i * trial_integral) + viscous + coulomb;

    double voltage = unsaturated;
    if (std::abs(unsaturated) > gains.v_max) {
        // Conditional integration: the integral holds its previous value while the output is
        // saturated, and the saturated output is recomputed from the held integral.
        voltage = params.k_t * (tau_desired - gains.k_p * error - gains.k_i * loop_state.error_integral) +
                  viscous + coulomb;
        voltage = std::clamp(voltage, -gains.v_max, gains.v_max);
    } else {
        loop_state.error_integral = trial_integral;
    }
    loop_state.last_voltage = voltage;
    return voltage;
}

std::string MotorFitReport::to_text() const {
    static const char* names[5] = {"k_t", "k_vp", "k_vn", "k_cp", "k_cn"};
    const double values[5] = {params.k_t, params.k_vp, params.k_vn, params.k_cp, params.k_cn};
    std::string out = "parameter value std_err\n";
    char buf[128];
    for (int i = 0; i < 5; ++i) {
        std::snprintf(buf, sizeof(buf), "%s %.17g %.17g\n", names[i], values[i], std_err[i]);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "r_squared %.17g\nsamples %d\n", r_squared, sample_count);
    out += buf;
    return out;
}

MotorFitReport identify(const std::vector<MotorSample>& dataset) {
    static const char* names[5] = {"k_t", "k_vp", "k_vn", "k_cp", "k_cn"};
    const int rows = static_cast<int>(dataset.size());

    MatX regressor(rows, 5);
    VecX voltage(rows);
    for (int i = 0; i < rows; ++i) {
        const auto& s = dataset[i];
        regressor(i, 0) = s.tau;
        regressor(i, 1) = s.thetadot * unit_step(s.thetadot);
        regressor(i, 2) = s.thetadot * unit_step(-s.thetadot);
        regressor(i, 3) = unit_step(s.thetadot) * sign0(s.thetadot);
        regressor(i, 4) = unit_step(-s.thetadot) * sign0(s.thetadot);
        voltage(i) = s.voltage;
    }

    // Excitation checks before the solve so the error can name the missing parameters.
    std::vector<std::string> unexcited;
    for (int col = 0; col < 5; ++col)
        if (rows == 0 || regressor.col(col).cwiseAbs().maxCoeff() == 0.0)
            unexcited.push_back(names[col]);
    if (!unexcited.empty()) throw IdentificationError(std::move(unexcited));

    Eigen::ColPivHouseholderQR<MatX> qr(regressor);
    qr.setThreshold(1e-10);
    if (qr.rank() < 5) {
        // Name the columns involved in the deficiency via the pivot ordering: the trailing
        // (5 - rank) pivots are the dependent directions.
        std::vector<std::string> dependent;
        const auto& perm = qr.colsPermutation().indices();
        for (int k = qr.rank(); k < 5; ++k) dependent.push_back(names[perm[k]]);
        throw IdentificationError(std::move(dependent));
    }

    const VecX beta = qr.solve(voltage);
    const VecX residual = voltage - regressor * beta;
    const double ssr = residual.squaredNorm();
    const double mean = voltage.mean();
    const double sst = (voltage.array() - mean).square().sum();

    MotorFitReport report;
    report.params.k_t = beta[0];
    report.params.k_vp = beta[1];
    report.params.k_vn = beta[2];
    report.params.k_cp = beta[3];
    report.params.k_cn = beta[4];
    report.sample_count = rows;
    report.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 1.0;

    if (rows > 5) {
        const double sigma2 = ssr / (rows - 5);
        const MatX covariance = sigma2 * (regressor.transpose() * regressor).inverse();
        for (int i = 0; i < 5; ++i) report.std_err[i] = std::sqrt(std::max(0.0, covariance(i, i)));
    }
    return report;
}

} // namespace fbdyn
