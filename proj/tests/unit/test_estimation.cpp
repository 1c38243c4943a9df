#include "fbdyn/estimation.hpp"

#include "fbdyn/sim.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <random>

using namespace fbdyn;

namespace {

RobotModel arm() { return load_model_file(fixture_path("models/arm3.xml")); }

FloatingBaseState posed(const RobotModel& model) {
    FloatingBaseState s = neutral_state(model);
    s.q << 0.8, -0.6, 0.2;
    return s;
}

FtSensorSpec shoulder_sensor() {
    FtSensorSpec sensor;
    sensor.name = "shoulder_ft";
    sensor.joint = "shoulder";
    sensor.frame_xyz = Vec3(0, 0, -0.05);
    return sensor;
}

} // namespace

TEST_CASE("synthesize: zero gravity, zero motion gives a zero reading") {
    const RobotModel model = arm();
    const FloatingBaseState s = posed(model);
    const Vec6 reading =
        synthesize_ft_reading(model, s, VecX::Zero(9), {}, shoulder_sensor(), 1, Vec3::Zero());
    CHECK(reading.norm() < 1e-14);
}

TEST_CASE("synthesize: hanging static chain reads the supported weight") {
    const RobotModel model = arm();
    FloatingBaseState s = neutral_state(model); // arm straight down, frames axis-aligned
    const Vec6 reading = synthesize_ft_reading(model, s, VecX::Zero(9), {}, shoulder_sensor(), 1);
    // Sensor below the shoulder carries upper_arm+forearm+hand = 4 kg against gravity.
    CHECK(reading[2] == doctest::Approx(4.0 * kStandardGravity).epsilon(1e-12));
    CHECK(std::abs(reading[0]) < 1e-12);
    CHECK(std::abs(reading[1]) < 1e-12);
    // All link CoMs lie on the sensor axis: no torque.
    CHECK(reading.tail<3>().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("synthesize: fixed seed is deterministic, noise scales with sigma") {
    const RobotModel model = arm();
    const FloatingBaseState s = posed(model);
    FtSensorSpec sensor = shoulder_sensor();
    sensor.noise_sigma_force = 0.5;
    sensor.noise_sigma_torque = 0.05;
    const Vec6 a = synthesize_ft_reading(model, s, VecX::Zero(9), {}, sensor, 99);
    const Vec6 b = synthesize_ft_reading(model, s, VecX::Zero(9), {}, sensor, 99);
    const Vec6 c = synthesize_ft_reading(model, s, VecX::Zero(9), {}, sensor, 100);
    CHECK((a - b).norm() == 0.0);
    CHECK((a - c).norm() > 0.0);
}

TEST_CASE("estimate: no contact, noise-free: zero wrench and gravity torques") {
    const RobotModel model = arm();
    const FloatingBaseState s = posed(model);
    const VecX nudot = VecX::Zero(9);
    const FtSensorSpec sensor = shoulder_sensor();
    const Vec6 reading = synthesize_ft_reading(model, s, nudot, {}, sensor, 1);

    ContactHypothesis hyp;
    hyp.frame = "palm";
    hyp.kind = HypothesisKind::kPureForce;
    const EstimationResult res =
        estimate(model, s, nudot, {sensor}, {{"shoulder_ft", reading}}, {hyp});

    REQUIRE(res.wrenches.size() == 1);
    CHECK(res.wrenches[0].wrench.force.norm() < 1e-9);
    const VecX g_joint = gravity_forces(model, s).tail(3);
    CHECK((res.tau_hat - g_joint).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(res.residuals.at("shoulder_ft").norm() < 1e-9);
}

TEST_CASE("estimate: known wrench round trip through synthetic readings") {
    const RobotModel model = arm();
    FloatingBaseState s = posed(model);
    s.nu << 0.1, -0.05, 0.02, 0.3, -0.2, 0.1, 0.4, -0.3, 0.2; // moving chain
    VecX nudot(9);
    nudot << -0.2, 0.1, 0.3, 0.05, 0.4, -0.1, 1.0, -0.5, 0.7;

    SpatialWrench applied;
    applied.force = Vec3(3.0, -1.0, 2.0);
    applied.torque = Vec3(0.2, 0.1, -0.3);
    const std::map<std::string, SpatialWrench> external{{"palm", applied}};

    const FtSensorSpec sensor = shoulder_sensor();
    const Vec6 reading = synthesize_ft_reading(model, s, nudot, external, sensor, 1);

    SUBCASE("full-wrench hypothesis recovers force and torque with zero residual") {
        ContactHypothesis hyp;
        hyp.frame = "palm";
        hyp.kind = HypothesisKind::kFullWrench;
        const EstimationResult res =
            estimate(model, s, nudot, {sensor}, {{"shoulder_ft", reading}}, {hyp});
        REQUIRE(res.wrenches.size() == 1);
        CHECK((res.wrenches[0].wrench.force - applied.force).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((res.wrenches[0].wrench.torque - applied.torque).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(res.residuals.at("shoulder_ft").norm() < 1e-9);

        // Joint torques match the full inverse dynamics with the true external.
        const VecX tau_true = rnea(model, s, nudot, external).tail(3);
        CHECK((res.tau_hat - tau_true).cwiseAbs().maxCoeff() < 1e-8);
    }

    SUBCASE("pure-force hypothesis leaves the unmodeled torque as the residual") {
        ContactHypothesis hyp;
        hyp.frame = "palm";
        hyp.kind = HypothesisKind::kPureForce;
        const EstimationResult res =
            estimate(model, s, nudot, {sensor}, {{"shoulder_ft", reading}}, {hyp});
        CHECK((res.wrenches[0].wrench.force - applied.force).cwiseAbs().maxCoeff() < 1e-8);
        const Vec6 residual = res.residuals.at("shoulder_ft");
        CHECK(residual.head<3>().norm() < 1e-10);
        CHECK((residual.tail<3>() - applied.torque).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("estimate: fixed-base-like chain with no contact equals rnea joint rows") {
    const RobotModel model = arm();
    FloatingBaseState s = posed(model);
    s.nu[7] = 0.5;
    VecX nudot = VecX::Zero(9);
    nudot[8] = -0.4;

    const FtSensorSpec sensor = shoulder_sensor();
    const Vec6 reading = synthesize_ft_reading(model, s, nudot, {}, sensor, 1);
    ContactHypothesis hyp;
    hyp.frame = "palm";
    hyp.kind = HypothesisKind::kPureForce;
    const EstimationResult res =
        estimate(model, s, nudot, {sensor}, {{"shoulder_ft", reading}}, {hyp});
    CHECK((res.tau_hat - rnea(model, s, nudot).tail(3)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("estimate: noise in f_hat scales linearly with sensor sigma") {
    const RobotModel model = arm();
    const FloatingBaseState s = posed(model);
    const VecX nudot = VecX::Zero(9);
    ContactHypothesis hyp;
    hyp.frame = "palm";
    hyp.kind = HypothesisKind::kPureForce;

    std::vector<double> sigmas{0.01, 0.1, 1.0};
    std::vector<double> stds;
    for (double sigma : sigmas) {
        FtSensorSpec sensor = shoulder_sensor();
        sensor.noise_sigma_force = sigma;
        std::vector<double> fx;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            const Vec6 reading = synthesize_ft_reading(model, s, nudot, {}, sensor, seed);
            const EstimationResult res =
                estimate(model, s, nudot, {sensor}, {{"shoulder_ft", reading}}, {hyp});
            fx.push_back(res.wrenches[0].wrench.force.x());
        }
        double mean = 0.0;
        for (double v : fx) mean += v;
        mean /= fx.size();
        double var = 0.0;
        for (double v : fx) var += (v - mean) * (v - mean);
        stds.push_back(std::sqrt(var / (fx.size() - 1)));
    }

    // Least-squares fit std = a*sigma + b; R^2 over the three points.
    const int n = 3;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sx += sigmas[i];
        sy += stds[i];
        sxx += sigmas[i] * sigmas[i];
        sxy += sigmas[i] * stds[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double mean_y = sy / n;
    for (int i = 0; i < n; ++i) {
        const double fit = slope * sigmas[i] + intercept;
        ss_res += (stds[i] - fit) * (stds[i] - fit);
        ss_tot += (stds[i] - mean_y) * (stds[i] - mean_y);
    }
    CHECK(1.0 - ss_res / ss_tot > 0.99);
    CHECK(slope > 0.0);
}

TEST_CASE("estimate: error cases") {
    const RobotModel model = arm();
    const FloatingBaseState s = posed(model);
    const VecX nudot = VecX::Zero(9);
    const FtSensorSpec sensor = shoulder_sensor();
    const Vec6 reading = synthesize_ft_reading(model, s, nudot, {}, sensor, 1);

    ContactHypothesis palm;
    palm.frame = "palm";

    SUBCASE("no sensors at all") {
        CHECK_THROWS_AS(estimate(model, s, nudot, {}, {}, {palm}), Error);
    }
    SUBCASE("two hypotheses in one sub-model") {
        ContactHypothesis other;
        other.frame = "forearm";
        CHECK_THROWS_WITH_AS(
            estimate(model, s, nudot, {sensor}, {{"shoulder_ft", reading}}, {palm, other}),
            doctest::Contains("more than one"), Error);
    }
    SUBCASE("missing measurement") {
        CHECK_THROWS_WITH_AS(estimate(model, s, nudot, {sensor}, {}, {palm}),
                             doctest::Contains("missing measurement"), Error);
    }
    SUBCASE("unknown sensor joint") {
        FtSensorSpec bad = sensor;
        bad.joint = "nope";
        CHECK_THROWS_AS(estimate(model, s, nudot, {bad}, {{"shoulder_ft", reading}}, {palm}), Error);
    }
}

TEST_CASE("estimate: two sensors partition the chain") {
    const RobotModel model = arm();
    FloatingBaseState s = posed(model);
    VecX nudot(9);
    nudot.setConstant(0.1);

    FtSensorSpec wrist_sensor;
    wrist_sensor.name = "wrist_ft";
    wrist_sensor.joint = "wrist";

    SpatialWrench applied;
    applied.force = Vec3(1.0, 2.0, -0.5);
    const std::map<std::string, SpatialWrench> external{{"palm", applied}};

    const FtSensorSpec shoulder = shoulder_sensor();
    const std::map<std::string, Vec6> readings{
        {"shoulder_ft", synthesize_ft_reading(model, s, nudot, external, shoulder, 1)},
        {"wrist_ft", synthesize_ft_reading(model, s, nudot, external, wrist_sensor, 2)}};

    // The palm now lives in the wrist-bounded sub-model.
    ContactHypothesis hyp;
    hyp.frame = "palm";
    hyp.kind = HypothesisKind::kPureForce;
    const EstimationResult res = estimate(model, s, nudot, {shoulder, wrist_sensor}, readings, {hyp});
    CHECK((res.wrenches[0].wrench.force - applied.force).cwiseAbs().maxCoeff() < 1e-8);
    // The middle sub-model (between the sensors) has no hypothesis and no unexplained mismatch.
    CHECK(res.residuals.at("shoulder_ft").norm() < 1e-9);
    CHECK(res.residuals.at("wrist_ft").norm() < 1e-9);
    const VecX tau_true = rnea(model, s, nudot, external).tail(3);
    CHECK((res.tau_hat - tau_true).cwiseAbs().maxCoeff() < 1e-8);
}
