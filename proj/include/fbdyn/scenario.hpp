#pragma once

#include "fbdyn/estimation.hpp"
#include "fbdyn/sim.hpp"
#include "fbdyn/wbc.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fbdyn {

// Parsed scenario file: model, initial posture, sim config, script, controller wiring and the
// estimation extras. The text format is line-based `key = value`; see docs/formats.md.
struct ScenarioSpec {
    std::string model_path;
    std::optional<std::string> controller_path;
    SimConfig sim;
    double duration = 5.0;
    std::map<std::string, double> initial_q;
    std::map<std::string, double> initial_qd;
    Vec6 initial_base_velocity = Vec6::Zero(); // linear then angular
    bool place_on_ground = true;
    bool com_ref_auto = true; // above the support centroid at the initial CoM height
    Vec3 com_ref = Vec3::Zero();
    ScenarioScript script;
    bool gravity_compensation_torques = false; // passive runs: hold tau = g_joint(q) instead of 0
    // Estimation extras
    std::vector<FtSensorSpec> sensors;
    std::vector<ContactHypothesis> hypotheses;
};

ScenarioSpec load_scenario(const std::string& text, const std::string& base_dir = "");
ScenarioSpec load_scenario_file(const std::string& path);

struct ScenarioSetup {
    RobotModel model;
    FloatingBaseState initial_state;
    Vec3 com_reference;
    std::optional<ControllerConfig> controller;
};

// Loads the model, applies the initial posture, grounds the contacts and resolves the CoM
// reference.
ScenarioSetup prepare_scenario(const ScenarioSpec& spec);

struct ScenarioSummary {
    double max_com_deviation = 0.0; // horizontal, m, vs the reference
    double min_cone_margin = 0.0;   // N, over all steps with active contacts
    int qp_failures = 0;
    double wall_time_s = 0.0;
    int steps = 0;
    std::string to_text() const;
};

struct SimulateOutput {
    Trajectory trajectory;
    ScenarioSummary summary;
    std::string controller_diag_csv; // per-step diagnostics, wall time excluded
};

// End-to-end run of a scenario with its configured controller (or passive torques).
SimulateOutput simulate_scenario(const ScenarioSpec& spec);

struct EstimationRow {
    double time = 0.0;
    Vec6 true_wrench = Vec6::Zero();
    Vec6 estimated_wrench = Vec6::Zero();
    VecX tau_true;
    VecX tau_hat;
};

struct EstimateOutput {
    std::vector<EstimationRow> rows;
    std::string estimation_csv;   // paired true/estimated columns
    std::string sensor_trace_csv; // time, sensor, fx..tz
    double max_wrench_error = 0.0;
    double max_tau_error = 0.0;
};

// Runs the simulation with the scripted pushes, synthesizes FT readings, estimates per step.
EstimateOutput estimate_scenario(const ScenarioSpec& spec);

// Deterministic shortest round-trip double formatting shared by all CSV writers.
std::string format_double(double v);

} // namespace fbdyn
