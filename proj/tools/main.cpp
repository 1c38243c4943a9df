#include "fbdyn/scenario.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

void write_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fbdyn::Error("cannot write '" + path + "'");
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw fbdyn::Error("cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

int cmd_check(const std::string& model_path) {
    std::string source;
    try {
        source = read_file(model_path);
    } catch (const fbdyn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const fbdyn::RobotModel model = fbdyn::load_model(source);
        const auto diags = fbdyn::validate_model(model);
        bool failed = false;
        for (const auto& d : diags) {
            failed = failed || d.severity == fbdyn::Diagnostic::Severity::kError;
            std::cout << (d.severity == fbdyn::Diagnostic::Severity::kError ? "error" : "warning")
                      << " [" << d.entity << "] " << d.message << "\n";
        }
        if (failed) return kExitDomain;
        std::cout << "ok: " << model.name() << " (" << model.links().size() << " links, n="
                  << model.n() << ", " << model.contacts().size() << " contacts)\n";
        return kExitOk;
    } catch (const fbdyn::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fbdyn::ValidationError& e) {
        std::cout << e.what() << "\n";
        return kExitDomain;
    }
}

std::vector<fbdyn::MotorSample> read_motor_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw fbdyn::Error("cannot open '" + path + "'");
    std::vector<fbdyn::MotorSample> samples;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line_no == 1 && line.find("time") != std::string::npos) continue; // header
        std::stringstream row(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(row, cell, ',')) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw fbdyn::ParseError("invalid number '" + cell + "'", line_no);
            }
        }
        if (values.size() != 4)
            throw fbdyn::ParseError("expected 4 columns time,voltage,torque,velocity", line_no);
        samples.push_back({values[1], values[2], values[3]});
    }
    return samples;
}

int cmd_identify(const std::string& dataset_path, const std::string& out_path) {
    std::vector<fbdyn::MotorSample> samples;
    try {
        samples = read_motor_csv(dataset_path);
    } catch (const fbdyn::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fbdyn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const fbdyn::MotorFitReport report = fbdyn::identify(samples);
        const std::string text = report.to_text();
        if (out_path.empty())
            std::cout << text;
        else
            write_file(out_path, text);
        return kExitOk;
    } catch (const fbdyn::IdentificationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 const double* dt_override, const double* duration_override,
                 const std::uint64_t* seed_override, bool write_diag) {
    fbdyn::ScenarioSpec spec = fbdyn::load_scenario_file(scenario_path);
    if (dt_override) spec.sim.dt = *dt_override;
    if (duration_override) {
        spec.duration = *duration_override;
        spec.script.duration = *duration_override;
    }
    if (seed_override) spec.sim.seed = *seed_override;

    const fbdyn::SimulateOutput out = fbdyn::simulate_scenario(spec);
    const fbdyn::RobotModel model = fbdyn::load_model_file(spec.model_path);
    write_file(out_dir + "/trajectory.csv", fbdyn::trajectory_csv(model, out.trajectory));
    if (write_diag) write_file(out_dir + "/controller_diag.csv", out.controller_diag_csv);
    write_file(out_dir + "/summary.txt", out.summary.to_text());
    std::cout << out.summary.to_text();
    return out.summary.qp_failures == 0 ? kExitOk : kExitDomain;
}

int cmd_estimate(const std::string& scenario_path, const std::string& out_dir,
                 const double* dt_override, const double* duration_override,
                 const std::uint64_t* seed_override) {
    fbdyn::ScenarioSpec spec = fbdyn::load_scenario_file(scenario_path);
    if (dt_override) spec.sim.dt = *dt_override;
    if (duration_override) {
        spec.duration = *duration_override;
        spec.script.duration = *duration_override;
    }
    if (seed_override) spec.sim.seed = *seed_override;

    const fbdyn::EstimateOutput out = fbdyn::estimate_scenario(spec);
    write_file(out_dir + "/estimation.csv", out.estimation_csv);
    write_file(out_dir + "/sensor_trace.csv", out.sensor_trace_csv);
    std::cout << "rows " << out.rows.size() << "\n"
              << "max_wrench_error " << fbdyn::format_double(out.max_wrench_error) << "\n"
              << "max_tau_error " << fbdyn::format_double(out.max_tau_error) << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"floating-base dynamics, estimation and whole-body control toolbox"};
    app.require_subcommand(1);

    std::string model_path, dataset_path, scenario_path, out_path = "out";
    double dt = 0.0, duration = 0.0;
    std::uint64_t seed = 0;
    bool write_diag = false;

    auto* check = app.add_subcommand("check", "validate a model file");
    check->add_option("--model", model_path, "model XML path")->required();

    auto* identify = app.add_subcommand("identify", "fit motor transmission coefficients");
    identify->add_option("--data", dataset_path, "CSV dataset: time,voltage,torque,velocity")
        ->required();
    identify->add_option("--out", out_path, "fit report path (stdout when omitted)");

    auto* simulate = app.add_subcommand("simulate", "run a scenario and write the trajectory");
    simulate->add_option("--scenario", scenario_path, "scenario file")->required();
    simulate->add_option("--out", out_path, "output directory");
    auto* sim_dt = simulate->add_option("--dt", dt, "override time step");
    auto* sim_duration = simulate->add_option("--duration", duration, "override duration");
    auto* sim_seed = simulate->add_option("--seed", seed, "override seed");
    simulate->add_flag("--diag", write_diag, "write per-step controller diagnostics");

    auto* estimate = app.add_subcommand("estimate", "run an estimation round-trip scenario");
    estimate->add_option("--scenario", scenario_path, "scenario file with sensors/hypotheses")
        ->required();
    estimate->add_option("--out", out_path, "output directory");
    auto* est_dt = estimate->add_option("--dt", dt, "override time step");
    auto* est_duration = estimate->add_option("--duration", duration, "override duration");
    auto* est_seed = estimate->add_option("--seed", seed, "override seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (check->parsed()) return cmd_check(model_path);
        if (identify->parsed()) {
            return cmd_identify(dataset_path, identify->count("--out") ? out_path : "");
        }
        if (simulate->parsed()) {
            return cmd_simulate(scenario_path, out_path, sim_dt->count() ? &dt : nullptr,
                                sim_duration->count() ? &duration : nullptr,
                                sim_seed->count() ? &seed : nullptr, write_diag);
        }
        if (estimate->parsed()) {
            return cmd_estimate(scenario_path, out_path, est_dt->count() ? &dt : nullptr,
                                est_duration->count() ? &duration : nullptr,
                                est_seed->count() ? &seed : nullptr);
        }
    } catch (const fbdyn::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fbdyn::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const fbdyn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    return kExitUsage;
}
