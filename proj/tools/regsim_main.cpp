#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "regsim/scenario_io.hpp"

namespace {

constexpr int kExitOk      = 0;
constexpr int kExitAudit   = 1;
constexpr int kExitRuntime = 2;

void apply_seed_override(regsim::Scenario& scenario) {
    const char* env = std::getenv("REGSIM_SEED");
    if (!env) return;
    scenario.sim.seed = std::strtoull(env, nullptr, 10);
}

void print_audit(const regsim::AssumptionReport& report) {
    auto verdict = [](bool pass) { return pass ? "pass" : "FAIL"; };
    for (size_t i = 0; i < report.a1.size(); ++i) {
        std::cout << "agent " << (i + 1) << ": A1 " << verdict(report.a1[i].pass)
                  << ", A2 " << verdict(report.a2[i].pass) << ", A5 "
                  << verdict(report.a5[i].pass);
        if (!report.zeros[i].zeros.empty()) {
            std::cout << " (zeros: " << report.zeros[i].zeros.size()
                      << ", delta=" << report.delta[i] << ")";
        }
        for (const auto* check : {&report.a1[i], &report.a2[i], &report.a5[i]}) {
            if (!check->pass && !check->note.empty()) {
                std::cout << " [" << check->note << "]";
            }
        }
        std::cout << "\n";
    }
    std::cout << "A3 " << verdict(report.a3.pass)
              << " (max |Re eig(S0)| = " << report.a3.margin << ")\n";
    std::cout << "A4 " << verdict(report.a4.pass) << " (window "
              << report.a4_window_used << " s)";
    if (!report.a4.pass && !report.a4.note.empty()) std::cout << " [" << report.a4.note << "]";
    std::cout << "\n";
}

int cmd_check(const std::string& path) {
    const regsim::Scenario scenario = regsim::load_scenario(path);
    const regsim::AssumptionReport report = regsim::audit_assumptions(scenario);
    print_audit(report);
    return report.all_pass() ? kExitOk : kExitAudit;
}

int cmd_run(const std::string& path, const std::string& out_dir, int decimate,
            bool force) {
    regsim::Scenario scenario = regsim::load_scenario(path);
    apply_seed_override(scenario);

    regsim::SimulateOptions opt;
    opt.force = force;
    regsim::SimulationTrace trace;
    try {
        trace = regsim::simulate(scenario, opt);
    } catch (const regsim::AuditFailure& ex) {
        std::cerr << ex.what() << "\n";
        print_audit(regsim::audit_assumptions(scenario));
        return kExitAudit;
    }

    std::filesystem::create_directories(out_dir);
    const std::string trace_path   = out_dir + "/trace.csv";
    const std::string summary_path = out_dir + "/summary.json";
    regsim::write_trace_csv(trace, trace_path, decimate);

    const regsim::SummaryReport summary =
        regsim::summarize(trace, regsim::audit_assumptions(scenario));
    std::ofstream summary_out(summary_path);
    summary_out << regsim::summary_to_json(summary) << "\n";

    regsim::emit_plot_script(trace_path, out_dir + "/plot_trace.py");

    std::cout << "trace:   " << trace_path << "\n";
    std::cout << "summary: " << summary_path << "\n";
    for (size_t i = 0; i < summary.agents.size(); ++i) {
        const auto& a = summary.agents[i];
        std::cout << "agent " << (i + 1) << ": final ||z||=" << a.final_z_norm
                  << ", ||w-w0||=" << a.final_w_err << ", ||S-S0||=" << a.final_s_dist
                  << ", resyntheses=" << a.resynth_count << "\n";
    }
    return kExitOk;
}

int cmd_sweep(const std::string& path, const std::string& grid_arg, int samples,
              uint64_t seed, bool seed_set, const std::string& out_path) {
    regsim::Scenario scenario = regsim::load_scenario(path);
    apply_seed_override(scenario);
    if (!seed_set) seed = scenario.sim.seed;

    std::vector<double> grid;
    std::stringstream ss(grid_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) grid.push_back(std::stod(tok));
    if (grid.empty()) throw std::runtime_error("sweep: empty radius grid");

    const auto table = regsim::perturbation_sweep(scenario, grid, samples, seed);
    std::cout << "radius,fraction\n";
    std::ostringstream json;
    json << "[\n";
    for (size_t i = 0; i < table.size(); ++i) {
        std::cout << table[i].radius << "," << table[i].fraction << "\n";
        json << "  {\"radius\": " << table[i].radius
             << ", \"fraction\": " << table[i].fraction << "}"
             << (i + 1 < table.size() ? ",\n" : "\n");
    }
    json << "]\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << json.str();
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed output-regulation simulator"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = "out", trace_path, plot_out = "plot_trace.py";
    std::string grid_arg = "0.0,0.05,0.1", sweep_out;
    int decimate = 10, samples = 20;
    uint64_t sweep_seed = 0;
    bool force = false;

    auto* check = app.add_subcommand("check", "Audit the standing assumptions");
    check->add_option("scenario", scenario_path, "Scenario file")->required();

    auto* run = app.add_subcommand("run", "Simulate and write trace artifacts");
    run->add_option("scenario", scenario_path, "Scenario file")->required();
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--decimate", decimate, "Trace row stride")->check(CLI::PositiveNumber);
    run->add_flag("--force", force, "Run even if the audit fails");

    auto* sweep = app.add_subcommand("sweep", "Empirical robustness-neighborhood probe");
    sweep->add_option("scenario", scenario_path, "Scenario file")->required();
    sweep->add_option("--radius-grid", grid_arg, "Comma-separated radii");
    sweep->add_option("--samples", samples, "Samples per radius")->check(CLI::PositiveNumber);
    auto* seed_opt = sweep->add_option("--seed", sweep_seed, "Sweep seed");
    sweep->add_option("--out", sweep_out, "Optional JSON output path");

    auto* plot = app.add_subcommand("plot", "Generate a plot script for a trace CSV");
    plot->add_option("trace", trace_path, "Trace CSV")->required();
    plot->add_option("--out", plot_out, "Script path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitRuntime;
    }

    try {
        if (check->parsed()) return cmd_check(scenario_path);
        if (run->parsed()) return cmd_run(scenario_path, out_dir, decimate, force);
        if (sweep->parsed()) {
            return cmd_sweep(scenario_path, grid_arg, samples, sweep_seed,
                             seed_opt->count() > 0, sweep_out);
        }
        if (plot->parsed()) {
            regsim::emit_plot_script(trace_path, plot_out);
            std::cout << "wrote " << plot_out << "\n";
            return kExitOk;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
