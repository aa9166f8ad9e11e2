#pragma once

#include <string>
#include <vector>

#include "regsim/sim.hpp"
#include "regsim/verification.hpp"

// Scenario file loading and serialization, CSV trace emission, run summaries,
// and plot-script generation.

namespace regsim {

// Parse and validate a scenario document. Errors carry the JSON path of the
// offending field.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario_text(const std::string& text);

// Inverse of parsing; load -> serialize -> load is the identity.
std::string scenario_to_json(const Scenario& scenario);

// Column names of the trace CSV: t, then per agent the z and e components,
// ||w - w0||, ||S - S0||_F, and the lambda estimate split into re/im parts.
std::vector<std::string> trace_csv_columns(const SimulationTrace& trace);

// Header comments (prefixed '#') documenting the columns, seed, and draw
// order, then one row per decimated sample.
void write_trace_csv(const SimulationTrace& trace, const std::string& path,
                     int decimation = 1);

struct AgentSummary {
    double final_z_norm    = 0.0;
    double final_w_err     = 0.0;
    double final_s_dist    = 0.0;
    double final_lambda_err = 0.0;
    double z_slope = 0.0, z_r2 = 0.0;
    double w_slope = 0.0, w_r2 = 0.0;
    int resynth_count = 0;
};

struct SummaryReport {
    std::vector<AgentSummary> agents;
    bool a1 = false, a2 = false, a3 = false, a4 = false, a5 = false;
    bool audit_pass = false;
};

SummaryReport summarize(const SimulationTrace& trace, const AssumptionReport& audit);
std::string summary_to_json(const SummaryReport& report);

// Writes a python script that plots the synchronization errors and regulated
// outputs from a trace CSV produced by write_trace_csv.
void emit_plot_script(const std::string& trace_path, const std::string& out_path);

}  // namespace regsim
