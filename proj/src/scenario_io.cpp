#include "regsim/scenario_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace regsim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("scenario: " + path + ": " + what);
}

const json& require(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) {
        fail(path + "/" + key, "missing required field");
    }
    return j.at(key);
}

double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

Vector parse_vector(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of numbers");
    Vector v(static_cast<long>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) {
        v(static_cast<long>(i)) = as_number(j[i], path + "[" + std::to_string(i) + "]");
    }
    return v;
}

Matrix parse_matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        fail(path, "expected a nested array (row-major matrix)");
    }
    const size_t rows = j.size();
    const size_t cols = j[0].size();
    Matrix m(static_cast<long>(rows), static_cast<long>(cols));
    for (size_t i = 0; i < rows; ++i) {
        const std::string row_path = path + "[" + std::to_string(i) + "]";
        if (!j[i].is_array() || j[i].size() != cols) {
            fail(row_path, "ragged matrix rows");
        }
        for (size_t k = 0; k < cols; ++k) {
            m(static_cast<long>(i), static_cast<long>(k)) =
                as_number(j[i][k], row_path + "[" + std::to_string(k) + "]");
        }
    }
    return m;
}

std::pair<double, double> parse_range(const json& j, const std::string& path) {
    const Vector v = parse_vector(j, path);
    if (v.size() != 2 || !(v(0) < v(1))) fail(path, "expected [lo, hi] with lo < hi");
    return {v(0), v(1)};
}

AgentModel parse_agent_model(const json& j, const std::string& path) {
    AgentModel m;
    m.A = parse_matrix(require(j, "A", path), path + "/A");
    m.B = parse_matrix(require(j, "B", path), path + "/B");
    m.C = parse_matrix(require(j, "C", path), path + "/C");
    m.D = parse_matrix(require(j, "D", path), path + "/D");
    m.P = parse_matrix(require(j, "P", path), path + "/P");
    m.Q = parse_matrix(require(j, "Q", path), path + "/Q");
    try {
        m.validate();
    } catch (const std::exception& ex) {
        fail(path, ex.what());
    }
    return m;
}

PerturbationSpec parse_perturbation(const json& j, const std::string& path) {
    PerturbationSpec spec;
    auto grab = [&](const char* key, std::optional<Matrix>& slot) {
        if (j.contains(key)) {
            slot = parse_matrix(j.at(key), path + "/" + key);
        }
    };
    grab("A", spec.A);
    grab("B", spec.B);
    grab("C", spec.C);
    grab("D", spec.D);
    grab("P", spec.P);
    grab("Q", spec.Q);
    return spec;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (long i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

json vector_to_json(const Vector& v) {
    json arr = json::array();
    for (long i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

}  // namespace

Scenario parse_scenario_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw std::runtime_error(std::string("scenario: invalid JSON: ") + ex.what());
    }

    Scenario sc;

    const json& exo = require(j, "exosystem", "");
    sc.exo.S0       = parse_matrix(require(exo, "S0", "/exosystem"), "/exosystem/S0");
    if (sc.exo.S0.rows() != sc.exo.S0.cols()) {
        fail("/exosystem/S0", "matrix must be square");
    }
    if (exo.contains("w0")) {
        sc.exo.w0_init = parse_vector(exo.at("w0"), "/exosystem/w0");
        sc.init.w0     = sc.exo.w0_init;
    }

    const json& topo = require(j, "topology", "");
    sc.alpha_min     = topo.contains("alpha_min")
                       ? as_number(topo.at("alpha_min"), "/topology/alpha_min")
                       : 0.1;
    sc.schedule.repeat = topo.value("repeat", true);
    const json& segs   = require(topo, "segments", "/topology");
    if (!segs.is_array() || segs.empty()) fail("/topology/segments", "expected a non-empty array");

    const json& agents = require(j, "agents", "");
    if (!agents.is_array() || agents.empty()) fail("/agents", "expected a non-empty array");
    const int nodes = static_cast<int>(agents.size()) + 1;

    for (size_t s = 0; s < segs.size(); ++s) {
        const std::string seg_path = "/topology/segments[" + std::to_string(s) + "]";
        const double duration =
            as_number(require(segs[s], "duration", seg_path), seg_path + "/duration");
        Matrix w = Matrix::Zero(nodes, nodes);
        if (segs[s].contains("edges")) {
            const json& edges = segs[s].at("edges");
            for (size_t e = 0; e < edges.size(); ++e) {
                const std::string ep = seg_path + "/edges[" + std::to_string(e) + "]";
                const int from = static_cast<int>(as_number(require(edges[e], "from", ep), ep + "/from"));
                const int to   = static_cast<int>(as_number(require(edges[e], "to", ep), ep + "/to"));
                const double weight = edges[e].contains("weight")
                                          ? as_number(edges[e].at("weight"), ep + "/weight")
                                          : 1.0;
                if (from < 0 || from >= nodes || to < 0 || to >= nodes) {
                    fail(ep, "endpoint outside 0..N");
                }
                w(to, from) = weight;
            }
        }
        try {
            sc.schedule.segments.push_back({duration, WeightedDigraph(w, sc.alpha_min)});
        } catch (const std::exception& ex) {
            fail(seg_path, ex.what());
        }
    }

    for (size_t i = 0; i < agents.size(); ++i) {
        const std::string ap = "/agents[" + std::to_string(i) + "]";
        AgentSpec spec;
        spec.nominal = parse_agent_model(require(agents[i], "nominal", ap), ap + "/nominal");
        if (agents[i].contains("perturbation")) {
            spec.perturbation =
                parse_perturbation(agents[i].at("perturbation"), ap + "/perturbation");
        }
        try {
            spec.true_model = perturb(spec.nominal, spec.perturbation);
        } catch (const std::exception& ex) {
            fail(ap + "/perturbation", ex.what());
        }
        sc.agents.push_back(std::move(spec));
    }

    if (j.contains("sim")) {
        const json& sim = j.at("sim");
        sc.sim.dt       = sim.contains("dt") ? as_number(sim.at("dt"), "/sim/dt") : sc.sim.dt;
        sc.sim.t_final =
            sim.contains("t_final") ? as_number(sim.at("t_final"), "/sim/t_final") : sc.sim.t_final;
        if (sim.contains("integrator")) {
            const std::string name = sim.at("integrator").get<std::string>();
            if (name == "rk4") {
                sc.sim.integrator = Integrator::RK4;
            } else if (name == "euler") {
                sc.sim.integrator = Integrator::Euler;
            } else {
                fail("/sim/integrator", "expected 'rk4' or 'euler'");
            }
        }
        if (sim.contains("seed")) sc.sim.seed = sim.at("seed").get<uint64_t>();
        if (sim.contains("resynth_margin")) {
            sc.sim.resynth_margin = as_number(sim.at("resynth_margin"), "/sim/resynth_margin");
        }
        if (sim.contains("resynth_interval")) {
            sc.sim.resynth_interval =
                as_number(sim.at("resynth_interval"), "/sim/resynth_interval");
        }
        if (sim.contains("a4_window")) {
            sc.sim.a4_window = as_number(sim.at("a4_window"), "/sim/a4_window");
        }
    }

    if (j.contains("init")) {
        const json& init = j.at("init");
        auto range = [&](const char* key, std::pair<double, double>& slot) {
            if (init.contains(key)) slot = parse_range(init.at(key), std::string("/init/") + key);
        };
        range("w0_range", sc.init.w0_range);
        range("x_range", sc.init.x_range);
        range("w_range", sc.init.w_range);
        range("xi_range", sc.init.xi_range);
        range("beta_range", sc.init.beta_range);

        if (init.contains("w0")) {
            sc.init.w0     = parse_vector(init.at("w0"), "/init/w0");
            sc.exo.w0_init = *sc.init.w0;
        }
        auto vec_list = [&](const char* key, std::optional<std::vector<Vector>>& slot) {
            if (!init.contains(key)) return;
            const json& arr = init.at(key);
            if (!arr.is_array()) fail(std::string("/init/") + key, "expected an array");
            std::vector<Vector> out;
            for (size_t i = 0; i < arr.size(); ++i) {
                out.push_back(parse_vector(arr[i], std::string("/init/") + key + "[" +
                                                       std::to_string(i) + "]"));
            }
            slot = std::move(out);
        };
        vec_list("x", sc.init.x);
        vec_list("w", sc.init.w);
        vec_list("xi", sc.init.xi);
        vec_list("beta", sc.init.beta);

        if (init.contains("S")) {
            const json& S = init.at("S");
            if (S.is_string()) {
                const std::string mode = S.get<std::string>();
                if (mode == "nominal_A") {
                    sc.init.s_mode = SInitMode::NominalA;
                } else if (mode == "exo_S0") {
                    sc.init.s_mode = SInitMode::ExoS0;
                } else {
                    fail("/init/S", "expected 'nominal_A', 'exo_S0', or matrices");
                }
            } else if (S.is_array()) {
                sc.init.s_mode = SInitMode::Explicit;
                std::vector<Matrix> mats;
                for (size_t i = 0; i < S.size(); ++i) {
                    mats.push_back(parse_matrix(S[i], "/init/S[" + std::to_string(i) + "]"));
                }
                sc.init.S = std::move(mats);
            } else {
                fail("/init/S", "expected 'nominal_A', 'exo_S0', or matrices");
            }
        }
    }

    try {
        sc.validate();
    } catch (const std::exception& ex) {
        throw std::runtime_error(std::string("scenario: ") + ex.what());
    }
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("scenario: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str());
}

std::string scenario_to_json(const Scenario& sc) {
    json j;
    j["exosystem"]["S0"] = matrix_to_json(sc.exo.S0);
    if (sc.exo.w0_init.size() > 0) j["exosystem"]["w0"] = vector_to_json(sc.exo.w0_init);

    json agents = json::array();
    for (const AgentSpec& a : sc.agents) {
        json ja;
        ja["nominal"]["A"] = matrix_to_json(a.nominal.A);
        ja["nominal"]["B"] = matrix_to_json(a.nominal.B);
        ja["nominal"]["C"] = matrix_to_json(a.nominal.C);
        ja["nominal"]["D"] = matrix_to_json(a.nominal.D);
        ja["nominal"]["P"] = matrix_to_json(a.nominal.P);
        ja["nominal"]["Q"] = matrix_to_json(a.nominal.Q);
        if (!a.perturbation.empty()) {
            json jp;
            if (a.perturbation.A) jp["A"] = matrix_to_json(*a.perturbation.A);
            if (a.perturbation.B) jp["B"] = matrix_to_json(*a.perturbation.B);
            if (a.perturbation.C) jp["C"] = matrix_to_json(*a.perturbation.C);
            if (a.perturbation.D) jp["D"] = matrix_to_json(*a.perturbation.D);
            if (a.perturbation.P) jp["P"] = matrix_to_json(*a.perturbation.P);
            if (a.perturbation.Q) jp["Q"] = matrix_to_json(*a.perturbation.Q);
            ja["perturbation"] = jp;
        }
        agents.push_back(ja);
    }
    j["agents"] = agents;

    json topo;
    topo["alpha_min"] = sc.alpha_min;
    topo["repeat"]    = sc.schedule.repeat;
    json segs         = json::array();
    for (const auto& seg : sc.schedule.segments) {
        json js;
        js["duration"] = seg.duration;
        json edges     = json::array();
        const Matrix& w = seg.graph.weights();
        for (int to = 0; to < w.rows(); ++to) {
            for (int from = 0; from < w.cols(); ++from) {
                if (w(to, from) > 0.0) {
                    edges.push_back({{"from", from}, {"to", to}, {"weight", w(to, from)}});
                }
            }
        }
        js["edges"] = edges;
        segs.push_back(js);
    }
    topo["segments"] = segs;
    j["topology"]    = topo;

    j["sim"]["dt"]         = sc.sim.dt;
    j["sim"]["t_final"]    = sc.sim.t_final;
    j["sim"]["integrator"] = sc.sim.integrator == Integrator::RK4 ? "rk4" : "euler";
    j["sim"]["seed"]       = sc.sim.seed;
    j["sim"]["resynth_margin"]   = sc.sim.resynth_margin;
    j["sim"]["resynth_interval"] = sc.sim.resynth_interval;
    j["sim"]["a4_window"]        = sc.sim.a4_window;

    json init;
    init["w0_range"]   = {sc.init.w0_range.first, sc.init.w0_range.second};
    init["x_range"]    = {sc.init.x_range.first, sc.init.x_range.second};
    init["w_range"]    = {sc.init.w_range.first, sc.init.w_range.second};
    init["xi_range"]   = {sc.init.xi_range.first, sc.init.xi_range.second};
    init["beta_range"] = {sc.init.beta_range.first, sc.init.beta_range.second};
    if (sc.init.w0) init["w0"] = vector_to_json(*sc.init.w0);
    auto put_list = [&](const char* key, const std::optional<std::vector<Vector>>& v) {
        if (!v) return;
        json arr = json::array();
        for (const Vector& x : *v) arr.push_back(vector_to_json(x));
        init[key] = arr;
    };
    put_list("x", sc.init.x);
    put_list("w", sc.init.w);
    put_list("xi", sc.init.xi);
    put_list("beta", sc.init.beta);
    switch (sc.init.s_mode) {
        case SInitMode::NominalA: init["S"] = "nominal_A"; break;
        case SInitMode::ExoS0: init["S"] = "exo_S0"; break;
        case SInitMode::Explicit: {
            json arr = json::array();
            for (const Matrix& m : *sc.init.S) arr.push_back(matrix_to_json(m));
            init["S"] = arr;
            break;
        }
    }
    j["init"] = init;

    return j.dump(2);
}

std::vector<std::string> trace_csv_columns(const SimulationTrace& trace) {
    std::vector<std::string> cols{"t"};
    for (size_t i = 0; i < trace.agents.size(); ++i) {
        const std::string tag = "a" + std::to_string(i + 1) + "_";
        const AgentTrace& at  = trace.agents[i];
        for (long c = 0; c < at.z.rows(); ++c) {
            cols.push_back(tag + "z" + std::to_string(c + 1));
        }
        for (long c = 0; c < at.e.rows(); ++c) {
            cols.push_back(tag + "e" + std::to_string(c + 1));
        }
        cols.push_back(tag + "werr");
        cols.push_back(tag + "sdist");
        for (long c = 0; c < at.lambda.rows(); ++c) {
            cols.push_back(tag + "lam" + std::to_string(c + 1) + "_re");
            cols.push_back(tag + "lam" + std::to_string(c + 1) + "_im");
        }
    }
    return cols;
}

void write_trace_csv(const SimulationTrace& trace, const std::string& path,
                     int decimation) {
    if (decimation < 1) throw std::invalid_argument("write_trace_csv: decimation >= 1");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);

    const std::vector<std::string> cols = trace_csv_columns(trace);
    out << "# regsim trace, seed=" << trace.seed << ", decimation=" << decimation << "\n";
    out << "# " << trace.draw_order_note << "\n";
    out << "# columns: t, then per agent: regulated output z, error feedback e, "
           "werr=||w_i-w0||, sdist=||S_i-S0||_F, lambda estimate re/im parts\n";
    for (size_t i = 0; i < cols.size(); ++i) {
        out << (i ? "," : "") << cols[i];
    }
    out << "\n";

    char buf[32];
    auto put = [&](double v, bool lead_comma) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        if (lead_comma) out << ',';
        out << buf;
    };

    const int samples = trace.sample_count();
    for (int s = 0; s < samples; s += decimation) {
        put(trace.t(s), false);
        for (size_t i = 0; i < trace.agents.size(); ++i) {
            const AgentTrace& at = trace.agents[i];
            for (long c = 0; c < at.z.rows(); ++c) put(at.z(c, s), true);
            for (long c = 0; c < at.e.rows(); ++c) put(at.e(c, s), true);
            put((at.w.col(s) - trace.w0.col(s)).norm(), true);
            put(at.s_dist(s), true);
            for (long c = 0; c < at.lambda.rows(); ++c) {
                put(at.lambda(c, s).real(), true);
                put(at.lambda(c, s).imag(), true);
            }
        }
        out << "\n";
    }
}

SummaryReport summarize(const SimulationTrace& trace, const AssumptionReport& audit) {
    SummaryReport report;
    const int samples = trace.sample_count();
    const int last    = samples - 1;

    RateFitOptions fit_opt;
    fit_opt.tail_fraction  = 0.5;
    fit_opt.envelope_bins  = 40;
    fit_opt.floor_rel      = 1e-10;
    fit_opt.min_fit_points = 5;

    std::vector<double> ts(trace.t.data(), trace.t.data() + samples);

    for (size_t i = 0; i < trace.agents.size(); ++i) {
        const AgentTrace& at = trace.agents[i];
        AgentSummary s;
        s.final_z_norm  = at.z.col(last).norm();
        s.final_w_err   = (at.w.col(last) - trace.w0.col(last)).norm();
        s.final_s_dist  = at.s_dist(last);
        s.resynth_count = trace.resynth_count[i];
        for (long c = 0; c < at.lambda.rows(); ++c) {
            s.final_lambda_err = std::max(
                s.final_lambda_err, std::abs(at.lambda(c, last) - trace.lambda0(c)));
        }

        std::vector<double> znorm(static_cast<size_t>(samples));
        std::vector<double> werr(static_cast<size_t>(samples));
        for (int t = 0; t < samples; ++t) {
            znorm[static_cast<size_t>(t)] = at.z.col(t).norm();
            werr[static_cast<size_t>(t)]  = (at.w.col(t) - trace.w0.col(t)).norm();
        }
        const RateFit zf = exp_rate_fit(ts, znorm, fit_opt);
        const RateFit wf = exp_rate_fit(ts, werr, fit_opt);
        s.z_slope        = zf.slope;
        s.z_r2           = zf.r_squared;
        s.w_slope        = wf.slope;
        s.w_r2           = wf.r_squared;
        report.agents.push_back(s);
    }

    auto allof = [](const std::vector<AssumptionCheck>& v) {
        for (const auto& c : v) {
            if (!c.pass) return false;
        }
        return true;
    };
    report.a1         = allof(audit.a1);
    report.a2         = allof(audit.a2);
    report.a3         = audit.a3.pass;
    report.a4         = audit.a4.pass;
    report.a5         = allof(audit.a5);
    report.audit_pass = audit.all_pass();
    return report;
}

std::string summary_to_json(const SummaryReport& report) {
    json j;
    j["audit"] = {{"A1", report.a1}, {"A2", report.a2}, {"A3", report.a3},
                  {"A4", report.a4}, {"A5", report.a5}, {"pass", report.audit_pass}};
    auto slope_field = [](double slope) {
        if (std::isfinite(slope)) return json(slope);
        return json("-inf (converged below resolution)");
    };
    json agents = json::array();
    for (const AgentSummary& s : report.agents) {
        agents.push_back({{"final_z_norm", s.final_z_norm},
                          {"final_w_err", s.final_w_err},
                          {"final_s_dist", s.final_s_dist},
                          {"final_lambda_err", s.final_lambda_err},
                          {"z_slope", slope_field(s.z_slope)},
                          {"z_r2", s.z_r2},
                          {"w_slope", slope_field(s.w_slope)},
                          {"w_r2", s.w_r2},
                          {"resynth_count", s.resynth_count}});
    }
    j["agents"] = agents;
    return j.dump(2);
}

void emit_plot_script(const std::string& trace_path, const std::string& out_path) {
    // Read the header row so the script only names columns the CSV has.
    std::ifstream in(trace_path);
    if (!in) throw std::runtime_error("emit_plot_script: cannot open " + trace_path);
    std::string line;
    std::string header;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') {
            header = line;
            break;
        }
    }
    if (header.empty()) throw std::runtime_error("emit_plot_script: no header row");

    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    std::vector<std::string> werr_cols, z_cols;
    for (const std::string& c : cols) {
        if (c.size() > 5 && c.substr(c.size() - 5) == "_werr") werr_cols.push_back(c);
        const size_t us = c.find('_');
        if (us != std::string::npos && us + 1 < c.size() && c[us + 1] == 'z') {
            z_cols.push_back(c);
        }
    }

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("emit_plot_script: cannot open " + out_path);

    auto pylist = [](const std::vector<std::string>& v) {
        std::string s = "[";
        for (size_t i = 0; i < v.size(); ++i) {
            s += (i ? ", " : "");
            s += "\"" + v[i] + "\"";
        }
        return s + "]";
    };

    out << "#!/usr/bin/env python3\n"
        << "# Generated by regsim. Plots generator synchronization errors and\n"
        << "# regulated outputs from a trace CSV.\n"
        << "import csv\n"
        << "import matplotlib\n"
        << "matplotlib.use(\"Agg\")\n"
        << "import matplotlib.pyplot as plt\n\n"
        << "TRACE = \"" << trace_path << "\"\n"
        << "WERR_COLS = " << pylist(werr_cols) << "\n"
        << "Z_COLS = " << pylist(z_cols) << "\n\n"
        << "rows = []\n"
        << "with open(TRACE) as f:\n"
        << "    reader = csv.reader(r for r in f if not r.startswith(\"#\"))\n"
        << "    names = next(reader)\n"
        << "    idx = {n: i for i, n in enumerate(names)}\n"
        << "    for r in reader:\n"
        << "        rows.append([float(x) for x in r])\n\n"
        << "t = [r[idx[\"t\"]] for r in rows]\n"
        << "fig, (ax_w, ax_z) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)\n"
        << "for name in WERR_COLS:\n"
        << "    ax_w.semilogy(t, [max(r[idx[name]], 1e-18) for r in rows], label=name)\n"
        << "ax_w.set_ylabel(\"||w_i - w0||\")\n"
        << "ax_w.legend(loc=\"upper right\", fontsize=8)\n"
        << "for name in Z_COLS:\n"
        << "    ax_z.plot(t, [r[idx[name]] for r in rows], label=name)\n"
        << "ax_z.set_ylabel(\"regulated output z_i\")\n"
        << "ax_z.set_xlabel(\"t [s]\")\n"
        << "ax_z.legend(loc=\"upper right\", fontsize=8)\n"
        << "fig.tight_layout()\n"
        << "fig.savefig(\"regsim_trace.png\", dpi=150)\n"
        << "print(\"wrote regsim_trace.png\")\n";
}

}  // namespace regsim
