#include "regsim/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace regsim {

bool AssumptionReport::all_pass() const {
    auto ok = [](const std::vector<AssumptionCheck>& v) {
        return std::all_of(v.begin(), v.end(),
                           [](const AssumptionCheck& c) { return c.pass; });
    };
    return ok(a1) && ok(a2) && ok(a5) && a3.pass && a4.pass;
}

AssumptionReport audit_assumptions(const Scenario& scenario, const AuditOptions& opt) {
    AssumptionReport report;
    const Matrix& S0 = scenario.exo.S0;
    const std::vector<Complex> sigma = eigenvalue_set(S0);

    for (const AgentSpec& agent : scenario.agents) {
        const AgentModel& nom = agent.nominal;

        AssumptionCheck c1;
        c1.pass = pbh_stabilizable(nom.A, nom.B);
        if (!c1.pass) c1.note = "(A,B) fails the PBH stabilizability test";
        report.a1.push_back(c1);

        AssumptionCheck c2;
        c2.pass = pbh_detectable(nom.C, nom.A);
        if (!c2.pass) c2.note = "(C,A) fails the PBH detectability test";
        report.a2.push_back(c2);

        AssumptionCheck c5;
        ZeroStructure zs;
        try {
            zs = transmission_zeros(nom);
            if (zs.zeros.empty()) {
                c5.pass   = true;
                c5.margin = std::numeric_limits<double>::infinity();
            } else {
                c5.margin = set_distance(sigma, zs.zeros);
                c5.pass   = c5.margin > opt.a5_margin;
                if (!c5.pass) {
                    c5.note = "exosystem eigenvalue within margin of a transmission zero";
                }
            }
        } catch (const std::exception& ex) {
            c5.pass = false;
            c5.note = ex.what();
        }
        report.a5.push_back(c5);
        report.delta.push_back(compute_delta(sigma, zs));
        report.zeros.push_back(zs);
    }

    double max_re = 0.0;
    for (const Complex& lam : sigma) max_re = std::max(max_re, std::abs(lam.real()));
    report.a3.pass   = max_re <= opt.a3_tol;
    report.a3.margin = max_re;
    if (!report.a3.pass) report.a3.note = "exosystem eigenvalues leave the imaginary axis";

    report.a4_window_used = scenario.sim.a4_window > 0.0 ? scenario.sim.a4_window
                                                         : scenario.schedule.period();
    try {
        report.a4.pass = check_uniform_reachability(scenario.schedule,
                                                    report.a4_window_used);
        if (!report.a4.pass) report.a4.note = "node 0 is not uniformly globally reachable";
    } catch (const std::exception& ex) {
        report.a4.pass = false;
        report.a4.note = ex.what();
    }
    return report;
}

Matrix closed_loop_matrix(const AgentModel& data, const CompensatorGains& gains) {
    const int n  = data.n();
    const int nc = static_cast<int>(gains.E.rows());

    Matrix M = Matrix::Zero(n + nc, n + nc);
    M.topLeftCorner(n, n)       = data.A;
    M.topRightCorner(n, nc)     = data.B * gains.K;
    M.bottomLeftCorner(nc, n)   = gains.F * data.C;
    M.bottomRightCorner(nc, nc) = gains.E + gains.F * data.D * gains.K;
    return M;
}

RegulatorSolution regulator_solution(const AgentModel& data, const CompensatorGains& gains,
                                     const Matrix& S0) {
    RegulatorSolution sol;
    sol.M = closed_loop_matrix(data, gains);
    if (!is_hurwitz(sol.M)) {
        throw std::runtime_error(
            "regulator_solution: closed loop is not Hurwitz, solution not unique");
    }
    const int r  = static_cast<int>(S0.rows());
    const int n  = data.n();
    const int nc = static_cast<int>(gains.E.rows());

    Matrix R = Matrix::Zero(n + nc, r);
    R.topRows(n)     = data.P;
    R.bottomRows(nc) = gains.F * data.Q;

    sol.X = solve_sylvester(sol.M, S0, R);
    sol.sylvester_residual = (sol.X * S0 - sol.M * sol.X - R).norm();

    Matrix CDK(data.q(), n + nc);
    CDK.leftCols(n)   = data.C;
    CDK.rightCols(nc) = data.D * gains.K;
    sol.output_residual = (CDK * sol.X + data.Q).norm();
    return sol;
}

RateFit exp_rate_fit(const std::vector<double>& t, const std::vector<double>& values,
                     const RateFitOptions& opt) {
    if (t.size() != values.size() || t.empty()) {
        throw std::invalid_argument("exp_rate_fit: mismatched or empty series");
    }
    const size_t n     = t.size();
    const size_t start = static_cast<size_t>(
        std::floor(static_cast<double>(n) * (1.0 - opt.tail_fraction)));

    double vmax = 0.0;
    for (double v : values) vmax = std::max(vmax, v);
    const double floor_abs = opt.floor_rel > 0.0 ? opt.floor_rel * vmax : 0.0;

    std::vector<double> ts, vs;
    for (size_t i = start; i < n; ++i) {
        if (values[i] > floor_abs && values[i] > 0.0) {
            ts.push_back(t[i]);
            vs.push_back(values[i]);
        }
    }

    RateFit fit;
    if (static_cast<int>(ts.size()) < std::max(2, opt.min_fit_points)) {
        // Everything in the tail sits at or below the floor: converged
        // exactly, as far as the data can resolve.
        fit.slope        = -std::numeric_limits<double>::infinity();
        fit.r_squared    = 1.0;
        fit.samples_used = static_cast<int>(ts.size());
        return fit;
    }

    if (opt.envelope_bins > 0) {
        // Max per bin, placed at the argmax time; smooths oscillatory decay
        // onto its envelope.
        const double t0 = ts.front(), t1 = ts.back();
        const double width = (t1 - t0) / opt.envelope_bins;
        std::vector<double> bt, bv;
        if (width > 0.0) {
            size_t i = 0;
            for (int b = 0; b < opt.envelope_bins; ++b) {
                const double hi  = (b == opt.envelope_bins - 1)
                                       ? std::numeric_limits<double>::infinity()
                                       : t0 + (b + 1) * width;
                double best_v = -1.0, best_t = 0.0;
                while (i < ts.size() && ts[i] < hi) {
                    if (vs[i] > best_v) {
                        best_v = vs[i];
                        best_t = ts[i];
                    }
                    ++i;
                }
                if (best_v > 0.0) {
                    bt.push_back(best_t);
                    bv.push_back(best_v);
                }
            }
            if (static_cast<int>(bt.size()) <
                std::max(2, opt.min_fit_points)) {
                fit.slope        = -std::numeric_limits<double>::infinity();
                fit.r_squared    = 1.0;
                fit.samples_used = static_cast<int>(bt.size());
                return fit;
            }
            ts = std::move(bt);
            vs = std::move(bv);
        }
    }

    const size_t m = ts.size();
    double sx = 0.0, sy = 0.0;
    std::vector<double> ly(m);
    for (size_t i = 0; i < m; ++i) {
        ly[i] = std::log(vs[i]);
        sx += ts[i];
        sy += ly[i];
    }
    const double mx = sx / static_cast<double>(m);
    const double my = sy / static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < m; ++i) {
        sxx += (ts[i] - mx) * (ts[i] - mx);
        sxy += (ts[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    fit.slope        = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.samples_used = static_cast<int>(m);
    if (syy <= 1e-30) {
        fit.r_squared = 1.0;  // flat and perfectly fit
    } else {
        const double ss_res = syy - fit.slope * sxy;
        fit.r_squared       = 1.0 - ss_res / syy;
    }
    return fit;
}

RateFit lemma2_probe(const std::function<Matrix(double)>& A1,
                     const std::function<Matrix(double)>& A2,
                     const std::function<Vector(double)>& A3, const Vector& x0,
                     double horizon, double dt, const RateFitOptions& opt) {
    VectorField field = [&](double t, const Vector& x) -> Vector {
        return A1(t) * x + A2(t) * x + A3(t);
    };
    const long steps = std::llround(horizon / dt);
    Vector x = x0;
    std::vector<double> ts{0.0}, norms{x.norm()};
    ts.reserve(static_cast<size_t>(steps) + 1);
    norms.reserve(static_cast<size_t>(steps) + 1);
    for (long s = 1; s <= steps; ++s) {
        x = rk4_step(field, x, static_cast<double>(s - 1) * dt, dt);
        ts.push_back(static_cast<double>(s) * dt);
        norms.push_back(x.norm());
    }
    return exp_rate_fit(ts, norms, opt);
}

namespace {

// One joint perturbation of all six matrices, uniform in the Frobenius ball.
PerturbationSpec draw_perturbation(const AgentModel& nominal, double radius, Rng& rng) {
    PerturbationSpec spec;
    Matrix dA = Matrix::Zero(nominal.A.rows(), nominal.A.cols());
    Matrix dB = Matrix::Zero(nominal.B.rows(), nominal.B.cols());
    Matrix dC = Matrix::Zero(nominal.C.rows(), nominal.C.cols());
    Matrix dD = Matrix::Zero(nominal.D.rows(), nominal.D.cols());
    Matrix dP = Matrix::Zero(nominal.P.rows(), nominal.P.cols());
    Matrix dQ = Matrix::Zero(nominal.Q.rows(), nominal.Q.cols());

    Matrix* mats[] = {&dA, &dB, &dC, &dD, &dP, &dQ};
    double sq      = 0.0;
    long dim       = 0;
    for (Matrix* m : mats) {
        for (long i = 0; i < m->size(); ++i) {
            const double g = rng.normal();
            m->data()[i]   = g;
            sq += g * g;
            ++dim;
        }
    }
    const double u     = rng.uniform();
    const double norm  = std::sqrt(sq);
    const double scale = norm > 0.0
                             ? radius * std::pow(u, 1.0 / static_cast<double>(dim)) / norm
                             : 0.0;
    for (Matrix* m : mats) (*m) *= scale;

    spec.A = dA;
    spec.B = dB;
    spec.C = dC;
    spec.D = dD;
    spec.P = dP;
    spec.Q = dQ;
    return spec;
}

}  // namespace

std::vector<SweepPoint> perturbation_sweep(const Scenario& scenario,
                                           const std::vector<double>& radius_grid,
                                           int samples_per_radius, uint64_t seed,
                                           const SweepOptions& opt) {
    scenario.validate();
    const Matrix& S0            = scenario.exo.S0;
    const ExosystemBroadcast bc = exosystem_broadcast(S0);

    // Gains pinned at lambda0 from the nominal models.
    std::vector<CompensatorGains> gains;
    for (const AgentSpec& agent : scenario.agents) {
        gains.push_back(synthesize_gains(agent.nominal, bc.lambda0));
    }

    std::vector<SweepPoint> table;
    for (size_t ri = 0; ri < radius_grid.size(); ++ri) {
        const double radius = radius_grid[ri];
        int successes       = 0;
        for (int s = 0; s < samples_per_radius; ++s) {
            Rng rng(derive_seed(seed, ri, static_cast<uint64_t>(s)));
            bool all_ok = true;
            for (size_t i = 0; i < scenario.agents.size(); ++i) {
                const AgentModel data = perturb(
                    scenario.agents[i].nominal,
                    draw_perturbation(scenario.agents[i].nominal, radius, rng));
                const Matrix M = closed_loop_matrix(data, gains[i]);
                if (!is_hurwitz(M, opt.hurwitz_margin)) {
                    all_ok = false;
                    break;
                }
                const RegulatorSolution sol = regulator_solution(data, gains[i], S0);
                if (sol.output_residual > opt.residual_tol) {
                    all_ok = false;
                    break;
                }
            }
            if (all_ok) ++successes;
        }
        table.push_back({radius, static_cast<double>(successes) /
                                     static_cast<double>(samples_per_radius)});
    }
    return table;
}

}  // namespace regsim
