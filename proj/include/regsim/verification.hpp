#pragma once

#include <functional>
#include <string>
#include <vector>

#include "regsim/controllers.hpp"
#include "regsim/sim.hpp"

// Numerical counterparts of the convergence analysis: the standing-assumption
// audit, closed-loop matrix assembly, regulator-equation residuals,
// exponential-rate fitting, and an empirical probe of the robustness
// neighborhood.

namespace regsim {

struct AssumptionCheck {
    bool pass = false;
    double margin = 0.0;
    std::string note;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> a1;  // per agent: stabilizability
    std::vector<AssumptionCheck> a2;  // per agent: detectability
    std::vector<AssumptionCheck> a5;  // per agent: zero separation
    AssumptionCheck a3;               // exosystem eigenvalues on the axis
    AssumptionCheck a4;               // uniform reachability of node 0
    double a4_window_used = 0.0;
    std::vector<double> delta;        // per agent
    std::vector<ZeroStructure> zeros; // per agent

    bool all_pass() const;
};

struct AuditOptions {
    double a3_tol = 1e-9;
    double a5_margin = 1e-6;
};

// Pure function of the scenario; failures are report entries, not exceptions.
AssumptionReport audit_assumptions(const Scenario& scenario, const AuditOptions& opt = {});

// M = [[A, B K], [F C, E + F D K]] from the given (possibly perturbed) data
// and the given gains.
Matrix closed_loop_matrix(const AgentModel& data, const CompensatorGains& gains);

struct RegulatorSolution {
    Matrix M;
    Matrix X;
    double sylvester_residual = 0.0;
    double output_residual    = 0.0;  // ||[C, D K] X + Q||_F
};

// Solves X S0 = M X + [P; F Q] and reports both residuals; the output
// equation is checked rather than imposed. Throws when M is not Hurwitz.
RegulatorSolution regulator_solution(const AgentModel& data, const CompensatorGains& gains,
                                     const Matrix& S0);

struct RateFit {
    double slope     = 0.0;  // per-second decay rate of log norm
    double r_squared = 0.0;
    int samples_used = 0;
};

struct RateFitOptions {
    double tail_fraction = 0.5;
    // > 0 turns on envelope binning (max per bin), for oscillatory decay.
    int envelope_bins = 0;
    // Samples below floor_rel * max value are treated as converged and
    // excluded; an empty tail reports slope -inf with r_squared 1.
    double floor_rel = 0.0;
    // Fewer surviving points than this also reports converged-exactly: there
    // is nothing left above the floor to regress.
    int min_fit_points = 2;
};

// Least-squares fit of log(value) against t over the tail window.
RateFit exp_rate_fit(const std::vector<double>& t, const std::vector<double>& values,
                     const RateFitOptions& opt = {});

// Integrates x' = A1(t) x + A2(t) x + A3(t) and fits the tail decay of
// ||x||: a numeric witness for the vanishing-perturbation argument, not a
// proof.
RateFit lemma2_probe(const std::function<Matrix(double)>& A1,
                     const std::function<Matrix(double)>& A2,
                     const std::function<Vector(double)>& A3, const Vector& x0,
                     double horizon, double dt, const RateFitOptions& opt = {});

struct SweepPoint {
    double radius   = 0.0;
    double fraction = 0.0;  // samples with every agent's M Hurwitz and small residual
};

struct SweepOptions {
    double hurwitz_margin = 1e-6;
    double residual_tol   = 1e-6;
};

// Perturbations drawn uniformly from the Frobenius ball of each radius,
// applied jointly to (A,B,C,D,P,Q) of every agent, with gains synthesized
// once at lambda0 from the nominal models. Deterministic given the seed.
std::vector<SweepPoint> perturbation_sweep(const Scenario& scenario,
                                           const std::vector<double>& radius_grid,
                                           int samples_per_radius, uint64_t seed,
                                           const SweepOptions& opt = {});

}  // namespace regsim
