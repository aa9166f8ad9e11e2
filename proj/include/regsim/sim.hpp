#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "regsim/controllers.hpp"
#include "regsim/graph.hpp"
#include "regsim/rng.hpp"
#include "regsim/types.hpp"

// Deterministic fixed-step closed-loop simulation: true plants driven by the
// exosystem, distributed generators, the beta consensus, compensators with
// piecewise-constant gains, topology switching, and full trace recording.

namespace regsim {

// Additive entrywise deltas, applied to the true model only.
struct PerturbationSpec {
    std::optional<Matrix> A, B, C, D, P, Q;

    bool empty() const { return !A && !B && !C && !D && !P && !Q; }
};

AgentModel perturb(const AgentModel& agent, const PerturbationSpec& spec);

struct AgentSpec {
    AgentModel nominal;
    PerturbationSpec perturbation;
    AgentModel true_model;  // nominal with the perturbation applied
};

struct SimParams {
    double dt          = 1e-3;
    double t_final     = 200.0;
    Integrator integrator = Integrator::RK4;
    uint64_t seed      = 1;
    double resynth_margin = 1e-3;
    // Also refresh gains this often (seconds) whenever the estimate moved at
    // all. A margin alone freezes the gains an O(margin) distance from
    // lambda0, which leaves a matching floor under the regulated output; the
    // periodic refresh keeps the synthesis point converging with the
    // estimate. <= 0 disables.
    double resynth_interval = 1.0;
    double a4_window   = -1.0;  // <= 0 selects one schedule period
};

enum class SInitMode { NominalA, ExoS0, Explicit };

// Initial conditions: explicit values win over ranges; ranges feed the seeded
// draws in the documented order.
struct InitSpec {
    std::optional<Vector> w0;
    std::optional<std::vector<Vector>> x;
    std::optional<std::vector<Vector>> w;
    std::optional<std::vector<Vector>> xi;
    std::optional<std::vector<Vector>> beta;
    std::optional<std::vector<Matrix>> S;
    SInitMode s_mode = SInitMode::NominalA;

    std::pair<double, double> w0_range{-1.0, 1.0};
    std::pair<double, double> x_range{-1.0, 1.0};
    std::pair<double, double> w_range{-1.0, 1.0};
    std::pair<double, double> xi_range{-1.0, 1.0};
    std::pair<double, double> beta_range{-1.0, 1.0};
};

struct Scenario {
    Exosystem exo;
    std::vector<AgentSpec> agents;
    TopologySchedule schedule;
    SimParams sim;
    InitSpec init;
    double alpha_min = 0.1;

    int agent_count() const { return static_cast<int>(agents.size()); }
    int exo_dim() const { return static_cast<int>(exo.S0.rows()); }

    void validate() const;
};

struct ResynthEvent {
    double t;
    int agent;  // 0-based
    CVector lambda;
};

struct AgentTrace {
    Matrix x;       // n x samples
    Matrix xi;      // (n + qk) x samples
    Matrix w;       // r x samples
    Matrix z;       // q x samples
    Matrix e;       // q x samples
    Matrix u;       // m x samples
    Vector s_dist;  // ||S_i - S0||_F per sample
    CMatrix lambda; // k x samples
};

struct SimulationTrace {
    Vector t;
    Matrix w0;  // r x samples
    std::vector<AgentTrace> agents;
    std::vector<int> segment_index;
    std::vector<ResynthEvent> resynth_events;
    std::vector<int> resynth_count;  // per agent
    CVector lambda0;  // node 0's reference roots
    std::string draw_order_note;
    uint64_t seed = 0;

    int sample_count() const { return static_cast<int>(t.size()); }
};

struct AuditFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using VectorField = std::function<Vector(double, const Vector&)>;

// Classical 4th-order step.
Vector rk4_step(const VectorField& f, const Vector& x, double t, double dt);
Vector euler_step(const VectorField& f, const Vector& x, double t, double dt);

struct SimulateOptions {
    // Run even when the assumption audit fails.
    bool force = false;
};

// Synchronous rounds at fixed dt: read the active topology, Euler-step the
// beta consensus and project, refresh gains where the estimate drifted, then
// advance exosystem, generators, plants, and compensators as one coupled
// integrator step. Deterministic given the scenario seed. Throws when the
// audit fails (without force) or synthesis fails mid-run.
SimulationTrace simulate(const Scenario& scenario, const SimulateOptions& opt = {});

}  // namespace regsim
