#pragma once

#include <optional>
#include <vector>

#include "regsim/internal_model.hpp"
#include "regsim/linalg.hpp"
#include "regsim/types.hpp"

// The two distributed controller parts: the exosystem generator (each agent's
// consensus copy of the exosystem) and the dynamic compensator built around
// the q-copy internal model, with gains re-synthesized as the local
// eigenvalue estimate moves.

namespace regsim {

enum class Integrator { Euler, RK4 };

struct GeneratorState {
    Vector w;  // local exosystem state estimate
    Matrix S;  // local exosystem dynamics estimate
};

struct WeightedNeighbor {
    const GeneratorState* state;
    double weight;
};

// dw = S w + sum a (w_j - w), dS = sum a (S_j - S).
GeneratorState generator_deriv(const GeneratorState& self,
                               const std::vector<WeightedNeighbor>& neighbors);

// One integrator step with the neighbor states held fixed. With no neighbors
// this is the exosystem itself: dw = S w, S constant.
GeneratorState generator_step(const GeneratorState& self,
                              const std::vector<WeightedNeighbor>& neighbors,
                              double dt, Integrator method);

struct CompensatorGains {
    Matrix K1;     // m x n
    Matrix K2;     // m x (q k)
    Matrix L_obs;  // n x q
    Matrix E;      // (n + qk) x (n + qk)
    Matrix F;      // (n + qk) x q
    Matrix K;      // m x (n + qk), [K1 K2]
    CVector synth_lambda;
};

struct CompensatorState {
    Vector xi;
    InternalModelEstimate estimate;
    CompensatorGains gains;
};

struct SynthesisOptions {
    // Reject lambda closer than this to a transmission zero.
    double zero_margin = 1e-6;
    CareOptions care;
};

// Build the q-copy internal model at lambda, stabilize the augmented pair
// ([A 0; HC G], [B; HD]) by Riccati synthesis, pick an observer gain for
// (C, A), and assemble E, F, K. The transmission zeros are computed from the
// nominal model unless supplied. Throws when lambda sits within zero_margin
// of a transmission zero, has a negative real part, or synthesis fails.
CompensatorGains synthesize_gains(const AgentModel& nominal, const CVector& lambda,
                                  const std::optional<ZeroStructure>& zeros = std::nullopt,
                                  const SynthesisOptions& opt = {});

// e = C x + D u + Q w_local (the only measurable regulation signal).
Vector error_output(const AgentModel& model, const Vector& x, const Vector& u,
                    const Vector& w_local);

// z = C x + D u + Q w0, against the true exosystem state; reporting only.
Vector regulated_output(const AgentModel& model, const Vector& x, const Vector& u,
                        const Vector& w0);

Vector control(const CompensatorGains& gains, const Vector& xi);

// One integrator step of xi' = E xi + F e with e held fixed.
Vector compensator_step(const Vector& xi, const CompensatorGains& gains,
                        const Vector& e, double dt, Integrator method);

// Re-runs synthesis when the estimate has drifted more than margin (in the
// max norm) from the lambda the gains were built at. Returns whether gains
// were recomputed.
bool maybe_resynthesize(CompensatorState& state, const AgentModel& nominal,
                        const std::optional<ZeroStructure>& zeros, double margin,
                        const SynthesisOptions& opt = {});

}  // namespace regsim
