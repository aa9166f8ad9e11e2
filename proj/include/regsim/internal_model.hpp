#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "regsim/graph.hpp"
#include "regsim/linalg.hpp"
#include "regsim/rng.hpp"
#include "regsim/types.hpp"

// Internal-model machinery: the root/coefficient map, companion-form 1-copy
// and q-copy blocks, the projection that keeps eigenvalue estimates a safe
// distance from purely imaginary transmission zeros, and the distributed
// estimate update law.

namespace regsim {

// Per-agent estimate of the exosystem's minimal-polynomial roots. The free
// parameters are beta (imaginary parts) for the leading floor(k/2)
// components; alpha (real parts) is derived by the projection and the
// trailing components follow by conjugation, plus a zero root when k is odd.
struct InternalModelEstimate {
    int degree = 0;  // k
    Vector alpha;    // floor(k/2), always >= 0
    Vector beta;     // floor(k/2)

    bool has_zero_root() const { return degree % 2 == 1; }
    int pair_count() const { return degree / 2; }
};

// Monic coefficients of (s - lambda_1)...(s - lambda_k). The input must be
// conjugate-symmetric; imaginary residue is checked below 1e-12 before being
// discarded.
Vector coeffs_from_roots(const CVector& lambda);

// k x k companion block G' with last row [-c_k ... -c_1], and H' = e_k.
std::pair<Matrix, Vector> build_one_copy(const Vector& c);

// Block-diagonal q copies of (G', H').
std::pair<Matrix, Matrix> build_q_copy(const Vector& c, int q);

struct AlphaProjection {
    double alpha = 0.0;
    std::optional<double> gamma;  // imaginary part of the nearest imaginary zero
};

// The projection behind the estimate update: alpha lifts beta onto the
// radius-delta circle around the nearest purely imaginary zero when beta
// falls inside it. Ties pick the zero with the smaller imaginary part.
AlphaProjection project_alpha(double beta_l, const std::vector<double>& imag_zero_imags,
                              double delta);

// One explicit Euler step of the beta consensus over the current digraph.
// Row i of betas carries node i's estimates; row 0 is pinned to the
// leader values before and after the step. Throws when dt times the largest
// in-degree exceeds 1 (Euler stability of the consensus step).
Matrix eig_update_step(const Matrix& betas, const Vector& leader_imags,
                       const WeightedDigraph& g, double dt);

// [alpha + i beta; alpha - i beta; 0 when k is odd].
CVector assemble_lambda(const InternalModelEstimate& est);

// Initial beta draw: uniform per component over [range.first, range.second),
// rejection-resampled until each component sits at distance >= delta from
// every purely imaginary zero. Throws after bounded retries.
Vector init_beta(const std::vector<double>& imag_zero_imags, double delta, int k,
                 Rng& rng, std::pair<double, double> range);

// What node 0 broadcasts: the minimal-polynomial degree and the imaginary
// parts of the leading root of each conjugate pair, sorted descending so all
// agents agree on component order.
struct ExosystemBroadcast {
    int degree = 0;        // k
    Vector imags;          // floor(k/2), descending
    CVector lambda0;       // assembled reference roots
    Vector coeffs;         // minimal-polynomial coefficients of S0
};

ExosystemBroadcast exosystem_broadcast(const Matrix& S0, double tol = 1e-9);

}  // namespace regsim
