#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "regsim/types.hpp"

// Numerical control kernels: PBH tests, transmission zeros, minimal
// polynomial, stabilizing gains via the algebraic Riccati equation,
// Sylvester solver, Hurwitz check, spectral set distance.

namespace regsim {

// Plant data (A,B,C,D,P,Q) for one agent. P couples the exogenous signal into
// the state equation, Q into the output equation. Stored once as the nominal
// model (used for controller synthesis) and once as the true, possibly
// perturbed model (used as the plant); see sim.hpp.
struct AgentModel {
    Matrix A, B, C, D, P, Q;

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }
    int q() const { return static_cast<int>(C.rows()); }
    int r() const { return static_cast<int>(P.cols()); }

    // Throws std::invalid_argument on any dimension mismatch.
    void validate() const;
};

struct Exosystem {
    Matrix S0;
    Vector w0_init;
};

// Transmission zeros of an agent, split into the purely imaginary subset,
// plus the separation radius delta used by the eigenvalue-estimate
// projection. delta is filled by compute_delta, not by transmission_zeros.
struct ZeroStructure {
    std::vector<Complex> zeros;
    std::vector<Complex> imag_zeros;
    double delta = 0.0;
};

struct MinimalPolynomial {
    int degree = 0;     // k
    Vector coeffs;      // monic: s^k + c[0] s^(k-1) + ... + c[k-1]
    CVector roots;      // k roots, conjugate-closed, multiplicity preserved
};

struct RankOptions {
    // Singular values below rel_tol * max(rows, cols) * sigma_max count as zero.
    double rel_tol = 1e-8;
};

// Rank of a complex matrix by singular-value thresholding.
int svd_rank(const CMatrix& M, const RankOptions& opt = {});

// PBH stabilizability: every eigenvalue of A with Re >= -tol must leave
// [A - lambda I | B] at full row rank.
bool pbh_stabilizable(const Matrix& A, const Matrix& B, double tol = 1e-9,
                      const RankOptions& rank_opt = {});

// Dual test via transposes.
bool pbh_detectable(const Matrix& C, const Matrix& A, double tol = 1e-9,
                    const RankOptions& rank_opt = {});

struct ZeroOptions {
    RankOptions rank;
    // |Re(s)| at or below this counts the zero as purely imaginary.
    double imag_tol = 1e-7;
};

// Finite s where the Rosenbrock pencil [[A - sI, B], [C, D]] drops rank.
// Square pencils (m == q) go through the generalized eigenvalues of the
// pencil; non-square ones through a rank-drop scan over candidates harvested
// from the square sub-pencils. Throws std::runtime_error if the pencil is
// identically rank-deficient (degenerate).
ZeroStructure transmission_zeros(const AgentModel& model, const ZeroOptions& opt = {});

// Minimum over pairs |s1 - s2|. Throws std::invalid_argument on empty input.
double set_distance(const std::vector<Complex>& s1, const std::vector<Complex>& s2);

// The three-case separation radius: 0 when no purely imaginary zeros exist;
// otherwise the distance from sigma(S0) to them, capped by their distance to
// the remaining zeros when those exist.
double compute_delta(const std::vector<Complex>& sigma_S0, const ZeroStructure& zs);

// Smallest k with {I, S, ..., S^k} linearly dependent, detected by a
// least-squares rank test on the vectorized powers of S (scaled to unit
// norm first). Throws if no dependence is found within degree r at tol.
MinimalPolynomial minimal_polynomial(const Matrix& S, double tol = 1e-9);

// Roots of the monic polynomial s^k + c[0] s^(k-1) + ... + c[k-1] via the
// companion matrix.
CVector polynomial_roots(const Vector& coeffs);

struct CareOptions {
    // Reject Hamiltonians with eigenvalues this close to the imaginary axis.
    double imag_axis_tol = 1e-9;
    int newton_refine_steps = 3;
    double residual_tol = 1e-8;
};

// Stabilizing solution of A'X + XA - XBB'X + I = 0 (Q = I, R = I), computed
// from the stable invariant subspace of the Hamiltonian via an ordered
// complex Schur decomposition, then polished with Newton-Kleinman steps.
Matrix solve_care(const Matrix& A, const Matrix& B, const CareOptions& opt = {});

// K with A + BK Hurwitz; K = -B'X from solve_care. Throws if (A, B) fails
// the PBH test or the Riccati solve does not converge.
Matrix stabilizing_state_gain(const Matrix& A, const Matrix& B, const CareOptions& opt = {});

// L with A - LC Hurwitz, by transpose duality.
Matrix stabilizing_observer_gain(const Matrix& A, const Matrix& C, const CareOptions& opt = {});

// Unique X with X*S = M*X + R, valid when sigma(M) and sigma(S) are disjoint
// (Bartels-Stewart on complex Schur forms, one refinement pass). Throws when
// the spectra overlap within sep_tol.
Matrix solve_sylvester(const Matrix& M, const Matrix& S, const Matrix& R,
                       double sep_tol = 1e-8);

// True iff max Re eig(M) < -margin.
bool is_hurwitz(const Matrix& M, double margin = 0.0);

// max Re eig(M).
double spectral_abscissa(const Matrix& M);

std::vector<Complex> eigenvalue_set(const Matrix& M);

}  // namespace regsim
