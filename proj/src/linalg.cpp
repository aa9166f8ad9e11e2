#include "regsim/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace regsim {

namespace {

// Swap the diagonal entries k and k+1 of a complex Schur form T, updating the
// unitary factor U. The rotation's first column is the normalized eigenvector
// of the 2x2 block for the trailing eigenvalue.
void swap_schur_adjacent(CMatrix& T, CMatrix& U, int k) {
    const Complex t11 = T(k, k);
    const Complex t12 = T(k, k + 1);
    const Complex t22 = T(k + 1, k + 1);

    const double nrm = std::sqrt(std::norm(t12) + std::norm(t22 - t11));
    if (nrm < 1e-300) {
        return;  // identical eigenvalues, nothing to move
    }
    const Complex a = t12 / nrm;
    const Complex b = (t22 - t11) / nrm;

    CMatrix G(2, 2);
    G << a, -std::conj(b), b, std::conj(a);

    const int n = static_cast<int>(T.rows());
    T.block(0, k, k + 2, 2) = T.block(0, k, k + 2, 2) * G;
    T.block(k, k, 2, n - k) = G.adjoint() * T.block(k, k, 2, n - k);
    T(k + 1, k)             = Complex(0.0, 0.0);
    U.middleCols(k, 2)      = U.middleCols(k, 2) * G;
}

// Reorder a complex Schur form so that every diagonal entry satisfying
// `select` comes first, preserving relative order. Returns the count moved.
template <typename Select>
int reorder_schur(CMatrix& T, CMatrix& U, Select select) {
    const int n = static_cast<int>(T.rows());
    int front   = 0;
    for (int i = 0; i < n; ++i) {
        if (select(T(i, i))) {
            for (int j = i; j > front; --j) {
                swap_schur_adjacent(T, U, j - 1);
            }
            ++front;
        }
    }
    return front;
}

Matrix symmetrize(const Matrix& X) { return 0.5 * (X + X.transpose()); }

// Membership count of z in a list, matched within an absolute-plus-relative
// tolerance.
bool contains_close(const std::vector<Complex>& list, Complex z, double tol) {
    for (const Complex& w : list) {
        if (std::abs(w - z) <= tol * (1.0 + std::abs(z))) return true;
    }
    return false;
}

void sort_complex(std::vector<Complex>& v) {
    std::sort(v.begin(), v.end(), [](Complex a, Complex b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
}

}  // namespace

void AgentModel::validate() const {
    const int nn = n(), mm = m(), qq = q(), rr = r();
    auto fail = [](const std::string& what) {
        throw std::invalid_argument("AgentModel: " + what);
    };
    if (A.rows() != A.cols()) fail("A must be square");
    if (B.rows() != nn) fail("B row count must equal state dimension");
    if (C.cols() != nn) fail("C column count must equal state dimension");
    if (D.rows() != qq || D.cols() != mm) fail("D must be q x m");
    if (P.rows() != nn || P.cols() != rr) fail("P must be n x r");
    if (Q.rows() != qq || Q.cols() != rr) fail("Q must be q x r");
}

int svd_rank(const CMatrix& M, const RankOptions& opt) {
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<CMatrix> svd(M);
    const Vector s = svd.singularValues();
    if (s.size() == 0) return 0;
    const double thresh = opt.rel_tol * std::max(M.rows(), M.cols()) * s(0);
    int rank = 0;
    for (int i = 0; i < s.size(); ++i) {
        if (s(i) > thresh) ++rank;
    }
    return rank;
}

bool pbh_stabilizable(const Matrix& A, const Matrix& B, double tol,
                      const RankOptions& rank_opt) {
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    Eigen::EigenSolver<Matrix> es(A);
    for (int i = 0; i < n; ++i) {
        const Complex lam = es.eigenvalues()(i);
        if (lam.real() < -tol) continue;
        CMatrix pencil(n, n + m);
        pencil.leftCols(n)  = A.cast<Complex>() - lam * CMatrix::Identity(n, n);
        pencil.rightCols(m) = B.cast<Complex>();
        if (svd_rank(pencil, rank_opt) < n) return false;
    }
    return true;
}

bool pbh_detectable(const Matrix& C, const Matrix& A, double tol,
                    const RankOptions& rank_opt) {
    return pbh_stabilizable(A.transpose(), C.transpose(), tol, rank_opt);
}

namespace {

// Finite generalized eigenvalues of the square Rosenbrock pencil. Throws on a
// singular (identically rank-deficient) pencil.
std::vector<Complex> square_pencil_zeros(const Matrix& A, const Matrix& B,
                                         const Matrix& C, const Matrix& D) {
    const int n  = static_cast<int>(A.rows());
    const int q  = static_cast<int>(C.rows());
    const int np = n + q;

    Matrix Mp(np, np);
    Mp.topLeftCorner(n, n)     = A;
    Mp.topRightCorner(n, q)    = B;
    Mp.bottomLeftCorner(q, n)  = C;
    Mp.bottomRightCorner(q, q) = D;
    Matrix Np                  = Matrix::Zero(np, np);
    Np.topLeftCorner(n, n)     = Matrix::Identity(n, n);

    Eigen::GeneralizedEigenSolver<Matrix> ges;
    ges.compute(Mp, Np, false);

    const double scale = std::max(1.0, Mp.norm());
    std::vector<Complex> zeros;
    for (int i = 0; i < np; ++i) {
        const Complex alpha = ges.alphas()(i);
        const double beta   = ges.betas()(i);
        if (std::abs(beta) > 1e-10) {
            zeros.push_back(alpha / beta);
        } else if (std::abs(alpha) <= 1e-10 * scale) {
            throw std::runtime_error(
                "transmission_zeros: degenerate (identically rank-deficient) pencil");
        }
        // |beta| ~ 0 with alpha away from 0 is an infinite zero; skip.
    }
    return zeros;
}

}  // namespace

ZeroStructure transmission_zeros(const AgentModel& model, const ZeroOptions& opt) {
    model.validate();
    const int n = model.n(), m = model.m(), q = model.q();

    std::vector<Complex> candidates;
    bool verify_by_rank = false;

    if (m == q) {
        candidates = square_pencil_zeros(model.A, model.B, model.C, model.D);
    } else if (m > q) {
        // Harvest candidates from every square sub-pencil (all state columns
        // plus q of the m input columns), then keep the ones where the full
        // pencil genuinely drops rank.
        verify_by_rank = true;
        std::vector<int> pick(q);
        std::vector<int> comb(q);
        for (int i = 0; i < q; ++i) comb[i] = i;
        bool done = false;
        while (!done) {
            Matrix Bs(n, q), Ds(q, q);
            for (int j = 0; j < q; ++j) {
                Bs.col(j) = model.B.col(comb[j]);
                Ds.col(j) = model.D.col(comb[j]);
            }
            try {
                auto zs = square_pencil_zeros(model.A, Bs, model.C, Ds);
                candidates.insert(candidates.end(), zs.begin(), zs.end());
            } catch (const std::runtime_error&) {
                // this sub-pencil is singular; other column choices may not be
            }
            int i = q - 1;
            while (i >= 0 && comb[i] == m - q + i) --i;
            if (i < 0) {
                done = true;
            } else {
                ++comb[i];
                for (int j = i + 1; j < q; ++j) comb[j] = comb[j - 1] + 1;
            }
        }
    } else {
        // q > m: the pencil has fewer columns than n+q, so its rank is below
        // n+q everywhere.
        throw std::runtime_error(
            "transmission_zeros: degenerate pencil (more outputs than inputs)");
    }

    // Deduplicate and, for the scan path, verify the rank drop on the full
    // pencil.
    std::vector<Complex> zeros;
    const int full_rank = n + q;
    for (Complex z : candidates) {
        if (contains_close(zeros, z, 1e-8)) continue;
        if (verify_by_rank) {
            CMatrix pencil(n + q, n + m);
            pencil.topLeftCorner(n, n) =
                model.A.cast<Complex>() - z * CMatrix::Identity(n, n);
            pencil.topRightCorner(n, m)    = model.B.cast<Complex>();
            pencil.bottomLeftCorner(q, n)  = model.C.cast<Complex>();
            pencil.bottomRightCorner(q, m) = model.D.cast<Complex>();
            if (svd_rank(pencil, opt.rank) >= full_rank) continue;
        }
        zeros.push_back(z);
    }

    // Enforce exact conjugate closure: pair positive-imaginary zeros with
    // their mirror and average; flatten near-real ones onto the axis.
    for (Complex& z : zeros) {
        if (std::abs(z.imag()) <= 1e-8 * (1.0 + std::abs(z))) z = Complex(z.real(), 0.0);
    }
    for (size_t i = 0; i < zeros.size(); ++i) {
        if (zeros[i].imag() <= 0.0) continue;
        for (size_t j = 0; j < zeros.size(); ++j) {
            if (zeros[j].imag() >= 0.0) continue;
            if (std::abs(zeros[j] - std::conj(zeros[i])) <=
                1e-8 * (1.0 + std::abs(zeros[i]))) {
                const Complex mean = 0.5 * (zeros[i] + std::conj(zeros[j]));
                zeros[i]           = mean;
                zeros[j]           = std::conj(mean);
                break;
            }
        }
    }
    sort_complex(zeros);

    ZeroStructure zs;
    zs.zeros = zeros;
    for (Complex z : zeros) {
        if (std::abs(z.real()) <= opt.imag_tol) {
            zs.imag_zeros.push_back(Complex(0.0, z.imag()));
        }
    }
    return zs;
}

double set_distance(const std::vector<Complex>& s1, const std::vector<Complex>& s2) {
    if (s1.empty() || s2.empty()) {
        throw std::invalid_argument("set_distance: empty set");
    }
    double best = std::numeric_limits<double>::infinity();
    for (Complex a : s1) {
        for (Complex b : s2) {
            best = std::min(best, std::abs(a - b));
        }
    }
    return best;
}

double compute_delta(const std::vector<Complex>& sigma_S0, const ZeroStructure& zs) {
    if (sigma_S0.empty()) {
        throw std::invalid_argument("compute_delta: empty exosystem spectrum");
    }
    if (zs.imag_zeros.empty()) return 0.0;

    std::vector<Complex> complement;
    std::vector<Complex> remaining = zs.imag_zeros;
    for (Complex z : zs.zeros) {
        bool matched = false;
        for (size_t i = 0; i < remaining.size(); ++i) {
            if (std::abs(remaining[i] - z) <= 1e-12 * (1.0 + std::abs(z))) {
                remaining.erase(remaining.begin() + static_cast<long>(i));
                matched = true;
                break;
            }
        }
        if (!matched) complement.push_back(z);
    }

    const double d_sigma = set_distance(sigma_S0, zs.imag_zeros);
    if (complement.empty()) return d_sigma;
    return std::min(d_sigma, set_distance(zs.imag_zeros, complement));
}

CVector polynomial_roots(const Vector& coeffs) {
    const int k = static_cast<int>(coeffs.size());
    if (k == 0) return CVector(0);
    Matrix comp = Matrix::Zero(k, k);
    for (int i = 0; i + 1 < k; ++i) comp(i, i + 1) = 1.0;
    for (int j = 0; j < k; ++j) comp(k - 1, j) = -coeffs(k - 1 - j);
    Eigen::EigenSolver<Matrix> es(comp, false);
    CVector roots = es.eigenvalues();
    std::vector<Complex> v(roots.data(), roots.data() + k);
    sort_complex(v);
    for (int i = 0; i < k; ++i) roots(i) = v[static_cast<size_t>(i)];
    return roots;
}

MinimalPolynomial minimal_polynomial(const Matrix& S, double tol) {
    if (S.rows() != S.cols()) {
        throw std::invalid_argument("minimal_polynomial: matrix must be square");
    }
    const int r = static_cast<int>(S.rows());
    const double beta = std::max(1.0, S.norm());
    const Matrix T = S / beta;

    Matrix V(r * r, r + 1);
    Matrix power = Matrix::Identity(r, r);
    for (int j = 0; j <= r; ++j) {
        V.col(j) = Eigen::Map<const Vector>(power.data(), r * r);
        power    = T * power;
    }

    double last_residual = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= r; ++k) {
        const Matrix basis = V.leftCols(k);
        const Vector rhs   = V.col(k);
        const Vector a     = basis.colPivHouseholderQr().solve(rhs);
        const double residual = (basis * a - rhs).norm() / std::max(1.0, rhs.norm());
        last_residual         = residual;
        if (residual <= tol) {
            Vector c(k);
            double scale = beta;
            for (int l = 1; l <= k; ++l) {
                c(l - 1) = -a(k - l) * scale;
                scale *= beta;
            }
            MinimalPolynomial mp;
            mp.degree = k;
            mp.coeffs = c;
            mp.roots  = polynomial_roots(c);
            return mp;
        }
    }

    std::ostringstream msg;
    msg << "minimal_polynomial: rank test inconclusive at degree " << r
        << " (residual " << last_residual << ", tol " << tol << ")";
    throw std::runtime_error(msg.str());
}

Matrix solve_care(const Matrix& A, const Matrix& B, const CareOptions& opt) {
    const int n = static_cast<int>(A.rows());
    const Matrix G = B * B.transpose();

    Matrix H(2 * n, 2 * n);
    H.topLeftCorner(n, n)     = A;
    H.topRightCorner(n, n)    = -G;
    H.bottomLeftCorner(n, n)  = -Matrix::Identity(n, n);
    H.bottomRightCorner(n, n) = -A.transpose();

    Eigen::ComplexSchur<CMatrix> schur(H.cast<Complex>());
    if (schur.info() != Eigen::Success) {
        throw std::runtime_error("solve_care: Schur decomposition failed");
    }
    CMatrix T = schur.matrixT();
    CMatrix U = schur.matrixU();

    const double scale = std::max(1.0, H.norm());
    for (int i = 0; i < 2 * n; ++i) {
        if (std::abs(T(i, i).real()) < opt.imag_axis_tol * scale) {
            throw std::runtime_error(
                "solve_care: Hamiltonian eigenvalue on the imaginary axis");
        }
    }

    const int stable =
        reorder_schur(T, U, [](Complex lam) { return lam.real() < 0.0; });
    if (stable != n) {
        throw std::runtime_error("solve_care: stable subspace has wrong dimension");
    }

    const CMatrix U1 = U.topLeftCorner(n, n);
    const CMatrix U2 = U.bottomLeftCorner(n, n);
    // X U1 = U2  =>  U1^T X^T = U2^T
    const CMatrix Xc =
        U1.transpose().partialPivLu().solve(U2.transpose()).transpose();
    Matrix X = symmetrize(Xc.real());

    // Newton-Kleinman polish: each step solves a Lyapunov equation for the
    // correction, driving the Riccati residual toward rounding level.
    const Matrix Q = Matrix::Identity(n, n);
    for (int step = 0; step < opt.newton_refine_steps; ++step) {
        const Matrix residual =
            A.transpose() * X + X * A - X * G * X + Q;
        if (residual.norm() <= 1e-14 * scale * std::max(1.0, X.norm())) break;
        const Matrix Acl   = A - G * X;
        const Matrix delta = solve_sylvester(-Acl.transpose(), Acl, -residual);
        X                  = symmetrize(X + delta);
    }

    const double residual_norm =
        (A.transpose() * X + X * A - X * G * X + Q).norm();
    if (residual_norm > opt.residual_tol * scale * std::max(1.0, X.norm())) {
        std::ostringstream msg;
        msg << "solve_care: residual " << residual_norm << " above tolerance";
        throw std::runtime_error(msg.str());
    }
    return X;
}

Matrix stabilizing_state_gain(const Matrix& A, const Matrix& B, const CareOptions& opt) {
    if (!pbh_stabilizable(A, B)) {
        throw std::runtime_error("stabilizing_state_gain: (A, B) is not stabilizable");
    }
    const Matrix X = solve_care(A, B, opt);
    const Matrix K = -B.transpose() * X;
    if (!is_hurwitz(A + B * K)) {
        throw std::runtime_error("stabilizing_state_gain: closed loop is not Hurwitz");
    }
    return K;
}

Matrix stabilizing_observer_gain(const Matrix& A, const Matrix& C, const CareOptions& opt) {
    if (!pbh_detectable(C, A)) {
        throw std::runtime_error("stabilizing_observer_gain: (C, A) is not detectable");
    }
    const Matrix Kd = stabilizing_state_gain(A.transpose(), C.transpose(), opt);
    return -Kd.transpose();
}

namespace {

// Column substitution for T_M Y - Y T_S = C with both factors upper
// triangular.
CMatrix solve_triangular_sylvester(const CMatrix& T_M, const CMatrix& T_S,
                                   const CMatrix& C) {
    const int n = static_cast<int>(T_M.rows());
    const int p = static_cast<int>(T_S.rows());
    CMatrix Y(n, p);
    for (int j = 0; j < p; ++j) {
        CVector rhs = C.col(j);
        for (int k = 0; k < j; ++k) {
            rhs += Y.col(k) * T_S(k, j);
        }
        CMatrix shifted = T_M - T_S(j, j) * CMatrix::Identity(n, n);
        Y.col(j) = shifted.triangularView<Eigen::Upper>().solve(rhs);
    }
    return Y;
}

}  // namespace

Matrix solve_sylvester(const Matrix& M, const Matrix& S, const Matrix& R,
                       double sep_tol) {
    const int n = static_cast<int>(M.rows());
    const int p = static_cast<int>(S.rows());
    if (R.rows() != n || R.cols() != p) {
        throw std::invalid_argument("solve_sylvester: R must be n x p");
    }

    Eigen::ComplexSchur<CMatrix> schur_M(M.cast<Complex>());
    Eigen::ComplexSchur<CMatrix> schur_S(S.cast<Complex>());
    if (schur_M.info() != Eigen::Success || schur_S.info() != Eigen::Success) {
        throw std::runtime_error("solve_sylvester: Schur decomposition failed");
    }
    const CMatrix& T_M = schur_M.matrixT();
    const CMatrix& T_S = schur_S.matrixT();
    const CMatrix& U   = schur_M.matrixU();
    const CMatrix& V   = schur_S.matrixU();

    const double scale = std::max(1.0, M.norm() + S.norm());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            if (std::abs(T_M(i, i) - T_S(j, j)) <= sep_tol * scale) {
                throw std::runtime_error(
                    "solve_sylvester: spectra of M and S overlap within tolerance");
            }
        }
    }

    // X S = M X + R  <=>  T_M Y - Y T_S = U^H (-R) V with Y = U^H X V.
    const CMatrix C = U.adjoint() * (-R).cast<Complex>() * V;
    CMatrix Y       = solve_triangular_sylvester(T_M, T_S, C);
    Matrix X        = (U * Y * V.adjoint()).real();

    // One refinement pass on the residual through the same factorization.
    const Matrix residual = X * S - M * X - R;
    const CMatrix C2      = U.adjoint() * residual.cast<Complex>() * V;
    const CMatrix Yd      = solve_triangular_sylvester(T_M, T_S, C2);
    X += (U * Yd * V.adjoint()).real();
    return X;
}

bool is_hurwitz(const Matrix& M, double margin) {
    return spectral_abscissa(M) < -margin;
}

double spectral_abscissa(const Matrix& M) {
    if (M.size() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::EigenSolver<Matrix> es(M, false);
    return es.eigenvalues().real().maxCoeff();
}

std::vector<Complex> eigenvalue_set(const Matrix& M) {
    Eigen::EigenSolver<Matrix> es(M, false);
    std::vector<Complex> v(es.eigenvalues().data(),
                           es.eigenvalues().data() + M.rows());
    sort_complex(v);
    return v;
}

}  // namespace regsim
