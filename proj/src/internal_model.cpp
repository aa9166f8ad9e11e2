#include "regsim/internal_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace regsim {

namespace {

// Sort so each root with positive imaginary part is immediately followed by
// its conjugate; keeps the expansion's imaginary residue at rounding level.
std::vector<Complex> conjugate_paired_order(const CVector& lambda, double tol) {
    std::vector<Complex> pool(lambda.data(), lambda.data() + lambda.size());
    std::vector<Complex> ordered;
    ordered.reserve(pool.size());

    while (!pool.empty()) {
        // Take a real root directly, otherwise a root and its mirror.
        auto it = std::min_element(pool.begin(), pool.end(), [](Complex a, Complex b) {
            if (a.real() != b.real()) return a.real() < b.real();
            return std::abs(a.imag()) < std::abs(b.imag());
        });
        const Complex z = *it;
        pool.erase(it);
        if (std::abs(z.imag()) <= tol * (1.0 + std::abs(z))) {
            ordered.push_back(Complex(z.real(), 0.0));
            continue;
        }
        auto mate = std::find_if(pool.begin(), pool.end(), [&](Complex w) {
            return std::abs(w - std::conj(z)) <= tol * (1.0 + std::abs(z));
        });
        if (mate == pool.end()) {
            throw std::invalid_argument(
                "coeffs_from_roots: input is not conjugate-symmetric");
        }
        ordered.push_back(z);
        ordered.push_back(std::conj(z));
        pool.erase(mate);
    }
    return ordered;
}

}  // namespace

Vector coeffs_from_roots(const CVector& lambda) {
    const int k = static_cast<int>(lambda.size());
    if (k == 0) return Vector(0);

    const std::vector<Complex> roots = conjugate_paired_order(lambda, 1e-9);

    // (s - r_1)...(s - r_k), accumulated as monic coefficients.
    std::vector<Complex> poly{Complex(1.0, 0.0)};
    for (const Complex& root : roots) {
        std::vector<Complex> next(poly.size() + 1, Complex(0.0, 0.0));
        for (size_t i = 0; i < poly.size(); ++i) {
            next[i] += poly[i];
            next[i + 1] -= poly[i] * root;
        }
        poly = std::move(next);
    }

    Vector c(k);
    for (int l = 1; l <= k; ++l) {
        const Complex coeff = poly[static_cast<size_t>(l)];
        if (std::abs(coeff.imag()) >= 1e-12) {
            std::ostringstream msg;
            msg << "coeffs_from_roots: imaginary residue " << coeff.imag()
                << " at coefficient " << l;
            throw std::invalid_argument(msg.str());
        }
        c(l - 1) = coeff.real();
    }
    return c;
}

std::pair<Matrix, Vector> build_one_copy(const Vector& c) {
    const int k = static_cast<int>(c.size());
    Matrix G    = Matrix::Zero(k, k);
    for (int i = 0; i + 1 < k; ++i) G(i, i + 1) = 1.0;
    for (int j = 0; j < k; ++j) G(k - 1, j) = -c(k - 1 - j);
    Vector H     = Vector::Zero(k);
    H(k - 1)     = 1.0;
    return {G, H};
}

std::pair<Matrix, Matrix> build_q_copy(const Vector& c, int q) {
    if (q < 1) throw std::invalid_argument("build_q_copy: q must be >= 1");
    const auto [Gp, Hp] = build_one_copy(c);
    const int k         = static_cast<int>(c.size());

    Matrix G = Matrix::Zero(q * k, q * k);
    Matrix H = Matrix::Zero(q * k, q);
    for (int b = 0; b < q; ++b) {
        G.block(b * k, b * k, k, k) = Gp;
        H.block(b * k, b, k, 1)     = Hp;
    }
    return {G, H};
}

AlphaProjection project_alpha(double beta_l, const std::vector<double>& imag_zero_imags,
                              double delta) {
    if (imag_zero_imags.empty() || delta <= 0.0) {
        return {0.0, std::nullopt};
    }
    double gamma = imag_zero_imags.front();
    double best  = std::abs(beta_l - gamma);
    for (double g : imag_zero_imags) {
        const double d = std::abs(beta_l - g);
        if (d < best || (d == best && g < gamma)) {
            best  = d;
            gamma = g;
        }
    }
    AlphaProjection out;
    out.gamma = gamma;
    out.alpha = (best >= delta) ? 0.0 : std::sqrt(delta * delta - best * best);
    return out;
}

Matrix eig_update_step(const Matrix& betas, const Vector& leader_imags,
                       const WeightedDigraph& g, double dt) {
    const int nodes = g.node_count();
    if (betas.rows() != nodes) {
        throw std::invalid_argument("eig_update_step: row count must match node count");
    }
    if (leader_imags.size() != betas.cols()) {
        throw std::invalid_argument("eig_update_step: leader payload size mismatch");
    }
    if (dt <= 0.0) throw std::invalid_argument("eig_update_step: dt must be positive");
    if (dt * g.max_in_degree() > 1.0) {
        throw std::invalid_argument(
            "eig_update_step: dt times max in-degree exceeds 1 (Euler unstable)");
    }

    Matrix pinned          = betas;
    pinned.row(0)          = leader_imags.transpose();
    Matrix next            = pinned;
    const Matrix& w        = g.weights();
    for (int i = 1; i < nodes; ++i) {
        for (int j = 0; j < nodes; ++j) {
            const double a = w(i, j);
            if (a > 0.0) {
                next.row(i) += dt * a * (pinned.row(j) - pinned.row(i));
            }
        }
    }
    next.row(0) = leader_imags.transpose();
    return next;
}

CVector assemble_lambda(const InternalModelEstimate& est) {
    const int k = est.degree;
    const int p = est.pair_count();
    CVector lambda(k);
    for (int l = 0; l < p; ++l) {
        lambda(l)     = Complex(est.alpha(l), est.beta(l));
        lambda(p + l) = Complex(est.alpha(l), -est.beta(l));
    }
    if (est.has_zero_root()) lambda(k - 1) = Complex(0.0, 0.0);
    return lambda;
}

Vector init_beta(const std::vector<double>& imag_zero_imags, double delta, int k,
                 Rng& rng, std::pair<double, double> range) {
    const int p = k / 2;
    Vector beta(p);
    constexpr int kMaxRetries = 1000;
    for (int l = 0; l < p; ++l) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
            const double candidate = rng.uniform(range.first, range.second);
            double dist            = std::numeric_limits<double>::infinity();
            for (double g : imag_zero_imags) {
                dist = std::min(dist, std::abs(candidate - g));
            }
            if (imag_zero_imags.empty() || dist >= delta) {
                beta(l) = candidate;
                placed  = true;
                break;
            }
        }
        if (!placed) {
            throw std::runtime_error(
                "init_beta: no feasible initial estimate within the sampling range");
        }
    }
    return beta;
}

ExosystemBroadcast exosystem_broadcast(const Matrix& S0, double tol) {
    const MinimalPolynomial mp = minimal_polynomial(S0, tol);
    const int k                = mp.degree;
    const double pair_tol      = 1e-7;

    std::vector<double> positives;
    std::vector<double> reals;
    for (int i = 0; i < k; ++i) {
        const Complex z = mp.roots(i);
        if (z.imag() > pair_tol * (1.0 + std::abs(z))) {
            positives.push_back(z.imag());
        } else if (z.imag() >= -pair_tol * (1.0 + std::abs(z))) {
            reals.push_back(z.real());
        }
    }

    // Real roots pair among themselves with imaginary part zero; an odd
    // leftover is the zero root of an odd-degree polynomial.
    std::vector<double> imags = positives;
    for (size_t i = 0; i + 1 < reals.size(); i += 2) imags.push_back(0.0);
    std::sort(imags.rbegin(), imags.rend());

    ExosystemBroadcast bc;
    bc.degree = k;
    bc.imags  = Eigen::Map<const Vector>(imags.data(), static_cast<long>(imags.size()));
    bc.coeffs = mp.coeffs;

    InternalModelEstimate ref;
    ref.degree = k;
    ref.alpha  = Vector::Zero(k / 2);
    ref.beta   = bc.imags;
    bc.lambda0 = assemble_lambda(ref);
    return bc;
}

}  // namespace regsim
