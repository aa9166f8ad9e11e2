#include "regsim/controllers.hpp"

#include <cmath>
#include <sstream>

namespace regsim {

GeneratorState generator_deriv(const GeneratorState& self,
                               const std::vector<WeightedNeighbor>& neighbors) {
    GeneratorState d;
    d.w = self.S * self.w;
    d.S = Matrix::Zero(self.S.rows(), self.S.cols());
    for (const WeightedNeighbor& nb : neighbors) {
        d.w += nb.weight * (nb.state->w - self.w);
        d.S += nb.weight * (nb.state->S - self.S);
    }
    return d;
}

GeneratorState generator_step(const GeneratorState& self,
                              const std::vector<WeightedNeighbor>& neighbors,
                              double dt, Integrator method) {
    if (dt <= 0.0) throw std::invalid_argument("generator_step: dt must be positive");

    auto axpy = [](const GeneratorState& y, double a, const GeneratorState& d) {
        return GeneratorState{y.w + a * d.w, y.S + a * d.S};
    };

    if (method == Integrator::Euler) {
        return axpy(self, dt, generator_deriv(self, neighbors));
    }
    const GeneratorState k1 = generator_deriv(self, neighbors);
    const GeneratorState k2 = generator_deriv(axpy(self, 0.5 * dt, k1), neighbors);
    const GeneratorState k3 = generator_deriv(axpy(self, 0.5 * dt, k2), neighbors);
    const GeneratorState k4 = generator_deriv(axpy(self, dt, k3), neighbors);

    GeneratorState next;
    next.w = self.w + (dt / 6.0) * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w);
    next.S = self.S + (dt / 6.0) * (k1.S + 2.0 * k2.S + 2.0 * k3.S + k4.S);
    return next;
}

CompensatorGains synthesize_gains(const AgentModel& nominal, const CVector& lambda,
                                  const std::optional<ZeroStructure>& zeros,
                                  const SynthesisOptions& opt) {
    nominal.validate();
    const int n  = nominal.n();
    const int m  = nominal.m();
    const int q  = nominal.q();
    const int k  = static_cast<int>(lambda.size());
    const int qk = q * k;

    for (int j = 0; j < k; ++j) {
        if (lambda(j).real() < -1e-12) {
            throw std::runtime_error(
                "synthesize_gains: lambda has a negative real part");
        }
    }

    const ZeroStructure zs = zeros ? *zeros : transmission_zeros(nominal);
    if (!zs.zeros.empty()) {
        std::vector<Complex> lam(lambda.data(), lambda.data() + k);
        const double sep = set_distance(lam, zs.zeros);
        if (sep < opt.zero_margin) {
            std::ostringstream msg;
            msg << "synthesize_gains: lambda within " << sep
                << " of a transmission zero";
            throw std::runtime_error(msg.str());
        }
    }

    const Vector c      = coeffs_from_roots(lambda);
    const auto [G, H]   = build_q_copy(c, q);

    Matrix A_aug             = Matrix::Zero(n + qk, n + qk);
    A_aug.topLeftCorner(n, n)          = nominal.A;
    A_aug.bottomLeftCorner(qk, n)      = H * nominal.C;
    A_aug.bottomRightCorner(qk, qk)    = G;
    Matrix B_aug                       = Matrix::Zero(n + qk, m);
    B_aug.topRows(n)                   = nominal.B;
    B_aug.bottomRows(qk)               = H * nominal.D;

    const Matrix K12 = stabilizing_state_gain(A_aug, B_aug, opt.care);
    const Matrix L   = stabilizing_observer_gain(nominal.A, nominal.C, opt.care);

    if (!is_hurwitz(A_aug + B_aug * K12)) {
        throw std::runtime_error("synthesize_gains: augmented design matrix not Hurwitz");
    }

    CompensatorGains gains;
    gains.K1    = K12.leftCols(n);
    gains.K2    = K12.rightCols(qk);
    gains.L_obs = L;
    gains.K     = K12;

    const Matrix BLD = nominal.B - L * nominal.D;
    gains.E          = Matrix::Zero(n + qk, n + qk);
    gains.E.topLeftCorner(n, n) = nominal.A + BLD * gains.K1 - L * nominal.C;
    gains.E.topRightCorner(n, qk)       = BLD * gains.K2;
    gains.E.bottomRightCorner(qk, qk)   = G;
    gains.F                             = Matrix::Zero(n + qk, q);
    gains.F.topRows(n)                  = L;
    gains.F.bottomRows(qk)              = H;
    gains.synth_lambda                  = lambda;
    return gains;
}

Vector error_output(const AgentModel& model, const Vector& x, const Vector& u,
                    const Vector& w_local) {
    return model.C * x + model.D * u + model.Q * w_local;
}

Vector regulated_output(const AgentModel& model, const Vector& x, const Vector& u,
                        const Vector& w0) {
    return model.C * x + model.D * u + model.Q * w0;
}

Vector control(const CompensatorGains& gains, const Vector& xi) {
    return gains.K * xi;
}

Vector compensator_step(const Vector& xi, const CompensatorGains& gains,
                        const Vector& e, double dt, Integrator method) {
    if (dt <= 0.0) throw std::invalid_argument("compensator_step: dt must be positive");
    const Vector Fe = gains.F * e;
    auto deriv = [&](const Vector& y) { return gains.E * y + Fe; };

    if (method == Integrator::Euler) {
        return xi + dt * deriv(xi);
    }
    const Vector k1 = deriv(xi);
    const Vector k2 = deriv(xi + 0.5 * dt * k1);
    const Vector k3 = deriv(xi + 0.5 * dt * k2);
    const Vector k4 = deriv(xi + dt * k3);
    return xi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

bool maybe_resynthesize(CompensatorState& state, const AgentModel& nominal,
                        const std::optional<ZeroStructure>& zeros, double margin,
                        const SynthesisOptions& opt) {
    const CVector lambda = assemble_lambda(state.estimate);
    double drift         = 0.0;
    for (int i = 0; i < lambda.size(); ++i) {
        drift = std::max(drift, std::abs(lambda(i) - state.gains.synth_lambda(i)));
    }
    if (drift <= margin) return false;
    state.gains = synthesize_gains(nominal, lambda, zeros, opt);
    return true;
}

}  // namespace regsim
