#include "regsim/sim.hpp"

#include <cmath>
#include <sstream>

#include "regsim/verification.hpp"

namespace regsim {

AgentModel perturb(const AgentModel& agent, const PerturbationSpec& spec) {
    AgentModel out = agent;
    auto apply = [](Matrix& target, const std::optional<Matrix>& delta,
                    const char* name) {
        if (!delta) return;
        if (delta->rows() != target.rows() || delta->cols() != target.cols()) {
            throw std::invalid_argument(std::string("perturb: dimension mismatch on ") +
                                        name);
        }
        target += *delta;
    };
    apply(out.A, spec.A, "A");
    apply(out.B, spec.B, "B");
    apply(out.C, spec.C, "C");
    apply(out.D, spec.D, "D");
    apply(out.P, spec.P, "P");
    apply(out.Q, spec.Q, "Q");
    return out;
}

void Scenario::validate() const {
    if (agents.empty()) throw std::invalid_argument("Scenario: no agents");
    if (exo.S0.rows() != exo.S0.cols() || exo.S0.rows() < 1) {
        throw std::invalid_argument("Scenario: S0 must be square");
    }
    const int r = exo_dim();
    if (exo.w0_init.size() != 0 && exo.w0_init.size() != r) {
        throw std::invalid_argument("Scenario: w0 dimension mismatch");
    }
    for (size_t i = 0; i < agents.size(); ++i) {
        agents[i].nominal.validate();
        agents[i].true_model.validate();
        if (agents[i].nominal.r() != r) {
            throw std::invalid_argument("Scenario: agent P/Q width must match exosystem");
        }
        if (agents[i].true_model.n() != agents[i].nominal.n() ||
            agents[i].true_model.m() != agents[i].nominal.m() ||
            agents[i].true_model.q() != agents[i].nominal.q()) {
            throw std::invalid_argument("Scenario: true model dims differ from nominal");
        }
    }
    schedule.validate();
    if (schedule.segments.front().graph.node_count() != agent_count() + 1) {
        throw std::invalid_argument("Scenario: topology node count must be N+1");
    }
    if (sim.dt <= 0.0) throw std::invalid_argument("Scenario: dt must be positive");
    if (sim.t_final <= 0.0) throw std::invalid_argument("Scenario: t_final must be positive");
    if (!schedule.repeat && schedule.period() < sim.t_final) {
        throw std::invalid_argument(
            "Scenario: non-repeating schedule ends before t_final");
    }
}

Vector rk4_step(const VectorField& f, const Vector& x, double t, double dt) {
    const Vector k1 = f(t, x);
    const Vector k2 = f(t + 0.5 * dt, x + (0.5 * dt) * k1);
    const Vector k3 = f(t + 0.5 * dt, x + (0.5 * dt) * k2);
    const Vector k4 = f(t + dt, x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector euler_step(const VectorField& f, const Vector& x, double t, double dt) {
    return x + dt * f(t, x);
}

namespace {

struct AgentRuntime {
    const AgentModel* truth;
    const AgentModel* nominal;
    ZeroStructure zeros;
    std::vector<double> zero_imags;
    double delta = 0.0;
    CompensatorState comp;
    int n = 0, m = 0, q = 0, xi_dim = 0;
    Vector u_scratch, e_scratch;
};

struct Layout {
    int r = 0;
    std::vector<int> w_off, S_off, x_off, xi_off;
    int total = 0;
};

Layout make_layout(int r, const std::vector<AgentRuntime>& rt) {
    Layout L;
    L.r     = r;
    int off = r;  // w0 first
    for (const AgentRuntime& a : rt) {
        L.w_off.push_back(off);
        off += r;
        L.S_off.push_back(off);
        off += r * r;
        L.x_off.push_back(off);
        off += a.n;
        L.xi_off.push_back(off);
        off += a.xi_dim;
    }
    L.total = off;
    return L;
}

}  // namespace

SimulationTrace simulate(const Scenario& scenario, const SimulateOptions& opt) {
    scenario.validate();

    const AssumptionReport audit = audit_assumptions(scenario);
    if (!audit.all_pass() && !opt.force) {
        throw AuditFailure(
            "simulate: assumption audit failed (set force to run anyway)");
    }

    const int N      = scenario.agent_count();
    const int r      = scenario.exo_dim();
    const Matrix& S0 = scenario.exo.S0;
    const double dt  = scenario.sim.dt;

    const ExosystemBroadcast bc = exosystem_broadcast(S0);
    const int k                 = bc.degree;
    const int p                 = k / 2;

    std::vector<AgentRuntime> rt(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        AgentRuntime& a = rt[static_cast<size_t>(i)];
        a.truth         = &scenario.agents[static_cast<size_t>(i)].true_model;
        a.nominal       = &scenario.agents[static_cast<size_t>(i)].nominal;
        a.zeros         = audit.zeros[static_cast<size_t>(i)];
        a.delta         = audit.delta[static_cast<size_t>(i)];
        for (const Complex& z : a.zeros.imag_zeros) a.zero_imags.push_back(z.imag());
        a.n      = a.nominal->n();
        a.m      = a.nominal->m();
        a.q      = a.nominal->q();
        a.xi_dim = a.n + a.q * k;
        a.u_scratch.resize(a.m);
        a.e_scratch.resize(a.q);
    }

    // Initial conditions. Random fields draw from one seeded generator in a
    // fixed order; explicit values skip their draws.
    Rng rng(scenario.sim.seed);
    auto draw_vec = [&rng](int dim, std::pair<double, double> range) {
        Vector v(dim);
        for (int i = 0; i < dim; ++i) v(i) = rng.uniform(range.first, range.second);
        return v;
    };

    const InitSpec& init = scenario.init;
    const Vector w0_0 =
        init.w0 ? *init.w0
                : (scenario.exo.w0_init.size() == r ? scenario.exo.w0_init
                                                    : draw_vec(r, init.w0_range));
    if (w0_0.size() != r) throw std::invalid_argument("simulate: w0 dimension mismatch");

    Matrix betas(N + 1, p);
    betas.row(0) = bc.imags.transpose();

    std::vector<Vector> x0(static_cast<size_t>(N)), w_i0(static_cast<size_t>(N)),
        xi0(static_cast<size_t>(N));
    std::vector<Matrix> S_i0(static_cast<size_t>(N));

    for (int i = 0; i < N; ++i) {
        AgentRuntime& a  = rt[static_cast<size_t>(i)];
        const size_t idx = static_cast<size_t>(i);
        x0[idx]  = (init.x && i < static_cast<int>(init.x->size()))
                       ? (*init.x)[idx]
                       : draw_vec(a.n, init.x_range);
        w_i0[idx] = (init.w && i < static_cast<int>(init.w->size()))
                        ? (*init.w)[idx]
                        : draw_vec(r, init.w_range);
        xi0[idx] = (init.xi && i < static_cast<int>(init.xi->size()))
                       ? (*init.xi)[idx]
                       : draw_vec(a.xi_dim, init.xi_range);
        Vector beta_i = (init.beta && i < static_cast<int>(init.beta->size()))
                            ? (*init.beta)[idx]
                            : init_beta(a.zero_imags, a.delta, k, rng, init.beta_range);
        if (beta_i.size() != p) {
            throw std::invalid_argument("simulate: beta initial value has wrong size");
        }
        betas.row(i + 1) = beta_i.transpose();

        switch (init.s_mode) {
            case SInitMode::NominalA:
                if (a.nominal->n() != r) {
                    throw std::invalid_argument(
                        "simulate: S init from nominal A needs n == r; "
                        "use exo_S0 or explicit values");
                }
                S_i0[idx] = a.nominal->A;
                break;
            case SInitMode::ExoS0:
                S_i0[idx] = S0;
                break;
            case SInitMode::Explicit:
                if (!init.S || i >= static_cast<int>(init.S->size())) {
                    throw std::invalid_argument("simulate: explicit S init missing");
                }
                S_i0[idx] = (*init.S)[idx];
                break;
        }
        if (S_i0[idx].rows() != r || S_i0[idx].cols() != r) {
            throw std::invalid_argument("simulate: S initial value must be r x r");
        }

        // Estimate and first synthesis at lambda_i(0).
        a.comp.estimate.degree = k;
        a.comp.estimate.beta   = beta_i;
        a.comp.estimate.alpha  = Vector::Zero(p);
        for (int l = 0; l < p; ++l) {
            a.comp.estimate.alpha(l) =
                project_alpha(beta_i(l), a.zero_imags, a.delta).alpha;
        }
        a.comp.gains = synthesize_gains(*a.nominal, assemble_lambda(a.comp.estimate),
                                        a.zeros);
        a.comp.xi    = xi0[idx];
        if (xi0[idx].size() != a.xi_dim) {
            throw std::invalid_argument("simulate: xi initial value has wrong size");
        }
    }

    const Layout L = make_layout(r, rt);
    Vector y(L.total);
    y.segment(0, r) = w0_0;
    for (int i = 0; i < N; ++i) {
        const size_t idx = static_cast<size_t>(i);
        y.segment(L.w_off[idx], r) = w_i0[idx];
        Eigen::Map<Matrix>(y.data() + L.S_off[idx], r, r) = S_i0[idx];
        y.segment(L.x_off[idx], rt[idx].n)                = x0[idx];
        y.segment(L.xi_off[idx], rt[idx].xi_dim)          = xi0[idx];
    }

    const long steps = std::llround(scenario.sim.t_final / dt);
    const int samples = static_cast<int>(steps) + 1;

    SimulationTrace trace;
    trace.seed    = scenario.sim.seed;
    trace.lambda0 = bc.lambda0;
    trace.t.resize(samples);
    trace.w0.resize(r, samples);
    trace.segment_index.resize(static_cast<size_t>(samples));
    trace.resynth_count.assign(static_cast<size_t>(N), 0);
    trace.agents.resize(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        AgentTrace& at = trace.agents[static_cast<size_t>(i)];
        const AgentRuntime& a = rt[static_cast<size_t>(i)];
        at.x.resize(a.n, samples);
        at.xi.resize(a.xi_dim, samples);
        at.w.resize(r, samples);
        at.z.resize(a.q, samples);
        at.e.resize(a.q, samples);
        at.u.resize(a.m, samples);
        at.s_dist.resize(samples);
        at.lambda.resize(k, samples);
    }
    {
        std::ostringstream note;
        note << "seed=" << scenario.sim.seed
             << "; generator=mt19937_64 with 53-bit uniform mapping; draw order: "
                "w0[r] (skipped when explicit), then per agent i=1..N: x_i[n_i], "
                "w_i[r], xi_i[n_i+q_i*k], beta_i[floor(k/2)] (rejection sampled); "
                "explicit initial values skip their draws";
        trace.draw_order_note = note.str();
    }

    // Recording helper (sample index s at time t).
    auto record = [&](int s, double t) {
        trace.t(s) = t;
        trace.segment_index[static_cast<size_t>(s)] = scenario.schedule.segment_at(t);
        const Vector w0_now = y.segment(0, r);
        trace.w0.col(s)     = w0_now;
        for (int i = 0; i < N; ++i) {
            const size_t idx = static_cast<size_t>(i);
            AgentRuntime& a  = rt[idx];
            AgentTrace& at   = trace.agents[idx];
            const Vector x   = y.segment(L.x_off[idx], a.n);
            const Vector xi  = y.segment(L.xi_off[idx], a.xi_dim);
            const Vector w_i = y.segment(L.w_off[idx], r);
            const Matrix S_i = Eigen::Map<const Matrix>(y.data() + L.S_off[idx], r, r);
            const Vector u   = a.comp.gains.K * xi;
            at.x.col(s)      = x;
            at.xi.col(s)     = xi;
            at.w.col(s)      = w_i;
            at.u.col(s)      = u;
            at.e.col(s)      = error_output(*a.truth, x, u, w_i);
            at.z.col(s)      = regulated_output(*a.truth, x, u, w0_now);
            at.s_dist(s)     = (S_i - S0).norm();
            at.lambda.col(s) = assemble_lambda(a.comp.estimate);
        }
    };

    record(0, 0.0);

    // Coupled vector field over [w0 | w_i | S_i | x_i | xi_i], with the
    // topology and gains frozen for the step.
    const WeightedDigraph* g = nullptr;
    Vector dy(L.total), k1(L.total), k2(L.total), k3(L.total), k4(L.total),
        ytmp(L.total);

    auto eval_field = [&](const Vector& yy, Vector& out) {
        const auto& W = g->weights();
        out.segment(0, r).noalias() = S0 * yy.segment(0, r);
        for (int i = 0; i < N; ++i) {
            const size_t idx = static_cast<size_t>(i);
            AgentRuntime& a  = rt[idx];
            const auto w_i   = yy.segment(L.w_off[idx], r);
            Eigen::Map<const Matrix> S_i(yy.data() + L.S_off[idx], r, r);
            auto dw_i = out.segment(L.w_off[idx], r);
            Eigen::Map<Matrix> dS_i(out.data() + L.S_off[idx], r, r);

            dw_i.noalias() = S_i * w_i;
            dS_i.setZero();
            for (int node = 0; node <= N; ++node) {
                const double aij = W(i + 1, node);
                if (aij <= 0.0) continue;
                if (node == 0) {
                    dw_i += aij * (yy.segment(0, r) - w_i);
                    dS_i += aij * (S0 - S_i);
                } else {
                    const size_t jdx = static_cast<size_t>(node - 1);
                    dw_i += aij * (yy.segment(L.w_off[jdx], r) - w_i);
                    Eigen::Map<const Matrix> S_j(yy.data() + L.S_off[jdx], r, r);
                    dS_i += aij * (S_j - S_i);
                }
            }

            const auto x  = yy.segment(L.x_off[idx], a.n);
            const auto xi = yy.segment(L.xi_off[idx], a.xi_dim);
            a.u_scratch.noalias() = a.comp.gains.K * xi;
            a.e_scratch.noalias() = a.truth->C * x;
            a.e_scratch.noalias() += a.truth->D * a.u_scratch;
            a.e_scratch.noalias() += a.truth->Q * w_i;

            auto dx  = out.segment(L.x_off[idx], a.n);
            auto dxi = out.segment(L.xi_off[idx], a.xi_dim);
            dx.noalias() = a.truth->A * x;
            dx.noalias() += a.truth->B * a.u_scratch;
            dx.noalias() += a.truth->P * yy.segment(0, r);
            dxi.noalias() = a.comp.gains.E * xi;
            dxi.noalias() += a.comp.gains.F * a.e_scratch;
        }
    };

    const bool use_rk4 = scenario.sim.integrator == Integrator::RK4;
    std::vector<double> last_refresh(static_cast<size_t>(N), 0.0);
    for (long s = 1; s <= steps; ++s) {
        const double t_prev = static_cast<double>(s - 1) * dt;
        g = &scenario.schedule.graph_at(t_prev);

        // Estimate consensus step and projection.
        betas = eig_update_step(betas, bc.imags, *g, dt);
        for (int i = 0; i < N; ++i) {
            AgentRuntime& a = rt[static_cast<size_t>(i)];
            a.comp.estimate.beta = betas.row(i + 1).transpose();
            for (int l = 0; l < p; ++l) {
                a.comp.estimate.alpha(l) =
                    project_alpha(a.comp.estimate.beta(l), a.zero_imags, a.delta).alpha;
            }
        }

        // Piecewise-constant gain refresh: on estimate drift beyond the
        // margin, or on the timer so the synthesis point keeps converging.
        for (int i = 0; i < N; ++i) {
            AgentRuntime& a  = rt[static_cast<size_t>(i)];
            const bool timed = scenario.sim.resynth_interval > 0.0 &&
                               t_prev - last_refresh[static_cast<size_t>(i)] >=
                                   scenario.sim.resynth_interval;
            bool refreshed;
            try {
                refreshed = maybe_resynthesize(a.comp, *a.nominal, a.zeros,
                                               timed ? 0.0
                                                     : scenario.sim.resynth_margin);
            } catch (const std::exception& ex) {
                std::ostringstream msg;
                msg << "simulate: gain synthesis failed for agent " << (i + 1)
                    << " at t=" << t_prev << ": " << ex.what();
                throw std::runtime_error(msg.str());
            }
            if (refreshed || timed) {
                last_refresh[static_cast<size_t>(i)] = t_prev;
            }
            if (refreshed) {
                trace.resynth_events.push_back(
                    {t_prev, i, a.comp.gains.synth_lambda});
                ++trace.resynth_count[static_cast<size_t>(i)];
            }
        }

        // One coupled integrator step.
        if (use_rk4) {
            eval_field(y, k1);
            ytmp = y + (0.5 * dt) * k1;
            eval_field(ytmp, k2);
            ytmp = y + (0.5 * dt) * k2;
            eval_field(ytmp, k3);
            ytmp = y + dt * k3;
            eval_field(ytmp, k4);
            y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        } else {
            eval_field(y, k1);
            y += dt * k1;
        }

        record(static_cast<int>(s), static_cast<double>(s) * dt);
    }

    return trace;
}

}  // namespace regsim
