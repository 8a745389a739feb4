#include "passivion/outer_iteration.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "passivion/errors.hpp"

namespace passivion {

std::string_view to_string(StepKind kind) {
    switch (kind) {
        case StepKind::Init: return "init";
        case StepKind::Newton: return "newton";
        case StepKind::Bisection: return "bisection";
        case StepKind::SqrtModel: return "sqrt-model";
        case StepKind::Reject: return "reject";
    }
    return "unknown";
}

StepKind step_kind_from_string(std::string_view s) {
    if (s == "init") return StepKind::Init;
    if (s == "newton") return StepKind::Newton;
    if (s == "bisection") return StepKind::Bisection;
    if (s == "sqrt-model") return StepKind::SqrtModel;
    if (s == "reject") return StepKind::Reject;
    throw Error(ErrorCode::ParseError, "unknown step kind \"" + std::string(s) + "\"");
}

void OuterConfig::validate() const {
    if (!(delta > 0.0)) throw Error(ErrorCode::InvalidConfig, "delta must be positive");
    const double t = tolerance();
    if (!(t > 0.0 && t < delta)) throw Error(ErrorCode::InvalidConfig, "tol must satisfy 0 < tol < delta");
    if (!(theta > 0.0 && theta < 1.0)) throw Error(ErrorCode::InvalidConfig, "theta must lie in (0, 1)");
    if (k_max < 1) throw Error(ErrorCode::InvalidConfig, "k_max must be at least 1");
}

FlowConfig flow_for_problem(FlowConfig flow, const OuterConfig& outer) {
    if (outer.problem == Problem::Enforce) {
        flow.direction = FlowDirection::Ascent;
    } else {
        flow.direction = FlowDirection::Descent;
        if (!flow.early_stop_below) flow.early_stop_below = outer.delta / 10.0;
    }
    return flow;
}

ScalarSample f_and_fprime(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                          const Matrix& E_warm, const FlowConfig& flow) {
    if (eps < 0.0) throw Error(ErrorCode::InvalidConfig, "perturbation size must be nonnegative");
    const double sgn = direction_sign(flow.direction);
    ScalarSample out;
    if (eps == 0.0) {
        Matrix E = E_warm;
        if (E.rows() != s.k() || E.cols() != s.l() || !(E.norm() > 0.0)) {
            E = Matrix::Zero(s.k(), s.l());
            E(0, 0) = 1.0;
        }
        FlowResult fr;
        fr.E = E / E.norm();
        fr.bundle = evaluate_bundle(sys, s, 0.0, fr.E, flow);
        fr.status = FlowStatus::Stationary;
        fr.evaluations = 1;
        const GradientBundle& b = fr.bundle;
        out.f = b.triple.imaginary ? 0.0 : b.phi;
        out.fprime = sgn * b.triple.kappa * b.G.norm();
        const double gn = b.G.norm();
        out.E = gn > 0.0 ? Matrix(sgn * b.G / gn) : fr.E;
        if (flow.record_trace)
            fr.trace.push_back({0, 0.0, true, b.phi, gn, 0.0, b.margins.stability, b.margins.feedthrough});
        out.flow = std::move(fr);
        return out;
    }
    try {
        FlowResult fr = integrate_to_stationary(sys, s, eps, E_warm, flow);
        const GradientBundle& b = fr.bundle;
        out.f = b.triple.imaginary ? 0.0 : b.phi;
        out.fprime = sgn * b.triple.kappa * b.G.norm();
        out.E = fr.E;
        out.flow = std::move(fr);
    } catch (const Error& e) {
        // A descent start point outside the strict realness region of the
        // feedthrough already counts as non-passive.
        if (e.code() != ErrorCode::PerturbedDefinitenessViolation || flow.direction != FlowDirection::Descent)
            throw;
        out.f = 0.0;
        out.fprime = 0.0;
        out.E = E_warm / E_warm.norm();
    }
    return out;
}

namespace {

struct Bracket {
    Problem problem = Problem::Enforce;
    double delta = 0.0;
    double lb = 0.0;
    double ub = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> ub_idx;
    double zero_side = std::numeric_limits<double>::quiet_NaN();
    double pos_side = std::numeric_limits<double>::quiet_NaN();

    void update(double eps, double f, std::size_t idx) {
        const bool below = f < delta;
        const bool upper = (problem == Problem::Enforce) ? !below : below;
        if (upper) {
            if (eps <= ub) {
                ub = eps;
                ub_idx = idx;
            }
        } else {
            lb = std::max(lb, eps);
        }
        if (f == 0.0) {
            zero_side = std::isnan(zero_side) ? eps
                        : problem == Problem::Enforce ? std::max(zero_side, eps)
                                                      : std::min(zero_side, eps);
        } else {
            pos_side = std::isnan(pos_side) ? eps
                       : problem == Problem::Enforce ? std::min(pos_side, eps)
                                                     : std::max(pos_side, eps);
        }
    }
};

void push_row(OuterRun& run, Bracket& br, int k, StepKind kind, double eps, ScalarSample s) {
    br.update(eps, s.f, run.samples.size());
    OuterRow row;
    row.k = k;
    row.kind = kind;
    row.f = s.f;
    row.eps = eps;
    row.eps_lb = br.lb;
    row.eps_ub = br.ub;
    row.fprime = s.fprime;
    run.trace.rows.push_back(row);
    run.samples.push_back(std::move(s));
}

void finish_run(OuterRun& run, const Bracket& br, const OuterConfig& cfg) {
    const double tol = cfg.tolerance();
    run.converged = !run.trace.rows.empty() && std::abs(run.trace.rows.back().f - cfg.delta) <= tol;
    if (run.converged) {
        run.best = run.samples.size() - 1;
    } else if (br.ub_idx) {
        run.best = *br.ub_idx;
    } else {
        run.best = run.samples.size() - 1;
    }
    if (!std::isnan(br.zero_side) && !std::isnan(br.pos_side)) {
        run.coalescence_lo = std::min(br.zero_side, br.pos_side);
        run.coalescence_hi = std::max(br.zero_side, br.pos_side);
    }
}

}  // namespace

OuterRun newton_bisection_core(const ScalarEvaluator& eval, double eps0, const Matrix& E0, const OuterConfig& cfg,
                               std::optional<ScalarSample> first) {
    cfg.validate();
    const double sgn = cfg.problem == Problem::Enforce ? 1.0 : -1.0;
    const double tol = cfg.tolerance();
    OuterRun run;
    Bracket br;
    br.problem = cfg.problem;
    br.delta = cfg.delta;
    ScalarSample s0 = first ? std::move(*first) : eval(eps0, E0);
    if (cfg.problem == Problem::Enforce && !(s0.f > 0.0))
        throw Error(ErrorCode::InitialNotFeasible, "initial perturbation leaves imaginary Hamiltonian eigenvalues");
    if (cfg.problem == Problem::Radius && eps0 == 0.0 && !(s0.f > 0.0))
        throw Error(ErrorCode::InitialNotFeasible, "system is not strictly passive at eps = 0");
    Matrix E = s0.E;
    push_row(run, br, 0, StepKind::Init, eps0, std::move(s0));

    double eps = eps0;
    for (int k = 1; k <= cfg.k_max; ++k) {
        const OuterRow& last = run.trace.rows.back();
        if (std::abs(last.f - cfg.delta) <= tol) break;
        if (std::isfinite(br.ub) && br.ub - br.lb <= 1e-14 * (1.0 + br.ub)) break;
        const double f = last.f, fp = last.fprime;
        const bool prefer_bisection = (f == 0.0) || (cfg.problem == Problem::Radius && f < cfg.delta);
        const double newton = eps - (f - cfg.delta) / fp;
        const bool newton_ok = !prefer_bisection && fp * sgn > 0.0 && std::isfinite(newton) && newton > br.lb &&
                               newton < br.ub;
        StepKind kind;
        if (newton_ok) {
            kind = StepKind::Newton;
            eps = newton;
        } else {
            kind = StepKind::Bisection;
            eps = std::isfinite(br.ub) ? 0.5 * (br.lb + br.ub) : 2.0 * std::max(eps, br.lb);
        }
        ScalarSample s = eval(eps, E);
        E = s.E;
        push_row(run, br, k, kind, eps, std::move(s));
    }
    finish_run(run, br, cfg);
    return run;
}

OuterRun sqrt_model_core(const ScalarEvaluator& eval, double eps0, const Matrix& E0, const OuterConfig& cfg,
                         std::optional<ScalarSample> first) {
    cfg.validate();
    const double tol = cfg.tolerance();
    const double offset_sign = cfg.problem == Problem::Enforce ? 1.0 : -1.0;
    OuterRun run;
    Bracket br;
    br.problem = cfg.problem;
    br.delta = cfg.delta;
    ScalarSample s0 = first ? std::move(*first) : eval(eps0, E0);
    if (!(s0.f > tol)) throw Error(ErrorCode::InitialNotFeasible, "sqrt-model iteration needs f(eps0) > tol");
    Matrix E = s0.E;
    push_row(run, br, 0, StepKind::Init, eps0, std::move(s0));

    bool reject = false;
    double eps = eps0, eps_tilde = eps0, theta_tilde = cfg.theta;
    Matrix E_tilde = E;
    for (int k = 1; k <= cfg.k_max; ++k) {
        const OuterRow& last = run.trace.rows.back();
        if (std::abs(last.f - cfg.delta) < tol) break;
        StepKind kind;
        if (!reject) {
            eps_tilde = eps;
            E_tilde = E;
            theta_tilde = cfg.theta;
            const double f = last.f, fp = last.fprime;
            if (!(fp != 0.0) || !std::isfinite(fp)) break;
            const double gamma2 = 2.0 * f * std::abs(fp);
            const double eps_hat = eps - f / (2.0 * fp);
            eps = eps_hat + offset_sign * cfg.delta * cfg.delta / gamma2;
            kind = StepKind::SqrtModel;
        } else {
            eps = theta_tilde * eps + (1.0 - theta_tilde) * eps_tilde;
            theta_tilde *= cfg.theta;
            E = E_tilde;
            kind = StepKind::Reject;
        }
        if (!(eps > 0.0)) eps = 0.5 * eps_tilde;
        ScalarSample s = eval(eps, E);
        reject = s.f < tol;
        if (!reject) E = s.E;
        push_row(run, br, k, kind, eps, std::move(s));
    }
    finish_run(run, br, cfg);
    return run;
}

namespace {

PassivationResult assemble(const StateSpaceSystem& sys, const PerturbationStructure& s, OuterRun run,
                           const FlowConfig& flow) {
    PassivationResult r;
    const std::size_t idx = run.best;
    r.eps_hat_delta = run.trace.rows[idx].eps;
    r.f_final = run.trace.rows[idx].f;
    r.E_final = run.samples[idx].E;
    if (run.samples[idx].flow) r.E_final = run.samples[idx].flow->E;
    const Matrix dX = apply_L(s, r.eps_hat_delta * r.E_final);
    r.X_hat = sys.block_matrix() + dX;
    r.perturbed = sys.perturbed(dX);
    if (run.samples[idx].flow) {
        r.lambda = run.samples[idx].flow->bundle.triple.lambda;
    } else {
        const GradientBundle b = evaluate_bundle(sys, s, r.eps_hat_delta, r.E_final, flow);
        r.lambda = b.triple.lambda;
    }
    r.dz_norm = r.eps_hat_delta * r.E_final.norm();
    r.lz_norm = dX.norm();
    r.converged = run.converged;
    r.coalescence_lo = run.coalescence_lo;
    r.coalescence_hi = run.coalescence_hi;
    for (const auto& smp : run.samples) {
        if (smp.flow) {
            r.inner_traces.push_back(smp.flow->trace);
            r.evaluations += smp.flow->evaluations;
            r.warm_evaluations += smp.flow->warm_evaluations;
        } else {
            r.inner_traces.emplace_back();
        }
    }
    r.trace = std::move(run.trace);
    return r;
}

}  // namespace

ScalarEvaluator flow_evaluator(const StateSpaceSystem& sys, const PerturbationStructure& s, const FlowConfig& flow) {
    return [&sys, &s, flow](double eps, const Matrix& E) { return f_and_fprime(sys, s, eps, E, flow); };
}

PassivationResult solve_enforce(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps0,
                                const Matrix& E0, const OuterConfig& outer, const FlowConfig& flow,
                                const ScalarEvaluator& eval) {
    OuterConfig oc = outer;
    oc.problem = Problem::Enforce;
    OuterRun run = oc.mode == OuterMode::SqrtModel ? sqrt_model_core(eval, eps0, E0, oc)
                                                   : newton_bisection_core(eval, eps0, E0, oc);
    return assemble(sys, s, std::move(run), flow);
}

PassivationResult solve_radius(const StateSpaceSystem& sys, const PerturbationStructure& s, const OuterConfig& outer,
                               const FlowConfig& flow, const ScalarEvaluator& eval, std::optional<double> eps0,
                               const Matrix& E_start) {
    OuterConfig oc = outer;
    oc.problem = Problem::Radius;
    oc.validate();
    ScalarSample zero = eval(0.0, Matrix());
    if (!(zero.f > 0.0))
        throw Error(ErrorCode::InitialNotFeasible, "system has imaginary Hamiltonian eigenvalues; radius is zero");
    const double e0 = eps0.value_or(oc.delta);
    const Matrix E1 = E_start.size() ? Matrix(E_start / E_start.norm()) : zero.E;
    ScalarSample first = eval(e0, E1);
    OuterRun run = oc.mode == OuterMode::SqrtModel ? sqrt_model_core(eval, e0, E1, oc, std::move(first))
                                                   : newton_bisection_core(eval, e0, E1, oc, std::move(first));
    // The unperturbed evaluation becomes row 0.
    OuterRow row0;
    row0.kind = StepKind::Init;
    row0.f = zero.f;
    row0.eps = 0.0;
    row0.eps_lb = 0.0;
    row0.fprime = zero.fprime;
    for (auto& r : run.trace.rows) ++r.k;
    run.trace.rows.insert(run.trace.rows.begin(), row0);
    run.samples.insert(run.samples.begin(), std::move(zero));
    ++run.best;
    return assemble(sys, s, std::move(run), flow);
}

PassivationResult newton_bisection(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps0,
                                   const Matrix& E0, const OuterConfig& outer, const FlowConfig& flow) {
    OuterConfig oc = outer;
    oc.mode = OuterMode::NewtonBisection;
    const FlowConfig fc = flow_for_problem(flow, oc);
    const ScalarEvaluator eval = flow_evaluator(sys, s, fc);
    if (oc.problem == Problem::Radius)
        return assemble(sys, s, newton_bisection_core(eval, eps0, E0, oc), fc);
    return solve_enforce(sys, s, eps0, E0, oc, fc, eval);
}

PassivationResult sqrt_model_iteration(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps0,
                                       const Matrix& E0, const OuterConfig& outer, const FlowConfig& flow) {
    OuterConfig oc = outer;
    oc.mode = OuterMode::SqrtModel;
    const FlowConfig fc = flow_for_problem(flow, oc);
    return assemble(sys, s, sqrt_model_core(flow_evaluator(sys, s, fc), eps0, E0, oc), fc);
}

PassivationResult passivity_radius(const StateSpaceSystem& sys, const PerturbationStructure& s,
                                   const OuterConfig& outer, const FlowConfig& flow, std::optional<double> eps0) {
    OuterConfig oc = outer;
    oc.problem = Problem::Radius;
    const FlowConfig fc = flow_for_problem(flow, oc);
    return solve_radius(sys, s, oc, fc, flow_evaluator(sys, s, fc), eps0);
}

SqrtFit sqrt_fit_diagnostic(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 3) throw Error(ErrorCode::IllConditionedFit, "need at least 3 samples");
    const Index N = Index(samples.size());
    Matrix A(N, 2);
    Vector b(N);
    for (Index i = 0; i < N; ++i) {
        const auto& [eps, f] = samples[std::size_t(i)];
        if (!(f > 0.0) || !std::isfinite(eps) || !std::isfinite(f))
            throw Error(ErrorCode::IllConditionedFit, "samples must have finite eps and f > 0");
        A(i, 0) = eps;
        A(i, 1) = 1.0;
        b(i) = f * f;
    }
    const double spread = A.col(0).maxCoeff() - A.col(0).minCoeff();
    if (!(spread > 1e-14 * (1.0 + A.col(0).cwiseAbs().maxCoeff())))
        throw Error(ErrorCode::IllConditionedFit, "samples do not span an eps interval");
    const Vector c = A.colPivHouseholderQr().solve(b);
    const double slope = c(0), icpt = c(1);
    if (!(slope != 0.0)) throw Error(ErrorCode::IllConditionedFit, "fitted slope vanishes");
    SqrtFit fit;
    fit.problem = slope > 0.0 ? Problem::Enforce : Problem::Radius;
    fit.gamma = std::sqrt(std::abs(slope));
    fit.eps_hat = -icpt / slope;
    const Vector res = A * c - b;
    fit.residual = std::sqrt(res.squaredNorm() / double(N)) / std::sqrt(b.squaredNorm() / double(N));
    fit.flagged = fit.residual > 5e-2;
    return fit;
}

namespace {

double homotopy_phi(const StateSpaceSystem& sys, const PerturbationStructure& s, const Matrix& Z) {
    const StateSpaceSystem ps = sys.perturbed(apply_L(s, Z));
    if (!(ps.feedthrough_margin() > 0.0)) return 0.0;
    const EigenTriple t = target_eigentriple(build_hamiltonian(ps));
    return t.imaginary ? 0.0 : t.lambda.real();
}

}  // namespace

InitialGuess fallback_initializer(const StateSpaceSystem& sys, const PerturbationStructure& s, double delta) {
    {
        const EigenTriple t = target_eigentriple(build_hamiltonian(sys));
        if (!t.imaginary)
            throw Error(ErrorCode::InitialNotFeasible,
                        "system has no imaginary Hamiltonian eigenvalues; it is already passive, use radius instead");
    }
    Matrix target = Matrix::Zero(s.block_rows(), s.block_cols());
    target.block(s.n(), 0, s.p(), s.n()) = -sys.C();
    const Matrix Z1 = preimage(s, target);
    if (!(Z1.norm() > 0.0))
        throw Error(ErrorCode::InitializationFailed, "structure cannot reach the C block; supply --init");
    const double phi1 = homotopy_phi(sys, s, Z1);
    if (!(phi1 > 0.0))
        throw Error(ErrorCode::InitializationFailed,
                    "shrinking C along the structure does not remove the imaginary eigenvalues; supply --init");
    double lo = 0.0, hi = 1.0, fhi = phi1;
    if (phi1 >= 2.0 * delta) {
        for (int it = 0; it < 50 && hi - lo > 1e-10; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double fm = homotopy_phi(sys, s, mid * Z1);
            if (fm >= 2.0 * delta) {
                hi = mid;
                fhi = fm;
            } else {
                lo = mid;
            }
        }
    }
    InitialGuess g;
    g.scale = hi;
    g.eps0 = hi * Z1.norm();
    g.E0 = Z1 / Z1.norm();
    g.f0 = fhi;
    return g;
}

InitialGuess initial_from_system(const StateSpaceSystem& sys, const PerturbationStructure& s,
                                 const StateSpaceSystem& perturbed) {
    const Matrix dX = perturbed.block_matrix() - sys.block_matrix();
    const Matrix Z = preimage(s, dX);
    const double miss = (apply_L(s, Z) - dX).norm();
    if (miss > 1e-10 * (1.0 + dX.norm())) {
        std::ostringstream msg;
        msg << "initial system is not reachable through the perturbation structure (residual " << miss << ")";
        throw Error(ErrorCode::InvalidConfig, msg.str());
    }
    const double nz = Z.norm();
    if (!(nz > 0.0)) throw Error(ErrorCode::InitialNotFeasible, "initial system equals the original system");
    InitialGuess g;
    g.eps0 = nz;
    g.E0 = Z / nz;
    g.scale = 1.0;
    g.f0 = homotopy_phi(sys, s, Z);
    return g;
}

}  // namespace passivion
