#include "passivion/inner_flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "passivion/errors.hpp"

namespace passivion {

std::string_view to_string(FlowStatus status) {
    switch (status) {
        case FlowStatus::Stationary: return "stationary";
        case FlowStatus::MaxSteps: return "max_steps";
        case FlowStatus::Stalled: return "stalled";
        case FlowStatus::EarlyStop: return "early_stop";
        case FlowStatus::Coalesced: return "coalesced";
    }
    return "unknown";
}

void FlowConfig::validate() const {
    if (!(gamma > 1.0)) throw Error(ErrorCode::InvalidConfig, "flow gamma must exceed 1");
    if (!(rho0 > 0.0)) throw Error(ErrorCode::InvalidConfig, "flow rho0 must be positive");
    if (max_steps < 1) throw Error(ErrorCode::InvalidConfig, "flow max_steps must be at least 1");
    if (!(stall_tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "flow stall_tol must be positive");
}

double direction_sign(FlowDirection d) { return d == FlowDirection::Ascent ? 1.0 : -1.0; }

double flow_objective(const GradientBundle& b, const FlowConfig& cfg) {
    const double s = direction_sign(cfg.direction);
    if (cfg.constraint_mode == ConstraintMode::Penalized)
        return s * b.phi - cfg.thresholds.c_A * b.phiA - cfg.thresholds.c_D * b.phiD;
    return s * b.phi;
}

namespace {

ConstrainedDirection project_out(const Matrix& F, const Matrix& E) {
    ConstrainedDirection d;
    d.mu = frobenius_inner(F, E);
    d.Edot = F - d.mu * E;
    return d;
}

// Solves for multipliers so that Edot = F - sum c_i v_i is orthogonal to all
// v_i. Returns false when the Gram matrix is numerically singular.
bool orthogonalize(const Matrix& F, const std::vector<const Matrix*>& vs, Vector& c, Matrix& Edot) {
    const Index q = Index(vs.size());
    Matrix K(q, q);
    Vector b(q);
    for (Index i = 0; i < q; ++i) {
        b(i) = frobenius_inner(*vs[std::size_t(i)], F);
        for (Index j = 0; j < q; ++j) K(i, j) = frobenius_inner(*vs[std::size_t(i)], *vs[std::size_t(j)]);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(K, Eigen::EigenvaluesOnly);
    const auto ev = es.eigenvalues();
    if (!(ev(0) > 1e-12 * ev(q - 1))) return false;
    c = K.ldlt().solve(b);
    Edot = F;
    for (Index i = 0; i < q; ++i) Edot -= c(i) * *vs[std::size_t(i)];
    return true;
}

}  // namespace

ConstrainedDirection constrained_rhs(const GradientBundle& b, const Matrix& E, const FlowConfig& cfg) {
    const double s = direction_sign(cfg.direction);
    switch (cfg.constraint_mode) {
        case ConstraintMode::None: return project_out(s * b.G, E);
        case ConstraintMode::Penalized:
            return project_out(s * b.G - cfg.thresholds.c_A * b.gA - cfg.thresholds.c_D * b.gD, E);
        case ConstraintMode::Multiplier: break;
    }

    const Matrix F = s * b.G;
    std::vector<int> active;  // 0 = stability, 1 = feedthrough
    if (b.gA.size() && b.gA.norm() > 0.0) active.push_back(0);
    if (b.gD.size() && b.gD.norm() > 0.0) active.push_back(1);
    auto g_of = [&](int which) -> const Matrix& { return which == 0 ? b.gA : b.gD; };

    ConstrainedDirection best = project_out(F, E);
    bool degenerate = false;
    // Subsets in order of size: {}, {A}, {D}, {A, D}.
    std::vector<std::vector<int>> subsets = {{}};
    for (int a : active) subsets.push_back({a});
    if (active.size() == 2) subsets.push_back(active);

    for (auto subset : subsets) {
        std::vector<const Matrix*> vs = {&E};
        for (int a : subset) vs.push_back(&g_of(a));
        Vector c;
        Matrix Edot;
        if (!orthogonalize(F, vs, c, Edot)) {
            degenerate = true;
            // drop the later-activated constraint and retry this subset
            if (subset.size() < 2) continue;
            subset.pop_back();
            vs.pop_back();
            if (!orthogonalize(F, vs, c, Edot)) continue;
        }
        bool feasible = true;
        for (std::size_t i = 0; i < subset.size(); ++i)
            if (c(Index(i + 1)) < 0.0) feasible = false;
        for (int a : active) {
            if (std::find(subset.begin(), subset.end(), a) != subset.end()) continue;
            if (frobenius_inner(g_of(a), Edot) > 1e-14 * (1.0 + g_of(a).norm() * Edot.norm())) feasible = false;
        }
        if (!feasible) continue;
        ConstrainedDirection d;
        d.Edot = Edot;
        d.mu = c(0);
        for (std::size_t i = 0; i < subset.size(); ++i) (subset[i] == 0 ? d.mu_A : d.mu_D) = c(Index(i + 1));
        d.degenerate = degenerate;
        return d;
    }
    best.degenerate = degenerate;
    return best;
}

GradientBundle evaluate_bundle(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                               const Matrix& E, const FlowConfig& cfg, const std::optional<EigenHint>& hint) {
    GradientOptions opts;
    opts.hint = hint;
    if (cfg.constraint_mode != ConstraintMode::None) opts.thresholds = cfg.thresholds;
    return free_gradient(sys, s, eps, E, opts);
}

double stationarity_residual(const GradientBundle& b, const Matrix& E, const FlowConfig& cfg) {
    const double gn = b.G.norm();
    if (!(gn > 0.0)) return 0.0;
    return constrained_rhs(b, E, cfg).Edot.norm() / gn;
}

StepOutcome euler_step(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps, const Matrix& E,
                       const GradientBundle& bundle, double h, const FlowConfig& cfg, bool check_spectrum) {
    StepOutcome out;
    const ConstrainedDirection d = constrained_rhs(bundle, E, cfg);
    Matrix Et = E + h * d.Edot;
    const double nrm = Et.norm();
    if (!(nrm > 0.0)) return out;
    Et /= nrm;
    EigenHint hint{bundle.triple.lambda, bundle.triple.x, bundle.triple.y, check_spectrum};
    try {
        out.bundle = evaluate_bundle(sys, s, eps, Et, cfg, hint);
    } catch (const Error& e) {
        switch (e.code()) {
            case ErrorCode::PerturbedDefinitenessViolation:
            case ErrorCode::EigenvectorFailure:
            case ErrorCode::SingularShift:
            case ErrorCode::SingularCapacitance:
            case ErrorCode::SingularR:
            case ErrorCode::SingularT:
                return out;
            default:
                throw;
        }
    }
    out.evaluated = true;
    out.E = std::move(Et);
    const double f_old = flow_objective(bundle, cfg);
    const double f_new = flow_objective(out.bundle, cfg);
    bool ok = f_new > f_old + 1e-14 * (1.0 + std::abs(f_old));
    if (cfg.constraint_mode == ConstraintMode::Multiplier) {
        const double pen_old = bundle.phiA + bundle.phiD;
        const double pen_new = out.bundle.phiA + out.bundle.phiD;
        ok = ok && pen_new <= pen_old * (1.0 + 1e-6) + 1e-14;
    }
    out.accepted = ok;
    return out;
}

FlowResult integrate_to_stationary(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                                   const Matrix& E0, const FlowConfig& cfg) {
    cfg.validate();
    if (E0.rows() != s.k() || E0.cols() != s.l())
        throw Error(ErrorCode::DimensionMismatch, "integrate_to_stationary: E0 does not match the structure");
    FlowResult r;
    r.E = E0 / E0.norm();
    r.bundle = evaluate_bundle(sys, s, eps, r.E, cfg);
    r.evaluations = 1;
    r.rho = cfg.rho0;

    auto record = [&](int step, double h, bool accepted, const GradientBundle& b, double mu) {
        if (!cfg.record_trace) return;
        r.trace.push_back({step, h, accepted, b.phi, b.G.norm(), mu, b.margins.stability, b.margins.feedthrough});
    };
    record(0, 0.0, true, r.bundle, frobenius_inner(r.bundle.G, r.E));

    const bool descent = cfg.direction == FlowDirection::Descent;
    auto done = [&]() -> bool {
        if (descent && r.bundle.triple.imaginary) {
            r.status = FlowStatus::Coalesced;
            return true;
        }
        if (descent && cfg.early_stop_below && r.bundle.phi < *cfg.early_stop_below) {
            r.status = FlowStatus::EarlyStop;
            return true;
        }
        r.stationarity = stationarity_residual(r.bundle, r.E, cfg);
        if (r.stationarity <= cfg.stall_tol) {
            r.status = FlowStatus::Stationary;
            return true;
        }
        return false;
    };

    while (!done()) {
        if (r.steps_taken >= cfg.max_steps) {
            r.status = FlowStatus::MaxSteps;
            break;
        }
        ++r.steps_taken;
        double h = r.rho;
        bool accepted = false;
        while (h >= 1e-14) {
            const bool check = cfg.spectrum_check_every > 0 && (r.evaluations % cfg.spectrum_check_every == 0);
            StepOutcome st = euler_step(sys, s, eps, r.E, r.bundle, h, cfg, check);
            if (st.evaluated) {
                ++r.evaluations;
                if (st.bundle.triple.source == TripleSource::WarmStart) ++r.warm_evaluations;
            }
            if (st.accepted) {
                const double mu = frobenius_inner(st.bundle.G, st.E);
                r.E = std::move(st.E);
                r.bundle = std::move(st.bundle);
                ++r.accepted;
                record(r.steps_taken, h, true, r.bundle, mu);
                if (cfg.on_accept) cfg.on_accept(r.E, r.bundle);
                accepted = true;
                break;
            }
            ++r.rejected;
            if (st.evaluated) record(r.steps_taken, h, false, st.bundle, frobenius_inner(st.bundle.G, st.E));
            h /= cfg.gamma;
        }
        if (!accepted) {
            r.stationarity = stationarity_residual(r.bundle, r.E, cfg);
            r.status = r.bundle.triple.imaginary ? FlowStatus::Coalesced : FlowStatus::Stalled;
            break;
        }
        if (h == r.rho) r.rho *= cfg.gamma;
    }
    return r;
}

std::string inner_trace_csv(const std::vector<InnerTraceRow>& rows) {
    std::ostringstream out;
    out << "step,h,accepted,phi,gnorm,mu,margin_A,margin_D\n";
    char buf[256];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.6e,%d,%.12e,%.12e,%.12e,%.12e,%.12e\n", row.step, row.h,
                      row.accepted ? 1 : 0, row.phi, row.gnorm, row.mu, row.margin_A, row.margin_D);
        out << buf;
    }
    return out.str();
}

}  // namespace passivion
