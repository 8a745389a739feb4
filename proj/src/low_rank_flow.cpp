#include "passivion/low_rank_flow.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "passivion/errors.hpp"

namespace passivion {

RankRFactor truncate_to_rank(const Matrix& E, Index r) {
    const Index rmax = std::min(E.rows(), E.cols());
    if (r < 1 || r > rmax) throw Error(ErrorCode::InvalidConfig, "rank must lie in [1, min(k, l)]");
    Eigen::JacobiSVD<Matrix> svd(E, Eigen::ComputeThinU | Eigen::ComputeThinV);
    RankRFactor f;
    f.U = svd.matrixU().leftCols(r);
    f.V = svd.matrixV().leftCols(r);
    f.S = svd.singularValues().head(r).asDiagonal();
    const double ns = f.S.norm();
    if (!(ns > 0.0)) throw Error(ErrorCode::InvalidConfig, "initial direction is zero");
    f.S /= ns;
    return f;
}

Matrix tangent_project(const RankRFactor& f, const Matrix& G) {
    const Matrix GV = G * f.V;
    const Matrix UtG = f.U.transpose() * G;
    return GV * f.V.transpose() - f.U * (UtG * f.V) * f.V.transpose() + f.U * UtG;
}

namespace {

// K = Qthin * R with positive diagonal in R (column pivoting folded back into R).
void thin_qr(const Matrix& K, Matrix& Q, Matrix& R, SplittingStats* stats) {
    const Index r = K.cols();
    Eigen::ColPivHouseholderQR<Matrix> qr(K);
    Q = qr.householderQ() * Matrix::Identity(K.rows(), r);
    Matrix Rp = qr.matrixR().topLeftCorner(r, r).triangularView<Eigen::Upper>();
    R = Rp * qr.colsPermutation().transpose();
    for (Index i = 0; i < r; ++i) {
        if (Rp(i, i) < 0.0) {
            Q.col(i) *= -1.0;
            R.row(i) *= -1.0;
        }
    }
    if (stats && qr.rank() < r) ++stats->rank_deficient_qr;
}

}  // namespace

RankRFactor splitting_step(const RankRFactor& f, const Matrix& G0, double h, FlowDirection direction,
                           SplittingStats* stats) {
    // Substeps are written for descent; ascent flips the gradient.
    const Matrix G = direction == FlowDirection::Descent ? G0 : Matrix(-G0);
    RankRFactor out;

    // K-step
    const Matrix K1 = f.U * f.S - h * G * f.V;
    Matrix R;
    thin_qr(K1, out.U, R, stats);
    const double sig_hat = R.norm();
    const Matrix S_hat = sig_hat > 0.0 ? Matrix(R / sig_hat) : R;

    // S-step (backward)
    Matrix S_tilde = S_hat + out.U.transpose() * (h * G) * f.V;
    const double sig_tilde = S_tilde.norm();
    if (sig_tilde > 0.0) S_tilde /= sig_tilde;

    // L-step
    const Matrix L1 = f.V * S_tilde.transpose() - h * G.transpose() * out.U;
    Matrix Rl;
    thin_qr(L1, out.V, Rl, stats);
    out.S = Rl.transpose();
    const double sig1 = out.S.norm();
    if (sig1 > 0.0) out.S /= sig1;
    return out;
}

Index default_rank(const PerturbationStructure& s, const Matrix& G) {
    const Index cap = std::min(s.k(), s.l());
    if (s.kind() == StructureKind::GramianWeightedC) return std::min<Index>(8, cap);
    Eigen::JacobiSVD<Matrix> svd(G);
    const auto& sv = svd.singularValues();
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i)
        if (sv(i) > 1e-10 * sv(0)) ++rank;
    return std::clamp<Index>(rank + 2, 1, std::min<Index>(16, cap));
}

LowRankResult integrate_low_rank_to_stationary(const StateSpaceSystem& sys, const PerturbationStructure& s,
                                               double eps, const RankRFactor& factor0, const FlowConfig& cfg) {
    cfg.validate();
    LowRankResult out;
    FlowResult& r = out.flow;
    SplittingStats stats;
    out.factor = factor0;
    out.factor.S /= out.factor.S.norm();
    r.E = out.factor.E();
    r.bundle = evaluate_bundle(sys, s, eps, r.E, cfg);
    r.evaluations = 1;
    r.rho = cfg.rho0;

    auto record = [&](int step, double h, bool accepted, const GradientBundle& b, double mu) {
        if (!cfg.record_trace) return;
        r.trace.push_back({step, h, accepted, b.phi, b.G.norm(), mu, b.margins.stability, b.margins.feedthrough});
    };
    record(0, 0.0, true, r.bundle, frobenius_inner(r.bundle.G, r.E));

    auto field = [&](const GradientBundle& b, const Matrix& E) {
        const ConstrainedDirection d = constrained_rhs(b, E, cfg);
        return Matrix(d.Edot + d.mu * E);  // unprojected right-hand side
    };
    auto projected_residual = [&]() {
        const Matrix F = field(r.bundle, r.E);
        const Matrix D = tangent_project(out.factor, F - frobenius_inner(F, r.E) * r.E);
        const double gn = r.bundle.G.norm();
        return gn > 0.0 ? D.norm() / gn : 0.0;
    };
    const bool descent = cfg.direction == FlowDirection::Descent;

    while (true) {
        if (descent && r.bundle.triple.imaginary) {
            r.status = FlowStatus::Coalesced;
            break;
        }
        if (descent && cfg.early_stop_below && r.bundle.phi < *cfg.early_stop_below) {
            r.status = FlowStatus::EarlyStop;
            break;
        }
        out.projected_stationarity = projected_residual();
        if (out.projected_stationarity <= cfg.stall_tol) {
            r.status = FlowStatus::Stationary;
            break;
        }
        if (r.steps_taken >= cfg.max_steps) {
            r.status = FlowStatus::MaxSteps;
            break;
        }
        ++r.steps_taken;
        // descent-form gradient: the step moves along -Gd
        const Matrix Gd = -field(r.bundle, r.E);
        double h = r.rho;
        bool accepted = false;
        while (h >= 1e-14) {
            const RankRFactor trial = splitting_step(out.factor, Gd, h, FlowDirection::Descent, &stats);
            const Matrix Et = trial.E();
            const bool check = cfg.spectrum_check_every > 0 && (r.evaluations % cfg.spectrum_check_every == 0);
            EigenHint hint{r.bundle.triple.lambda, r.bundle.triple.x, r.bundle.triple.y, check};
            GradientBundle b;
            bool evaluated = true;
            try {
                b = evaluate_bundle(sys, s, eps, Et, cfg, hint);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::PerturbedDefinitenessViolation &&
                    e.code() != ErrorCode::EigenvectorFailure && e.code() != ErrorCode::SingularShift &&
                    e.code() != ErrorCode::SingularCapacitance)
                    throw;
                evaluated = false;
            }
            if (evaluated) {
                ++r.evaluations;
                if (b.triple.source == TripleSource::WarmStart) ++r.warm_evaluations;
                const double f_old = flow_objective(r.bundle, cfg);
                const double f_new = flow_objective(b, cfg);
                if (f_new > f_old + 1e-14 * (1.0 + std::abs(f_old))) {
                    out.factor = trial;
                    r.E = Et;
                    r.bundle = std::move(b);
                    ++r.accepted;
                    record(r.steps_taken, h, true, r.bundle, frobenius_inner(r.bundle.G, r.E));
                    if (cfg.on_accept) cfg.on_accept(r.E, r.bundle);
                    accepted = true;
                    break;
                }
                record(r.steps_taken, h, false, b, frobenius_inner(b.G, Et));
            }
            ++r.rejected;
            h /= cfg.gamma;
        }
        if (!accepted) {
            r.status = r.bundle.triple.imaginary ? FlowStatus::Coalesced : FlowStatus::Stalled;
            break;
        }
        if (h == r.rho) r.rho *= cfg.gamma;
    }
    r.stationarity = stationarity_residual(r.bundle, r.E, cfg);
    out.rank_deficient_qr = stats.rank_deficient_qr;
    return out;
}

ScalarEvaluator low_rank_evaluator(const StateSpaceSystem& sys, const PerturbationStructure& s,
                                   const FlowConfig& flow, Index rank) {
    return [&sys, &s, flow, rank](double eps, const Matrix& E_warm) {
        if (eps == 0.0) return f_and_fprime(sys, s, 0.0, E_warm, flow);
        const double sgn = direction_sign(flow.direction);
        Index r = rank;
        if (r <= 0) {
            const GradientBundle b = evaluate_bundle(sys, s, eps, E_warm / E_warm.norm(), flow);
            r = default_rank(s, b.G);
        }
        r = std::min<Index>(r, std::min(s.k(), s.l()));
        ScalarSample out;
        try {
            LowRankResult lr = integrate_low_rank_to_stationary(sys, s, eps, truncate_to_rank(E_warm, r), flow);
            const GradientBundle& b = lr.flow.bundle;
            out.f = b.triple.imaginary ? 0.0 : b.phi;
            out.fprime = sgn * b.triple.kappa * b.G.norm();
            out.E = lr.flow.E;
            out.flow = std::move(lr.flow);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::PerturbedDefinitenessViolation || flow.direction != FlowDirection::Descent)
                throw;
            out.E = E_warm / E_warm.norm();
        }
        return out;
    };
}

}  // namespace passivion
