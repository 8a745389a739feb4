#include "passivion/gradient_core.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "passivion/errors.hpp"

namespace passivion {

Matrix adjoint_Mp_prime(const StateSpaceSystem& sys, const Matrix& W) {
    if (sys.mode() != RealnessMode::PositiveReal)
        throw Error(ErrorCode::InvalidConfig, "adjoint_Mp_prime requires a positive-real system");
    const Index n = sys.n(), m = sys.m();
    if (W.rows() != 2 * n || W.cols() != 2 * n) throw Error(ErrorCode::DimensionMismatch, "W must be 2n x 2n");
    const Matrix T = sys.D() + sys.D().transpose();
    Eigen::PartialPivLU<Matrix> lu(T);
    if (!(lu.rcond() > 1e-14)) throw Error(ErrorCode::SingularT, "D + D^T is singular");
    const Matrix Tinv = lu.inverse();

    Matrix P(2 * n, m), Q(2 * n, m);
    P << sys.B(), -sys.C().transpose();
    Q << sys.C().transpose(), sys.B();
    const Matrix Y = W * Q * Tinv;                 // 2n x m
    const Matrix U = Tinv * P.transpose() * W;     // m x 2n
    const Matrix Z = U * Q * Tinv;                 // m x m

    Matrix V(n + m, n + m);
    V.topLeftCorner(n, n) = W.topLeftCorner(n, n) - W.bottomRightCorner(n, n).transpose();
    V.topRightCorner(n, m) = -Y.topRows(n) - U.rightCols(n).transpose();
    V.bottomLeftCorner(m, n) = Y.bottomRows(n).transpose() - U.leftCols(n);
    V.bottomRightCorner(m, m) = 2.0 * sym(Z);
    return V;
}

Matrix adjoint_Mb_prime(const StateSpaceSystem& sys, const Matrix& W) {
    if (sys.mode() != RealnessMode::BoundedReal)
        throw Error(ErrorCode::InvalidConfig, "adjoint_Mb_prime requires a bounded-real system");
    const Index n = sys.n(), m = sys.m(), p = sys.p();
    if (W.rows() != 2 * n || W.cols() != 2 * n) throw Error(ErrorCode::DimensionMismatch, "W must be 2n x 2n");
    const Matrix& B = sys.B();
    const Matrix& C = sys.C();
    const Matrix& D = sys.D();
    Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(m, m) - D.transpose() * D);
    if (!(lu.rcond() > 1e-14)) throw Error(ErrorCode::SingularR, "I - D^T D is singular");
    const Matrix Rt = lu.inverse();

    Matrix P(2 * n, m), Q(2 * n, m);
    P << B, -C.transpose() * D;
    Q << C.transpose() * D, B;
    const Matrix Y = W * Q * Rt;               // 2n x m
    const Matrix U = Rt * P.transpose() * W;   // m x 2n
    const Matrix Z = U * Q * Rt;               // m x m
    const Matrix W11 = W.topLeftCorner(n, n);
    const Matrix W21 = W.bottomLeftCorner(n, n);
    const Matrix W22 = W.bottomRightCorner(n, n);

    Matrix V(n + p, n + m);
    V.topLeftCorner(n, n) = W11 - W22.transpose();
    V.topRightCorner(n, m) = Y.topRows(n) + U.rightCols(n).transpose();
    V.bottomLeftCorner(p, n) = -2.0 * C * sym(W21) - D * Y.bottomRows(n).transpose() + D * U.leftCols(n);
    V.bottomRightCorner(p, m) = -C * Y.bottomRows(n) + 2.0 * D * sym(Z) + C * U.leftCols(n).transpose();
    return V;
}

Matrix adjoint_M_prime(const StateSpaceSystem& sys, const Matrix& W) {
    return sys.mode() == RealnessMode::PositiveReal ? adjoint_Mp_prime(sys, W) : adjoint_Mb_prime(sys, W);
}

Matrix eigen_sensitivity(const StateSpaceSystem& sys, const EigenTriple& t) {
    const Matrix W = (t.x * t.y.adjoint()).real();
    return adjoint_M_prime(sys, W);
}

namespace {

struct RightmostPair {
    Complex lambda;
    CVector x, y;
    double kappa;
};

RightmostPair rightmost(const Matrix& A) {
    Eigen::EigenSolver<Matrix> es(A, true);
    const auto& ev = es.eigenvalues();
    Index best = 0;
    for (Index i = 1; i < ev.size(); ++i) {
        const double tol = 1e-9 * (1.0 + std::abs(ev(best).real()));
        if (ev(i).real() > ev(best).real() + tol ||
            (std::abs(ev(i).real() - ev(best).real()) <= tol && ev(i).imag() > ev(best).imag()))
            best = i;
    }
    RightmostPair r;
    r.lambda = ev(best);
    r.y = es.eigenvectors().col(best);
    // Left eigenvector from A^T at conj(lambda): one inverse-iteration sweep
    // on the exact shift is enough once the right vector is known.
    CMatrix S = A.cast<Complex>();
    S.diagonal().array() -= r.lambda + Complex(1e-13 * (1.0 + std::abs(r.lambda)), 0.0);
    Eigen::PartialPivLU<CMatrix> lu(S);
    CVector x = CVector::Ones(A.rows());
    for (int it = 0; it < 3; ++it) {
        x = lu.adjoint().solve(x);
        x /= x.norm();
    }
    r.x = x;
    r.kappa = 1.0 / normalize_pair(r.x, r.y);
    return r;
}

double lambda_min_sym(const Matrix& S, Vector* vec) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    if (vec) *vec = es.eigenvectors().col(0);
    return es.eigenvalues()(0);
}

Matrix embed_A(const PerturbationStructure& s, const Matrix& VA) {
    Matrix V = Matrix::Zero(s.block_rows(), s.block_cols());
    V.topLeftCorner(s.n(), s.n()) = VA;
    return V;
}

Matrix embed_D(const PerturbationStructure& s, const Matrix& VD) {
    Matrix V = Matrix::Zero(s.block_rows(), s.block_cols());
    V.bottomRightCorner(s.p(), s.m()) = VD;
    return V;
}

}  // namespace

Margins margins_of(const StateSpaceSystem& sys) {
    return {stability_margin(sys.A()), sys.feedthrough_margin()};
}

PenaltyTerms penalty_gradients(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                               const Matrix& E, const ConstraintThresholds& th) {
    PenaltyTerms out;
    out.gA = Matrix::Zero(s.k(), s.l());
    out.gD = Matrix::Zero(s.k(), s.l());
    const StateSpaceSystem ps = sys.perturbed(apply_L(s, eps * E));

    if (s.touches_A()) {
        const RightmostPair r = rightmost(ps.A());
        const double hinge = std::max(0.0, th.theta_A + r.lambda.real());
        if (hinge > 0.0) {
            const Matrix WA = (r.x * r.y.adjoint()).real();
            out.gA = apply_L_adjoint(s, embed_A(s, WA)) * hinge;
            out.phiA = 0.5 * hinge * hinge;
            out.kappaA = r.kappa;
        }
    }
    if (s.touches_D()) {
        Vector y;
        const Matrix& D = ps.D();
        if (ps.mode() == RealnessMode::PositiveReal) {
            const double lmin = lambda_min_sym(sym(D), &y);
            const double hinge = std::max(0.0, th.theta_D - lmin);
            if (hinge > 0.0) {
                out.gD = -hinge * apply_L_adjoint(s, embed_D(s, y * y.transpose()));
                out.phiD = 0.5 * hinge * hinge;
            }
        } else {
            const double lmin = lambda_min_sym(Matrix::Identity(ps.m(), ps.m()) - D.transpose() * D, &y);
            const double hinge = std::max(0.0, th.theta_D - lmin);
            if (hinge > 0.0) {
                out.gD = 2.0 * hinge * apply_L_adjoint(s, embed_D(s, D * y * y.transpose()));
                out.phiD = 0.5 * hinge * hinge;
            }
        }
    }
    return out;
}

GradientBundle free_gradient(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                             const Matrix& E, const GradientOptions& opts) {
    if (E.rows() != s.k() || E.cols() != s.l())
        throw Error(ErrorCode::DimensionMismatch, "free_gradient: E does not match the structure dimensions");
    const StateSpaceSystem ps = sys.perturbed(apply_L(s, eps * E));
    GradientBundle b;
    b.margins = margins_of(ps);
    if (!(b.margins.feedthrough > 0.0)) {
        std::ostringstream msg;
        msg << "perturbed feedthrough left the validity region (margin " << b.margins.feedthrough
            << ", stability " << b.margins.stability << ")";
        throw Error(ErrorCode::PerturbedDefinitenessViolation, msg.str());
    }
    const HamiltonianMatrix H = build_hamiltonian(ps);
    b.triple = target_eigentriple(H, opts.hint);
    b.phi = b.triple.lambda.real();
    b.G = apply_L_adjoint(s, eigen_sensitivity(ps, b.triple));
    if (opts.check_gap) {
        b.triple.sigma2 = simplicity_gap(H.matrix, b.triple.lambda);
        b.gap_warning = b.triple.sigma2 < 1e-8 * spectral_norm(H.matrix);
    }
    if (opts.thresholds) {
        PenaltyTerms pt = penalty_gradients(sys, s, eps, E, *opts.thresholds);
        b.gA = std::move(pt.gA);
        b.gD = std::move(pt.gD);
        b.phiA = pt.phiA;
        b.phiD = pt.phiD;
    } else {
        b.gA = Matrix::Zero(s.k(), s.l());
        b.gD = Matrix::Zero(s.k(), s.l());
    }
    return b;
}

}  // namespace passivion
