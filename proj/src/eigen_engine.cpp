#include "passivion/eigen_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "passivion/errors.hpp"

namespace passivion {

double spectral_norm(const Matrix& M) {
    if (M.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(M);
    return svd.singularValues()(0);
}

std::vector<Complex> eigenvalues(const Matrix& M) {
    Eigen::EigenSolver<Matrix> es(M, false);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenvectorFailure, "real Schur reduction did not converge");
    const auto& ev = es.eigenvalues();
    return std::vector<Complex>(ev.data(), ev.data() + ev.size());
}

std::size_t select_target(const std::vector<Complex>& eigs, double imag_threshold) {
    auto snapped = [&](const Complex& z) { return std::abs(z.real()) <= imag_threshold ? 0.0 : z.real(); };
    double best_re = std::numeric_limits<double>::infinity();
    for (const auto& z : eigs) {
        const double re = snapped(z);
        if (re >= 0.0) best_re = std::min(best_re, re);
    }
    if (!std::isfinite(best_re))
        throw Error(ErrorCode::NoRightHalfPlaneEigenvalue, "no eigenvalue with nonnegative real part");
    const double window = best_re + SelectionRule::tie_tol * (1.0 + best_re);
    std::size_t best = eigs.size();
    for (std::size_t i = 0; i < eigs.size(); ++i) {
        const double re = snapped(eigs[i]);
        if (re < 0.0 || re > window) continue;
        if (best == eigs.size() || eigs[i].imag() > eigs[best].imag()) best = i;
    }
    return best;
}

double normalize_pair(CVector& x, CVector& y) {
    const double nx = x.norm(), ny = y.norm();
    if (!(nx > 0.0) || !(ny > 0.0) || !std::isfinite(nx) || !std::isfinite(ny))
        throw Error(ErrorCode::EigenvectorFailure, "zero or non-finite eigenvector");
    x /= nx;
    y /= ny;
    for (Index i = 0; i < x.size(); ++i) {
        if (std::abs(x(i)) > 1e-8) {
            x *= std::conj(x(i)) / std::abs(x(i));
            x(i) = std::abs(x(i));
            break;
        }
    }
    const Complex s = x.dot(y);
    if (!(std::abs(s) > 0.0)) throw Error(ErrorCode::EigenvectorFailure, "left and right eigenvectors are orthogonal");
    y *= std::conj(s) / std::abs(s);
    return std::abs(s);
}

namespace {

struct Residuals {
    double right;
    double left;
};

Residuals residuals(const Matrix& M, Complex lambda, const CVector& x, const CVector& y) {
    const CMatrix Mc = M.cast<Complex>();
    return {(Mc * y - lambda * y).norm(), (Mc.adjoint() * x - std::conj(lambda) * x).norm()};
}

// Shifted solver over either a dense LU or the structured SMW form.
class ShiftedSolver {
public:
    ShiftedSolver(const HamiltonianMatrix& H, Complex sigma) {
        if (H.low_rank) {
            smw_.emplace(H.state, *H.low_rank, sigma);
        } else {
            const Index N = H.matrix.rows();
            CMatrix S = H.matrix.cast<Complex>();
            S.diagonal().array() -= sigma;
            lu_.compute(S);
            if (!(lu_.rcond() > 0.0) || !std::isfinite(lu_.rcond()))
                throw Error(ErrorCode::SingularShift, "shifted matrix is singular");
            (void)N;
        }
    }

    CVector solve(const CVector& r) const { return smw_ ? smw_->solve(r) : CVector(lu_.solve(r)); }
    CVector solve_adjoint(const CVector& r) const {
        return smw_ ? smw_->solve_adjoint(r) : CVector(lu_.adjoint().solve(r));
    }

private:
    std::optional<SmwSolver> smw_;
    Eigen::PartialPivLU<CMatrix> lu_;
};

std::optional<ShiftedSolver> make_solver(const HamiltonianMatrix& H, Complex sigma, double norm) {
    try {
        return ShiftedSolver(H, sigma);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularShift && e.code() != ErrorCode::SingularCapacitance) throw;
    }
    try {
        return ShiftedSolver(H, sigma + Complex(1e-12 * std::max(norm, 1.0), 0.0));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularShift && e.code() != ErrorCode::SingularCapacitance) throw;
        std::ostringstream msg;
        msg << "shifted solve singular at sigma = " << sigma << " even after perturbation";
        throw Error(ErrorCode::SingularShift, msg.str());
    }
}

bool all_finite(const CVector& v) { return v.allFinite(); }

// A few inverse-iteration sweeps at a fixed shift; returns false if the
// solves produced non-finite vectors.
bool inverse_iterate(const ShiftedSolver& solver, CVector& x, CVector& y, int sweeps) {
    for (int it = 0; it < sweeps; ++it) {
        CVector yn = solver.solve(y);
        CVector xn = solver.solve_adjoint(x);
        if (!all_finite(yn) || !all_finite(xn)) return false;
        const double ny = yn.norm(), nx = xn.norm();
        if (!(ny > 0.0) || !(nx > 0.0)) return false;
        y = yn / ny;
        x = xn / nx;
    }
    return true;
}

CVector start_vector(Index N, double phase) {
    CVector v(N);
    for (Index i = 0; i < N; ++i) v(i) = Complex(1.0 / (1.0 + double(i)), phase * std::sin(1.0 + double(i)));
    return v / v.norm();
}

EigenTriple finish(const Matrix& M, Complex lambda, CVector x, CVector y, double norm, bool imaginary,
                   TripleSource source) {
    EigenTriple t;
    const double s = normalize_pair(x, y);
    t.lambda = lambda;
    t.x = std::move(x);
    t.y = std::move(y);
    t.kappa = 1.0 / s;
    t.imaginary = imaginary;
    t.source = source;
    const Residuals r = residuals(M, lambda, t.x, t.y);
    t.residual = std::max(r.right, r.left);
    (void)norm;
    return t;
}

EigenTriple full_solve(const HamiltonianMatrix& H, double norm) {
    const Matrix& M = H.matrix;
    const std::vector<Complex> eigs = eigenvalues(M);
    const double thr = SelectionRule::imaginary_tol * norm;
    const std::size_t idx = select_target(eigs, thr);
    Complex lambda = eigs[idx];
    const bool imaginary = std::abs(lambda.real()) <= thr;
    if (imaginary) lambda = Complex(0.0, lambda.imag());

    // Vectors for the computed eigenvalue via inverse iteration on the
    // unsnapped shift.
    // An exactly singular factorization at the computed eigenvalue is moved
    // off by a small complex offset.
    CVector y, x;
    bool ok = false;
    for (double off : {0.0, 1e-12, 1e-10, 1e-8}) {
        const Complex shift = eigs[idx] + Complex(off, off) * std::max(norm, 1.0);
        y = start_vector(M.rows(), 0.5);
        x = start_vector(M.rows(), -0.25);
        try {
            const auto solver = make_solver(H, shift, norm);
            ok = inverse_iterate(*solver, x, y, 3);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SingularShift && e.code() != ErrorCode::SingularCapacitance) throw;
        }
        if (ok) break;
    }
    if (!ok) throw Error(ErrorCode::EigenvectorFailure, "inverse iteration produced non-finite vectors");
    EigenTriple t = finish(M, lambda, std::move(x), std::move(y), norm, imaginary, TripleSource::FullSolve);
    const Residuals r = residuals(M, eigs[idx], t.x, t.y);
    t.residual = std::max(r.right, r.left);
    if (t.residual > SelectionRule::residual_tol * std::max(norm, 1e-300)) {
        std::ostringstream msg;
        msg << "eigenvector residual " << t.residual << " exceeds tolerance for lambda = " << eigs[idx];
        throw Error(ErrorCode::EigenvectorFailure, msg.str());
    }
    return t;
}

}  // namespace

EigenTriple refine_triple(const HamiltonianMatrix& H, Complex lambda0, const CVector& x0, const CVector& y0) {
    const Matrix& M = H.matrix;
    const double norm = spectral_norm(M);
    const double target = 1e-10 * std::max(norm, 1e-300);
    if (x0.size() != M.rows() || y0.size() != M.rows())
        throw Error(ErrorCode::DimensionMismatch, "refine_triple: vector length does not match matrix");
    CVector x = x0, y = y0;
    Complex lambda = lambda0;
    const CMatrix Mc = M.cast<Complex>();
    for (int it = 0; it < 8; ++it) {
        const auto solver = make_solver(H, lambda, norm);
        if (!inverse_iterate(*solver, x, y, 1)) break;
        const Complex xy = x.dot(y);
        if (std::abs(xy) < 1e-14) break;
        lambda = x.dot(Mc * y) / xy;
        const Residuals r = residuals(M, lambda, x, y);
        if (std::max(r.right, r.left) <= target) {
            return finish(M, lambda, std::move(x), std::move(y), norm, false, TripleSource::WarmStart);
        }
    }
    std::ostringstream msg;
    msg << "inverse iteration from lambda = " << lambda0 << " did not reach the residual tolerance";
    throw Error(ErrorCode::EigenvectorFailure, msg.str());
}

EigenTriple refine_triple(const Matrix& M, Complex lambda0, const CVector& x0, const CVector& y0) {
    HamiltonianMatrix H;
    H.matrix = M;
    return refine_triple(H, lambda0, x0, y0);
}

EigenTriple target_eigentriple(const HamiltonianMatrix& H, const std::optional<EigenHint>& hint) {
    if (!H.matrix.allFinite()) throw Error(ErrorCode::InvalidSystem, "Hamiltonian matrix has non-finite entries");
    const double norm = spectral_norm(H.matrix);
    const double thr = SelectionRule::imaginary_tol * norm;
    if (hint && hint->x.size() == H.matrix.rows() && hint->y.size() == H.matrix.rows()) {
        try {
            EigenTriple t = refine_triple(H, hint->lambda, hint->x, hint->y);
            bool ok = t.lambda.real() > thr;
            if (ok && t.lambda.imag() < 0.0) {
                t.lambda = std::conj(t.lambda);
                t.x = t.x.conjugate().eval();
                t.y = t.y.conjugate().eval();
                t.kappa = 1.0 / normalize_pair(t.x, t.y);
            }
            if (ok && hint->check_spectrum) {
                const std::vector<Complex> eigs = eigenvalues(H.matrix);
                const std::size_t idx = select_target(eigs, thr);
                const double ref = std::abs(eigs[idx].real()) <= thr ? 0.0 : eigs[idx].real();
                ok = std::abs(t.lambda.real() - ref) <= SelectionRule::warm_window * ref;
            }
            if (ok) return t;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EigenvectorFailure && e.code() != ErrorCode::SingularShift &&
                e.code() != ErrorCode::SingularCapacitance)
                throw;
        }
    }
    return full_solve(H, norm);
}

EigenTriple target_eigentriple(const Matrix& M, const std::optional<EigenHint>& hint) {
    HamiltonianMatrix H;
    H.matrix = M;
    return target_eigentriple(H, hint);
}

SmwSolver::SmwSolver(const Matrix& A, const LowRankUpdate& lr, Complex sigma) : n_(A.rows()) {
    const Index n = n_;
    CMatrix B1 = A.cast<Complex>();
    B1.diagonal().array() -= sigma;
    CMatrix B2 = -A.transpose().cast<Complex>();
    B2.diagonal().array() -= sigma;
    lu1_.compute(B1);
    lu2_.compute(B2);
    const double rc = std::min(lu1_.rcond(), lu2_.rcond());
    if (!(rc > 1e-15)) throw Error(ErrorCode::SingularShift, "shift is an eigenvalue of A or -A^T");
    P_ = lr.P.cast<Complex>();
    Q_ = lr.Q.cast<Complex>();
    W_ = lr.W.cast<Complex>();
    const Index q = P_.cols();
    if (q == 0) return;
    if (P_.rows() != 2 * n || Q_.rows() != 2 * n || W_.rows() != q || W_.cols() != q)
        throw Error(ErrorCode::DimensionMismatch, "low-rank factors do not match the base matrix");
    BinvP_.resize(2 * n, q);
    BadjQ_.resize(2 * n, q);
    for (Index j = 0; j < q; ++j) {
        BinvP_.col(j) = base_solve(P_.col(j));
        BadjQ_.col(j) = base_solve_adjoint(Q_.col(j));
    }
    const CMatrix cap = CMatrix::Identity(q, q) + W_ * Q_.transpose() * BinvP_;
    const CMatrix cap_adj = CMatrix::Identity(q, q) + W_.transpose() * P_.transpose() * BadjQ_;
    cap_.compute(cap);
    cap_adj_.compute(cap_adj);
    if (!(cap_.rcond() > 1e-15) || !(cap_adj_.rcond() > 1e-15))
        throw Error(ErrorCode::SingularCapacitance, "capacitance matrix is singular; shift is an eigenvalue");
}

CVector SmwSolver::base_solve(const CVector& r) const {
    CVector v(2 * n_);
    v.head(n_) = lu1_.solve(r.head(n_));
    v.tail(n_) = lu2_.solve(r.tail(n_));
    return v;
}

CVector SmwSolver::base_solve_adjoint(const CVector& r) const {
    CVector v(2 * n_);
    v.head(n_) = lu1_.adjoint().solve(r.head(n_));
    v.tail(n_) = lu2_.adjoint().solve(r.tail(n_));
    return v;
}

CVector SmwSolver::solve(const CVector& rhs) const {
    CVector u = base_solve(rhs);
    if (P_.cols() == 0) return u;
    const CVector t = cap_.solve(W_ * (Q_.transpose() * u));
    return u - BinvP_ * t;
}

CVector SmwSolver::solve_adjoint(const CVector& rhs) const {
    CVector u = base_solve_adjoint(rhs);
    if (P_.cols() == 0) return u;
    const CVector t = cap_adj_.solve(W_.transpose() * (P_.transpose() * u));
    return u - BadjQ_ * t;
}

CVector smw_shifted_solve(const Matrix& A, const LowRankUpdate& lr, Complex sigma, const CVector& rhs) {
    if (rhs.size() != 2 * A.rows()) throw Error(ErrorCode::DimensionMismatch, "smw_shifted_solve: rhs length");
    return SmwSolver(A, lr, sigma).solve(rhs);
}

double simplicity_gap(const Matrix& M, Complex lambda) {
    CMatrix S = M.cast<Complex>();
    S.diagonal().array() -= lambda;
    Eigen::JacobiSVD<CMatrix> svd(S);
    const auto& sv = svd.singularValues();
    if (sv.size() < 2) return 0.0;
    return sv(sv.size() - 2);
}

}  // namespace passivion
