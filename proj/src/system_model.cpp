#include "passivion/system_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "passivion/errors.hpp"

namespace passivion {

std::string_view to_string(RealnessMode mode) {
    return mode == RealnessMode::PositiveReal ? "positive_real" : "bounded_real";
}

namespace {

void check_shapes(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& D) {
    const Index n = A.rows();
    std::ostringstream msg;
    if (n == 0 || A.cols() != n) {
        msg << "A must be square and nonempty, got " << A.rows() << "x" << A.cols();
    } else if (B.rows() != n || B.cols() == 0) {
        msg << "B must be " << n << "xm with m >= 1, got " << B.rows() << "x" << B.cols();
    } else if (C.cols() != n || C.rows() == 0) {
        msg << "C must be px" << n << " with p >= 1, got " << C.rows() << "x" << C.cols();
    } else if (D.rows() != C.rows() || D.cols() != B.cols()) {
        msg << "D must be " << C.rows() << "x" << B.cols() << ", got " << D.rows() << "x" << D.cols();
    }
    if (!msg.str().empty()) throw Error(ErrorCode::DimensionMismatch, msg.str());
    if (!A.allFinite() || !B.allFinite() || !C.allFinite() || !D.allFinite())
        throw Error(ErrorCode::InvalidSystem, "system matrices contain non-finite entries");
}

double min_symmetric_eigenvalue(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace

StateSpaceSystem::StateSpaceSystem(Matrix A, Matrix B, Matrix C, Matrix D, RealnessMode mode)
    : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D)), mode_(mode) {}

StateSpaceSystem StateSpaceSystem::unchecked(Matrix A, Matrix B, Matrix C, Matrix D, RealnessMode mode) {
    check_shapes(A, B, C, D);
    if (mode == RealnessMode::PositiveReal && D.rows() != D.cols())
        throw Error(ErrorCode::NonSquareFeedthrough, "positive-real mode requires p == m");
    return StateSpaceSystem(std::move(A), std::move(B), std::move(C), std::move(D), mode);
}

StateSpaceSystem StateSpaceSystem::create(Matrix A, Matrix B, Matrix C, Matrix D, RealnessMode mode) {
    auto sys = unchecked(std::move(A), std::move(B), std::move(C), std::move(D), mode);
    const double abscissa = stability_margin(sys.A());
    if (!(abscissa < 0.0)) {
        std::ostringstream msg;
        msg << "spectral abscissa of A is " << abscissa << ", must be negative";
        throw Error(ErrorCode::UnstableA, msg.str());
    }
    const double margin = sys.feedthrough_margin();
    if (!(margin > 0.0)) {
        std::ostringstream msg;
        msg << (mode == RealnessMode::PositiveReal ? "D + D^T is not positive definite"
                                                   : "||D||_2 >= 1")
            << " (margin " << margin << ")";
        throw Error(ErrorCode::DefinitenessViolation, msg.str());
    }
    return sys;
}

Matrix StateSpaceSystem::block_matrix() const {
    Matrix X(n() + p(), n() + m());
    X << A_, B_, C_, D_;
    return X;
}

StateSpaceSystem StateSpaceSystem::perturbed(const Matrix& dX) const {
    if (dX.rows() != n() + p() || dX.cols() != n() + m())
        throw Error(ErrorCode::DimensionMismatch, "perturbation does not match system block shape");
    const Index n_ = n();
    return StateSpaceSystem(A_ + dX.topLeftCorner(n_, n_), B_ + dX.topRightCorner(n_, m()),
                            C_ + dX.bottomLeftCorner(p(), n_), D_ + dX.bottomRightCorner(p(), m()), mode_);
}

double StateSpaceSystem::feedthrough_margin() const {
    if (mode_ == RealnessMode::PositiveReal) return min_symmetric_eigenvalue(sym(D_));
    const Matrix G = Matrix::Identity(m(), m()) - D_.transpose() * D_;
    return min_symmetric_eigenvalue(G);
}

Matrix symplectic_unit(Index n) {
    Matrix J = Matrix::Zero(2 * n, 2 * n);
    J.topRightCorner(n, n).setIdentity();
    J.bottomLeftCorner(n, n) = -Matrix::Identity(n, n);
    return J;
}

double hamiltonian_asymmetry(const Matrix& M) {
    const Matrix JM = symplectic_unit(M.rows() / 2) * M;
    return (JM.transpose() - JM).norm();
}

LowRankUpdate hamiltonian_low_rank(const StateSpaceSystem& sys) {
    const Index n = sys.n(), m = sys.m(), p = sys.p();
    const Matrix& B = sys.B();
    const Matrix& C = sys.C();
    const Matrix& D = sys.D();
    LowRankUpdate lr;
    if (sys.mode() == RealnessMode::PositiveReal) {
        const Matrix T = D + D.transpose();
        Eigen::LDLT<Matrix> ldlt(T);
        if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14)
            throw Error(ErrorCode::SingularT, "D + D^T is singular");
        lr.P.resize(2 * n, m);
        lr.P << B, -C.transpose();
        lr.W = -ldlt.solve(Matrix::Identity(m, m));
        lr.Q.resize(2 * n, m);
        lr.Q << C.transpose(), B;
    } else {
        const Matrix Rt = Matrix::Identity(m, m) - D.transpose() * D;  // -R
        Eigen::LDLT<Matrix> ldlt(Rt);
        if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14)
            throw Error(ErrorCode::SingularR, "I - D^T D is singular");
        lr.P = Matrix::Zero(2 * n, m + p);
        lr.P.topLeftCorner(n, m) = B;
        lr.P.bottomLeftCorner(n, m) = -C.transpose() * D;
        lr.P.bottomRightCorner(n, p) = -C.transpose();
        lr.W = Matrix::Zero(m + p, m + p);
        lr.W.topLeftCorner(m, m) = ldlt.solve(Matrix::Identity(m, m));
        lr.W.bottomRightCorner(p, p).setIdentity();
        lr.Q = Matrix::Zero(2 * n, m + p);
        lr.Q.topLeftCorner(n, m) = C.transpose() * D;
        lr.Q.bottomLeftCorner(n, m) = B;
        lr.Q.topRightCorner(n, p) = C.transpose();
    }
    return lr;
}

HamiltonianMatrix build_hamiltonian(const StateSpaceSystem& sys) {
    const double margin = sys.feedthrough_margin();
    if (!(margin > 0.0)) {
        std::ostringstream msg;
        msg << "feedthrough outside the validity region of the explicit Hamiltonian (margin " << margin
            << "); use the extended pencil";
        throw Error(ErrorCode::DefinitenessViolation, msg.str());
    }
    const Index n = sys.n();
    LowRankUpdate lr = hamiltonian_low_rank(sys);
    HamiltonianMatrix H;
    H.state = sys.A();
    H.matrix = Matrix::Zero(2 * n, 2 * n);
    H.matrix.topLeftCorner(n, n) = sys.A();
    H.matrix.bottomRightCorner(n, n) = -sys.A().transpose();
    H.matrix.noalias() += lr.P * lr.W * lr.Q.transpose();
    if (sys.m() + sys.p() < n) H.low_rank = std::move(lr);
    return H;
}

ExtendedPencil build_extended_pencil(const StateSpaceSystem& sys) {
    const Index n = sys.n(), m = sys.m(), p = sys.p();
    const Matrix& A = sys.A();
    const Matrix& B = sys.B();
    const Matrix& C = sys.C();
    const Matrix& D = sys.D();
    ExtendedPencil pencil;
    if (sys.mode() == RealnessMode::PositiveReal) {
        const Index N = 2 * n + m;
        pencil.lhs = Matrix::Zero(N, N);
        pencil.lhs.topLeftCorner(2 * n, 2 * n).setIdentity();
        pencil.rhs = Matrix::Zero(N, N);
        pencil.rhs.block(0, 0, n, n) = A;
        pencil.rhs.block(0, 2 * n, n, m) = B;
        pencil.rhs.block(n, n, n, n) = -A.transpose();
        pencil.rhs.block(n, 2 * n, n, m) = -C.transpose();
        pencil.rhs.block(2 * n, 0, m, n) = C;
        pencil.rhs.block(2 * n, n, m, n) = B.transpose();
        pencil.rhs.block(2 * n, 2 * n, m, m) = D + D.transpose();
    } else {
        const Index N = 2 * n + m + p;
        pencil.lhs = Matrix::Zero(N, N);
        pencil.lhs.topLeftCorner(2 * n, 2 * n).setIdentity();
        pencil.rhs = Matrix::Zero(N, N);
        pencil.rhs.block(0, 0, n, n) = A;
        pencil.rhs.block(0, 2 * n, n, m) = B;
        pencil.rhs.block(n, n, n, n) = -A.transpose();
        pencil.rhs.block(n, 2 * n + m, n, p) = -C.transpose();
        pencil.rhs.block(2 * n, n, m, n) = B.transpose();
        pencil.rhs.block(2 * n, 2 * n, m, m) = -Matrix::Identity(m, m);
        pencil.rhs.block(2 * n, 2 * n + m, m, p) = D.transpose();
        pencil.rhs.block(2 * n + m, 0, p, n) = C;
        pencil.rhs.block(2 * n + m, 2 * n, p, m) = D;
        pencil.rhs.block(2 * n + m, 2 * n + m, p, p)= -Matrix::Identity(p, p);
    }
    return pencil;
}

std::vector<Complex> finite_eigenvalues(const ExtendedPencil& pencil) {
    Eigen::GeneralizedEigenSolver<Matrix> ges(pencil.rhs, pencil.lhs, false);
    const auto& alphas = ges.alphas();
    const auto& betas = ges.betas();
    const double scale = std::max(1.0, pencil.rhs.norm());
    std::vector<Complex> out;
    for (Index i = 0; i < alphas.size(); ++i) {
        if (std::abs(betas(i)) > 1e-10 * std::max(std::abs(alphas(i)), scale * 1e-6))
            out.push_back(alphas(i) / betas(i));
    }
    return out;
}

std::vector<double> default_frequency_grid() {
    constexpr int kPoints = 400;
    std::vector<double> grid(kPoints);
    for (int i = 0; i < kPoints; ++i) grid[i] = std::pow(10.0, -3.0 + 6.0 * i / (kPoints - 1));
    return grid;
}

RealnessReport check_realness_grid(const StateSpaceSystem& sys, std::span<const double> freqs) {
    const Index n = sys.n();
    RealnessReport report;
    report.worst = std::numeric_limits<double>::infinity();
    const CMatrix Ac = sys.A().cast<Complex>();
    const CMatrix Bc = sys.B().cast<Complex>();
    const CMatrix Cc = sys.C().cast<Complex>();
    const CMatrix Dc = sys.D().cast<Complex>();
    for (double w : freqs) {
        CMatrix resolvent = Complex(0.0, w) * CMatrix::Identity(n, n) - Ac;
        Eigen::PartialPivLU<CMatrix> lu(resolvent);
        if (!(lu.rcond() > 1e-14)) {
            std::ostringstream msg;
            msg << "i*" << w << " is (numerically) a pole of the transfer function";
            throw Error(ErrorCode::PoleOnGrid, msg.str());
        }
        const CMatrix H = Cc * lu.solve(Bc) + Dc;
        CMatrix G;
        if (sys.mode() == RealnessMode::PositiveReal)
            G = H + H.adjoint();
        else
            G = CMatrix::Identity(H.cols(), H.cols()) - H.adjoint() * H;
        Eigen::SelfAdjointEigenSolver<CMatrix> es(G, Eigen::EigenvaluesOnly);
        const double lmin = es.eigenvalues().minCoeff();
        report.frequencies.push_back(w);
        report.min_eigenvalues.push_back(lmin);
        if (lmin < report.worst) {
            report.worst = lmin;
            report.worst_frequency = w;
        }
    }
    report.passive = report.worst >= -1e-12;
    return report;
}

double stability_margin(const Matrix& A) {
    Eigen::EigenSolver<Matrix> es(A, false);
    return es.eigenvalues().real().maxCoeff();
}

}  // namespace passivion
