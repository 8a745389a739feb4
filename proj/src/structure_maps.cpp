#include "passivion/structure_maps.hpp"

#include <algorithm>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "passivion/errors.hpp"

namespace passivion {

std::string_view to_string(StructureKind kind) {
    switch (kind) {
        case StructureKind::Full: return "full";
        case StructureKind::GramianWeightedC: return "gramian_c";
        case StructureKind::SparsityPattern: return "sparsity";
    }
    return "unknown";
}

Matrix solve_lyapunov(const Matrix& A, const Matrix& F) {
    const Index n = A.rows();
    Eigen::ComplexSchur<CMatrix> schur(A.cast<Complex>());
    const CMatrix& T = schur.matrixT();
    const CMatrix& U = schur.matrixU();
    const CMatrix Ft = U.adjoint() * F.cast<Complex>() * U;
    // T Y + Y T^* = -Ft, column by column from the right.
    CMatrix Y = CMatrix::Zero(n, n);
    for (Index j = n - 1; j >= 0; --j) {
        CVector rhs = -Ft.col(j);
        for (Index k = j + 1; k < n; ++k) rhs -= std::conj(T(j, k)) * Y.col(k);
        CMatrix S = T;
        S.diagonal().array() += std::conj(T(j, j));
        Y.col(j) = S.triangularView<Eigen::Upper>().solve(rhs);
    }
    Matrix X = (U * Y * U.adjoint()).real();
    return sym(X);
}

GramianFactor controllability_gramian(const Matrix& A, const Matrix& B) {
    if (A.rows() != A.cols() || B.rows() != A.rows())
        throw Error(ErrorCode::DimensionMismatch, "controllability_gramian: A must be n x n and B n x m");
    const double abscissa = stability_margin(A);
    if (!(abscissa < 0.0)) {
        std::ostringstream msg;
        msg << "Lyapunov equation has no positive definite solution (spectral abscissa " << abscissa << ")";
        throw Error(ErrorCode::UnstableA, msg.str());
    }
    GramianFactor g;
    g.Gc = solve_lyapunov(A, B * B.transpose());
    Eigen::LLT<Matrix> llt(g.Gc);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::InvalidSystem, "controllability Gramian is not positive definite (uncontrollable pair)");
    g.Q = llt.matrixU();
    return g;
}

PerturbationStructure PerturbationStructure::full(Index n, Index m, Index p) {
    PerturbationStructure s;
    s.kind_ = StructureKind::Full;
    s.n_ = n; s.m_ = m; s.p_ = p;
    s.k_ = n + p;
    s.l_ = n + m;
    return s;
}

PerturbationStructure PerturbationStructure::gramian_c(const StateSpaceSystem& sys) {
    PerturbationStructure s;
    s.kind_ = StructureKind::GramianWeightedC;
    s.n_ = sys.n(); s.m_ = sys.m(); s.p_ = sys.p();
    s.k_ = sys.p();
    s.l_ = sys.n();
    s.Q_ = controllability_gramian(sys.A(), sys.B()).Q;
    return s;
}

PerturbationStructure PerturbationStructure::sparsity(Index n, Index m, Index p, std::vector<Entry> mask) {
    for (const auto& [i, j] : mask) {
        if (i < 0 || j < 0 || i >= n + p || j >= n + m) {
            std::ostringstream msg;
            msg << "mask entry (" << i << "," << j << ") outside the " << n + p << "x" << n + m << " block matrix";
            throw Error(ErrorCode::DimensionMismatch, msg.str());
        }
    }
    std::sort(mask.begin(), mask.end());
    mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
    if (mask.empty()) throw Error(ErrorCode::InvalidConfig, "sparsity mask is empty");
    PerturbationStructure s;
    s.kind_ = StructureKind::SparsityPattern;
    s.n_ = n; s.m_ = m; s.p_ = p;
    s.k_ = static_cast<Index>(mask.size());
    s.l_ = 1;
    s.mask_ = std::move(mask);
    return s;
}

bool PerturbationStructure::touches_A() const {
    switch (kind_) {
        case StructureKind::Full: return true;
        case StructureKind::GramianWeightedC: return false;
        case StructureKind::SparsityPattern:
            return std::any_of(mask_.begin(), mask_.end(), [&](const Entry& e) { return e.first < n_ && e.second < n_; });
    }
    return false;
}

bool PerturbationStructure::touches_D() const {
    switch (kind_) {
        case StructureKind::Full: return true;
        case StructureKind::GramianWeightedC: return false;
        case StructureKind::SparsityPattern:
            return std::any_of(mask_.begin(), mask_.end(), [&](const Entry& e) { return e.first >= n_ && e.second >= n_; });
    }
    return false;
}

namespace {

void require_shape(const Matrix& M, Index r, Index c, const char* what) {
    if (M.rows() != r || M.cols() != c) {
        std::ostringstream msg;
        msg << what << ": expected " << r << "x" << c << ", got " << M.rows() << "x" << M.cols();
        throw Error(ErrorCode::DimensionMismatch, msg.str());
    }
}

}  // namespace

Matrix apply_L(const PerturbationStructure& s, const Matrix& dZ) {
    require_shape(dZ, s.k(), s.l(), "apply_L");
    switch (s.kind()) {
        case StructureKind::Full: return dZ;
        case StructureKind::GramianWeightedC: {
            Matrix X = Matrix::Zero(s.block_rows(), s.block_cols());
            // dC = dZ Q^{-T}  <=>  Q dC^T = dZ^T
            X.block(s.n(), 0, s.p(), s.n()) =
                s.Q().triangularView<Eigen::Upper>().solve(dZ.transpose()).transpose();
            return X;
        }
        case StructureKind::SparsityPattern: {
            Matrix X = Matrix::Zero(s.block_rows(), s.block_cols());
            for (std::size_t i = 0; i < s.mask().size(); ++i) X(s.mask()[i].first, s.mask()[i].second) = dZ(Index(i), 0);
            return X;
        }
    }
    return dZ;
}

Matrix apply_L_adjoint(const PerturbationStructure& s, const Matrix& V) {
    require_shape(V, s.block_rows(), s.block_cols(), "apply_L_adjoint");
    switch (s.kind()) {
        case StructureKind::Full: return V;
        case StructureKind::GramianWeightedC: {
            // V_C Q^{-1}  <=>  Q^T Z^T = V_C^T
            const Matrix VC = V.block(s.n(), 0, s.p(), s.n());
            return s.Q().transpose().triangularView<Eigen::Lower>().solve(VC.transpose()).transpose();
        }
        case StructureKind::SparsityPattern: {
            Matrix Z(s.k(), 1);
            for (std::size_t i = 0; i < s.mask().size(); ++i) Z(Index(i), 0) = V(s.mask()[i].first, s.mask()[i].second);
            return Z;
        }
    }
    return V;
}

Matrix preimage(const PerturbationStructure& s, const Matrix& dX) {
    require_shape(dX, s.block_rows(), s.block_cols(), "preimage");
    if (s.kind() == StructureKind::GramianWeightedC)
        return dX.block(s.n(), 0, s.p(), s.n()) * s.Q().transpose();
    return apply_L_adjoint(s, dX);
}

}  // namespace passivion
