#pragma once

#include <optional>
#include <vector>

#include "passivion/system_model.hpp"
#include "passivion/types.hpp"

namespace passivion {

enum class TripleSource { FullSolve, WarmStart };

/// Target eigenvalue lambda with left (x) and right (y) eigenvectors,
/// normalized to unit length with x^* y > 0 and kappa = 1 / (x^* y).
struct EigenTriple {
    Complex lambda{0.0, 0.0};
    CVector x;
    CVector y;
    double kappa = 1.0;
    double sigma2 = -1.0;  // negative until simplicity_gap is evaluated
    bool imaginary = false;
    TripleSource source = TripleSource::FullSolve;
    double residual = 0.0;  // max of right/left residuals
};

/// Previous triple used to warm-start inverse iteration.
struct EigenHint {
    Complex lambda;
    CVector x;
    CVector y;
    bool check_spectrum = false;  // verify against a Schur-only eigenvalue pass
};

struct SelectionRule {
    static constexpr double tie_tol = 1e-9;
    static constexpr double imaginary_tol = 1e-12;  // relative to ||M||_2
    static constexpr double residual_tol = 1e-8;    // relative to ||M||_2
    static constexpr double warm_window = 0.1;
};

double spectral_norm(const Matrix& M);

std::vector<Complex> eigenvalues(const Matrix& M);

/// Index of the target eigenvalue: minimal nonnegative real part (real parts
/// below imag_threshold in modulus count as zero), ties resolved toward the
/// largest imaginary part.
std::size_t select_target(const std::vector<Complex>& eigs, double imag_threshold);

EigenTriple target_eigentriple(const HamiltonianMatrix& M, const std::optional<EigenHint>& hint = std::nullopt);
EigenTriple target_eigentriple(const Matrix& M, const std::optional<EigenHint>& hint = std::nullopt);

/// Two-sided Rayleigh quotient iteration from an approximate triple.
EigenTriple refine_triple(const HamiltonianMatrix& M, Complex lambda0, const CVector& x0, const CVector& y0);
EigenTriple refine_triple(const Matrix& M, Complex lambda0, const CVector& x0, const CVector& y0);

/// Solves (M - sigma I) v = r for M = blkdiag(A, -A^T) + P W Q^T through
/// factorizations of the two diagonal blocks and a q x q capacitance matrix.
class SmwSolver {
public:
    SmwSolver(const Matrix& A, const LowRankUpdate& lr, Complex sigma);

    CVector solve(const CVector& rhs) const;
    /// Solves (M - sigma I)^* v = r.
    CVector solve_adjoint(const CVector& rhs) const;

private:
    CVector base_solve(const CVector& r) const;
    CVector base_solve_adjoint(const CVector& r) const;

    Index n_;
    Eigen::PartialPivLU<CMatrix> lu1_, lu2_;
    CMatrix P_, Q_, W_;
    CMatrix BinvP_, BadjQ_;
    Eigen::PartialPivLU<CMatrix> cap_, cap_adj_;
};

CVector smw_shifted_solve(const Matrix& A, const LowRankUpdate& lr, Complex sigma, const CVector& rhs);

/// Second-smallest singular value of M - lambda I.
double simplicity_gap(const Matrix& M, Complex lambda);

/// Normalizes (x, y) in place per the triple convention and returns x^* y.
double normalize_pair(CVector& x, CVector& y);

}  // namespace passivion
