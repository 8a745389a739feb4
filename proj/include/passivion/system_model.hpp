#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "passivion/types.hpp"

namespace passivion {

enum class RealnessMode { PositiveReal, BoundedReal };

std::string_view to_string(RealnessMode mode);

/// Real LTI system (A, B, C, D) together with the passivity notion it is
/// judged by. PositiveReal requires a square feedthrough (p == m).
class StateSpaceSystem {
public:
    /// Validates finiteness, shapes, stability of A and the mode condition
    /// (D + D^T > 0, or ||D||_2 < 1). Throws passivion::Error.
    static StateSpaceSystem create(Matrix A, Matrix B, Matrix C, Matrix D, RealnessMode mode);

    /// Shape and finiteness checks only. Used for perturbed iterates whose
    /// validity is monitored separately.
    static StateSpaceSystem unchecked(Matrix A, Matrix B, Matrix C, Matrix D, RealnessMode mode);

    const Matrix& A() const { return A_; }
    const Matrix& B() const { return B_; }
    const Matrix& C() const { return C_; }
    const Matrix& D() const { return D_; }
    RealnessMode mode() const { return mode_; }

    Index n() const { return A_.rows(); }
    Index m() const { return B_.cols(); }
    Index p() const { return C_.rows(); }

    /// The block matrix X = [A B; C D] of size (n+p) x (n+m).
    Matrix block_matrix() const;

    /// X + dX, unchecked.
    StateSpaceSystem perturbed(const Matrix& dX) const;

    /// lambda_min(sym(D)) for PositiveReal, lambda_min(I - D^T D) for
    /// BoundedReal. Positive iff the explicit Hamiltonian formula applies.
    double feedthrough_margin() const;

private:
    StateSpaceSystem(Matrix A, Matrix B, Matrix C, Matrix D, RealnessMode mode);

    Matrix A_, B_, C_, D_;
    RealnessMode mode_;
};

// M = blkdiag(A, -A^T) + P * W * Q^T with P, Q of size 2n x q.
struct LowRankUpdate {
    Matrix P;
    Matrix W;
    Matrix Q;

    Index rank_bound() const { return P.cols(); }
};

struct HamiltonianMatrix {
    Matrix matrix;
    Matrix state;                           // A, kept for structured solves
    std::optional<LowRankUpdate> low_rank;  // set when m + p < n

    Index half_dim() const { return state.rows(); }
};

/// Pencil lambda * lhs - rhs.
struct ExtendedPencil {
    Matrix lhs;
    Matrix rhs;
};

struct RealnessReport {
    std::vector<double> frequencies;
    std::vector<double> min_eigenvalues;
    double worst = 0.0;
    double worst_frequency = 0.0;
    bool passive = true;
};

/// Symplectic unit J = [0 I; -I 0] of size 2n.
Matrix symplectic_unit(Index n);

/// ||(JM)^T - JM||_F.
double hamiltonian_asymmetry(const Matrix& M);

LowRankUpdate hamiltonian_low_rank(const StateSpaceSystem& sys);

/// M_p(X) or M_b(X) depending on the system's mode.
HamiltonianMatrix build_hamiltonian(const StateSpaceSystem& sys);

ExtendedPencil build_extended_pencil(const StateSpaceSystem& sys);

/// Finite generalized eigenvalues of the pencil (|beta| above a relative cutoff).
std::vector<Complex> finite_eigenvalues(const ExtendedPencil& pencil);

/// Log-spaced grid over [1e-3, 1e3], 400 points.
std::vector<double> default_frequency_grid();

/// Minimum eigenvalue of H(iw) + H(iw)^* (PositiveReal) or I - H(iw)^* H(iw)
/// (BoundedReal) at each frequency.
RealnessReport check_realness_grid(const StateSpaceSystem& sys, std::span<const double> freqs);

/// Spectral abscissa max Re lambda(A).
double stability_margin(const Matrix& A);

}  // namespace passivion
