#pragma once

#include <utility>
#include <vector>

#include "passivion/system_model.hpp"
#include "passivion/types.hpp"

namespace passivion {

enum class StructureKind { Full, GramianWeightedC, SparsityPattern };

std::string_view to_string(StructureKind kind);

/// Controllability Gramian Gc (A Gc + Gc A^T + B B^T = 0) and its factor
/// Q, upper triangular with positive diagonal, Gc = Q^T Q.
struct GramianFactor {
    Matrix Gc;
    Matrix Q;
};

GramianFactor controllability_gramian(const Matrix& A, const Matrix& B);

/// Solves A X + X A^T + F = 0 for stable A and symmetric F.
Matrix solve_lyapunov(const Matrix& A, const Matrix& F);

/// Linear map L from the k x l coordinate space into the (n+p) x (n+m)
/// block-matrix space of a system.
class PerturbationStructure {
public:
    using Entry = std::pair<Index, Index>;

    static PerturbationStructure full(Index n, Index m, Index p);
    static PerturbationStructure gramian_c(const StateSpaceSystem& sys);
    /// Mask entries index the block matrix X. Duplicates are removed and
    /// the list is sorted row-major.
    static PerturbationStructure sparsity(Index n, Index m, Index p, std::vector<Entry> mask);

    StructureKind kind() const { return kind_; }
    Index k() const { return k_; }
    Index l() const { return l_; }
    Index n() const { return n_; }
    Index m() const { return m_; }
    Index p() const { return p_; }
    Index block_rows() const { return n_ + p_; }
    Index block_cols() const { return n_ + m_; }

    const Matrix& Q() const { return Q_; }
    const std::vector<Entry>& mask() const { return mask_; }

    /// Whether the range of L reaches the A block, resp. the D block.
    bool touches_A() const;
    bool touches_D() const;

private:
    PerturbationStructure() = default;

    StructureKind kind_ = StructureKind::Full;
    Index n_ = 0, m_ = 0, p_ = 0, k_ = 0, l_ = 0;
    Matrix Q_;
    std::vector<Entry> mask_;
};

Matrix apply_L(const PerturbationStructure& s, const Matrix& dZ);
Matrix apply_L_adjoint(const PerturbationStructure& s, const Matrix& V);

/// Least-squares preimage: argmin_Z ||L[Z] - dX||_F.
Matrix preimage(const PerturbationStructure& s, const Matrix& dX);

}  // namespace passivion
