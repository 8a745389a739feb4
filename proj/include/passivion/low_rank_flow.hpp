#pragma once

#include "passivion/outer_iteration.hpp"

namespace passivion {

/// E = U S V^T with orthonormal U (k x r), V (l x r) and ||S||_F = 1.
struct RankRFactor {
    Matrix U;
    Matrix S;
    Matrix V;

    Index rank() const { return S.rows(); }
    Matrix E() const { return U * S * V.transpose(); }
};

/// Best rank-r factor of E (truncated SVD), renormalized to unit norm.
RankRFactor truncate_to_rank(const Matrix& E, Index r);

/// P_E[G] = G V V^T - U U^T G V V^T + U U^T G.
Matrix tangent_project(const RankRFactor& f, const Matrix& G);

struct SplittingStats {
    int rank_deficient_qr = 0;
};

/// One norm-preserving K/S/L projector-splitting step. G0 is the free
/// gradient at f.E(); its sign is flipped for ascent.
RankRFactor splitting_step(const RankRFactor& f, const Matrix& G0, double h, FlowDirection direction,
                           SplittingStats* stats = nullptr);

/// Rank used when none is requested: 8 for the Gramian-weighted structure,
/// otherwise numerical rank of G plus 2 (at most 16), never above min(k, l).
Index default_rank(const PerturbationStructure& s, const Matrix& G);

struct LowRankResult {
    FlowResult flow;
    RankRFactor factor;
    double projected_stationarity = 0.0;
    int rank_deficient_qr = 0;
};

LowRankResult integrate_low_rank_to_stationary(const StateSpaceSystem& sys, const PerturbationStructure& s,
                                               double eps, const RankRFactor& factor0, const FlowConfig& cfg);

/// f and f' with the rank-r flow in place of the full-rank one. rank <= 0
/// selects default_rank at each evaluation.
ScalarEvaluator low_rank_evaluator(const StateSpaceSystem& sys, const PerturbationStructure& s,
                                   const FlowConfig& flow, Index rank);

}  // namespace passivion
