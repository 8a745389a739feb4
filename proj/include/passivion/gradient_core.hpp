#pragma once

#include <optional>

#include "passivion/eigen_engine.hpp"
#include "passivion/structure_maps.hpp"
#include "passivion/system_model.hpp"

namespace passivion {

/// Stability and feedthrough thresholds and penalty weights. For
/// PositiveReal systems the feedthrough margin is lambda_min(sym(D)); for
/// BoundedReal systems it is lambda_min(I - D^T D).
struct ConstraintThresholds {
    double theta_A = 1e-3;
    double theta_D = 1e-3;
    double c_A = 0.0;
    double c_D = 0.0;
};

struct Margins {
    double stability = 0.0;    // Re lambda_max of the perturbed A
    double feedthrough = 0.0;  // feedthrough margin of the perturbed system
};

struct PenaltyTerms {
    Matrix gA;  // gradient of phi_A / eps in structure coordinates
    Matrix gD;  // gradient of phi_D / eps
    double phiA = 0.0;
    double phiD = 0.0;
    double kappaA = 1.0;
};

struct GradientBundle {
    Matrix G;
    EigenTriple triple;
    double phi = 0.0;
    Matrix gA;
    Matrix gD;
    double phiA = 0.0;
    double phiD = 0.0;
    Margins margins;
    bool gap_warning = false;
};

/// M_p'(X)^*[W] as an (n+m) x (n+m) block matrix.
Matrix adjoint_Mp_prime(const StateSpaceSystem& sys, const Matrix& W);

/// M_b'(X)^*[W] as an (n+p) x (n+m) block matrix.
Matrix adjoint_Mb_prime(const StateSpaceSystem& sys, const Matrix& W);

/// Dispatches on the system mode.
Matrix adjoint_M_prime(const StateSpaceSystem& sys, const Matrix& W);

/// M'(X)^*[Re(x y^*)] for a triple of M(X).
Matrix eigen_sensitivity(const StateSpaceSystem& sys, const EigenTriple& t);

Margins margins_of(const StateSpaceSystem& sys);

struct GradientOptions {
    std::optional<EigenHint> hint;
    std::optional<ConstraintThresholds> thresholds;
    bool check_gap = false;
};

GradientBundle free_gradient(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                             const Matrix& E, const GradientOptions& opts = {});

PenaltyTerms penalty_gradients(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                               const Matrix& E, const ConstraintThresholds& th);

}  // namespace passivion
