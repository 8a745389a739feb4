#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "passivion/gradient_core.hpp"

namespace passivion {

enum class FlowDirection { Ascent, Descent };
enum class ConstraintMode { None, Penalized, Multiplier };
enum class FlowStatus { Stationary, MaxSteps, Stalled, EarlyStop, Coalesced };

std::string_view to_string(FlowStatus status);

struct FlowConfig {
    double gamma = 2.0;
    double rho0 = 0.1;
    int max_steps = 2000;
    double stall_tol = 1e-7;
    ConstraintMode constraint_mode = ConstraintMode::None;
    FlowDirection direction = FlowDirection::Descent;
    ConstraintThresholds thresholds;
    // Descent stops once phi drops below this value.
    std::optional<double> early_stop_below;
    int spectrum_check_every = 10;
    bool record_trace = true;
    // Called with (E, bundle) after every accepted step.
    std::function<void(const Matrix&, const GradientBundle&)> on_accept;

    void validate() const;
};

struct InnerTraceRow {
    int step = 0;
    double h = 0.0;
    bool accepted = false;
    double phi = 0.0;
    double gnorm = 0.0;
    double mu = 0.0;
    double margin_A = 0.0;
    double margin_D = 0.0;
};

struct FlowResult {
    Matrix E;
    GradientBundle bundle;
    int steps_taken = 0;
    int accepted = 0;
    int rejected = 0;
    double stationarity = 0.0;
    double rho = 0.0;
    FlowStatus status = FlowStatus::MaxSteps;
    int evaluations = 0;
    int warm_evaluations = 0;  // evaluations served by the warm-started eigensolver
    std::vector<InnerTraceRow> trace;
};

struct ConstrainedDirection {
    Matrix Edot;
    double mu = 0.0;
    double mu_A = 0.0;
    double mu_D = 0.0;
    bool degenerate = false;
};

/// +1 for ascent, -1 for descent.
double direction_sign(FlowDirection d);

/// Quantity whose increase defines an accepted step.
double flow_objective(const GradientBundle& b, const FlowConfig& cfg);

ConstrainedDirection constrained_rhs(const GradientBundle& b, const Matrix& E, const FlowConfig& cfg);

struct StepOutcome {
    bool accepted = false;
    Matrix E;
    GradientBundle bundle;
    bool evaluated = false;  // false if the trial point could not be evaluated
};

/// One projected Euler trial E + h * Edot followed by renormalization.
StepOutcome euler_step(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps, const Matrix& E,
                       const GradientBundle& bundle, double h, const FlowConfig& cfg, bool check_spectrum = false);

/// Evaluates the gradient bundle at (eps, E) with the thresholds the config
/// asks for.
GradientBundle evaluate_bundle(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                               const Matrix& E, const FlowConfig& cfg, const std::optional<EigenHint>& hint = {});

FlowResult integrate_to_stationary(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                                   const Matrix& E0, const FlowConfig& cfg);

/// Stationarity residual ||Edot||_F / ||G||_F.
double stationarity_residual(const GradientBundle& b, const Matrix& E, const FlowConfig& cfg);

std::string inner_trace_csv(const std::vector<InnerTraceRow>& rows);

}  // namespace passivion
