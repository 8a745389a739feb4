#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "passivion/inner_flow.hpp"

namespace passivion {

enum class Problem { Enforce, Radius };
enum class OuterMode { NewtonBisection, SqrtModel };
enum class StepKind { Init, Newton, Bisection, SqrtModel, Reject };

std::string_view to_string(StepKind kind);
StepKind step_kind_from_string(std::string_view s);

struct OuterConfig {
    double delta = 1e-2;
    std::optional<double> tol;  // default 1e-6 * (1 + delta)
    int k_max = 50;
    OuterMode mode = OuterMode::NewtonBisection;
    double theta = 0.8;
    Problem problem = Problem::Enforce;

    double tolerance() const { return tol ? *tol : 1e-6 * (1.0 + delta); }
    void validate() const;
};

struct OuterRow {
    int k = 0;
    StepKind kind = StepKind::Init;
    double f = 0.0;
    double eps = 0.0;
    double eps_lb = 0.0;
    double eps_ub = std::numeric_limits<double>::infinity();
    double fprime = 0.0;
    int rank = -1;  // set by the low-rank flow
};

struct OuterTrace {
    std::vector<OuterRow> rows;
};

/// One evaluation of f and its signed derivative at eps.
struct ScalarSample {
    double f = 0.0;
    double fprime = 0.0;
    Matrix E;
    std::optional<FlowResult> flow;
};

using ScalarEvaluator = std::function<ScalarSample(double eps, const Matrix& E_warm)>;

struct OuterRun {
    OuterTrace trace;
    std::vector<ScalarSample> samples;  // aligned with trace rows
    std::size_t best = 0;               // index of the reported iterate
    bool converged = false;
    double coalescence_lo = std::numeric_limits<double>::quiet_NaN();
    double coalescence_hi = std::numeric_limits<double>::quiet_NaN();
};

/// Root finding on a generic evaluator. Problem decides the monotonicity
/// (Enforce: f increasing, Radius: f decreasing).
OuterRun newton_bisection_core(const ScalarEvaluator& eval, double eps0, const Matrix& E0, const OuterConfig& cfg,
                               std::optional<ScalarSample> first = std::nullopt);
OuterRun sqrt_model_core(const ScalarEvaluator& eval, double eps0, const Matrix& E0, const OuterConfig& cfg,
                         std::optional<ScalarSample> first = std::nullopt);

/// f = phi at the stationary point of the inner flow started from E_warm,
/// f' = +/- kappa ||G||_F. eps = 0 evaluates the unperturbed system.
ScalarSample f_and_fprime(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps,
                          const Matrix& E_warm, const FlowConfig& flow);

struct PassivationResult {
    double eps_hat_delta = 0.0;
    Matrix E_final;
    Matrix X_hat;
    std::optional<StateSpaceSystem> perturbed;
    Complex lambda;
    double f_final = 0.0;
    OuterTrace trace;
    std::vector<std::vector<InnerTraceRow>> inner_traces;
    double dz_norm = 0.0;
    double lz_norm = 0.0;
    bool converged = false;
    double coalescence_lo = std::numeric_limits<double>::quiet_NaN();
    double coalescence_hi = std::numeric_limits<double>::quiet_NaN();
    int evaluations = 0;
    int warm_evaluations = 0;
};

FlowConfig flow_for_problem(FlowConfig flow, const OuterConfig& outer);

/// Evaluator backed by the full-rank inner flow.
ScalarEvaluator flow_evaluator(const StateSpaceSystem& sys, const PerturbationStructure& s, const FlowConfig& flow);

/// Enforce/radius drivers over an arbitrary evaluator; the flow config must
/// already carry the problem's direction.
PassivationResult solve_enforce(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps0,
                                const Matrix& E0, const OuterConfig& outer, const FlowConfig& flow,
                                const ScalarEvaluator& eval);
PassivationResult solve_radius(const StateSpaceSystem& sys, const PerturbationStructure& s, const OuterConfig& outer,
                               const FlowConfig& flow, const ScalarEvaluator& eval,
                               std::optional<double> eps0 = std::nullopt, const Matrix& E_start = Matrix());

PassivationResult newton_bisection(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps0,
                                   const Matrix& E0, const OuterConfig& outer, const FlowConfig& flow);

PassivationResult sqrt_model_iteration(const StateSpaceSystem& sys, const PerturbationStructure& s, double eps0,
                                       const Matrix& E0, const OuterConfig& outer, const FlowConfig& flow);

/// Radius pipeline: row 0 at eps = 0, then eps0 = delta started from the
/// normalized descent direction.
PassivationResult passivity_radius(const StateSpaceSystem& sys, const PerturbationStructure& s,
                                   const OuterConfig& outer, const FlowConfig& flow,
                                   std::optional<double> eps0 = std::nullopt);

struct SqrtFit {
    double gamma = 0.0;
    double eps_hat = 0.0;
    double residual = 0.0;  // RMS misfit of f^2 relative to RMS of f^2
    Problem problem = Problem::Enforce;  // sign of the fitted slope
    bool flagged = false;                // residual above 5e-2
};

SqrtFit sqrt_fit_diagnostic(const std::vector<std::pair<double, double>>& samples);

struct InitialGuess {
    double eps0 = 0.0;
    Matrix E0;
    double scale = 0.0;  // homotopy parameter in (0, 1]
    double f0 = 0.0;
};

/// Shrink-C homotopy along the structure's range.
InitialGuess fallback_initializer(const StateSpaceSystem& sys, const PerturbationStructure& s, double delta);

/// (eps0, E0) from an explicitly given perturbed system.
InitialGuess initial_from_system(const StateSpaceSystem& sys, const PerturbationStructure& s,
                                 const StateSpaceSystem& perturbed);

}  // namespace passivion
