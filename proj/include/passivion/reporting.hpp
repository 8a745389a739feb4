#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "passivion/errors.hpp"
#include "passivion/low_rank_flow.hpp"
#include "passivion/outer_iteration.hpp"

namespace passivion {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

/// Reads PASSIVION_LOG (quiet|info|debug or 0|1|2); defaults to Info.
LogLevel log_level_from_env();
void log(LogLevel level, const std::string& message);

struct RunConfig {
    Problem problem = Problem::Enforce;
    std::string system_path;
    std::string structure = "full";
    double delta = 1e-2;
    std::optional<std::string> init_path;
    OuterMode outer_mode = OuterMode::NewtonBisection;
    std::optional<int> low_rank;
    int multistart = 1;
    std::uint64_t seed = 0;
    ConstraintThresholds thresholds;
    ConstraintMode constraint_mode = ConstraintMode::None;
    FlowConfig flow;
    std::optional<double> tol;
    int k_max = 50;
    std::string out_dir = "runs";

    void validate() const;
    /// Stable textual form used for the run digest.
    std::string canonical() const;
};

struct StartRecord {
    int index = 0;
    double eps_hat_delta = 0.0;
    double f_final = 0.0;
    bool converged = false;
    std::string error;
};

struct RunReport {
    std::string digest;
    std::filesystem::path directory;
    Problem problem = Problem::Enforce;
    double delta = 0.0;
    double eps_hat_delta = 0.0;
    double eps_hat_lo = 0.0;
    double eps_hat_hi = 0.0;
    double dz_norm = 0.0;
    double lz_norm = 0.0;
    double f_final = 0.0;
    double f_recomputed = 0.0;
    Complex lambda;
    std::vector<Complex> eigenvalues_near_axis;
    Matrix X_hat;
    std::string perturbed_json;
    bool realness_available = false;
    bool realness_passive = false;
    double realness_worst = 0.0;
    bool converged = false;
    std::vector<StartRecord> starts;
    std::vector<std::string> trace_files;
    double wall_seconds = 0.0;
    PassivationResult result;
};

/// Loads inputs, runs all starts, writes the run directory and returns the
/// report of the best start.
RunReport run(const RunConfig& config);

std::string trace_to_csv(const OuterTrace& trace);
OuterTrace parse_trace(const std::string& csv);
void emit_trace(const OuterTrace& trace, const std::filesystem::path& path);

std::string report_to_json(const RunReport& report);

/// 16 hex digits of a 64-bit FNV-1a hash.
std::string content_digest(const std::string& text);

/// 0 on convergence, 2 on flagged non-convergence.
int exit_code_for(const RunReport& report);
int exit_code_for(ErrorCode code);

}  // namespace passivion
