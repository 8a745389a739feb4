#include <iostream>

#include <CLI11.hpp>

#include "passivion/reporting.hpp"

using namespace passivion;

namespace {

void add_common(CLI::App* cmd, RunConfig& cfg, std::string& outer) {
    cmd->add_option("--system", cfg.system_path, "system JSON file")->required();
    cmd->add_option("--structure", cfg.structure, "full | gramian_c | JSON object or file")->capture_default_str();
    cmd->add_option("--delta", cfg.delta, "target distance from the imaginary axis")->capture_default_str();
    cmd->add_option("--outer", outer, "outer iteration: newton | sqrt")
        ->check(CLI::IsMember({"newton", "sqrt"}))
        ->capture_default_str();
    cmd->add_option("--low-rank", cfg.low_rank, "rank of the perturbation flow");
    cmd->add_option("--multistart", cfg.multistart, "number of starts")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "seed for multistart perturbations")->capture_default_str();
    cmd->add_option("--theta-a", cfg.thresholds.theta_A, "stability margin threshold")->capture_default_str();
    cmd->add_option("--theta-d", cfg.thresholds.theta_D, "feedthrough margin threshold")->capture_default_str();
    cmd->add_option("--c-a", cfg.thresholds.c_A, "stability penalty weight")->capture_default_str();
    cmd->add_option("--c-d", cfg.thresholds.c_D, "feedthrough penalty weight")->capture_default_str();
    cmd->add_option("--tol", cfg.tol, "outer tolerance on |f - delta|");
    cmd->add_option("--k-max", cfg.k_max, "outer iteration limit")->capture_default_str();
    cmd->add_option("--max-steps", cfg.flow.max_steps, "inner step limit")->capture_default_str();
    cmd->add_option("--out", cfg.out_dir, "output root directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structured passivity enforcement and passivity radius"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string outer = "newton";
    std::string constraints = "none";

    auto* enforce = app.add_subcommand("enforce", "smallest structured perturbation making the system passive");
    add_common(enforce, cfg, outer);
    enforce->add_option("--init", cfg.init_path, "initial perturbed system JSON");
    enforce->add_option("--constraints", constraints, "none | penalized | multiplier")
        ->check(CLI::IsMember({"none", "penalized", "multiplier"}))
        ->capture_default_str();

    auto* radius = app.add_subcommand("radius", "smallest structured perturbation destroying passivity");
    add_common(radius, cfg, outer);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code_for(ErrorCode::InvalidConfig);
    }

    cfg.problem = radius->parsed() ? Problem::Radius : Problem::Enforce;
    cfg.outer_mode = outer == "sqrt" ? OuterMode::SqrtModel : OuterMode::NewtonBisection;
    if (constraints == "penalized") cfg.constraint_mode = ConstraintMode::Penalized;
    if (constraints == "multiplier") cfg.constraint_mode = ConstraintMode::Multiplier;

    try {
        const RunReport report = run(cfg);
        std::cout << report_to_json(report);
        std::cout << "eps_hat_delta = " << report.eps_hat_delta << "\n"
                  << "output: " << report.directory.string() << "\n";
        if (!report.converged) std::cerr << "warning: outer iteration did not converge\n";
        return exit_code_for(report);
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
