#include "passivion/reporting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "passivion/system_io.hpp"

namespace passivion {

using nlohmann::json;

LogLevel log_level_from_env() {
    const char* v = std::getenv("PASSIVION_LOG");
    if (!v) return LogLevel::Info;
    const std::string s(v);
    if (s == "quiet" || s == "0" || s == "off") return LogLevel::Quiet;
    if (s == "debug" || s == "2") return LogLevel::Debug;
    return LogLevel::Info;
}

void log(LogLevel level, const std::string& message) {
    static const LogLevel threshold = log_level_from_env();
    if (level == LogLevel::Quiet || static_cast<int>(level) > static_cast<int>(threshold)) return;
    std::cerr << (level == LogLevel::Debug ? "[debug] " : "[info] ") << message << "\n";
}

void RunConfig::validate() const {
    if (system_path.empty()) throw Error(ErrorCode::InvalidConfig, "--system is required");
    if (!(delta > 0.0)) throw Error(ErrorCode::InvalidConfig, "--delta must be positive");
    if (multistart < 1) throw Error(ErrorCode::InvalidConfig, "--multistart must be at least 1");
    if (low_rank && *low_rank < 1) throw Error(ErrorCode::InvalidConfig, "--low-rank must be at least 1");
    if (!(thresholds.theta_A > 0.0)) throw Error(ErrorCode::InvalidConfig, "--theta-a must be positive");
    if (!(thresholds.theta_D > 0.0)) throw Error(ErrorCode::InvalidConfig, "--theta-d must be positive");
    if (thresholds.c_A < 0.0 || thresholds.c_D < 0.0) throw Error(ErrorCode::InvalidConfig, "penalty weights must be >= 0");
    if (init_path && problem == Problem::Radius) throw Error(ErrorCode::InvalidConfig, "--init only applies to enforce");
    flow.validate();
    OuterConfig oc;
    oc.delta = delta;
    oc.tol = tol;
    oc.k_max = k_max;
    oc.validate();
}

std::string RunConfig::canonical() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << "problem=" << (problem == Problem::Enforce ? "enforce" : "radius") << ";structure=" << structure
       << ";delta=" << delta << ";init=" << (init_path ? *init_path : "") << ";outer="
       << (outer_mode == OuterMode::SqrtModel ? "sqrt" : "newton") << ";low_rank=" << (low_rank ? *low_rank : 0)
       << ";multistart=" << multistart << ";seed=" << seed << ";theta_a=" << thresholds.theta_A
       << ";theta_d=" << thresholds.theta_D << ";c_a=" << thresholds.c_A << ";c_d=" << thresholds.c_D
       << ";constraint=" << static_cast<int>(constraint_mode) << ";gamma=" << flow.gamma << ";rho0=" << flow.rho0
       << ";max_steps=" << flow.max_steps << ";stall_tol=" << flow.stall_tol << ";tol=" << (tol ? *tol : -1.0)
       << ";k_max=" << k_max;
    return ss.str();
}

std::string content_digest(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::string fmt6(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

double parse_number(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "not a number: \"" + s + "\"");
    }
    if (pos != s.size()) throw Error(ErrorCode::ParseError, "not a number: \"" + s + "\"");
    return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

std::string trace_to_csv(const OuterTrace& trace) {
    if (trace.rows.empty()) throw Error(ErrorCode::EmptyTrace, "outer trace is empty");
    const bool with_rank =
        std::any_of(trace.rows.begin(), trace.rows.end(), [](const OuterRow& r) { return r.rank >= 0; });
    std::ostringstream out;
    out << "iteration,kind,f,eps,eps_lb,eps_ub,fprime" << (with_rank ? ",rank" : "") << "\n";
    for (const auto& r : trace.rows) {
        out << r.k << "," << to_string(r.kind) << "," << fmt6(r.f) << "," << fmt6(r.eps) << "," << fmt6(r.eps_lb)
            << "," << fmt6(r.eps_ub) << "," << fmt6(r.fprime);
        if (with_rank) out << "," << r.rank;
        out << "\n";
    }
    return out.str();
}

OuterTrace parse_trace(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::EmptyTrace, "trace has no header");
    const auto header = split(line, ',');
    const bool with_rank = header.size() == 8 && header[7] == "rank";
    if (header.size() < 7 || header[0] != "iteration" || header[6] != "fprime")
        throw Error(ErrorCode::ParseError, "unexpected trace header: " + line);
    OuterTrace t;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != header.size())
            throw Error(ErrorCode::ParseError, "trace line " + std::to_string(lineno) + " has wrong field count");
        OuterRow r;
        r.k = static_cast<int>(parse_number(f[0]));
        r.kind = step_kind_from_string(f[1]);
        r.f = parse_number(f[2]);
        r.eps = parse_number(f[3]);
        r.eps_lb = parse_number(f[4]);
        r.eps_ub = parse_number(f[5]);
        r.fprime = parse_number(f[6]);
        if (with_rank) r.rank = static_cast<int>(parse_number(f[7]));
        t.rows.push_back(r);
    }
    if (t.rows.empty()) throw Error(ErrorCode::EmptyTrace, "trace has no rows");
    return t;
}

void emit_trace(const OuterTrace& trace, const std::filesystem::path& path) {
    const std::string text = trace_to_csv(trace);  // throws before any file exists
    atomic_write(path, text);
}

namespace {

json matrix_rows(const Matrix& M) {
    json rows = json::array();
    for (Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(row);
    }
    return rows;
}

std::string matrix_view(const Matrix& M) {
    std::ostringstream ss;
    char buf[32];
    for (Index i = 0; i < M.rows(); ++i) {
        ss << (i ? "; " : "");
        for (Index j = 0; j < M.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.4f", M(i, j));
            ss << (j ? " " : "") << buf;
        }
    }
    return ss.str();
}

json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

double finite_or(double v, double fallback) { return std::isfinite(v) ? v : fallback; }

}  // namespace

std::string report_to_json(const RunReport& r) {
    json doc;
    doc["digest"] = r.digest;
    doc["problem"] = r.problem == Problem::Enforce ? "enforce" : "radius";
    doc["delta"] = r.delta;
    doc["converged"] = r.converged;
    doc["eps_hat_delta"] = r.eps_hat_delta;
    doc["eps_hat_bracket"] = json::array({finite_or(r.eps_hat_lo, -1.0), finite_or(r.eps_hat_hi, -1.0)});
    doc["f_final"] = r.f_final;
    doc["f_recomputed"] = r.f_recomputed;
    doc["dz_norm"] = r.dz_norm;
    doc["lz_norm"] = r.lz_norm;
    doc["lambda"] = complex_json(r.lambda);
    json eigs = json::array();
    for (const auto& z : r.eigenvalues_near_axis) eigs.push_back(complex_json(z));
    doc["eigenvalues_near_axis"] = eigs;
    const Index n = r.result.perturbed ? r.result.perturbed->n() : 0;
    if (r.result.perturbed) {
        const auto& ps = *r.result.perturbed;
        doc["perturbed"] = {{"A", matrix_rows(ps.A())}, {"B", matrix_rows(ps.B())}, {"C", matrix_rows(ps.C())},
                            {"D", matrix_rows(ps.D())}};
        doc["perturbed_view"] = {{"A", matrix_view(ps.A())}, {"B", matrix_view(ps.B())},
                                 {"C", matrix_view(ps.C())}, {"D", matrix_view(ps.D())}};
    }
    (void)n;
    doc["realness"] = {{"available", r.realness_available},
                       {"passive", r.realness_passive},
                       {"worst", r.realness_worst}};
    json starts = json::array();
    for (const auto& s : r.starts)
        starts.push_back({{"index", s.index},
                          {"eps_hat_delta", s.eps_hat_delta},
                          {"f_final", s.f_final},
                          {"converged", s.converged},
                          {"error", s.error}});
    doc["starts"] = starts;
    doc["trace_files"] = r.trace_files;
    doc["wall_seconds"] = r.wall_seconds;
    return doc.dump(2) + "\n";
}

int exit_code_for(const RunReport& report) { return report.converged ? 0 : 2; }
int exit_code_for(ErrorCode code) { return static_cast<int>(code); }

namespace {

Matrix random_unit(std::mt19937_64& rng, Index k, Index l) {
    std::normal_distribution<double> nd;
    Matrix M(k, l);
    for (Index j = 0; j < l; ++j)
        for (Index i = 0; i < k; ++i) M(i, j) = nd(rng);
    return M / M.norm();
}

std::vector<Complex> near_axis(const StateSpaceSystem& ps, std::size_t count) {
    std::vector<Complex> eigs;
    try {
        eigs = finite_eigenvalues(build_extended_pencil(ps));
    } catch (const Error&) {
        return {};
    }
    std::sort(eigs.begin(), eigs.end(), [](Complex a, Complex b) {
        if (std::abs(a.real()) != std::abs(b.real())) return std::abs(a.real()) < std::abs(b.real());
        return a.imag() > b.imag();
    });
    if (eigs.size() > count) eigs.resize(count);
    return eigs;
}

}  // namespace

RunReport run(const RunConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    config.validate();
    const std::string system_text = read_file(config.system_path);
    const StateSpaceSystem sys = parse_system(system_text);
    const PerturbationStructure s = parse_structure(config.structure, sys);
    log(LogLevel::Info, "system n=" + std::to_string(sys.n()) + " m=" + std::to_string(sys.m()) +
                            " p=" + std::to_string(sys.p()) + ", structure " + std::string(to_string(s.kind())));

    OuterConfig oc;
    oc.delta = config.delta;
    oc.tol = config.tol;
    oc.k_max = config.k_max;
    oc.mode = config.outer_mode;
    oc.problem = config.problem;

    FlowConfig fc = config.flow;
    fc.thresholds = config.thresholds;
    fc.constraint_mode = config.constraint_mode;
    if (fc.constraint_mode == ConstraintMode::None && (config.thresholds.c_A > 0.0 || config.thresholds.c_D > 0.0))
        fc.constraint_mode = ConstraintMode::Penalized;
    fc = flow_for_problem(fc, oc);

    const ScalarEvaluator eval = config.low_rank ? low_rank_evaluator(sys, s, fc, *config.low_rank)
                                                 : flow_evaluator(sys, s, fc);

    std::string init_text;
    InitialGuess guess;
    if (config.problem == Problem::Enforce) {
        if (config.init_path) {
            init_text = read_file(*config.init_path);
            guess = initial_from_system(sys, s, parse_initial_system(init_text, sys));
        } else {
            guess = fallback_initializer(sys, s, config.delta);
        }
        log(LogLevel::Info, "initial eps0 = " + std::to_string(guess.eps0) + ", f0 = " + std::to_string(guess.f0));
    }

    RunReport report;
    report.problem = config.problem;
    report.delta = config.delta;
    report.digest = content_digest(config.canonical() + "\n" + system_text + "\n" + init_text);
    report.directory = std::filesystem::path(config.out_dir) / report.digest;

    std::vector<PassivationResult> results;
    std::vector<std::optional<std::size_t>> result_of_start;
    std::optional<Error> first_error;
    for (int i = 0; i < config.multistart; ++i) {
        std::mt19937_64 rng(config.seed + std::uint64_t(i));
        StartRecord rec;
        rec.index = i;
        try {
            PassivationResult res;
            if (config.problem == Problem::Enforce) {
                Matrix E0 = guess.E0;
                if (i > 0) {
                    E0 = E0 + 0.5 * random_unit(rng, s.k(), s.l());
                    E0 /= E0.norm();
                }
                res = solve_enforce(sys, s, guess.eps0, E0, oc, fc, eval);
            } else {
                const Matrix Es = i > 0 ? random_unit(rng, s.k(), s.l()) : Matrix();
                res = solve_radius(sys, s, oc, fc, eval, std::nullopt, Es);
            }
            rec.eps_hat_delta = res.eps_hat_delta;
            rec.f_final = res.f_final;
            rec.converged = res.converged;
            result_of_start.push_back(results.size());
            results.push_back(std::move(res));
            log(LogLevel::Info, "start " + std::to_string(i) + ": eps_hat_delta = " + std::to_string(rec.eps_hat_delta) +
                                    (rec.converged ? "" : " (not converged)"));
        } catch (const Error& e) {
            rec.error = e.what();
            result_of_start.push_back(std::nullopt);
            if (!first_error) first_error = e;
            log(LogLevel::Info, "start " + std::to_string(i) + " failed: " + e.what());
        }
        report.starts.push_back(rec);
    }
    if (results.empty()) throw *first_error;

    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
        const auto& a = results[i];
        const auto& b = results[best];
        if ((a.converged && !b.converged) || (a.converged == b.converged && a.eps_hat_delta < b.eps_hat_delta))
            best = i;
    }
    PassivationResult& res = results[best];
    if (config.low_rank) {
        const int r = static_cast<int>(std::min<Index>(*config.low_rank, std::min(s.k(), s.l())));
        for (auto& row : res.trace.rows) row.rank = r;
    }

    report.eps_hat_delta = res.eps_hat_delta;
    report.eps_hat_lo = res.coalescence_lo;
    report.eps_hat_hi = res.coalescence_hi;
    report.dz_norm = res.dz_norm;
    report.lz_norm = res.lz_norm;
    report.f_final = res.f_final;
    report.lambda = res.lambda;
    report.converged = res.converged;
    report.X_hat = res.X_hat;
    {
        const GradientBundle b = evaluate_bundle(sys, s, res.eps_hat_delta, res.E_final, fc);
        report.f_recomputed = b.triple.imaginary ? 0.0 : b.phi;
    }
    const StateSpaceSystem& ps = *res.perturbed;
    report.eigenvalues_near_axis = near_axis(ps, 4);
    report.perturbed_json = system_to_json(ps);
    try {
        const RealnessReport rr = check_realness_grid(ps, default_frequency_grid());
        report.realness_available = true;
        report.realness_passive = rr.passive;
        report.realness_worst = rr.worst;
    } catch (const Error& e) {
        log(LogLevel::Info, std::string("realness grid unavailable: ") + e.what());
    }

    std::filesystem::create_directories(report.directory);
    emit_trace(res.trace, report.directory / "trace.csv");
    report.trace_files.push_back("trace.csv");
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results.size() == 1) break;
        const std::string name = "trace_start_" + std::to_string(i) + ".csv";
        emit_trace(results[i].trace, report.directory / name);
        report.trace_files.push_back(name);
    }
    for (std::size_t k = 0; k < res.inner_traces.size(); ++k) {
        if (res.inner_traces[k].empty()) continue;
        char name[32];
        std::snprintf(name, sizeof name, "inner_%03zu.csv", k);
        atomic_write(report.directory / name, inner_trace_csv(res.inner_traces[k]));
        report.trace_files.push_back(name);
    }
    atomic_write(report.directory / "system_hat.json", report.perturbed_json);
    report.result = std::move(res);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    atomic_write(report.directory / "report.json", report_to_json(report));
    return report;
}

}  // namespace passivion
