#include <doctest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "passivion/errors.hpp"
#include "passivion/reporting.hpp"
#include "passivion/system_io.hpp"

using namespace passivion;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("passivion_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

OuterTrace sample_trace() {
    OuterTrace t;
    t.rows.push_back({0, StepKind::Init, 0.517251, 0.0, 0.0, std::numeric_limits<double>::infinity(), -2.275066});
    t.rows.push_back({1, StepKind::Newton, 0.0, 0.254734, 0.01, 0.254734, 0.0});
    t.rows.push_back({2, StepKind::Bisection, 0.199354, 0.132367, 0.132367, 0.254734, -2.5});
    return t;
}

}  // namespace

TEST_CASE("trace CSV round-trips") {
    const OuterTrace t = sample_trace();
    const std::string csv = trace_to_csv(t);
    CHECK(csv.rfind("iteration,kind,f,eps,eps_lb,eps_ub,fprime\n0,init,0.517251,0.000000,0.000000,inf,", 0) == 0);
    const OuterTrace back = parse_trace(csv);
    REQUIRE(back.rows.size() == t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        CHECK(back.rows[i].k == t.rows[i].k);
        CHECK(back.rows[i].kind == t.rows[i].kind);
        CHECK(back.rows[i].f == t.rows[i].f);
        CHECK(back.rows[i].eps == t.rows[i].eps);
        CHECK(back.rows[i].eps_lb == t.rows[i].eps_lb);
        CHECK(back.rows[i].eps_ub == t.rows[i].eps_ub);
        CHECK(back.rows[i].fprime == t.rows[i].fprime);
        CHECK(back.rows[i].rank == -1);
    }
    CHECK(trace_to_csv(back) == csv);
}

TEST_CASE("rank column appears for low-rank traces") {
    OuterTrace t = sample_trace();
    for (auto& r : t.rows) r.rank = 8;
    const std::string csv = trace_to_csv(t);
    CHECK(csv.rfind("iteration,kind,f,eps,eps_lb,eps_ub,fprime,rank\n", 0) == 0);
    CHECK(parse_trace(csv).rows[2].rank == 8);
}

TEST_CASE("empty trace is an error and writes nothing") {
    const auto dir = scratch("empty");
    const auto path = dir / "trace.csv";
    try {
        emit_trace(OuterTrace{}, path);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyTrace);
    }
    CHECK_FALSE(std::filesystem::exists(path));
}

TEST_CASE("malformed traces are rejected") {
    CHECK_THROWS_AS(parse_trace("iteration,kind,f,eps,eps_lb,eps_ub,fprime\n0,init,abc,0,0,inf,0\n"), Error);
    CHECK_THROWS_AS(parse_trace("iteration,kind,f,eps,eps_lb,eps_ub,fprime\n0,warp,0,0,0,inf,0\n"), Error);
    CHECK_THROWS_AS(parse_trace("a,b\n"), Error);
}

TEST_CASE("digest is a stable 16-digit hex string") {
    CHECK(content_digest("") == "cbf29ce484222325");
    CHECK(content_digest("a") == "af63dc4c8601ec8c");
    CHECK(content_digest("abc") != content_digest("abd"));
}

TEST_CASE("exit codes") {
    RunReport r;
    r.converged = true;
    CHECK(exit_code_for(r) == 0);
    r.converged = false;
    CHECK(exit_code_for(r) == 2);
    CHECK(exit_code_for(ErrorCode::UnstableA) == static_cast<int>(ErrorCode::UnstableA));
    CHECK(exit_code_for(ErrorCode::InvalidSystem) >= 10);
}

TEST_CASE("radius run on example 2 is deterministic and self-consistent") {
    const auto dir = scratch("radius");
    RunConfig cfg;
    cfg.problem = Problem::Radius;
    cfg.system_path = std::string(PASSIVION_DATA_DIR) + "/example2.json";
    cfg.out_dir = dir.string();
    const RunReport a = run(cfg);
    const std::string first = read_file(a.directory / "trace.csv");
    std::filesystem::remove_all(a.directory);
    const RunReport b = run(cfg);
    CHECK(a.digest == b.digest);
    CHECK(read_file(b.directory / "trace.csv") == first);
    CHECK(first.find("\n0,init,0.517251,0.000000,") != std::string::npos);
    CHECK(b.converged);
    CHECK(std::filesystem::exists(b.directory / "report.json"));
    CHECK(std::filesystem::exists(b.directory / "inner_001.csv"));

    const auto hat = read_system(b.directory / "system_hat.json", false);
    const auto t = target_eigentriple(build_hamiltonian(hat));
    CHECK(std::abs(t.lambda - b.lambda) <= 1e-8);
    CHECK(b.f_recomputed == doctest::Approx(b.f_final).epsilon(1e-6));
}

TEST_CASE("run configuration is validated") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.system_path = "x.json";
    cfg.delta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.delta = 0.01;
    cfg.problem = Problem::Radius;
    cfg.init_path = "y.json";
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("missing system file maps to an IO error") {
    RunConfig cfg;
    cfg.system_path = "/nonexistent/system.json";
    try {
        run(cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
}
