#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "passivion/eigen_engine.hpp"
#include "passivion/errors.hpp"
#include "passivion/gradient_core.hpp"
#include "passivion/inner_flow.hpp"
#include "passivion/low_rank_flow.hpp"
#include "passivion/outer_iteration.hpp"
#include "passivion/reporting.hpp"
#include "passivion/structure_maps.hpp"
#include "passivion/system_io.hpp"

using namespace passivion;
using oracles::LMatrix;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

std::string data(const std::string& name) { return std::string(PASSIVION_DATA_DIR) + "/" + name; }

std::filesystem::path scratch() {
    auto dir = std::filesystem::temp_directory_path() / "passivion_acceptance";
    std::filesystem::create_directories(dir);
    return dir;
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }

// ---------------------------------------------------------------------------

void hamiltonian_fixture(Outcome& o) {
    const auto H = build_hamiltonian(fixtures::example1());
    Matrix expected(4, 4);
    expected << -2, 7, 2, 2, -5, -2, 2, 2, -2, -2, 2, 5, -2, -2, -7, 2;
    expected /= 6.0;
    const double dev = (H.matrix - expected).cwiseAbs().maxCoeff();
    o.detail << "max entry deviation " << dev;
    o.require(dev <= 1e-15, "entries equal the rationals");
    std::vector<double> im;
    for (auto z : eigenvalues(H.matrix)) {
        o.require(std::abs(z.real()) <= 1e-3, "eigenvalues on the imaginary axis");
        if (z.imag() > 0) im.push_back(z.imag());
    }
    std::sort(im.begin(), im.end());
    o.require(im.size() == 2, "two conjugate pairs");
    if (im.size() == 2) {
        o.detail << "; eigenvalues +-" << im[1] << "i, +-" << im[0] << "i";
        o.require(within(im[1], 1.1902, 1e-3) && within(im[0], 0.8660, 1e-3), "eigenvalues");
    }
}

void gramian_fixture(Outcome& o) {
    const auto sys = fixtures::example1();
    const Matrix Q = controllability_gramian(sys.A(), sys.B()).Q;
    Matrix expected(2, 2);
    expected << 0.5916, 0.0845, 0.0, 0.3780;
    const double dev = (Q - expected).cwiseAbs().maxCoeff();
    o.detail << "Q = [" << Q.row(0) << "; " << Q.row(1) << "], max deviation " << dev;
    o.require(dev <= 5e-5, "Q to 4 decimals");
}

void enforce_c_only(Outcome& o) {
    RunConfig cfg;
    cfg.problem = Problem::Enforce;
    cfg.system_path = data("example1.json");
    cfg.init_path = data("example1_c0.json");
    cfg.structure = "gramian_c";
    cfg.delta = 1e-2;
    cfg.out_dir = scratch().string();
    const RunReport r = run(cfg);
    const auto sys = fixtures::example1();
    const Matrix Q = controllability_gramian(sys.A(), sys.B()).Q;
    const Matrix dC = r.result.perturbed->C() - sys.C();
    const double wdist = (dC * Q.transpose()).norm();
    const auto lam = target_eigentriple(build_hamiltonian(*r.result.perturbed)).lambda;
    o.detail << "eps_hat_delta " << r.eps_hat_delta << ", f " << r.f_final << ", ||(C_hat - C) Q^T|| " << wdist
             << ", lambda " << lam.real() << " +- " << std::abs(lam.imag()) << "i, C_hat = " << r.result.perturbed->C();
    o.require(within(r.eps_hat_delta, 0.101386, 5e-4), "eps_hat_delta = 0.101386 +- 5e-4");
    o.require(r.f_final >= 0.0090 && r.f_final <= 0.0110, "f in [0.009, 0.011]");
    o.require(within(wdist, 0.0794, 2e-3), "weighted distance 0.0794 +- 2e-3");
    o.require(within(lam.real(), 1e-2, 2e-4), "Re lambda = (1.00 +- 0.02)e-2");
    o.require(within(std::abs(lam.imag()), 1.0, 5e-3), "Im lambda = 1.000 +- 0.005");
}

void enforce_full(Outcome& o) {
    RunConfig cfg;
    cfg.problem = Problem::Enforce;
    cfg.system_path = data("example1.json");
    cfg.structure = "full";
    cfg.delta = 1e-2;
    cfg.out_dir = scratch().string();
    const RunReport r = run(cfg);
    const double dist = (r.X_hat - fixtures::example1().block_matrix()).norm();
    const auto lam = target_eigentriple(build_hamiltonian(*r.result.perturbed)).lambda;
    o.detail << "||X_hat - X|| " << dist << ", lambda " << lam.real() << " +- " << std::abs(lam.imag()) << "i";
    o.require(dist <= 0.120, "||X_hat - X|| <= 0.120");
    o.require(lam.real() >= 0.009 && lam.real() <= 0.011, "Re lambda in [0.009, 0.011]");
}

void radius_example2(Outcome& o) {
    RunConfig cfg;
    cfg.problem = Problem::Radius;
    cfg.system_path = data("example2.json");
    cfg.structure = "full";
    cfg.delta = 1e-2;
    cfg.out_dir = scratch().string();
    const RunReport r = run(cfg);
    bool newton = false, bisection = false;
    for (const auto& row : r.result.trace.rows) {
        newton |= row.kind == StepKind::Newton;
        bisection |= row.kind == StepKind::Bisection;
    }
    o.detail << "eps_hat_delta " << r.eps_hat_delta << ", " << r.result.trace.rows.size() << " outer rows";
    o.require(within(r.eps_hat_delta, 0.1633, 1e-3), "eps_hat_delta = 0.1633 +- 1e-3");
    o.require(newton && bisection, "trace has Newton and bisection steps");
}

// Adjoint of M'(X) against fourth-order central differences of the
// extended-precision Hamiltonian, entry by entry.
void adjoint_suite(Outcome& o) {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    int failures = 0;
    for (auto mode : {RealnessMode::PositiveReal, RealnessMode::BoundedReal}) {
        for (int trial = 0; trial < 100; ++trial) {
            const Index n = fixtures::pick(rng, 1, 8);
            const auto sys =
                fixtures::random_system(rng, n, fixtures::pick(rng, 1, 3), fixtures::pick(rng, 1, 3), mode);
            const Matrix W = fixtures::gaussian(rng, 2 * n, 2 * n);
            const Matrix V = adjoint_M_prime(sys, W);
            const LMatrix Wl = W.cast<long double>();
            Matrix Vfd(V.rows(), V.cols());
            const long double h = 1e-3L;
            for (Index i = 0; i < V.rows(); ++i) {
                for (Index j = 0; j < V.cols(); ++j) {
                    auto at = [&](long double t) {
                        LMatrix dX = LMatrix::Zero(V.rows(), V.cols());
                        dX(i, j) = t;
                        return (oracles::hamiltonian_ld(sys, dX).array() * Wl.array()).sum();
                    };
                    Vfd(i, j) = double((-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h));
                }
            }
            const double rel = (V - Vfd).norm() / Vfd.norm();
            worst = std::max(worst, rel);
            if (!(rel <= 1e-9)) ++failures;
        }
    }
    o.detail << "200 systems, worst relative error " << worst << ", failures " << failures;
    o.require(failures == 0, "relative error <= 1e-9");
}

// Central differences of phi along a tangential unit Delta at h = 1e-4 and
// 1e-5, eps = 1; the error ratio of a second-order difference is 100.
void gradient_suite(Outcome& o) {
    std::mt19937_64 rng(77);
    int failures = 0;
    double lo = 1e300, hi = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto mode = trial % 2 ? RealnessMode::PositiveReal : RealnessMode::BoundedReal;
        const Index n = fixtures::pick(rng, 2, 6);
        const auto sys = fixtures::random_system(rng, n, fixtures::pick(rng, 1, 2), fixtures::pick(rng, 1, 2), mode);
        const auto s = PerturbationStructure::full(sys.n(), sys.m(), sys.p());
        const Matrix E = fixtures::unit(rng, s.k(), s.l());
        Matrix Delta = fixtures::unit(rng, s.k(), s.l());
        Delta -= frobenius_inner(Delta, E) * E;
        Delta /= Delta.norm();
        const double eps = 1.0;
        GradientBundle b;
        try {
            b = free_gradient(sys, s, eps, E);
        } catch (const Error&) {
            --trial;
            continue;
        }
        if (b.triple.imaginary) {
            --trial;
            continue;
        }
        const double exact = eps * b.triple.kappa * frobenius_inner(b.G, Delta);
        const LMatrix LE = apply_L(s, E).cast<long double>();
        const LMatrix LD = apply_L(s, Delta).cast<long double>();
        auto phi = [&](long double t) {
            const LMatrix dX = (long double)eps * (LE + t * LD);
            return oracles::real_part_near(oracles::hamiltonian_ld(sys, dX), b.triple.lambda);
        };
        auto err = [&](long double h) { return std::abs(double((phi(h) - phi(-h)) / (2.0L * h)) - exact); };
        const double ratio = err(1e-4L) / err(1e-5L);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        if (!(ratio >= 50.0 && ratio <= 200.0)) ++failures;
    }
    o.detail << "20 instances, Richardson ratios in [" << lo << ", " << hi << "], failures " << failures;
    o.require(failures == 0, "ratio in [50, 200]");
}

void fprime_formula(Outcome& o) {
    const auto sys = fixtures::example2();
    const auto s = PerturbationStructure::full(3, 1, 1);
    FlowConfig flow;
    flow.direction = FlowDirection::Descent;
    flow.stall_tol = 1e-9;
    flow.max_steps = 20000;
    flow.record_trace = false;
    ScalarSample zero = f_and_fprime(sys, s, 0.0, Matrix(), flow);
    Matrix E = zero.E;
    double worst = 0.0;
    const double h = 1e-4;
    for (double eps : {0.02, 0.05, 0.08, 0.11, 0.14}) {
        const ScalarSample mid = f_and_fprime(sys, s, eps, E, flow);
        E = mid.E;
        const ScalarSample up = f_and_fprime(sys, s, eps + h, E, flow);
        const ScalarSample dn = f_and_fprime(sys, s, eps - h, E, flow);
        const double fd = (up.f - dn.f) / (2 * h);
        const double rel = std::abs(fd - mid.fprime) / std::abs(mid.fprime);
        worst = std::max(worst, rel);
        o.detail << "eps " << eps << ": fd " << fd << " vs " << mid.fprime << "; ";
    }
    o.detail << "worst relative error " << worst;
    o.require(worst <= 1e-3, "relative error <= 1e-3");
}

void sqrt_regime(Outcome& o) {
    // Samples near the coalescence point of example 2.
    const auto sys = fixtures::example2();
    const auto s = PerturbationStructure::full(3, 1, 1);
    OuterConfig oc;
    oc.problem = Problem::Radius;
    FlowConfig flow;
    flow.record_trace = false;
    const auto res = passivity_radius(sys, s, oc, flow);
    FlowConfig descent = flow;
    descent.direction = FlowDirection::Descent;
    descent.stall_tol = 1e-9;
    descent.max_steps = 20000;
    const ScalarSample at = f_and_fprime(sys, s, res.eps_hat_delta, res.E_final, descent);
    const double eps_hat = res.eps_hat_delta - at.f / (2.0 * at.fprime);
    std::vector<std::pair<double, double>> samples;
    Matrix E = at.E;
    for (double gap : {1.5e-3, 1e-3, 5e-4, 2e-4, 1e-4, 5e-5, 2e-5, 1e-5}) {
        const ScalarSample smp = f_and_fprime(sys, s, eps_hat - gap, E, descent);
        if (smp.f >= 1e-3 && smp.f <= 5e-2) {
            samples.emplace_back(eps_hat - gap, smp.f);
            E = smp.E;
        }
    }
    const SqrtFit fit = sqrt_fit_diagnostic(samples);
    o.detail << samples.size() << " samples, eps_hat " << fit.eps_hat << ", gamma " << fit.gamma
             << ", residual " << fit.residual;
    o.require(fit.residual <= 5e-2, "fit residual <= 5e-2");
    o.require(fit.problem == Problem::Radius, "decreasing square-root law");

    // Synthetic square-root data: f = gamma sqrt(s) (1 + c s).
    for (auto problem : {Problem::Enforce, Problem::Radius}) {
        const double eh = 0.2, gamma = 1.5, c = 2.0;
        ScalarEvaluator f = [=](double eps, const Matrix&) {
            const double sd = problem == Problem::Enforce ? eps - eh : eh - eps;
            ScalarSample out;
            out.E = Matrix::Ones(1, 1);
            if (sd <= 0.0) return out;
            const double r = std::sqrt(sd);
            out.f = gamma * r * (1.0 + c * sd);
            const double d = gamma * (0.5 / r + 1.5 * c * r);
            out.fprime = problem == Problem::Enforce ? d : -d;
            return out;
        };
        OuterConfig cfg;
        cfg.problem = problem;
        cfg.mode = OuterMode::SqrtModel;
        cfg.tol = 1e-14;
        double lo = problem == Problem::Enforce ? eh : 0.0, hi = problem == Problem::Enforce ? 1.0 : eh;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            const bool above = f(mid, Matrix()).f > cfg.delta;
            if (above == (problem == Problem::Enforce)) hi = mid; else lo = mid;
        }
        const double root = 0.5 * (lo + hi);
        const OuterRun run = sqrt_model_core(f, problem == Problem::Enforce ? 0.3 : 0.1, Matrix::Ones(1, 1), cfg);
        std::vector<double> err;
        for (const auto& row : run.trace.rows)
            if (row.kind != StepKind::Reject) err.push_back(std::abs(row.eps - root));
        int fast = 0;
        o.detail << "; " << (problem == Problem::Enforce ? "enforce" : "radius") << " errors";
        for (std::size_t i = 0; i < err.size(); ++i) {
            o.detail << " " << err[i];
            if (i > 0 && err[i - 1] > 1e-13 && err[i] <= 0.1 * err[i - 1]) ++fast;
        }
        o.require(fast >= 2, "two successive error ratios <= 0.1");
    }
}

double sigma_ratio(const Matrix& G, Index r) {
    Eigen::JacobiSVD<Matrix> svd(G);
    const auto& sv = svd.singularValues();
    if (sv.size() <= r) return 0.0;
    return sv(r) / sv(0);
}

void low_rank_equivalence(Outcome& o) {
    const auto sys = fixtures::example1();
    const auto s = PerturbationStructure::gramian_c(sys);
    const auto init = read_initial_system(data("example1_c0.json"), sys);
    const InitialGuess g = initial_from_system(sys, s, init);
    FlowConfig cfg;
    cfg.direction = FlowDirection::Ascent;
    cfg.stall_tol = 1e-10;
    cfg.record_trace = false;
    double worst_ratio = 0.0;
    cfg.on_accept = [&](const Matrix&, const GradientBundle& b) {
        worst_ratio = std::max(worst_ratio, sigma_ratio(b.G, 8));
    };
    const double eps = 0.101386;
    const FlowResult full = integrate_to_stationary(sys, s, eps, g.E0, cfg);
    const Index r = std::min<Index>(8, std::min(s.k(), s.l()));
    const LowRankResult low = integrate_low_rank_to_stationary(sys, s, eps, truncate_to_rank(g.E0, r), cfg);
    const double diff = std::abs(full.bundle.phi - low.flow.bundle.phi);
    o.detail << "example 1 at eps " << eps << ": phi full " << full.bundle.phi << ", rank-" << r << " "
             << low.flow.bundle.phi << ", difference " << diff;
    o.require(diff <= 1e-6, "phi agreement 1e-6");

    // n = 50 smoke run on a strictly contractive system: A = -I + skew, so
    // ||(iw - A)^{-1}|| <= 1, and ||B|| ||C|| + ||D|| < 1. p = 10 so that a
    // ninth singular value exists.
    std::mt19937_64 rng(50);
    const Matrix S = fixtures::gaussian(rng, 50, 50);
    const Matrix A = -Matrix::Identity(50, 50) + 0.2 * (S - S.transpose());
    Matrix B = fixtures::gaussian(rng, 50, 30), C = fixtures::gaussian(rng, 10, 50), D = fixtures::gaussian(rng, 10, 30);
    B /= Eigen::JacobiSVD<Matrix>(B).singularValues()(0) / 0.5;
    C /= Eigen::JacobiSVD<Matrix>(C).singularValues()(0) / 0.6;
    D /= Eigen::JacobiSVD<Matrix>(D).singularValues()(0) / 0.5;
    const auto big = StateSpaceSystem::create(A, B, C, D, RealnessMode::BoundedReal);
    const auto sb = PerturbationStructure::gramian_c(big);
    FlowConfig bcfg = cfg;
    bcfg.direction = FlowDirection::Descent;
    bcfg.max_steps = 200;
    bcfg.stall_tol = 1e-8;
    const Matrix E0 = fixtures::unit(rng, sb.k(), sb.l());
    double big_ratio = sigma_ratio(free_gradient(big, sb, 0.05, E0).G, 8);
    bool monotone = true, unit_norm = true;
    double last = std::numeric_limits<double>::infinity();
    bcfg.on_accept = [&](const Matrix& E, const GradientBundle& b) {
        big_ratio = std::max(big_ratio, sigma_ratio(b.G, 8));
        monotone &= b.phi <= last;
        last = b.phi;
        unit_norm &= std::abs(E.norm() - 1.0) <= 1e-12;
    };
    const LowRankResult lb = integrate_low_rank_to_stationary(big, sb, 0.05, truncate_to_rank(E0, 8), bcfg);
    worst_ratio = std::max(worst_ratio, big_ratio);
    o.detail << "; n = 50: " << lb.flow.accepted << " accepted steps, status " << to_string(lb.flow.status)
             << ", worst sigma9/sigma1 " << worst_ratio;
    o.require(worst_ratio <= 1e-10, "sigma9/sigma1 <= 1e-10");
    o.require(monotone, "monotone phi in the n = 50 run");
    o.require(unit_norm, "unit norm in the n = 50 run");
}

void invariant_suite(Outcome& o) {
    std::mt19937_64 rng(500);
    int failures = 0;
    std::map<std::string, int> by_kind;
    auto fail = [&](const std::string& kind) {
        ++failures;
        ++by_kind[kind];
    };
    for (int trial = 0; trial < 500; ++trial) {
        const auto mode = trial % 2 ? RealnessMode::PositiveReal : RealnessMode::BoundedReal;
        const Index n = fixtures::pick(rng, 2, 8);
        const auto sys = fixtures::random_system(rng, n, fixtures::pick(rng, 1, 2), fixtures::pick(rng, 1, 2), mode);
        const auto H = build_hamiltonian(sys);
        const double scale = 1.0 + spectral_norm(H.matrix);

        if (!(hamiltonian_asymmetry(H.matrix) <= 1e-12 * scale)) fail("symmetry");

        const auto ev = eigenvalues(H.matrix);
        for (auto z : ev) {
            double best = 1e300;
            for (auto w : ev) best = std::min(best, std::abs(w + std::conj(z)));
            if (!(best <= 1e-6 * scale)) {
                fail("mirror");
                break;
            }
        }

        const auto lr = hamiltonian_low_rank(sys);
        const Complex sigma(0.1 * double(fixtures::pick(rng, 1, 9)), 0.37);
        const CVector rhs = fixtures::gaussian(rng, 2 * n, 1).cast<Complex>();
        CMatrix S = H.matrix.cast<Complex>();
        S.diagonal().array() -= sigma;
        const CVector dense = S.fullPivLu().solve(rhs);
        try {
            const CVector smw = SmwSolver(sys.A(), lr, sigma).solve(rhs);
            if (!((smw - dense).norm() <= 1e-9 * dense.norm())) fail("smw");
        } catch (const Error&) {
            fail("smw");
        }

        const auto s = PerturbationStructure::full(sys.n(), sys.m(), sys.p());
        FlowConfig cfg;
        cfg.direction = trial % 4 < 2 ? FlowDirection::Ascent : FlowDirection::Descent;
        cfg.max_steps = 15;
        const Matrix E0 = fixtures::unit(rng, s.k(), s.l());
        try {
            const FlowResult r = integrate_to_stationary(sys, s, 0.05, E0, cfg);
            const double sg = direction_sign(cfg.direction);
            double last = -1e300;
            for (const auto& row : r.trace) {
                if (!row.accepted) continue;
                if (sg * row.phi < last) fail("monotone");
                last = sg * row.phi;
            }
            if (!(std::abs(r.E.norm() - 1.0) <= 1e-12)) fail("norm");
            const auto f = truncate_to_rank(r.E, std::min<Index>(2, std::min(s.k(), s.l())));
            const auto g = splitting_step(f, r.bundle.G, 0.1, cfg.direction);
            if (!(std::abs(g.E().norm() - 1.0) <= 1e-12)) fail("norm");
        } catch (const Error& e) {
            if (e.code() != ErrorCode::PerturbedDefinitenessViolation) fail(std::string("flow: ") + e.what());
        }
    }
    o.detail << "500 cases, " << failures << " failures";
    for (const auto& [k, v] : by_kind) o.detail << " " << k << "=" << v;
    o.require(failures == 0, "zero failures");
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit;
        std::function<void(Outcome&)> body;
    };
    const std::vector<Criterion> criteria = {
        {1, "Hamiltonian fixture", 1.0, hamiltonian_fixture},
        {2, "Gramian fixture", 1.0, gramian_fixture},
        {3, "enforce, C only (example 1)", 30.0, enforce_c_only},
        {4, "enforce, full perturbation (example 1)", 60.0, enforce_full},
        {5, "radius (example 2)", 60.0, radius_example2},
        {6, "adjoint property suite", 60.0, adjoint_suite},
        {7, "gradient property suite", 60.0, gradient_suite},
        {8, "f' formula", 60.0, fprime_formula},
        {9, "square-root regime", 60.0, sqrt_regime},
        {10, "low-rank equivalence", 60.0, low_rank_equivalence},
        {11, "invariant suite", 120.0, invariant_suite},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.body(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.limit) {
            o.pass = false;
            o.detail << " [runtime above " << c.limit << " s]";
        }
        if (!o.pass) ++failed;
        std::printf("criterion %2d %s (%.2f s) %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", secs, c.name,
                    o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
