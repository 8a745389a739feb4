#pragma once

#include <random>

#include "passivion/system_model.hpp"

namespace fixtures {

using namespace passivion;

inline StateSpaceSystem example1() {
    Matrix A(2, 2), B(2, 1), C(1, 2), D(1, 1);
    A << -0.5, 1.0, -1.0, -0.5;
    B << 0.5, 0.5;
    C << 0.5, 0.5;
    D << 0.5;
    return StateSpaceSystem::create(A, B, C, D, RealnessMode::BoundedReal);
}

inline StateSpaceSystem example2() {
    Matrix A(3, 3), B(3, 1), C(1, 3), D(1, 1);
    A << -8.0, -4.0, -1.5, 4.0, 0.0, 0.0, 0.0, 1.0, 0.0;
    B << 2.0, 0.0, 0.0;
    C << 1.0, 1.0, 0.75;
    D << -0.75;
    return StateSpaceSystem::create(A, B, C, D, RealnessMode::BoundedReal);
}

inline Matrix gaussian(std::mt19937_64& rng, Index r, Index c) {
    std::normal_distribution<double> nd;
    Matrix M(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) M(i, j) = nd(rng);
    return M;
}

inline Matrix unit(std::mt19937_64& rng, Index r, Index c) {
    Matrix M = gaussian(rng, r, c);
    return M / M.norm();
}

/// Random stable system with a valid feedthrough for the given mode.
inline StateSpaceSystem random_system(std::mt19937_64& rng, Index n, Index m, Index p, RealnessMode mode) {
    if (mode == RealnessMode::PositiveReal) p = m;
    Matrix A = gaussian(rng, n, n);
    const double shift = stability_margin(A) + 0.5;
    A.diagonal().array() -= shift;
    Matrix B = gaussian(rng, n, m);
    Matrix C = gaussian(rng, p, n);
    Matrix D = gaussian(rng, p, m);
    if (mode == RealnessMode::PositiveReal) {
        const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (D + D.transpose()));
        D += (std::max(0.0, -es.eigenvalues().minCoeff()) + 0.5) * Matrix::Identity(m, m);
    } else {
        D *= 0.5 / Eigen::JacobiSVD<Matrix>(D).singularValues()(0);
    }
    return StateSpaceSystem::create(A, B, C, D, mode);
}

inline Index pick(std::mt19937_64& rng, Index lo, Index hi) {
    return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

}  // namespace fixtures
