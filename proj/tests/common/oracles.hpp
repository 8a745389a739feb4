#pragma once

#include <Eigen/Dense>

#include "passivion/system_model.hpp"

namespace oracles {

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LComplex = std::complex<long double>;

/// Dense Hamiltonian from the explicit formulas, evaluated in extended
/// precision.
inline LMatrix hamiltonian_ld(const LMatrix& A, const LMatrix& B, const LMatrix& C, const LMatrix& D,
                              passivion::RealnessMode mode) {
    const auto n = A.rows(), m = B.cols(), p = C.rows();
    LMatrix H = LMatrix::Zero(2 * n, 2 * n);
    H.topLeftCorner(n, n) = A;
    H.bottomRightCorner(n, n) = -A.transpose();
    if (mode == passivion::RealnessMode::PositiveReal) {
        const LMatrix Ti = (D + D.transpose()).inverse();
        LMatrix P(2 * n, m), Q(2 * n, m);
        P << B, -C.transpose();
        Q << C.transpose(), B;
        H -= P * Ti * Q.transpose();
    } else {
        H.bottomLeftCorner(n, n) = -C.transpose() * C;
        const LMatrix Ri = (LMatrix::Identity(m, m) - D.transpose() * D).inverse();
        LMatrix P(2 * n, m), Q(m, 2 * n);
        P << B, -C.transpose() * D;
        Q << D.transpose() * C, B.transpose();
        H += P * Ri * Q;
    }
    (void)p;
    return H;
}

inline LMatrix hamiltonian_ld(const passivion::StateSpaceSystem& sys, const LMatrix& dX) {
    const auto n = sys.n(), m = sys.m(), p = sys.p();
    const LMatrix X = sys.block_matrix().cast<long double>() + dX;
    return hamiltonian_ld(X.topLeftCorner(n, n), X.topRightCorner(n, m), X.bottomLeftCorner(p, n),
                          X.bottomRightCorner(p, m), sys.mode());
}

/// Real part of the eigenvalue of H closest to `near`, in extended precision.
inline long double real_part_near(const LMatrix& H, std::complex<double> near) {
    Eigen::EigenSolver<LMatrix> es(H, false);
    const auto& ev = es.eigenvalues();
    Eigen::Index best = 0;
    long double dist = std::abs(ev(0) - LComplex(near.real(), near.imag()));
    for (Eigen::Index i = 1; i < ev.size(); ++i) {
        const long double d = std::abs(ev(i) - LComplex(near.real(), near.imag()));
        if (d < dist) {
            dist = d;
            best = i;
        }
    }
    return ev(best).real();
}

}  // namespace oracles
