#pragma once

#include <Eigen/Dense>
#include <complex>

namespace passivion {

using Index = Eigen::Index;
using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// Frobenius inner product <U, V> = tr(U^T V).
inline double frobenius_inner(const Matrix& U, const Matrix& V) { return (U.array() * V.array()).sum(); }

inline Matrix sym(const Matrix& Z) { return 0.5 * (Z + Z.transpose()); }

}  // namespace passivion
