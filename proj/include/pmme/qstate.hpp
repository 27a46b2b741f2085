#pragma once

// Single-qubit states as Bloch vectors and 2x2 density matrices.
//
// Convention: rho = (I + v . sigma) / 2 with sigma_z |0> = |0>, so the ground
// state |0> sits at v = (0, 0, +1).

#include <Eigen/Dense>
#include <complex>

#include "pmme/error.hpp"

namespace pmme {

template <typename Scalar>
using BlochVector = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using DensityMatrix = Eigen::Matrix<std::complex<Scalar>, 2, 2>;

using BlochVectord = BlochVector<double>;
using DensityMatrixd = DensityMatrix<double>;

inline constexpr double kBallTolerance = 1e-9;
inline constexpr double kAlgebraTolerance = 1e-12;

namespace pauli {

template <typename Scalar = double>
DensityMatrix<Scalar> identity() {
  return DensityMatrix<Scalar>::Identity();
}

template <typename Scalar = double>
DensityMatrix<Scalar> x() {
  DensityMatrix<Scalar> m;
  m << 0, 1, 1, 0;
  return m;
}

template <typename Scalar = double>
DensityMatrix<Scalar> y() {
  using C = std::complex<Scalar>;
  DensityMatrix<Scalar> m;
  m << C(0), C(0, -1), C(0, 1), C(0);
  return m;
}

template <typename Scalar = double>
DensityMatrix<Scalar> z() {
  DensityMatrix<Scalar> m;
  m << 1, 0, 0, -1;
  return m;
}

}  // namespace pauli

template <typename Derived>
bool in_bloch_ball(const Eigen::MatrixBase<Derived>& v,
                   double tol = kBallTolerance) {
  return v.squaredNorm() <= 1.0 + tol;
}

/// rho = (I + v . sigma) / 2. The diagonal is written as (a, 1 - a) so the
/// trace is exactly one in floating point.
template <typename Scalar>
DensityMatrix<Scalar> bloch_to_density(const BlochVector<Scalar>& v) {
  using C = std::complex<Scalar>;
  if (!in_bloch_ball(v)) {
    throw ValidationError("Bloch vector lies outside the unit ball");
  }
  const Scalar p0 = (Scalar(1) + v.z()) / Scalar(2);
  DensityMatrix<Scalar> rho;
  rho(0, 0) = C(p0, 0);
  rho(1, 1) = C(Scalar(1) - p0, 0);
  rho(0, 1) = C(v.x(), -v.y()) / Scalar(2);
  rho(1, 0) = C(v.x(), v.y()) / Scalar(2);
  return rho;
}

/// v_k = Tr(rho sigma_k).
template <typename Scalar>
BlochVector<Scalar> density_to_bloch(const DensityMatrix<Scalar>& rho) {
  return {Scalar(2) * rho(1, 0).real(), Scalar(2) * rho(1, 0).imag(),
          (rho(0, 0) - rho(1, 1)).real()};
}

template <typename Scalar>
Scalar hermiticity_defect(const DensityMatrix<Scalar>& rho) {
  return (rho - rho.adjoint()).cwiseAbs().maxCoeff();
}

/// Hermitian, unit trace and positive semidefinite within `tol`.
template <typename Scalar>
bool is_density_matrix(const DensityMatrix<Scalar>& rho,
                       double tol = kAlgebraTolerance) {
  if (hermiticity_defect(rho) > tol) return false;
  if (std::abs(rho.trace() - std::complex<Scalar>(1)) > tol) return false;
  Eigen::SelfAdjointEigenSolver<DensityMatrix<Scalar>> es(
      rho, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

/// Half the trace norm of a - b.
template <typename Scalar>
Scalar trace_distance(const DensityMatrix<Scalar>& a,
                      const DensityMatrix<Scalar>& b) {
  const DensityMatrix<Scalar> diff = a - b;
  // Hermitian traceless 2x2: eigenvalues are +-sqrt(-det).
  Eigen::SelfAdjointEigenSolver<DensityMatrix<Scalar>> es(
      diff, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum() / Scalar(2);
}

/// Single-qubit shortcut: half the Euclidean distance of the Bloch vectors.
template <typename Derived1, typename Derived2>
typename Derived1::Scalar bloch_trace_distance(
    const Eigen::MatrixBase<Derived1>& a,
    const Eigen::MatrixBase<Derived2>& b) {
  return (a - b).norm() / typename Derived1::Scalar(2);
}

template <typename Scalar>
Scalar purity(const DensityMatrix<Scalar>& rho) {
  return (rho * rho).trace().real();
}

template <typename Derived>
typename Derived::Scalar bloch_purity(const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  return (S(1) + v.squaredNorm()) / S(2);
}

}  // namespace pmme
