#pragma once

// Analytic propagation of the memory-kernel master equation
//
//   d/dt rho = L0 rho + L1 int_0^t k(t') exp[(L0 + L1) t'] rho(t - t') dt'
//
// in the damping basis: rho(t) = sum_i xi_i(t) Tr[L_i rho(0)] R_i, with each
// xi_i the inverse Laplace transform of 1 / (s - l0_i - l1_i k~(s - l_i)).

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "pmme/model.hpp"
#include "pmme/rational.hpp"

namespace pmme {

class Propagator {
 public:
  Propagator() = default;
  explicit Propagator(std::array<std::vector<PoleTerm>, 4> factors)
      : factors_(std::move(factors)) {}

  /// xi_i(t) for i in 0..3 (same order as DampingBasis::lambda).
  cdouble xi(std::size_t i, double t) const {
    return evaluate_terms(factors_[i], t);
  }
  std::array<cdouble, 4> xi_all(double t) const;

  const std::vector<PoleTerm>& terms(std::size_t i) const {
    return factors_[i];
  }

 private:
  std::array<std::vector<PoleTerm>, 4> factors_;
};

/// Throws NumericalError when the pole polynomial cannot be solved.
Propagator build_propagator(const ModelParams& theta);

/// Precomputed damping-basis coordinates of one initial state.
class Evolution {
 public:
  Evolution(const ModelParams& theta, const DensityMatrixd& rho0);
  Evolution(const ModelParams& theta, Propagator prop,
            const DensityMatrixd& rho0);

  /// Unit trace exactly and Hermitian by construction.
  DensityMatrixd state(double t) const;
  BlochVectord bloch(double t) const;

  const Propagator& propagator() const { return prop_; }

 private:
  DampingBasis basis_;
  Propagator prop_;
  std::array<cdouble, 4> mu0_;
};

DensityMatrixd propagate(const Propagator& prop, const ModelParams& theta,
                         const DensityMatrixd& rho0, double t);

struct ReferenceOptions {
  /// Combine the step-h and step-h/2 solutions as (4 y_{h/2} - y_h) / 3.
  bool richardson = true;
  double max_step = 0.01;
};

/// Time-domain oracle: trapezoidal product integration of the memory term,
/// recursively updated per exponential mode of k(t) exp(L t), with a
/// trapezoidal (Crank-Nicolson) local step. `times` must start at 0 and be
/// uniform; throws ValidationError otherwise.
std::vector<DensityMatrixd> reference_integrate(const ModelParams& theta,
                                                const DensityMatrixd& rho0,
                                                std::span<const double> times,
                                                ReferenceOptions opts = {});

struct ChoiReport {
  double time = 0.0;
  std::array<cdouble, 4> eigenvalues{};
  bool cp_ok = false;
  double margin = 0.0;
};

inline constexpr double kCpTolerance = 1e-10;

/// Closed-form Choi eigenvalues of the map rho(0) -> rho(t).
ChoiReport choi_check(const Propagator& prop, const ModelParams& theta,
                      double t);

/// C = sum_k xi_k(t) L_k^T (x) R_k.
Eigen::Matrix4cd choi_matrix(const Propagator& prop, const ModelParams& theta,
                             double t);

/// CSV with columns t,vx,vy,vz,purity.
void write_trajectory_csv(std::ostream& os, std::span<const double> times,
                          std::span<const DensityMatrixd> states);

}  // namespace pmme
