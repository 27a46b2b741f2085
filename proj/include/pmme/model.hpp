#pragma once

// Model parameters, memory kernels and the damping basis of the Lindbladian
//
//   L0(rho) = -i[H, rho] + g+ D[s+](rho) + g- D[s-](rho),  H = -wz sz / 2
//   L1(rho) = gz (sz rho sz - rho)
//
// Units throughout: time in microseconds, rates in 1/us, wz in rad/us.

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <functional>
#include <string>
#include <variant>

#include "pmme/qstate.hpp"

namespace pmme {

using cdouble = std::complex<double>;
using Matrix2cd = Eigen::Matrix2cd;
using Matrix4d = Eigen::Matrix4d;

// ---------------------------------------------------------------------------
// Kernels. All are normalised so that k(0) = 1 (in units of 1/us).

/// k(t) = delta(t): the Lindblad limit.
struct DeltaKernel {
  bool operator==(const DeltaKernel&) const = default;
};

/// k(t) = exp(-b0 t), k~(s) = 1 / (s + b0).
struct ExpKernel {
  double b0 = 0.0;
  bool operator==(const ExpKernel&) const = default;
};

/// k~(s) = (s + a0) / (s^2 + b1 s + b0).
struct Rational2Kernel {
  double a0 = 0.0;
  double b0 = 0.0;
  double b1 = 0.0;
  bool operator==(const Rational2Kernel&) const = default;

  /// b1^2 - 4 b0; its sign separates over- from underdamped kernels.
  double discriminant() const { return b1 * b1 - 4.0 * b0; }
};

using KernelSpec = std::variant<DeltaKernel, ExpKernel, Rational2Kernel>;

enum class ModelId { M0, M1, M2 };

std::string to_string(ModelId id);
ModelId model_id_from_string(const std::string& name);
/// Number of free parameters: 4, 5 or 7.
int parameter_count(ModelId id);
ModelId model_of(const KernelSpec& k);
std::string kernel_tag(const KernelSpec& k);

/// Throws ValidationError when a kernel parameter is out of range.
void validate_kernel(const KernelSpec& k);

/// Laplace transform of the kernel. Throws std::domain_error at a pole.
cdouble kernel_laplace(const KernelSpec& k, cdouble s);

/// Time-domain kernel (not defined for DeltaKernel, which throws).
double kernel_time(const KernelSpec& k, double t);

// ---------------------------------------------------------------------------

class ModelParams {
 public:
  /// Throws ValidationError unless all rates are positive, the KMS condition
  /// gamma_plus < gamma_minus holds and the kernel is valid.
  ModelParams(double omega_z, double gamma_z, double gamma_plus,
              double gamma_minus, KernelSpec kernel = DeltaKernel{});

  /// Builds from the (Gamma_s, Gamma_r) pair instead of (gamma+, gamma-).
  static ModelParams from_sum_ratio(double omega_z, double gamma_z,
                                    double gamma_sum, double gamma_ratio,
                                    KernelSpec kernel = DeltaKernel{});

  double omega_z() const { return omega_z_; }
  double gamma_z() const { return gamma_z_; }
  double gamma_plus() const { return gamma_plus_; }
  double gamma_minus() const { return gamma_minus_; }
  const KernelSpec& kernel() const { return kernel_; }
  ModelId model() const { return model_of(kernel_); }

  double Gamma_s() const { return gamma_plus_ + gamma_minus_; }
  double Gamma_r() const { return gamma_plus_ / gamma_minus_; }

  ModelParams with_kernel(KernelSpec kernel) const;

  bool operator==(const ModelParams&) const = default;

 private:
  double omega_z_;
  double gamma_z_;
  double gamma_plus_;
  double gamma_minus_;
  KernelSpec kernel_;
};

// ---------------------------------------------------------------------------
// Superoperators in the Pauli basis F = {I, sx, sy, sz} / sqrt(2).

/// F_i as 2x2 matrices.
const std::array<Matrix2cd, 4>& pauli_basis();

using Superoperator = std::function<Matrix2cd(const Matrix2cd&)>;

/// l_ij = Tr[F_i S(F_j)] computed in complex arithmetic; `max_imag`, when
/// given, receives the largest imaginary part that was discarded.
Matrix4d superoperator_matrix(const Superoperator& op,
                              double* max_imag = nullptr);

/// Direct action of L0 and L1 on an operator.
Matrix2cd apply_L0(const ModelParams& theta, const Matrix2cd& x);
Matrix2cd apply_L1(const ModelParams& theta, const Matrix2cd& x);

/// Closed-form matrix of L = L0 + L1 in the Pauli basis.
Matrix4d lindblad_generator_matrix(const ModelParams& theta);

/// Pauli-basis coordinates r_i = Tr[F_i rho]; r_0 = 1/sqrt(2) for unit trace.
Eigen::Vector4d pauli_coordinates(const Matrix2cd& rho);
Matrix2cd from_pauli_coordinates(const Eigen::Vector4cd& r);

struct DampingBasis {
  std::array<cdouble, 4> lambda;
  std::array<cdouble, 4> lambda0;
  std::array<cdouble, 4> lambda1;
  std::array<Matrix2cd, 4> R;
  std::array<Matrix2cd, 4> L;
};

/// Closed-form left/right eigenoperators, ordered as
/// lambda = {0, -Gs/2 - 2gz + i wz, -Gs/2 - 2gz - i wz, -Gs}.
DampingBasis damping_basis(const ModelParams& theta);

}  // namespace pmme
