#include "pmme/model.hpp"

#include <cmath>
#include <stdexcept>

namespace pmme {

namespace {

bool finite(double x) { return std::isfinite(x); }

Matrix2cd sigma_plus() {
  Matrix2cd m = Matrix2cd::Zero();
  m(1, 0) = 1.0;  // |1><0|
  return m;
}

Matrix2cd sigma_minus() {
  Matrix2cd m = Matrix2cd::Zero();
  m(0, 1) = 1.0;  // |0><1|
  return m;
}

Matrix2cd dissipator(const Matrix2cd& v, const Matrix2cd& x) {
  const Matrix2cd vdv = v.adjoint() * v;
  return v * x * v.adjoint() - 0.5 * (vdv * x + x * vdv);
}

}  // namespace

std::string to_string(ModelId id) {
  switch (id) {
    case ModelId::M0: return "M0";
    case ModelId::M1: return "M1";
    case ModelId::M2: return "M2";
  }
  return "M?";
}

ModelId model_id_from_string(const std::string& name) {
  if (name == "M0") return ModelId::M0;
  if (name == "M1") return ModelId::M1;
  if (name == "M2") return ModelId::M2;
  throw ValidationError("unknown model id '" + name + "' (expected M0, M1 or M2)");
}

int parameter_count(ModelId id) {
  switch (id) {
    case ModelId::M0: return 4;
    case ModelId::M1: return 5;
    case ModelId::M2: return 7;
  }
  return 0;
}

ModelId model_of(const KernelSpec& k) {
  return static_cast<ModelId>(k.index());
}

std::string kernel_tag(const KernelSpec& k) {
  switch (k.index()) {
    case 0: return "delta";
    case 1: return "exp";
    default: return "rational2";
  }
}

void validate_kernel(const KernelSpec& k) {
  if (const auto* e = std::get_if<ExpKernel>(&k)) {
    if (!finite(e->b0) || e->b0 < 0.0) {
      throw ValidationError("exponential kernel requires finite b0 >= 0");
    }
  } else if (const auto* r = std::get_if<Rational2Kernel>(&k)) {
    if (!finite(r->a0) || !finite(r->b0) || !finite(r->b1)) {
      throw ValidationError("rational kernel parameters must be finite");
    }
    if (r->b0 <= 0.0 || r->b1 <= 0.0) {
      throw ValidationError("rational kernel requires b0 > 0 and b1 > 0");
    }
  }
}

cdouble kernel_laplace(const KernelSpec& k, cdouble s) {
  if (std::holds_alternative<DeltaKernel>(k)) return 1.0;
  if (const auto* e = std::get_if<ExpKernel>(&k)) {
    const cdouble den = s + e->b0;
    if (den == 0.0) throw std::domain_error("kernel_laplace: s is a pole");
    return 1.0 / den;
  }
  const auto& r = std::get<Rational2Kernel>(k);
  const cdouble den = s * s + r.b1 * s + r.b0;
  if (den == 0.0) throw std::domain_error("kernel_laplace: s is a pole");
  return (s + r.a0) / den;
}

double kernel_time(const KernelSpec& k, double t) {
  if (std::holds_alternative<DeltaKernel>(k)) {
    throw std::domain_error("kernel_time: delta kernel has no pointwise value");
  }
  if (const auto* e = std::get_if<ExpKernel>(&k)) return std::exp(-e->b0 * t);
  const auto& r = std::get<Rational2Kernel>(k);
  // Poles of k~ sit at -b1/2 +- mu with mu = sqrt(B)/2; complex mu covers
  // the underdamped case through cosh/sinh of an imaginary argument.
  const cdouble mu = std::sqrt(cdouble(r.discriminant())) / 2.0;
  const double c = r.a0 - r.b1 / 2.0;
  const double envelope = std::exp(-r.b1 * t / 2.0);
  if (std::abs(mu) * std::max(1.0, t) < 1e-7) {
    return envelope * (1.0 + c * t);
  }
  return envelope * (std::cosh(mu * t) + c * std::sinh(mu * t) / mu).real();
}

// ---------------------------------------------------------------------------

ModelParams::ModelParams(double omega_z, double gamma_z, double gamma_plus,
                         double gamma_minus, KernelSpec kernel)
    : omega_z_(omega_z),
      gamma_z_(gamma_z),
      gamma_plus_(gamma_plus),
      gamma_minus_(gamma_minus),
      kernel_(kernel) {
  if (!finite(omega_z) || !finite(gamma_z) || !finite(gamma_plus) ||
      !finite(gamma_minus)) {
    throw ValidationError("model parameters must be finite");
  }
  if (gamma_z <= 0.0 || gamma_plus <= 0.0 || gamma_minus <= 0.0) {
    throw ValidationError("rates gamma_z, gamma_plus, gamma_minus must be > 0");
  }
  if (!(gamma_plus < gamma_minus)) {
    throw ValidationError(
        "KMS condition violated: gamma_plus / gamma_minus must be < 1");
  }
  validate_kernel(kernel_);
}

ModelParams ModelParams::from_sum_ratio(double omega_z, double gamma_z,
                                        double gamma_sum, double gamma_ratio,
                                        KernelSpec kernel) {
  const double gm = gamma_sum / (1.0 + gamma_ratio);
  return ModelParams(omega_z, gamma_z, gamma_ratio * gm, gm, kernel);
}

ModelParams ModelParams::with_kernel(KernelSpec kernel) const {
  return ModelParams(omega_z_, gamma_z_, gamma_plus_, gamma_minus_, kernel);
}

// ---------------------------------------------------------------------------

const std::array<Matrix2cd, 4>& pauli_basis() {
  static const std::array<Matrix2cd, 4> basis = [] {
    const double n = 1.0 / std::sqrt(2.0);
    return std::array<Matrix2cd, 4>{n * pauli::identity(), n * pauli::x(),
                                    n * pauli::y(), n * pauli::z()};
  }();
  return basis;
}

Matrix4d superoperator_matrix(const Superoperator& op, double* max_imag) {
  const auto& F = pauli_basis();
  Matrix4d out;
  double worst = 0.0;
  for (int j = 0; j < 4; ++j) {
    const Matrix2cd image = op(F[j]);
    for (int i = 0; i < 4; ++i) {
      const cdouble v = (F[i] * image).trace();
      out(i, j) = v.real();
      worst = std::max(worst, std::abs(v.imag()));
    }
  }
  if (max_imag) *max_imag = worst;
  return out;
}

Matrix2cd apply_L0(const ModelParams& theta, const Matrix2cd& x) {
  const Matrix2cd H = -0.5 * theta.omega_z() * pauli::z();
  const cdouble i(0.0, 1.0);
  return -i * (H * x - x * H) +
         theta.gamma_plus() * dissipator(sigma_plus(), x) +
         theta.gamma_minus() * dissipator(sigma_minus(), x);
}

Matrix2cd apply_L1(const ModelParams& theta, const Matrix2cd& x) {
  const Matrix2cd sz = pauli::z();
  return theta.gamma_z() * (sz * x * sz - x);
}

Matrix4d lindblad_generator_matrix(const ModelParams& theta) {
  const double coherence = -theta.Gamma_s() / 2.0 - 2.0 * theta.gamma_z();
  Matrix4d l = Matrix4d::Zero();
  l(1, 1) = coherence;
  l(2, 2) = coherence;
  l(1, 2) = theta.omega_z();
  l(2, 1) = -theta.omega_z();
  l(3, 0) = theta.gamma_minus() - theta.gamma_plus();
  l(3, 3) = -theta.Gamma_s();
  return l;
}

Eigen::Vector4d pauli_coordinates(const Matrix2cd& rho) {
  const auto& F = pauli_basis();
  Eigen::Vector4d r;
  for (int i = 0; i < 4; ++i) r(i) = (F[i] * rho).trace().real();
  return r;
}

Matrix2cd from_pauli_coordinates(const Eigen::Vector4cd& r) {
  const auto& F = pauli_basis();
  Matrix2cd rho = Matrix2cd::Zero();
  for (int i = 0; i < 4; ++i) rho += r(i) * F[i];
  return rho;
}

DampingBasis damping_basis(const ModelParams& theta) {
  const double gs = theta.Gamma_s();
  const double gr = theta.Gamma_r();
  const double gz = theta.gamma_z();
  const double wz = theta.omega_z();
  const double n = 1.0 / (1.0 + gr);

  DampingBasis db;
  db.lambda0 = {cdouble(0.0), cdouble(-gs / 2.0, wz), cdouble(-gs / 2.0, -wz),
                cdouble(-gs)};
  db.lambda1 = {cdouble(0.0), cdouble(-2.0 * gz), cdouble(-2.0 * gz),
                cdouble(0.0)};
  for (int i = 0; i < 4; ++i) db.lambda[i] = db.lambda0[i] + db.lambda1[i];

  for (auto& m : db.R) m.setZero();
  for (auto& m : db.L) m.setZero();
  db.R[0](0, 0) = n;
  db.R[0](1, 1) = gr * n;
  db.R[1](0, 1) = 1.0;
  db.R[2](1, 0) = 1.0;
  db.R[3](0, 0) = -n;
  db.R[3](1, 1) = n;

  db.L[0] = Matrix2cd::Identity();
  db.L[1](1, 0) = 1.0;
  db.L[2](0, 1) = 1.0;
  db.L[3](0, 0) = -gr;
  db.L[3](1, 1) = 1.0;
  return db;
}

}  // namespace pmme
