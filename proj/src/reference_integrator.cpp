#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "pmme/error.hpp"
#include "pmme/solver.hpp"

namespace pmme {

namespace {

using Vector4cd = Eigen::Vector4cd;
using Matrix4cd = Eigen::Matrix4cd;

// k(tau) = sum_m weight_m exp(rate_m tau) + ramp * tau * exp(ramp_rate tau).
struct KernelModes {
  std::vector<std::pair<cdouble, cdouble>> modes;  // (weight, rate)
  double ramp = 0.0;
  double ramp_rate = 0.0;
};

KernelModes kernel_modes(const KernelSpec& k) {
  KernelModes out;
  if (const auto* e = std::get_if<ExpKernel>(&k)) {
    out.modes.push_back({1.0, -e->b0});
    return out;
  }
  const auto& r = std::get<Rational2Kernel>(k);
  const cdouble mu = std::sqrt(cdouble(r.discriminant())) / 2.0;
  const double c = r.a0 - r.b1 / 2.0;
  const double base = -r.b1 / 2.0;
  if (std::abs(mu) < 1e-7 * std::max(1.0, r.b1)) {
    out.modes.push_back({1.0, base});
    out.ramp = c;
    out.ramp_rate = base;
    return out;
  }
  out.modes.push_back({0.5 + c / (2.0 * mu), base + mu});
  out.modes.push_back({0.5 - c / (2.0 * mu), base - mu});
  return out;
}

struct Generators {
  Eigen::Matrix4d l0;
  Eigen::Matrix4d l1;
};

// Projected directly from the superoperators so the oracle does not share
// the closed-form generator matrix.
Generators project_generators(const ModelParams& theta) {
  return {superoperator_matrix(
              [&](const Matrix2cd& x) { return apply_L0(theta, x); }),
          superoperator_matrix(
              [&](const Matrix2cd& x) { return apply_L1(theta, x); })};
}

std::vector<Vector4cd> integrate(const ModelParams& theta,
                                 const Eigen::Vector4d& r0, double h,
                                 std::size_t steps, std::size_t stride) {
  const Generators gen = project_generators(theta);
  const Matrix4cd l0 = gen.l0.cast<cdouble>();
  const Matrix4cd l1 = gen.l1.cast<cdouble>();
  const Matrix4cd id = Matrix4cd::Identity();

  std::vector<Vector4cd> out;
  out.reserve(steps / stride + 1);
  Vector4cd r = r0.cast<cdouble>();
  out.push_back(r);

  if (std::holds_alternative<DeltaKernel>(theta.kernel())) {
    const Matrix4cd l = l0 + l1;
    const Eigen::PartialPivLU<Matrix4cd> lhs(id - 0.5 * h * l);
    const Matrix4cd rhs = id + 0.5 * h * l;
    for (std::size_t n = 1; n <= steps; ++n) {
      r = lhs.solve(rhs * r);
      if (n % stride == 0) out.push_back(r);
    }
    return out;
  }

  const KernelModes km = kernel_modes(theta.kernel());
  const Eigen::Matrix4d lh = (gen.l0 + gen.l1) * h;
  const Matrix4cd step = lh.exp().cast<cdouble>();

  cdouble weight_sum = 0.0;
  std::vector<Matrix4cd> prop;
  std::vector<Vector4cd> running;  // T_m: trapezoid sums incl. endpoint
  for (const auto& [w, rate] : km.modes) {
    prop.push_back(std::exp(rate * h) * step);
    running.push_back(0.5 * h * r);
    weight_sum += w;
  }
  const bool has_ramp = km.ramp != 0.0;
  const Matrix4cd ramp_prop = std::exp(cdouble(km.ramp_rate * h)) * step;
  Vector4cd ramp_sum = Vector4cd::Zero();
  Vector4cd ramp_base = 0.5 * h * r;  // trapezoid sum of the ramp's own mode

  auto memory = [&](const Vector4cd& current) {
    Vector4cd acc = Vector4cd::Zero();
    for (std::size_t m = 0; m < km.modes.size(); ++m) {
      acc += km.modes[m].first * (running[m] - 0.5 * h * current);
    }
    if (has_ramp) acc += km.ramp * ramp_sum;
    return acc;
  };

  const Eigen::PartialPivLU<Matrix4cd> lhs(id - 0.5 * h * l0 -
                                           0.25 * h * h * weight_sum * l1);
  Vector4cd mem = memory(r);
  for (std::size_t n = 1; n <= steps; ++n) {
    Vector4cd known = Vector4cd::Zero();
    for (std::size_t m = 0; m < km.modes.size(); ++m) {
      running[m] = prop[m] * running[m];
      known += km.modes[m].first * running[m];
    }
    if (has_ramp) {
      ramp_sum = ramp_prop * (ramp_sum + h * ramp_base);
      ramp_base = ramp_prop * ramp_base;
      known += km.ramp * ramp_sum;
    }
    const Vector4cd rhs = r + 0.5 * h * (l0 * r + l1 * mem + l1 * known);
    r = lhs.solve(rhs);
    for (std::size_t m = 0; m < km.modes.size(); ++m) running[m] += h * r;
    if (has_ramp) ramp_base += h * r;
    mem = memory(r);
    if (n % stride == 0) out.push_back(r);
  }
  return out;
}

DensityMatrixd to_density(const Vector4cd& r) {
  const double s = std::sqrt(2.0);
  const double vx = s * r(1).real();
  const double vy = s * r(2).real();
  const double vz = s * r(3).real();
  const double p0 = 0.5 * (1.0 + vz);
  DensityMatrixd rho;
  rho << p0, cdouble(vx, -vy) / 2.0, cdouble(vx, vy) / 2.0, 1.0 - p0;
  return rho;
}

}  // namespace

std::vector<DensityMatrixd> reference_integrate(const ModelParams& theta,
                                                const DensityMatrixd& rho0,
                                                std::span<const double> times,
                                                ReferenceOptions opts) {
  if (times.empty()) return {};
  if (times.front() != 0.0) {
    throw ValidationError("reference_integrate: grid must start at t = 0");
  }
  if (times.size() == 1) return {rho0};
  const double h = times[1] - times[0];
  if (!(h > 0.0)) throw ValidationError("reference_integrate: step must be > 0");
  if (h > opts.max_step * (1.0 + 1e-12)) {
    throw ValidationError("reference_integrate: step exceeds the maximum");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (std::abs(times[i] - times[0] - double(i) * h) > 1e-9 * std::max(1.0, times[i])) {
      throw ValidationError("reference_integrate: grid is not uniform");
    }
  }

  const Eigen::Vector4d r0 = pauli_coordinates(rho0);
  const std::size_t steps = times.size() - 1;
  const auto coarse = integrate(theta, r0, h, steps, 1);

  std::vector<DensityMatrixd> out;
  out.reserve(times.size());
  if (!opts.richardson) {
    for (const auto& r : coarse) out.push_back(to_density(r));
    return out;
  }
  const auto fine = integrate(theta, r0, h / 2.0, 2 * steps, 2);
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    out.push_back(to_density((4.0 * fine[i] - coarse[i]) / 3.0));
  }
  return out;
}

}  // namespace pmme
