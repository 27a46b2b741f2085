#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "pmme/model.hpp"
#include "pmme/qstate.hpp"

namespace pmme::testkit {

inline BlochVectord random_ball_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BlochVectord v(n(rng), n(rng), n(rng));
  return v.normalized() * std::cbrt(u(rng));
}

inline BlochVectord random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return BlochVectord(n(rng), n(rng), n(rng)).normalized();
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

inline KernelSpec random_kernel(std::mt19937_64& rng, ModelId id) {
  switch (id) {
    case ModelId::M0: return DeltaKernel{};
    case ModelId::M1: return ExpKernel{log_uniform(rng, 0.01, 1.0)};
    case ModelId::M2: {
      std::uniform_real_distribution<double> u(0.0, 0.5);
      return Rational2Kernel{u(rng), log_uniform(rng, 0.005, 0.5),
                             log_uniform(rng, 0.05, 1.0)};
    }
  }
  return DeltaKernel{};
}

inline ModelParams random_params(std::mt19937_64& rng, ModelId id) {
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  const double gm = log_uniform(rng, 0.005, 0.1);
  const double ratio = log_uniform(rng, 0.01, 0.5);
  return ModelParams(w(rng), log_uniform(rng, 0.005, 0.2), ratio * gm, gm,
                     random_kernel(rng, id));
}

// Rational2 parameters whose coherence denominator is (u - r)^2 (u - q) in
// the shifted variable, i.e. a double pole of xi_2.
inline ModelParams double_pole_params(double g = 0.1, double r = -0.3,
                                      double q = -0.5) {
  const double b1 = -(2.0 * r + q) + 2.0 * g;
  const double b0 = r * r + 2.0 * r * q + 2.0 * g * b1 - 2.0 * g;
  const double a0 = b0 - r * r * q / (2.0 * g);
  return ModelParams(0.5, g, 0.002, 0.012, Rational2Kernel{a0, b0, b1});
}

inline std::vector<double> uniform_grid(double t_end, double h) {
  const auto n = static_cast<std::size_t>(std::llround(t_end / h));
  std::vector<double> out(n + 1);
  for (std::size_t i = 0; i <= n; ++i) out[i] = double(i) * h;
  return out;
}

}  // namespace pmme::testkit
