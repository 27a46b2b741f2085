#include "pmme/solver.hpp"

#include <cmath>
#include <ostream>

#include "pmme/error.hpp"
#include "pmme/format.hpp"

namespace pmme {

namespace {

// xi_2 in the shifted variable u = s - lambda_2 is P(u) / Q(u) with real
// coefficients:
//   delta:      1 / u
//   exp:        (u + b0) / [(u - 2gz)(u + b0) + 2gz]
//   rational2:  (u^2 + b1 u + b0) / [(u - 2gz)(u^2 + b1 u + b0) + 2gz(u + a0)]
std::pair<Polynomial, Polynomial> coherence_transfer(const ModelParams& theta) {
  const double g = theta.gamma_z();
  const auto& k = theta.kernel();
  if (std::holds_alternative<DeltaKernel>(k)) {
    return {{1.0}, {0.0, 1.0}};
  }
  if (const auto* e = std::get_if<ExpKernel>(&k)) {
    const double b0 = e->b0;
    return {{b0, 1.0}, {2.0 * g * (1.0 - b0), b0 - 2.0 * g, 1.0}};
  }
  const auto& r = std::get<Rational2Kernel>(k);
  return {{r.b0, r.b1, 1.0},
          {2.0 * g * (r.a0 - r.b0), r.b0 - 2.0 * g * r.b1 + 2.0 * g,
           r.b1 - 2.0 * g, 1.0}};
}

}  // namespace

std::array<cdouble, 4> Propagator::xi_all(double t) const {
  return {xi(0, t), xi(1, t), xi(2, t), xi(3, t)};
}

Propagator build_propagator(const ModelParams& theta) {
  const DampingBasis db = damping_basis(theta);
  const auto [num, den] = coherence_transfer(theta);

  std::vector<PoleTerm> xi2 = inverse_laplace(num, den);
  std::vector<PoleTerm> xi3;
  xi3.reserve(xi2.size());
  for (auto& term : xi2) {
    term.pole += db.lambda[1];
    xi3.push_back({std::conj(term.pole), std::conj(term.residue),
                   term.multiplicity});
  }
  return Propagator({std::vector<PoleTerm>{{0.0, 1.0, 1}}, std::move(xi2),
                     std::move(xi3),
                     std::vector<PoleTerm>{{db.lambda[3], 1.0, 1}}});
}

Evolution::Evolution(const ModelParams& theta, const DensityMatrixd& rho0)
    : Evolution(theta, build_propagator(theta), rho0) {}

Evolution::Evolution(const ModelParams& theta, Propagator prop,
                     const DensityMatrixd& rho0)
    : basis_(damping_basis(theta)), prop_(std::move(prop)) {
  for (int i = 0; i < 4; ++i) mu0_[i] = (basis_.L[i] * rho0).trace();
}

DensityMatrixd Evolution::state(double t) const {
  const auto xi = prop_.xi_all(t);
  Matrix2cd rho = Matrix2cd::Zero();
  for (int i = 0; i < 4; ++i) rho += (xi[i] * mu0_[i]) * basis_.R[i];

  const double p0 = rho(0, 0).real();
  const cdouble coherence = 0.5 * (rho(0, 1) + std::conj(rho(1, 0)));
  if (!std::isfinite(p0) || !std::isfinite(coherence.real()) ||
      !std::isfinite(coherence.imag())) {
    throw NumericalError("propagate: non-finite state");
  }
  DensityMatrixd out;
  out << p0, coherence, std::conj(coherence), 1.0 - p0;
  return out;
}

BlochVectord Evolution::bloch(double t) const {
  return density_to_bloch(state(t));
}

DensityMatrixd propagate(const Propagator& prop, const ModelParams& theta,
                         const DensityMatrixd& rho0, double t) {
  return Evolution(theta, prop, rho0).state(t);
}

ChoiReport choi_check(const Propagator& prop, const ModelParams& theta,
                      double t) {
  const double gr = theta.Gamma_r();
  const double x4 = prop.xi(3, t).real();
  const double x2_sq = std::norm(prop.xi(1, t));
  const double n = 1.0 / (1.0 + gr);

  // Coherence block [[(1 + gr x4) n, xi2], [xi3, (gr + x4) n]].
  const double a = (1.0 + gr * x4) * n;
  const double d = (gr + x4) * n;
  const double half_trace = 0.5 * (1.0 + x4);
  const cdouble root = std::sqrt(cdouble(half_trace * half_trace - (a * d - x2_sq)));

  ChoiReport rep;
  rep.time = t;
  rep.eigenvalues = {cdouble((1.0 - x4) * n), cdouble(gr * (1.0 - x4) * n),
                     half_trace + root, half_trace - root};
  rep.margin = rep.eigenvalues[0].real();
  for (const auto& ev : rep.eigenvalues) rep.margin = std::min(rep.margin, ev.real());
  rep.cp_ok = rep.margin >= -kCpTolerance;
  return rep;
}

Eigen::Matrix4cd choi_matrix(const Propagator& prop, const ModelParams& theta,
                             double t) {
  const DampingBasis db = damping_basis(theta);
  Eigen::Matrix4cd C = Eigen::Matrix4cd::Zero();
  for (int k = 0; k < 4; ++k) {
    const cdouble x = prop.xi(k, t);
    const Matrix2cd lt = db.L[k].transpose();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        C.block<2, 2>(2 * i, 2 * j) += x * lt(i, j) * db.R[k];
  }
  return C;
}

void write_trajectory_csv(std::ostream& os, std::span<const double> times,
                          std::span<const DensityMatrixd> states) {
  os << "t,vx,vy,vz,purity\n";
  for (std::size_t i = 0; i < times.size() && i < states.size(); ++i) {
    const BlochVectord v = density_to_bloch(states[i]);
    os << format_number(times[i]) << ',' << format_number(v.x()) << ','
       << format_number(v.y()) << ',' << format_number(v.z()) << ','
       << format_number(bloch_purity(v)) << '\n';
  }
}

}  // namespace pmme
