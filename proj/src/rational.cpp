#include "pmme/rational.hpp"

#include <algorithm>
#include <cmath>

#include "pmme/error.hpp"

namespace pmme {

namespace {

bool all_finite(const Polynomial& p) {
  return std::all_of(p.begin(), p.end(), [](cdouble c) {
    return std::isfinite(c.real()) && std::isfinite(c.imag());
  });
}

Polynomial shift(const Polynomial& p, cdouble z) {
  // Taylor coefficients of p(z + e) in e, by repeated synthetic division.
  Polynomial work = p;
  Polynomial out;
  const std::size_t n = work.size();
  for (std::size_t k = 0; k < n; ++k) {
    cdouble acc = 0.0;
    for (std::size_t i = work.size(); i-- > 0;) {
      const cdouble next = acc * z + work[i];
      work[i] = acc;
      acc = next;
    }
    out.push_back(acc);
    work.pop_back();
  }
  return out;
}

Polynomial multiply(const Polynomial& a, const Polynomial& b) {
  Polynomial out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

void polish(const Polynomial& p, cdouble& z) {
  const Polynomial dp = derivative(p);
  for (int it = 0; it < 3; ++it) {
    const cdouble f = evaluate(p, z);
    const cdouble df = evaluate(dp, z);
    if (std::abs(df) < 1e-300) return;
    const cdouble candidate = z - f / df;
    if (std::abs(evaluate(p, candidate)) >= std::abs(f)) return;
    z = candidate;
  }
}

}  // namespace

cdouble evaluate(const Polynomial& p, cdouble z) {
  cdouble acc = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) acc = acc * z + p[i];
  return acc;
}

Polynomial derivative(const Polynomial& p) {
  if (p.size() <= 1) return {0.0};
  Polynomial out(p.size() - 1);
  for (std::size_t i = 1; i < p.size(); ++i) out[i - 1] = double(i) * p[i];
  return out;
}

std::vector<cdouble> solve_monic_quadratic(cdouble b, cdouble c) {
  const cdouble root_disc = std::sqrt(b * b - 4.0 * c);
  const cdouble plus = b + root_disc;
  const cdouble minus = b - root_disc;
  const cdouble q = -0.5 * (std::abs(plus) >= std::abs(minus) ? plus : minus);
  if (q == 0.0) return {0.0, 0.0};
  return {q, c / q};
}

std::vector<cdouble> solve_monic_cubic(cdouble c2, cdouble c1, cdouble c0) {
  const cdouble p = (3.0 * c1 - c2 * c2) / 3.0;
  const cdouble q = (9.0 * c1 * c2 - 27.0 * c0 - 2.0 * c2 * c2 * c2) / 27.0;
  const cdouble disc = std::pow(p / 3.0, 3) + (q / 2.0) * (q / 2.0);
  const cdouble root_disc = std::sqrt(disc);
  const cdouble w1 = q / 2.0 + root_disc;
  const cdouble w2 = q / 2.0 - root_disc;
  const cdouble S = std::pow(std::abs(w1) >= std::abs(w2) ? w1 : w2, 1.0 / 3.0);
  const cdouble T = S == 0.0 ? cdouble(0.0) : -p / (3.0 * S);

  const cdouble shift_back = c2 / 3.0;
  const cdouble half_sum = 0.5 * (S + T);
  const cdouble rot = cdouble(0.0, 0.5 * std::sqrt(3.0)) * (S - T);
  std::vector<cdouble> roots{S + T - shift_back, -half_sum + rot - shift_back,
                             -half_sum - rot - shift_back};
  const Polynomial poly{c0, c1, c2, 1.0};
  for (auto& z : roots) polish(poly, z);
  return roots;
}

std::vector<cdouble> monic_roots(const Polynomial& den) {
  if (!all_finite(den)) {
    throw NumericalError("root finder: non-finite polynomial coefficients");
  }
  std::vector<cdouble> roots;
  switch (den.size()) {
    case 2: roots = {-den[0]}; break;
    case 3: roots = solve_monic_quadratic(den[1], den[0]); break;
    case 4: roots = solve_monic_cubic(den[2], den[1], den[0]); break;
    default: throw NumericalError("root finder: degree must be 1, 2 or 3");
  }
  for (const auto& z : roots) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
      throw NumericalError("root finder: non-finite root");
    }
  }
  return roots;
}

std::vector<PoleTerm> inverse_laplace(const Polynomial& num,
                                      const Polynomial& den,
                                      double merge_tol) {
  const std::vector<cdouble> roots = monic_roots(den);

  // Group near-coincident roots.
  std::vector<std::vector<cdouble>> clusters;
  for (const cdouble z : roots) {
    bool placed = false;
    for (auto& cl : clusters) {
      if (std::abs(cl.front() - z) < merge_tol * std::max(1.0, std::abs(z))) {
        cl.push_back(z);
        placed = true;
        break;
      }
    }
    if (!placed) clusters.push_back({z});
  }

  std::vector<PoleTerm> terms;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    cdouble center = 0.0;
    for (const cdouble z : clusters[c]) center += z;
    center /= double(clusters[c].size());
    const int m = int(clusters[c].size());

    // G(e) = num(center + e) / prod_{other clusters}(center + e - w).
    Polynomial rest{1.0};
    for (std::size_t o = 0; o < clusters.size(); ++o) {
      if (o == c) continue;
      for (const cdouble w : clusters[o]) rest = multiply(rest, {-w, 1.0});
    }
    const Polynomial n_shift = shift(num, center);
    const Polynomial d_shift = shift(rest, center);

    // Taylor coefficients g_0..g_{m-1} of G by series division.
    std::vector<cdouble> g(m, 0.0);
    for (int k = 0; k < m; ++k) {
      cdouble acc = k < int(n_shift.size()) ? n_shift[k] : cdouble(0.0);
      for (int j = 1; j <= k && j < int(d_shift.size()); ++j) {
        acc -= d_shift[j] * g[k - j];
      }
      g[k] = acc / d_shift[0];
    }
    // Residue of e^{st} G / (s - center)^m: sum_j g_{m-1-j} t^j / j!.
    for (int j = 0; j < m; ++j) {
      terms.push_back({center, g[m - 1 - j], j + 1});
    }
  }
  return terms;
}

cdouble evaluate_terms(const std::vector<PoleTerm>& terms, double t) {
  t = std::min(t, kMaxTime);
  cdouble acc = 0.0;
  for (const auto& term : terms) {
    const cdouble arg = term.pole * t;
    if (arg.real() < -745.0) continue;
    cdouble value = term.residue * std::exp(arg);
    if (term.multiplicity > 1) {
      value *= std::pow(t, term.multiplicity - 1) /
               std::tgamma(double(term.multiplicity));
    }
    acc += value;
  }
  return acc;
}

}  // namespace pmme
