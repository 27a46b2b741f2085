#pragma once

// Inverse Laplace transforms of proper rational functions by residues.
// Polynomials are stored lowest degree first.

#include <complex>
#include <vector>

namespace pmme {

using cdouble = std::complex<double>;
using Polynomial = std::vector<cdouble>;

/// One term residue * t^(m-1) * exp(pole t) / (m-1)!.
struct PoleTerm {
  cdouble pole;
  cdouble residue;
  int multiplicity = 1;
};

cdouble evaluate(const Polynomial& p, cdouble z);
Polynomial derivative(const Polynomial& p);

/// Roots of z^2 + b z + c, cancellation-free form.
std::vector<cdouble> solve_monic_quadratic(cdouble b, cdouble c);

/// Roots of z^3 + c2 z^2 + c1 z + c0 by Cardano's formula on the depressed
/// cubic, each refined with Newton steps.
std::vector<cdouble> solve_monic_cubic(cdouble c2, cdouble c1, cdouble c0);

/// Roots of a monic polynomial of degree 1..3. Throws NumericalError on
/// non-finite coefficients.
std::vector<cdouble> monic_roots(const Polynomial& den);

/// Roots closer than tol * max(1, |z|) are merged into one pole of higher
/// multiplicity.
inline constexpr double kPoleMergeTolerance = 1e-7;

/// f(t) = L^-1[num / den](t) with den monic and deg num < deg den <= 3.
std::vector<PoleTerm> inverse_laplace(const Polynomial& num,
                                      const Polynomial& den,
                                      double merge_tol = kPoleMergeTolerance);

/// Sum of pole terms at time t. Exponentials with real part below the
/// double range underflow to zero; t is capped at kMaxTime.
inline constexpr double kMaxTime = 1e6;
cdouble evaluate_terms(const std::vector<PoleTerm>& terms, double t);

}  // namespace pmme
