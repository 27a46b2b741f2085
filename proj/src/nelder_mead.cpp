#include "pmme/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace pmme {

namespace {

struct Run {
  Eigen::VectorXd x;
  double f;
  int evaluations;
  bool converged;
};

Run simplex_search(const Objective& raw, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& step, const NelderMeadOptions& opts,
                   int budget) {
  const int n = int(x0.size());
  const double alpha = 1.0;
  const double beta = 1.0 + 2.0 / n;
  const double gamma = 0.75 - 0.5 / n;
  const double delta = 1.0 - 1.0 / n;

  int evals = 0;
  auto f = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = raw(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> pts(n + 1, x0);
  std::vector<double> val(n + 1);
  for (int i = 0; i < n; ++i) pts[i + 1](i) += step(i);
  for (int i = 0; i <= n; ++i) val[i] = f(pts[i]);

  std::vector<int> order(n + 1);
  bool converged = false;
  while (evals < budget) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return val[a] < val[b]; });
    const int best = order.front(), worst = order.back(), second = order[n - 1];

    double diameter = 0.0;
    for (int i = 0; i <= n; ++i) {
      diameter = std::max(diameter, (pts[i] - pts[best]).lpNorm<Eigen::Infinity>());
    }
    const double spread = val[worst] - val[best];
    if (std::isfinite(spread) &&
        spread <= opts.f_tol * std::max(std::abs(val[best]), opts.f_floor) &&
        diameter <= opts.x_tol) {
      converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i) {
      if (i != worst) centroid += pts[i];
    }
    centroid /= n;

    const Eigen::VectorXd xr = centroid + alpha * (centroid - pts[worst]);
    const double fr = f(xr);
    if (fr < val[best]) {
      const Eigen::VectorXd xe = centroid + beta * (xr - centroid);
      const double fe = f(xe);
      if (fe < fr) {
        pts[worst] = xe;
        val[worst] = fe;
      } else {
        pts[worst] = xr;
        val[worst] = fr;
      }
      continue;
    }
    if (fr < val[second]) {
      pts[worst] = xr;
      val[worst] = fr;
      continue;
    }
    const bool outside = fr < val[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + gamma * (xr - centroid))
                                       : Eigen::VectorXd(centroid - gamma * (centroid - pts[worst]));
    const double fc = f(xc);
    if (fc < (outside ? fr : val[worst])) {
      pts[worst] = xc;
      val[worst] = fc;
      continue;
    }
    for (int i = 0; i <= n; ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + delta * (pts[i] - pts[best]);
      val[i] = f(pts[i]);
    }
  }
  const int best = int(std::min_element(val.begin(), val.end()) - val.begin());
  return {pts[best], val[best], evals, converged};
}

}  // namespace

NelderMeadResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& step,
                             const NelderMeadOptions& opts) {
  NelderMeadResult out;
  Run run = simplex_search(f, x0, step, opts, opts.max_evaluations);
  out.evaluations = run.evaluations;
  for (int r = 0; r < opts.restarts && out.evaluations < opts.max_evaluations; ++r) {
    if (!run.converged) break;
    Run next = simplex_search(f, run.x, 0.1 * step, opts,
                              opts.max_evaluations - out.evaluations);
    out.evaluations += next.evaluations;
    const bool improved =
        next.f < run.f - opts.f_tol * std::max(std::abs(run.f), opts.f_floor);
    if (next.f <= run.f) run = next;
    if (!improved) break;
  }
  out.x = run.x;
  out.f = run.f;
  out.converged = run.converged;
  return out;
}

}  // namespace pmme
