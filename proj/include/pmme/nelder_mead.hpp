#pragma once

#include <Eigen/Dense>
#include <functional>

namespace pmme {

struct NelderMeadOptions {
  int max_evaluations = 20000;
  /// Converged when (f_worst - f_best) <= f_tol * max(|f_best|, f_floor).
  double f_tol = 1e-10;
  double f_floor = 1e-12;
  /// ... and the simplex diameter is below x_tol.
  double x_tol = 1e-8;
  /// Fresh simplices built around the optimum after convergence.
  int restarts = 2;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evaluations = 0;
  bool converged = false;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Adaptive-coefficient Nelder-Mead. Non-finite objective values are
/// treated as +infinity.
NelderMeadResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& step,
                             const NelderMeadOptions& opts = {});

}  // namespace pmme
