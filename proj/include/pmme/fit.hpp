#pragma once

// Weighted least-squares estimation of model parameters from Bloch series,
// AIC model ranking and out-of-sample prediction statistics.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmme/model.hpp"
#include "pmme/recon.hpp"

namespace pmme {

/// sum_j sum_k (v_jk - v_k(t_j; theta))^2 / sigma_jk^2 with the series'
/// preparation state as initial condition. Throws NumericalError on NaN.
double chi_squared(const ModelParams& theta, const BlochSeries& series);
double chi_squared(const ModelParams& theta, std::span<const BlochSeries> series);

/// sum_jk ln(2 pi sigma_jk^2), the constant part of -2 ln L.
double log_sigma_term(std::span<const BlochSeries> series);

/// -2 ln L + 2 p.
double aic_from_log_likelihood(double log_likelihood, int n_params);

struct FitConfig {
  ModelId model = ModelId::M0;
  int multistart = 16;
  double tolerance = 1e-10;
  std::uint64_t seed = 0;
  int max_iterations = 20000;
  /// Worker threads for multistarts; results do not depend on it.
  int jobs = 1;
  /// Parametric bootstrap replicates for confidence intervals (0 = off).
  int bootstrap = 0;
  /// Extra deterministic starting points, e.g. a nested model's optimum.
  std::vector<ModelParams> warm_starts;
};

struct StartRecord {
  std::string origin;  // "lhs", "periodogram" or "warm"
  double chi2_initial = 0.0;
  double chi2_final = 0.0;
  int evaluations = 0;
  bool converged = false;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct FitResult {
  ModelId model = ModelId::M0;
  ModelParams theta{0.0, 1.0, 0.1, 0.2};
  double chi2 = 0.0;
  double neg2_log_likelihood = 0.0;
  double aic = 0.0;
  int n_params = 4;
  int n_points = 0;
  bool converged = false;
  std::vector<std::string> series_labels;
  std::string data_fingerprint;
  std::vector<StartRecord> starts;
  /// Keyed by the flat parameter names of params_to_json.
  std::map<std::string, Interval> confidence;
};

/// Content hash of a set of series; equal only for identical data.
std::string fingerprint(std::span<const BlochSeries> series);

/// Unconstrained coordinates of theta:
/// [wz, ln gz, ln Gs, logit Gr | ln b0 | a0, ln b0, ln b1].
Eigen::VectorXd to_unconstrained(const ModelParams& theta);
/// Inverse map; nullopt when the point does not give a valid ModelParams
/// (overflow or rounding onto a constraint boundary).
std::optional<ModelParams> from_unconstrained(ModelId model, const Eigen::VectorXd& x);

/// Multistart Nelder-Mead in an unconstrained reparameterisation
/// (log rates, logit Gamma_r), so every evaluated theta is feasible.
/// Throws ValidationError when there are fewer than p + 1 time points.
FitResult fit_model(std::span<const BlochSeries> series, const FitConfig& config);

/// Strongest peak of the power of sum (vx - i vy) e^{-i w t} over
/// w in [-w_max, w_max].
double periodogram_peak(std::span<const BlochSeries> series, double w_max = 2.0);

/// Starting point for `to` that reproduces (M1 <- M2 exactly, M0 -> M1
/// approximately) the dynamics of a fitted nested model.
ModelParams embed(const ModelParams& theta, ModelId to);

struct RankEntry {
  ModelId model = ModelId::M0;
  double aic = 0.0;
  double delta = 0.0;
  std::string band;
};

/// Ascending AIC; ties within 1e-9 go to fewer parameters. Throws
/// ValidationError if the fits were made on different data.
std::vector<RankEntry> aic_rank(std::span<const FitResult> results);
std::string evidence_band(double delta);

struct Percentiles {
  double p5 = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
};

/// Linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);
Percentiles percentiles(const std::vector<double>& values);

struct ValidationReport {
  ModelId model = ModelId::M0;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> distances;  // [series][point]
  Percentiles pooled;
  /// Over time points of the across-series mean; only for shared grids.
  std::optional<Percentiles> prep_averaged;
};

/// Trace distance between observed and predicted states on unseen series.
/// Throws ValidationError if a test label was used for fitting.
ValidationReport validate_predictions(const FitResult& fit,
                                      std::span<const BlochSeries> test_series);

nlohmann::json fit_to_json(const FitResult& r);
FitResult fit_from_json(const nlohmann::json& j);
nlohmann::json ranking_to_json(const std::vector<RankEntry>& ranking);
nlohmann::json validation_to_json(const ValidationReport& r);
/// model,statistic,p5,p50,p95
void write_validation_csv(std::ostream& os, std::span<const ValidationReport> reports);

}  // namespace pmme
