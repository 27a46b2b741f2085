#pragma once

// Trace-distance revivals between pairs of evolving states and the
// information-backflow measure N = sum of integrals of positive dD/dt.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmme/fit.hpp"
#include "pmme/model.hpp"
#include "pmme/recon.hpp"

namespace pmme {

struct DistanceSeries {
  std::string label1;
  std::string label2;
  std::vector<double> t;
  std::vector<double> d;
};

/// Pointwise trace distance. Throws ValidationError on mismatched grids.
DistanceSeries distance_series(const BlochSeries& s1, const BlochSeries& s2);

/// Distance between two states evolved under theta, on the given grid.
DistanceSeries model_distance_series(const ModelParams& theta, const Preparation& a,
                                     const Preparation& b, const std::vector<double>& times);

struct SigmaPoint {
  double t = 0.0;
  double sigma = 0.0;
};

/// Forward differences (D_{i+1} - D_i) / (t_{i+1} - t_i) placed at t_i.
std::vector<SigmaPoint> sigma_series(const DistanceSeries& d);

struct Contribution {
  double t0 = 0.0;
  double t1 = 0.0;
  double value = 0.0;
};

struct NonMarkovReport {
  double n = 0.0;
  std::vector<Contribution> contributions;
  std::string method;  // "data-forward-difference" or "model-exact"
  /// Model path: grid size used and the change at the final doubling.
  int grid_points = 0;
  double last_change = 0.0;
  bool converged = true;
  /// Data path with bootstrap: 95% interval and standard deviation.
  std::optional<Interval> ci;
  std::optional<double> sd;
};

/// Integral of the positive part of the linearly interpolated samples,
/// splitting segments at zero crossings.
NonMarkovReport integrate_positive(const std::vector<SigmaPoint>& sigma);

/// Data path. Requires at least 3 points.
NonMarkovReport n_measure(const DistanceSeries& d);

struct ModelMeasureOptions {
  int initial_points = 2000;
  double tolerance = 1e-4;
  int max_doublings = 10;
};

/// Model path: dense grid on [0, horizon], central differences, grid
/// doubled until successive values differ by less than the tolerance.
NonMarkovReport n_measure(const ModelParams& theta, const Preparation& a,
                          const Preparation& b, double horizon,
                          const ModelMeasureOptions& opts = {});

/// Data path plus a parametric bootstrap of both series (v + sigma * noise).
NonMarkovReport n_measure_bootstrap(const BlochSeries& s1, const BlochSeries& s2,
                                    int resamples, std::uint64_t seed);

/// The two default pairs: (plus, minus) and (plusi, minusi).
std::vector<std::pair<Preparation, Preparation>> default_pairs();

/// t,D and t,sigma tables.
void write_distance_csv(std::ostream& os, const DistanceSeries& d);
void write_sigma_csv(std::ostream& os, const std::vector<SigmaPoint>& s);
nlohmann::json nonmark_to_json(const NonMarkovReport& r);

}  // namespace pmme
