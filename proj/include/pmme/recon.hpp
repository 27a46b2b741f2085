#pragma once

// From counts to Bloch-vector time series: iterative Bayesian readout
// unfolding, linear inversion with radial projection, and Bayesian-bootstrap
// uncertainties.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmme/experiment.hpp"

namespace pmme {

inline constexpr int kUnfoldIterations = 100;
inline constexpr int kBootstrapResamples = 250;
inline constexpr double kSigmaFloor = 1e-4;

/// Iterative Bayesian unfolding from a uniform prior. `trace`, when given,
/// receives the estimate after every iteration. Throws ValidationError when
/// p is not a probability vector and NumericalError on a zero denominator.
Eigen::Vector2d bayes_unfold(const Eigen::Vector2d& p, const ReadoutModel& readout,
                             int iterations = kUnfoldIterations,
                             std::vector<Eigen::Vector2d>* trace = nullptr);

/// v_k = 1 - 2 f_k, radially projected onto the unit ball when |v| > 1.
BlochVectord mle_bloch(const Eigen::Vector3d& f_one);

/// Counts of one tomography frame, indexed by basis x, y, z.
struct FrameCounts {
  std::array<std::int64_t, 3> count_one{};
  std::array<std::int64_t, 3> shots{};
};

/// Per-component standard deviation of mle_bloch over Dirichlet-weighted
/// resamples of the shots, with optional unfolding of every resample.
Eigen::Vector3d bootstrap_sigma(const FrameCounts& counts, int resamples,
                                std::uint64_t seed,
                                const std::optional<ReadoutModel>& readout = std::nullopt,
                                int unfold_iterations = kUnfoldIterations);

struct BlochPoint {
  double t = 0.0;
  BlochVectord v = BlochVectord::Zero();
  Eigen::Vector3d sigma = Eigen::Vector3d::Constant(kSigmaFloor);
};

struct BlochSeries {
  std::string prep_label;
  /// Ideal preparation state, the initial condition for predictions.
  BlochVectord initial = BlochVectord(0, 0, 1);
  std::vector<BlochPoint> points;
  bool mitigated = false;
};

struct ReconOptions {
  int unfold_iterations = kUnfoldIterations;
  int resamples = kBootstrapResamples;
  std::uint64_t seed = 0;
  /// Apply the dataset's readout model when it has one.
  bool mitigate = true;
};

/// Unfold, invert and bootstrap each time point of one preparation.
/// Exact-probability frames, and every frame when resamples == 0, get
/// sigma = kSigmaFloor.
BlochSeries reconstruct_series(const TomographyDataset& ds, const std::string& prep,
                               const ReconOptions& opts = {});

/// Mitigated outcome-1 frequencies of every record, in record order.
std::vector<double> mitigate_dataset(const TomographyDataset& ds,
                                     int iterations = kUnfoldIterations);

/// CSV columns t,vx,vy,vz,sx,sy,sz.
void write_series_csv(std::ostream& os, const BlochSeries& s);
nlohmann::json series_to_json(const BlochSeries& s);
BlochSeries series_from_json(const nlohmann::json& j);

}  // namespace pmme
