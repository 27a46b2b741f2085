#include "pmme/nonmark.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "pmme/error.hpp"
#include "pmme/experiment.hpp"
#include "pmme/format.hpp"
#include "pmme/solver.hpp"

namespace pmme {

namespace {

std::vector<SigmaPoint> central_differences(const std::vector<double>& t,
                                            const std::vector<double>& d) {
  const std::size_t n = t.size();
  std::vector<SigmaPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
    out[i] = {t[i], (d[hi] - d[lo]) / (t[hi] - t[lo])};
  }
  return out;
}

}  // namespace

DistanceSeries distance_series(const BlochSeries& s1, const BlochSeries& s2) {
  if (s1.points.size() != s2.points.size()) {
    throw ValidationError("distance_series: series have different lengths");
  }
  DistanceSeries out{s1.prep_label, s2.prep_label, {}, {}};
  for (std::size_t i = 0; i < s1.points.size(); ++i) {
    if (s1.points[i].t != s2.points[i].t) {
      throw ValidationError("distance_series: time grids differ at index " + std::to_string(i));
    }
    out.t.push_back(s1.points[i].t);
    out.d.push_back(bloch_trace_distance(s1.points[i].v, s2.points[i].v));
  }
  return out;
}

DistanceSeries model_distance_series(const ModelParams& theta, const Preparation& a,
                                     const Preparation& b, const std::vector<double>& times) {
  const Propagator prop = build_propagator(theta);
  const Evolution ea(theta, prop, bloch_to_density(a.bloch));
  const Evolution eb(theta, prop, bloch_to_density(b.bloch));
  DistanceSeries out{a.label, b.label, times, {}};
  out.d.reserve(times.size());
  for (const double t : times) out.d.push_back(bloch_trace_distance(ea.bloch(t), eb.bloch(t)));
  return out;
}

std::vector<SigmaPoint> sigma_series(const DistanceSeries& d) {
  if (d.t.size() < 2) throw ValidationError("sigma_series: need at least 2 points");
  std::vector<SigmaPoint> out;
  for (std::size_t i = 0; i + 1 < d.t.size(); ++i) {
    out.push_back({d.t[i], (d.d[i + 1] - d.d[i]) / (d.t[i + 1] - d.t[i])});
  }
  return out;
}

NonMarkovReport integrate_positive(const std::vector<SigmaPoint>& sigma) {
  NonMarkovReport rep;
  for (std::size_t i = 0; i + 1 < sigma.size(); ++i) {
    const auto [t0, s0] = sigma[i];
    const auto [t1, s1] = sigma[i + 1];
    double value = 0.0;
    double a = t0, b = t1;
    if (s0 >= 0.0 && s1 >= 0.0) {
      value = 0.5 * (s0 + s1) * (t1 - t0);
    } else if (s0 > 0.0 || s1 > 0.0) {
      const double tz = t0 + s0 / (s0 - s1) * (t1 - t0);
      if (s0 > 0.0) {
        value = 0.5 * s0 * (tz - t0);
        b = tz;
      } else {
        value = 0.5 * s1 * (t1 - tz);
        a = tz;
      }
    }
    if (value > 0.0) {
      rep.contributions.push_back({a, b, value});
    }
  }
  // Sum exactly the stored contributions.
  for (const auto& c : rep.contributions) rep.n += c.value;
  return rep;
}

NonMarkovReport n_measure(const DistanceSeries& d) {
  if (d.t.size() < 3) throw ValidationError("n_measure: need at least 3 points");
  NonMarkovReport rep = integrate_positive(sigma_series(d));
  rep.method = "data-forward-difference";
  rep.grid_points = int(d.t.size());
  return rep;
}

NonMarkovReport n_measure(const ModelParams& theta, const Preparation& a,
                          const Preparation& b, double horizon,
                          const ModelMeasureOptions& opts) {
  if (!(horizon > 0.0)) throw ValidationError("n_measure: horizon must be > 0");
  const auto evaluate = [&](int points) {
    const auto grid = lin_grid(0.0, horizon, points);
    const DistanceSeries d = model_distance_series(theta, a, b, grid);
    NonMarkovReport r = integrate_positive(central_differences(d.t, d.d));
    r.grid_points = points;
    return r;
  };
  int points = std::max(3, opts.initial_points);
  NonMarkovReport rep = evaluate(points);
  rep.converged = false;
  for (int k = 0; k < opts.max_doublings; ++k) {
    points = 2 * points - 1;
    NonMarkovReport next = evaluate(points);
    next.last_change = std::abs(next.n - rep.n);
    rep = std::move(next);
    if (rep.last_change < opts.tolerance) {
      rep.converged = true;
      break;
    }
  }
  rep.method = "model-exact";
  return rep;
}

NonMarkovReport n_measure_bootstrap(const BlochSeries& s1, const BlochSeries& s2,
                                    int resamples, std::uint64_t seed) {
  NonMarkovReport rep = n_measure(distance_series(s1, s2));
  if (resamples < 2) return rep;
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), 0x6e6dU};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> values;
  values.reserve(resamples);
  for (int b = 0; b < resamples; ++b) {
    BlochSeries r1 = s1, r2 = s2;
    for (auto* s : {&r1, &r2}) {
      for (auto& p : s->points) {
        for (int k = 0; k < 3; ++k) p.v(k) += p.sigma(k) * noise(rng);
      }
    }
    values.push_back(n_measure(distance_series(r1, r2)).n);
  }
  double mean = 0.0;
  for (const double v : values) mean += v / resamples;
  double var = 0.0;
  for (const double v : values) var += (v - mean) * (v - mean) / (resamples - 1);
  rep.sd = std::sqrt(var);
  rep.ci = Interval{percentile(values, 0.025), percentile(values, 0.975)};
  return rep;
}

std::vector<std::pair<Preparation, Preparation>> default_pairs() {
  return {{{"plus", named_state("plus")}, {"minus", named_state("minus")}},
          {{"plusi", named_state("plusi")}, {"minusi", named_state("minusi")}}};
}

void write_distance_csv(std::ostream& os, const DistanceSeries& d) {
  os << "t,D\n";
  for (std::size_t i = 0; i < d.t.size(); ++i) {
    os << format_number(d.t[i]) << ',' << format_number(d.d[i]) << '\n';
  }
}

void write_sigma_csv(std::ostream& os, const std::vector<SigmaPoint>& s) {
  os << "t,sigma\n";
  for (const auto& p : s) os << format_number(p.t) << ',' << format_number(p.sigma) << '\n';
}

nlohmann::json nonmark_to_json(const NonMarkovReport& r) {
  nlohmann::json contributions = nlohmann::json::array();
  for (const auto& c : r.contributions) {
    contributions.push_back({{"t0", c.t0}, {"t1", c.t1}, {"value", c.value}});
  }
  nlohmann::json j = {{"N", r.n},
                      {"method", r.method},
                      {"grid_points", r.grid_points},
                      {"contributions", contributions}};
  if (r.method == "model-exact") {
    j["last_change"] = r.last_change;
    j["converged"] = r.converged;
  }
  if (r.ci) j["ci_95"] = {r.ci->lo, r.ci->hi};
  if (r.sd) j["sd"] = *r.sd;
  return j;
}

}  // namespace pmme
