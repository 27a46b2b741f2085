#include "pmme/recon.hpp"

#include <cmath>
#include <map>
#include <ostream>
#include <random>

#include "pmme/error.hpp"
#include "pmme/format.hpp"

namespace pmme {

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32),
                    std::uint32_t(a),    std::uint32_t(a >> 32),
                    std::uint32_t(b),    std::uint32_t(b >> 32)};
  return std::mt19937_64(seq);
}

// Weight share of the outcome-1 shots under Dirichlet(1, ..., 1) weights,
// which is Beta(n1, n - n1) distributed.
double dirichlet_share(std::mt19937_64& rng, std::int64_t n1, std::int64_t n) {
  if (n1 <= 0) return 0.0;
  if (n1 >= n) return 1.0;
  std::gamma_distribution<double> g1(double(n1), 1.0);
  std::gamma_distribution<double> g0(double(n - n1), 1.0);
  const double a = g1(rng);
  const double b = g0(rng);
  return a / (a + b);
}

double unfold_one(double f, const std::optional<ReadoutModel>& readout, int iterations) {
  if (!readout) return f;
  return bayes_unfold(Eigen::Vector2d(1.0 - f, f), *readout, iterations)(1);
}

}  // namespace

Eigen::Vector2d bayes_unfold(const Eigen::Vector2d& p, const ReadoutModel& readout,
                             int iterations, std::vector<Eigen::Vector2d>* trace) {
  if (!(p.minCoeff() >= 0.0) || std::abs(p.sum() - 1.0) > 1e-9) {
    throw ValidationError("bayes_unfold: p must be a probability vector");
  }
  if (iterations < 0) throw ValidationError("bayes_unfold: iterations must be >= 0");
  const Eigen::Matrix2d& m = readout.m;
  Eigen::Vector2d est(0.5, 0.5);
  for (int n = 0; n < iterations; ++n) {
    const Eigen::Vector2d folded = m * est;
    Eigen::Vector2d next = Eigen::Vector2d::Zero();
    for (int k = 0; k < 2; ++k) {
      if (p(k) == 0.0) continue;
      if (!(folded(k) > 0.0)) {
        throw NumericalError("bayes_unfold: response row annihilates the prior");
      }
      for (int j = 0; j < 2; ++j) next(j) += p(k) * m(k, j) * est(j) / folded(k);
    }
    est = next;
    if (trace) trace->push_back(est);
  }
  return est;
}

BlochVectord mle_bloch(const Eigen::Vector3d& f_one) {
  BlochVectord v = Eigen::Vector3d::Ones() - 2.0 * f_one;
  const double n = v.norm();
  if (n > 1.0) v /= n;
  return v;
}

Eigen::Vector3d bootstrap_sigma(const FrameCounts& counts, int resamples,
                                std::uint64_t seed,
                                const std::optional<ReadoutModel>& readout,
                                int unfold_iterations) {
  if (resamples < 2) throw ValidationError("bootstrap: need at least 2 resamples");
  std::array<std::mt19937_64, 3> rng{seeded(seed, 0, 0), seeded(seed, 0, 1),
                                     seeded(seed, 0, 2)};
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d m2 = Eigen::Vector3d::Zero();
  for (int b = 0; b < resamples; ++b) {
    Eigen::Vector3d f;
    for (int k = 0; k < 3; ++k) {
      f(k) = unfold_one(dirichlet_share(rng[k], counts.count_one[k], counts.shots[k]),
                        readout, unfold_iterations);
    }
    const Eigen::Vector3d v = mle_bloch(f);
    const Eigen::Vector3d delta = v - mean;
    mean += delta / double(b + 1);
    m2 += delta.cwiseProduct(v - mean);
  }
  return (m2 / double(resamples - 1)).cwiseSqrt();
}

BlochSeries reconstruct_series(const TomographyDataset& ds, const std::string& prep,
                               const ReconOptions& opts) {
  const auto prep_index = ds.preps.index_of(prep);
  if (!prep_index) throw ValidationError("unknown preparation '" + prep + "'");

  std::map<double, std::array<const TomographyRecord*, 3>> frames;
  for (const auto& r : ds.records) {
    if (r.prep == prep) frames[r.t][int(r.basis)] = &r;
  }
  if (frames.empty()) throw ValidationError("no records for preparation '" + prep + "'");

  const bool mitigate = opts.mitigate && ds.readout.has_value();
  const std::optional<ReadoutModel> readout =
      mitigate ? ds.readout : std::optional<ReadoutModel>{};

  BlochSeries s;
  s.prep_label = prep;
  s.initial = ds.preps.items()[*prep_index].bloch;
  s.mitigated = mitigate;
  std::uint64_t j = 0;
  for (const auto& [t, frame] : frames) {
    for (const auto* r : frame) {
      if (!r) throw ValidationError("incomplete frame for '" + prep + "' at t = " +
                                    format_number(t));
    }
    Eigen::Vector3d f;
    FrameCounts counts;
    bool exact = false;
    for (int k = 0; k < 3; ++k) {
      f(k) = unfold_one(frame[k]->frequency(), readout, opts.unfold_iterations);
      counts.count_one[k] = frame[k]->count_one;
      counts.shots[k] = frame[k]->shots;
      exact = exact || frame[k]->exact();
    }
    BlochPoint pt;
    pt.t = t;
    pt.v = mle_bloch(f);
    if (!exact && opts.resamples > 0) {
      const std::uint64_t cell_seed = opts.seed ^ (0x9e3779b97f4a7c15ULL * (*prep_index + 1));
      pt.sigma = bootstrap_sigma(counts, opts.resamples, cell_seed + j, readout,
                                 opts.unfold_iterations)
                     .cwiseMax(kSigmaFloor);
    }
    s.points.push_back(pt);
    ++j;
  }
  return s;
}

std::vector<double> mitigate_dataset(const TomographyDataset& ds, int iterations) {
  std::vector<double> out;
  out.reserve(ds.records.size());
  for (const auto& r : ds.records) out.push_back(unfold_one(r.frequency(), ds.readout, iterations));
  return out;
}

void write_series_csv(std::ostream& os, const BlochSeries& s) {
  os << "t,vx,vy,vz,sx,sy,sz\n";
  for (const auto& p : s.points) {
    os << format_number(p.t);
    for (int k = 0; k < 3; ++k) os << ',' << format_number(p.v(k));
    for (int k = 0; k < 3; ++k) os << ',' << format_number(p.sigma(k));
    os << '\n';
  }
}

nlohmann::json series_to_json(const BlochSeries& s) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : s.points) {
    pts.push_back({{"t", p.t},
                   {"v", {p.v.x(), p.v.y(), p.v.z()}},
                   {"sigma", {p.sigma.x(), p.sigma.y(), p.sigma.z()}}});
  }
  return {{"prep", s.prep_label},
          {"initial", {s.initial.x(), s.initial.y(), s.initial.z()}},
          {"mitigated", s.mitigated},
          {"points", pts}};
}

BlochSeries series_from_json(const nlohmann::json& j) {
  try {
    BlochSeries s;
    s.prep_label = j.at("prep").get<std::string>();
    const auto init = j.at("initial").get<std::vector<double>>();
    s.initial = BlochVectord(init.at(0), init.at(1), init.at(2));
    s.mitigated = j.value("mitigated", false);
    double last = -1.0;
    for (const auto& p : j.at("points")) {
      BlochPoint pt;
      pt.t = p.at("t").get<double>();
      const auto v = p.at("v").get<std::vector<double>>();
      const auto sg = p.at("sigma").get<std::vector<double>>();
      pt.v = BlochVectord(v.at(0), v.at(1), v.at(2));
      pt.sigma = Eigen::Vector3d(sg.at(0), sg.at(1), sg.at(2));
      if (!(pt.t > last)) throw ValidationError("series: times must increase strictly");
      if (!(pt.sigma.minCoeff() > 0.0)) throw ValidationError("series: sigma must be > 0");
      last = pt.t;
      s.points.push_back(pt);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("series: malformed JSON: ") + e.what());
  } catch (const std::out_of_range&) {
    throw ValidationError("series: vectors need three components");
  }
}

}  // namespace pmme
