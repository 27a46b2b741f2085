#include "pmme/fit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <numeric>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "pmme/error.hpp"
#include "pmme/format.hpp"
#include "pmme/nelder_mead.hpp"
#include "pmme/params_json.hpp"
#include "pmme/solver.hpp"

namespace pmme {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// x = [wz, ln gz, ln Gs, logit Gr | ln b0 | a0, ln b0, ln b1]
struct Codec {
  ModelId id;

  int dim() const { return parameter_count(id); }

  Eigen::VectorXd encode(const ModelParams& theta) const {
    Eigen::VectorXd x(dim());
    x(0) = theta.omega_z();
    x(1) = std::log(theta.gamma_z());
    x(2) = std::log(theta.Gamma_s());
    x(3) = logit(theta.Gamma_r());
    if (const auto* e = std::get_if<ExpKernel>(&theta.kernel())) {
      x(4) = std::log(std::max(e->b0, 1e-300));
    } else if (const auto* r = std::get_if<Rational2Kernel>(&theta.kernel())) {
      x(4) = r->a0;
      x(5) = std::log(r->b0);
      x(6) = std::log(r->b1);
    }
    return x;
  }

  std::optional<ModelParams> decode(const Eigen::VectorXd& x) const {
    if (!x.allFinite()) return std::nullopt;
    KernelSpec kernel = DeltaKernel{};
    if (id == ModelId::M1) kernel = ExpKernel{std::exp(x(4))};
    if (id == ModelId::M2) kernel = Rational2Kernel{x(4), std::exp(x(5)), std::exp(x(6))};
    try {
      return ModelParams::from_sum_ratio(x(0), std::exp(x(1)), std::exp(x(2)),
                                         logistic(x(3)), kernel);
    } catch (const ValidationError&) {
      return std::nullopt;
    }
  }

  Eigen::VectorXd step() const {
    Eigen::VectorXd s = Eigen::VectorXd::Constant(dim(), 0.5);
    s(0) = 0.02;
    if (id == ModelId::M2) s(4) = 0.1;
    return s;
  }

  // Latin-hypercube ranges in encoded coordinates.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> box() const {
    Eigen::VectorXd lo(dim()), hi(dim());
    const double lr = std::log(1e-4), hr = std::log(1.0);
    lo.head(4) << -2.0, lr, std::log(2e-4), logit(1e-3);
    hi.head(4) << 2.0, hr, std::log(2.0), logit(0.9);
    if (id == ModelId::M1) {
      lo(4) = lr;
      hi(4) = hr;
    } else if (id == ModelId::M2) {
      lo.tail(3) << -1.0, lr, lr;
      hi.tail(3) << 1.0, hr, hr;
    }
    return {lo, hi};
  }
};

double safe_chi2(const ModelParams& theta, std::span<const BlochSeries> series) {
  try {
    return chi_squared(theta, series);
  } catch (const NumericalError&) {
    return kInf;
  }
}

struct LocalFit {
  Eigen::VectorXd x;
  double chi2_initial = kInf;
  double chi2 = kInf;
  int evaluations = 0;
  bool converged = false;
};

LocalFit local_fit(std::span<const BlochSeries> series, const Codec& codec,
                   const Eigen::VectorXd& x0, const FitConfig& cfg) {
  const auto objective = [&](const Eigen::VectorXd& x) {
    const auto theta = codec.decode(x);
    if (!theta) return kInf;
    return safe_chi2(*theta, series);
  };
  NelderMeadOptions opts;
  opts.max_evaluations = cfg.max_iterations;
  opts.f_tol = cfg.tolerance;
  LocalFit out;
  out.chi2_initial = objective(x0);
  const auto nm = nelder_mead(objective, x0, codec.step(), opts);
  out.x = nm.x;
  out.chi2 = nm.f;
  out.evaluations = nm.evaluations;
  out.converged = nm.converged;
  if (out.chi2 > out.chi2_initial) {
    out.x = x0;
    out.chi2 = out.chi2_initial;
  }
  return out;
}

template <typename F>
void parallel_for(int n, int jobs, F&& body) {
  jobs = std::clamp(jobs, 1, std::max(1, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32),
                    std::uint32_t(stream), std::uint32_t(stream >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::pair<std::string, double>> flat_values(const ModelParams& theta) {
  std::vector<std::pair<std::string, double>> out;
  const nlohmann::json j = params_to_json(theta);
  for (const auto& [k, v] : j.items()) {
    if (v.is_number()) out.emplace_back(k, v.get<double>());
  }
  return out;
}

std::size_t total_points(std::span<const BlochSeries> series) {
  std::size_t n = 0;
  for (const auto& s : series) n += s.points.size();
  return n;
}

}  // namespace

Eigen::VectorXd to_unconstrained(const ModelParams& theta) {
  return Codec{theta.model()}.encode(theta);
}

std::optional<ModelParams> from_unconstrained(ModelId model, const Eigen::VectorXd& x) {
  if (x.size() != parameter_count(model)) {
    throw ValidationError("from_unconstrained: wrong dimension");
  }
  return Codec{model}.decode(x);
}

double chi_squared(const ModelParams& theta, const BlochSeries& series) {
  return chi_squared(theta, std::span<const BlochSeries>(&series, 1));
}

double chi_squared(const ModelParams& theta, std::span<const BlochSeries> series) {
  const Propagator prop = build_propagator(theta);
  double chi2 = 0.0;
  for (const auto& s : series) {
    const Evolution evo(theta, prop, bloch_to_density(s.initial));
    for (const auto& p : s.points) {
      const BlochVectord model = evo.bloch(p.t);
      chi2 += ((p.v - model).array() / p.sigma.array()).square().sum();
    }
  }
  if (!std::isfinite(chi2)) throw NumericalError("chi_squared: non-finite value");
  return chi2;
}

double log_sigma_term(std::span<const BlochSeries> series) {
  double acc = 0.0;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      for (int k = 0; k < 3; ++k) {
        acc += std::log(2.0 * std::numbers::pi * p.sigma(k) * p.sigma(k));
      }
    }
  }
  return acc;
}

double aic_from_log_likelihood(double log_likelihood, int n_params) {
  return -2.0 * log_likelihood + 2.0 * n_params;
}

std::string fingerprint(std::span<const BlochSeries> series) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const auto mix_double = [&](double d) { mix(&d, sizeof d); };
  for (const auto& s : series) {
    mix(s.prep_label.data(), s.prep_label.size());
    mix("\0", 1);
    for (int k = 0; k < 3; ++k) mix_double(s.initial(k));
    for (const auto& p : s.points) {
      mix_double(p.t);
      for (int k = 0; k < 3; ++k) {
        mix_double(p.v(k));
        mix_double(p.sigma(k));
      }
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double periodogram_peak(std::span<const BlochSeries> series, double w_max) {
  const int n = 4001;
  double best_w = 0.0, best_power = -1.0;
  for (int i = 0; i < n; ++i) {
    const double w = -w_max + 2.0 * w_max * i / (n - 1);
    double power = 0.0;
    for (const auto& s : series) {
      cdouble acc = 0.0;
      for (const auto& p : s.points) {
        acc += cdouble(p.v.x(), -p.v.y()) * std::exp(cdouble(0.0, -w * p.t));
      }
      power += std::norm(acc);
    }
    if (power > best_power) {
      best_power = power;
      best_w = w;
    }
  }
  return best_w;
}

ModelParams embed(const ModelParams& theta, ModelId to) {
  const ModelId from = theta.model();
  if (from == to) return theta;
  if (int(to) < int(from)) throw ValidationError("embed: target model is smaller");
  if (from == ModelId::M0) {
    // A fast exponential kernel whose slow coherence pole matches the
    // Markovian dephasing rate.
    const double gz = theta.gamma_z();
    const double a = 1.0 + 2.0 * gz;
    const double b0 = std::min(1e3, 0.5 * a * a / (8.0 * gz));
    const double g = (a - std::sqrt(a * a - 8.0 * gz * b0)) / 4.0;
    const ModelParams m1(theta.omega_z(), g, theta.gamma_plus(), theta.gamma_minus(),
                         ExpKernel{b0});
    return embed(m1, to);
  }
  // exp(-c t) = L^-1[(s + a0) / ((s + a0)(s + c))]
  const double c = std::get<ExpKernel>(theta.kernel()).b0;
  const double a0 = c + 1.0;
  return theta.with_kernel(Rational2Kernel{a0, a0 * c, a0 + c});
}

FitResult fit_model(std::span<const BlochSeries> series, const FitConfig& config) {
  if (config.multistart < 1) throw ValidationError("fit: multistart must be >= 1");
  const int p = parameter_count(config.model);
  const std::size_t n_points = total_points(series);
  if (n_points < std::size_t(p + 1)) {
    throw ValidationError("fit: need at least " + std::to_string(p + 1) + " time points");
  }
  for (const auto& s : series) {
    for (const auto& pt : s.points) {
      if (!(pt.sigma.minCoeff() > 0.0)) throw ValidationError("fit: sigma must be > 0");
    }
  }

  const Codec codec{config.model};
  const int dim = codec.dim();
  const double w_peak = periodogram_peak(series);

  std::vector<std::pair<std::string, Eigen::VectorXd>> starts;
  for (const auto& w : config.warm_starts) {
    starts.emplace_back("warm", codec.encode(embed(w, config.model)));
  }
  {
    ModelParams guess(w_peak, 0.01, 0.002, 0.02);
    if (config.model == ModelId::M1) guess = guess.with_kernel(ExpKernel{0.1});
    if (config.model == ModelId::M2) guess = guess.with_kernel(Rational2Kernel{0.1, 0.01, 0.2});
    starts.emplace_back("periodogram", codec.encode(guess));
  }
  const int n_lhs = config.multistart - 1;
  if (n_lhs > 0) {
    auto rng = seeded(config.seed, 0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto [lo, hi] = codec.box();
    std::vector<Eigen::VectorXd> pts(n_lhs, Eigen::VectorXd(dim));
    for (int d = 0; d < dim; ++d) {
      std::vector<int> perm(n_lhs);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (int i = 0; i < n_lhs; ++i) {
        pts[i](d) = lo(d) + (hi(d) - lo(d)) * (perm[i] + u(rng)) / n_lhs;
      }
    }
    for (int i = 0; i < n_lhs; ++i) {
      if (i % 2 == 0) {
        pts[i](0) = w_peak;
        starts.emplace_back("periodogram", pts[i]);
      } else {
        starts.emplace_back("lhs", pts[i]);
      }
    }
  }

  std::vector<LocalFit> fits(starts.size());
  parallel_for(int(starts.size()), config.jobs, [&](int i) {
    fits[i] = local_fit(series, codec, starts[i].second, config);
  });

  FitResult out;
  out.model = config.model;
  out.n_params = p;
  out.n_points = int(n_points);
  out.data_fingerprint = fingerprint(series);
  for (const auto& s : series) out.series_labels.push_back(s.prep_label);

  std::size_t best = 0;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    out.starts.push_back({starts[i].first, fits[i].chi2_initial, fits[i].chi2,
                          fits[i].evaluations, fits[i].converged});
    if (fits[i].chi2 < fits[best].chi2) best = i;
  }
  const auto theta = codec.decode(fits[best].x);
  if (!theta || !std::isfinite(fits[best].chi2)) {
    out.converged = false;
    out.chi2 = kInf;
    out.neg2_log_likelihood = kInf;
    out.aic = kInf;
    return out;
  }
  out.theta = *theta;
  out.chi2 = fits[best].chi2;
  out.converged = fits[best].converged;
  out.neg2_log_likelihood = out.chi2 + log_sigma_term(series);
  out.aic = out.neg2_log_likelihood + 2.0 * p;

  if (config.bootstrap > 0) {
    std::vector<std::vector<std::pair<std::string, double>>> draws(config.bootstrap);
    const Propagator prop = build_propagator(out.theta);
    parallel_for(config.bootstrap, config.jobs, [&](int b) {
      auto rng = seeded(config.seed, 1000003ULL + std::uint64_t(b));
      std::normal_distribution<double> noise(0.0, 1.0);
      std::vector<BlochSeries> synth(series.begin(), series.end());
      for (auto& s : synth) {
        const Evolution evo(out.theta, prop, bloch_to_density(s.initial));
        for (auto& pt : s.points) {
          const BlochVectord v = evo.bloch(pt.t);
          for (int k = 0; k < 3; ++k) pt.v(k) = v(k) + pt.sigma(k) * noise(rng);
        }
      }
      const LocalFit f = local_fit(synth, codec, codec.encode(out.theta), config);
      if (const auto th = codec.decode(f.x)) draws[b] = flat_values(*th);
    });
    for (const auto& [key, ignored] : flat_values(out.theta)) {
      std::vector<double> values;
      for (const auto& d : draws) {
        for (const auto& [k, v] : d) {
          if (k == key) values.push_back(v);
        }
      }
      if (values.size() >= 2) {
        out.confidence[key] = {percentile(values, 0.025), percentile(values, 0.975)};
      }
    }
  }
  return out;
}

std::string evidence_band(double delta) {
  if (delta <= 2.0) return "substantial";
  if (delta < 4.0) return "substantial to considerably less";
  if (delta <= 7.0) return "considerably less";
  if (delta <= 10.0) return "considerably less to essentially none";
  return "essentially none";
}

std::vector<RankEntry> aic_rank(std::span<const FitResult> results) {
  if (results.empty()) throw ValidationError("aic_rank: no fits");
  for (const auto& r : results) {
    if (r.data_fingerprint != results.front().data_fingerprint) {
      throw ValidationError("aic_rank: fits were made on different data");
    }
  }
  std::vector<const FitResult*> order;
  for (const auto& r : results) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const FitResult* a, const FitResult* b) {
    if (std::abs(a->aic - b->aic) <= 1e-9) return a->n_params < b->n_params;
    return a->aic < b->aic;
  });
  const double best = order.front()->aic;
  std::vector<RankEntry> out;
  for (const auto* r : order) {
    const double delta = out.empty() ? 0.0 : std::max(0.0, r->aic - best);
    out.push_back({r->model, r->aic, delta, evidence_band(delta)});
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
}

Percentiles percentiles(const std::vector<double>& values) {
  return {percentile(values, 0.05), percentile(values, 0.50), percentile(values, 0.95)};
}

ValidationReport validate_predictions(const FitResult& fit,
                                      std::span<const BlochSeries> test_series) {
  if (test_series.empty()) throw ValidationError("validate: no test series");
  const std::set<std::string> trained(fit.series_labels.begin(), fit.series_labels.end());
  ValidationReport rep;
  rep.model = fit.model;
  const Propagator prop = build_propagator(fit.theta);
  std::vector<double> pooled;
  for (const auto& s : test_series) {
    if (trained.count(s.prep_label)) {
      throw ValidationError("validate: '" + s.prep_label + "' was used for fitting");
    }
    const Evolution evo(fit.theta, prop, bloch_to_density(s.initial));
    std::vector<double> d;
    for (const auto& p : s.points) d.push_back(bloch_trace_distance(p.v, evo.bloch(p.t)));
    pooled.insert(pooled.end(), d.begin(), d.end());
    rep.labels.push_back(s.prep_label);
    rep.distances.push_back(std::move(d));
  }
  rep.pooled = percentiles(pooled);

  bool shared = true;
  for (const auto& s : test_series) {
    if (s.points.size() != test_series.front().points.size()) {
      shared = false;
      break;
    }
    for (std::size_t j = 0; j < s.points.size(); ++j) {
      shared = shared && s.points[j].t == test_series.front().points[j].t;
    }
  }
  if (shared && !test_series.front().points.empty()) {
    std::vector<double> mean(test_series.front().points.size(), 0.0);
    for (const auto& d : rep.distances) {
      for (std::size_t j = 0; j < d.size(); ++j) mean[j] += d[j] / double(rep.distances.size());
    }
    rep.prep_averaged = percentiles(mean);
  }
  return rep;
}

nlohmann::json fit_to_json(const FitResult& r) {
  using nlohmann::json;
  json starts = json::array();
  for (const auto& s : r.starts) {
    starts.push_back({{"origin", s.origin},
                      {"chi2_initial", std::isfinite(s.chi2_initial) ? json(s.chi2_initial) : json(nullptr)},
                      {"chi2_final", std::isfinite(s.chi2_final) ? json(s.chi2_final) : json(nullptr)},
                      {"evaluations", s.evaluations},
                      {"converged", s.converged}});
  }
  json ci = json::object();
  for (const auto& [k, v] : r.confidence) ci[k] = {v.lo, v.hi};
  const auto finite = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"model", to_string(r.model)},
          {"n_params", r.n_params},
          {"n_points", r.n_points},
          {"theta", params_to_json(r.theta)},
          {"chi2", finite(r.chi2)},
          {"neg2_log_likelihood", finite(r.neg2_log_likelihood)},
          {"aic", finite(r.aic)},
          {"converged", r.converged},
          {"series_labels", r.series_labels},
          {"data_fingerprint", r.data_fingerprint},
          {"starts", starts},
          {"confidence_95", ci}};
}

FitResult fit_from_json(const nlohmann::json& j) {
  try {
    FitResult r;
    r.model = model_id_from_string(j.at("model").get<std::string>());
    r.theta = params_from_json(j.at("theta"));
    if (r.theta.model() != r.model) throw ValidationError("fit: kernel does not match model");
    r.n_params = parameter_count(r.model);
    r.n_points = j.value("n_points", 0);
    const auto number = [&](const char* key) {
      const auto& v = j.at(key);
      return v.is_null() ? kInf : v.get<double>();
    };
    r.chi2 = number("chi2");
    r.neg2_log_likelihood = number("neg2_log_likelihood");
    r.aic = number("aic");
    r.converged = j.value("converged", false);
    r.series_labels = j.value("series_labels", std::vector<std::string>{});
    r.data_fingerprint = j.value("data_fingerprint", std::string());
    if (j.contains("confidence_95")) {
      for (const auto& [k, v] : j["confidence_95"].items()) {
        r.confidence[k] = {v.at(0).get<double>(), v.at(1).get<double>()};
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("fit: malformed JSON: ") + e.what());
  }
}

nlohmann::json ranking_to_json(const std::vector<RankEntry>& ranking) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : ranking) {
    out.push_back({{"model", to_string(e.model)},
                   {"aic", e.aic},
                   {"delta", e.delta},
                   {"band", e.band}});
  }
  return out;
}

nlohmann::json validation_to_json(const ValidationReport& r) {
  const auto pct = [](const Percentiles& p) {
    return nlohmann::json{{"p5", p.p5}, {"p50", p.p50}, {"p95", p.p95}};
  };
  nlohmann::json j = {{"model", to_string(r.model)},
                      {"labels", r.labels},
                      {"distances", r.distances},
                      {"pooled", pct(r.pooled)}};
  j["prep_averaged"] = r.prep_averaged ? pct(*r.prep_averaged) : nlohmann::json(nullptr);
  return j;
}

void write_validation_csv(std::ostream& os, std::span<const ValidationReport> reports) {
  os << "model,statistic,p5,p50,p95\n";
  const auto row = [&](const ValidationReport& r, const char* name, const Percentiles& p) {
    os << to_string(r.model) << ',' << name << ',' << format_number(p.p5) << ','
       << format_number(p.p50) << ',' << format_number(p.p95) << '\n';
  };
  for (const auto& r : reports) {
    row(r, "pooled", r.pooled);
    if (r.prep_averaged) row(r, "prep_averaged", *r.prep_averaged);
  }
}

}  // namespace pmme
