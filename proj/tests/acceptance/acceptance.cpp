// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,5,6] [--cli path/to/pmme_lab]

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cli_support.hpp"
#include "pmme/experiment.hpp"
#include "pmme/fit.hpp"
#include "pmme/nonmark.hpp"
#include "pmme/recon.hpp"
#include "pmme/solver.hpp"
#include "test_support.hpp"

#ifndef PMME_LAB_EXE
#define PMME_LAB_EXE "pmme_lab"
#endif

using namespace pmme;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_bloch_deviation(const DensityMatrixd& a, const DensityMatrixd& b) {
  return (density_to_bloch(a) - density_to_bloch(b)).cwiseAbs().maxCoeff();
}

bool cp_valid_on(const ModelParams& theta, double horizon) {
  const Propagator prop = build_propagator(theta);
  for (int i = 0; i <= 400; ++i) {
    if (!choi_check(prop, theta, horizon * i / 400.0).cp_ok) return false;
  }
  return true;
}

// Shared synthetic setup for the recovery, ranking and prediction checks.
const ModelParams kMemoryTruth(0.5, 0.02, 0.005, 0.02, ExpKernel{0.05});
const ModelParams kMarkovTruth(0.5, 0.02, 0.005, 0.02, DeltaKernel{});
constexpr int kSeeds = 20;
constexpr std::int64_t kShots = 8192;

std::vector<BlochSeries> synthetic_series(const ModelParams& truth, std::uint64_t seed,
                                          const std::vector<std::string>& labels = {}) {
  const auto preps = PreparationSet::table_one();
  const auto ds = simulate_dataset(truth, preps, log_grid(0.1, 100.0, 25), kShots,
                                   std::nullopt, seed)
                      .dataset;
  ReconOptions opts;
  opts.seed = seed;
  std::vector<BlochSeries> out;
  for (const auto& p : preps.items()) {
    if (labels.empty() || std::find(labels.begin(), labels.end(), p.label) != labels.end()) {
      out.push_back(reconstruct_series(ds, p.label, opts));
    }
  }
  return out;
}

std::vector<FitResult> fit_chain(std::span<const BlochSeries> series, std::uint64_t seed,
                                 std::vector<ModelId> models) {
  std::vector<FitResult> fits;
  for (const ModelId id : models) {
    FitConfig cfg;
    cfg.model = id;
    cfg.seed = seed;
    for (const auto& f : fits) cfg.warm_starts.push_back(f.theta);
    fits.push_back(fit_model(series, cfg));
  }
  return fits;
}

// 1 ------------------------------------------------------------------------
Outcome solver_vs_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  const auto grid = testkit::uniform_grid(100.0, 0.005);
  double worst = 0.0;
  std::string worst_case;
  int rejected = 0;
  for (const ModelId id : {ModelId::M0, ModelId::M1, ModelId::M2}) {
    for (int n = 0; n < 20;) {
      const ModelParams theta = testkit::random_params(rng, id);
      if (!cp_valid_on(theta, 100.0)) {
        ++rejected;
        continue;
      }
      const auto rho0 = bloch_to_density(testkit::random_ball_vector(rng));
      const auto ref = reference_integrate(theta, rho0, grid);
      const Evolution evo(theta, rho0);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double d = max_bloch_deviation(evo.state(grid[i]), ref[i]);
        if (!(d <= worst)) {
          worst = d;
          worst_case = to_string(id) + " #" + std::to_string(n);
        }
      }
      ++n;
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-6 && elapsed < 120.0,
          "60 theta, max |dv| = " + sci(worst) + " (" + worst_case + "), " +
              std::to_string(rejected) + " non-CP draws skipped, " + sci(elapsed) + " s"};
}

// 2 ------------------------------------------------------------------------
Outcome structural_invariants() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool trace_ok = true;
  double herm = 0.0;
  for (const ModelId id : {ModelId::M0, ModelId::M1, ModelId::M2}) {
    for (int n = 0; n < 30; ++n) {
      const Evolution evo(testkit::random_params(rng, id),
                          bloch_to_density(testkit::random_ball_vector(rng)));
      for (double t = 0.0; t <= 500.0; t += 2.5) {
        const DensityMatrixd rho = evo.state(t);
        trace_ok = trace_ok && rho.trace() == cdouble(1.0);
        herm = std::max(herm, hermiticity_defect(rho));
      }
    }
  }
  double delta_defect = 0.0;
  for (int n = 0; n < 50; ++n) {
    const auto theta = testkit::random_params(rng, ModelId::M0);
    const auto rho0 = bloch_to_density(testkit::random_ball_vector(rng));
    const double t1 = 30.0 * u(rng), t2 = 30.0 * u(rng);
    const auto direct = Evolution(theta, rho0).state(t1 + t2);
    const auto composed = Evolution(theta, Evolution(theta, rho0).state(t1)).state(t2);
    delta_defect = std::max(delta_defect, (direct - composed).cwiseAbs().maxCoeff());
  }
  std::map<std::string, double> memory_defect;
  const std::vector<ModelParams> memory{ModelParams(0.5, 0.1, 0.002, 0.012, ExpKernel{0.05}),
                                        ModelParams(0.5, 0.1, 0.002, 0.012,
                                                    Rational2Kernel{0.1, 0.02, 0.3})};
  const auto plus = bloch_to_density(BlochVectord(1, 0, 0));
  for (const auto& theta : memory) {
    double& worst = memory_defect[kernel_tag(theta.kernel())];
    for (const double t1 : {2.0, 5.0, 10.0}) {
      for (const double t2 : {2.0, 5.0, 10.0}) {
        const auto direct = Evolution(theta, plus).state(t1 + t2);
        const auto composed = Evolution(theta, Evolution(theta, plus).state(t1)).state(t2);
        worst = std::max(worst, max_bloch_deviation(direct, composed));
      }
    }
  }
  bool memory_ok = true;
  std::string mem;
  for (const auto& [k, v] : memory_defect) {
    memory_ok = memory_ok && v > 1e-3;
    mem += " " + k + " " + sci(v);
  }
  return {trace_ok && herm < 1e-12 && delta_defect < 1e-10 && memory_ok,
          std::string("trace==1 ") + (trace_ok ? "yes" : "no") + ", hermiticity " + sci(herm) +
              ", Delta semigroup " + sci(delta_defect) + ", memory semigroup defect:" + mem};
}

// 3 ------------------------------------------------------------------------
Outcome cp_checker() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ut(0.0, 200.0);
  std::uniform_real_distribution<double> ua(-4.0, 0.5);
  int agree = 0, violations = 0, unstable = 0;
  double sum_err = 0.0;
  const int samples = 1000;
  const auto growth_rate = [](const Propagator& prop) {
    double rate = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      for (const auto& term : prop.terms(i)) rate = std::max(rate, term.pole.real());
    }
    return rate;
  };
  for (int n = 0; n < samples; ++n) {
    ModelParams theta = testkit::random_params(rng, ModelId(n % 3));
    // Every third Rational2 draw comes from a family with a0 mostly negative.
    // Those kernels usually break CP by making coherences grow, so t is kept
    // where the growth factor stays below 1e4.
    if (n % 9 == 2) {
      theta = ModelParams(theta.omega_z(), 0.2, theta.gamma_plus(), theta.gamma_minus(),
                          Rational2Kernel{ua(rng), testkit::log_uniform(rng, 0.2, 1.0),
                                          testkit::log_uniform(rng, 0.1, 1.0)});
    }
    const Propagator prop = build_propagator(theta);
    const double rate = growth_rate(prop);
    unstable += rate > 0.0;
    const double t = rate > 0.0 ? std::min(200.0, std::log(1e4) / rate) * ut(rng) / 200.0 : ut(rng);
    const ChoiReport rep = choi_check(prop, theta, t);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(choi_matrix(prop, theta, t));
    agree += rep.cp_ok == (es.eigenvalues()(0) >= -kCpTolerance);
    violations += !rep.cp_ok;
    cdouble sum = 0.0;
    for (const auto& e : rep.eigenvalues) sum += e;
    sum_err = std::max(sum_err, std::abs(sum - 2.0));
  }
  return {agree == samples && sum_err <= 1e-10,
          std::to_string(agree) + "/" + std::to_string(samples) + " agree (" +
              std::to_string(violations) + " non-CP, " + std::to_string(unstable) +
              " with growing modes), max |sum - 2| = " + sci(sum_err)};
}

// 4 ------------------------------------------------------------------------
Outcome mitigation() {
  const Eigen::Vector2d p(0.3, 0.7);
  const Eigen::Vector2d once = bayes_unfold(p, ReadoutModel{}, 1);
  const bool fixed = once == p && bayes_unfold(once, ReadoutModel{}, 1) == once;

  ReadoutModel m;
  m.m << 0.9, 0.2, 0.1, 0.8;
  std::vector<Eigen::Vector2d> trace;
  const Eigen::Vector2d out = bayes_unfold({0.9, 0.1}, m, 100, &trace);
  bool simplex = true;
  for (const auto& v : trace) {
    simplex = simplex && v.minCoeff() >= 0.0 && std::abs(v.sum() - 1.0) < 1e-12;
  }
  const double err = std::max(std::abs(out(0) - 1.0), std::abs(out(1)));
  return {fixed && simplex && err <= 1e-6,
          std::string("identity fixed point ") + (fixed ? "yes" : "no") + ", simplex " +
              (simplex ? "kept" : "left") + ", 100 iterations give (" + sci(out(0)) + ", " +
              sci(out(1)) + "), |error| = " + sci(err) + " vs 1e-6"};
}

// 5 and 6 ------------------------------------------------------------------
struct RecoveryRun {
  int recovered = 0;
  int ranked = 0;
  double worst_rel = 0.0;
  double min_delta0 = std::numeric_limits<double>::infinity();
  double seconds = 0.0;
};

const RecoveryRun& recovery_run() {
  static const RecoveryRun run = [] {
    RecoveryRun r;
    const auto t0 = std::chrono::steady_clock::now();
    for (int seed = 1; seed <= kSeeds; ++seed) {
      const auto series = synthetic_series(kMemoryTruth, seed);
      const auto fits = fit_chain(series, seed, {ModelId::M0, ModelId::M1, ModelId::M2});
      const auto& f = fits[1].theta;
      const double rel = std::max({std::abs(f.omega_z() / kMemoryTruth.omega_z() - 1),
                                   std::abs(f.gamma_z() / kMemoryTruth.gamma_z() - 1),
                                   std::abs(f.gamma_plus() / kMemoryTruth.gamma_plus() - 1),
                                   std::abs(f.gamma_minus() / kMemoryTruth.gamma_minus() - 1)});
      r.worst_rel = std::max(r.worst_rel, rel);
      r.recovered += rel < 0.05;
      const auto ranking = aic_rank(fits);
      double delta0 = 0.0;
      for (const auto& e : ranking) {
        if (e.model == ModelId::M0) delta0 = e.delta;
      }
      r.min_delta0 = std::min(r.min_delta0, delta0);
      r.ranked += ranking.front().model != ModelId::M0 && delta0 > 4.0;
    }
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome parameter_recovery() {
  const auto& r = recovery_run();
  return {r.recovered >= 18 && r.seconds < 600.0,
          std::to_string(r.recovered) + "/20 seeds within 5% (worst " + sci(100 * r.worst_rel) +
              "%), " + sci(r.seconds) + " s for fitting M0, M1, M2"};
}

Outcome model_selection() {
  const auto& r = recovery_run();
  return {r.ranked >= 18, std::to_string(r.ranked) + "/20 seeds prefer M1/M2 with delta0 > 4 (min delta0 " +
                              sci(r.min_delta0) + ")"};
}

// 7 ------------------------------------------------------------------------
Outcome train_test() {
  const std::vector<std::string> train{"psi0"};
  const std::vector<std::string> test{"psi1", "psi2", "psi3", "psi4"};
  int better = 0;
  double markov_worst = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto tr = synthetic_series(kMemoryTruth, seed, train);
    const auto te = synthetic_series(kMemoryTruth, seed, test);
    const auto fits = fit_chain(tr, seed, {ModelId::M0, ModelId::M1});
    const double m0 = validate_predictions(fits[0], te).pooled.p50;
    const double m1 = validate_predictions(fits[1], te).pooled.p50;
    better += m1 < m0;

    const auto mtr = synthetic_series(kMarkovTruth, 1000 + seed, train);
    const auto mte = synthetic_series(kMarkovTruth, 1000 + seed, test);
    const auto mfit = fit_chain(mtr, seed, {ModelId::M0});
    markov_worst = std::max(markov_worst, validate_predictions(mfit[0], mte).pooled.p50);
  }
  return {better >= 18 && markov_worst <= 0.02,
          "M1 median below M0 in " + std::to_string(better) +
              "/20 seeds; Markov truth M0 median <= " + sci(markov_worst) + " in all 20"};
}

// 8 ------------------------------------------------------------------------
Outcome non_markovianity() {
  std::mt19937_64 rng(88);
  bool zero = true;
  for (int n = 0; n < 50; ++n) {
    const auto theta = testkit::random_params(rng, ModelId::M0);
    for (const auto& [a, b] : default_pairs()) zero = zero && n_measure(theta, a, b, 100.0).n == 0.0;
  }

  const std::vector<ModelParams> memory{ModelParams(0.5, 0.1, 0.002, 0.012, ExpKernel{0.02}),
                                        ModelParams(0.5, 0.1, 0.002, 0.012,
                                                    Rational2Kernel{0.1, 0.02, 0.3})};
  // Dense exact-probability samples through the tomography pipeline.
  const PreparationSet preps = PreparationSet::cardinal();
  const auto times = lin_grid(0.0, 100.0, 2001);
  double worst_rel = 0.0, worst_change = 0.0;
  bool converged = true;
  for (const auto& theta : memory) {
    const auto ds = simulate_dataset(theta, preps, times, 0, std::nullopt, 0).dataset;
    for (const auto& [a, b] : default_pairs()) {
      const auto exact = n_measure(theta, a, b, 100.0);
      converged = converged && exact.converged && exact.last_change < 1e-4;
      worst_change = std::max(worst_change, exact.last_change);
      const auto data = n_measure(distance_series(reconstruct_series(ds, a.label),
                                                  reconstruct_series(ds, b.label)));
      worst_rel = std::max(worst_rel, std::abs(data.n / exact.n - 1.0));
    }
  }
  return {zero && worst_rel < 0.02 && converged,
          std::string("Delta N == 0 on 50 theta x 2 pairs: ") + (zero ? "yes" : "no") +
              "; data vs model worst " + sci(100 * worst_rel) + "%; last grid change " +
              sci(worst_change)};
}

// 9 ------------------------------------------------------------------------
Outcome degenerate_pole() {
  const ModelParams theta = testkit::double_pole_params();
  const Propagator prop = build_propagator(theta);
  int multiplicity = 0;
  for (const auto& term : prop.terms(1)) multiplicity = std::max(multiplicity, term.multiplicity);
  const auto grid = testkit::uniform_grid(100.0, 0.005);
  const auto rho0 = bloch_to_density(BlochVectord(0, 1, 0));
  const auto ref = reference_integrate(theta, rho0, grid);
  const Evolution evo(theta, prop, rho0);
  double worst = 0.0;
  bool finite = true;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto rho = evo.state(grid[i]);
    finite = finite && rho.allFinite();
    worst = std::max(worst, max_bloch_deviation(rho, ref[i]));
  }
  return {finite && worst < 1e-6 && multiplicity == 2,
          "pole multiplicity " + std::to_string(multiplicity) + ", max |dv| = " + sci(worst) +
              (finite ? "" : ", non-finite values")};
}

// 10 -----------------------------------------------------------------------
std::string g_cli = PMME_LAB_EXE;

Outcome reproducibility() {
  testkit::ScratchDir dir("acceptance");
  testkit::spit(dir / "theta.json", testkit::kMemoryTheta);
  const std::string d = dir.path().string();
  struct Step {
    std::string name;
    std::string args;
    std::vector<std::string> outputs;
  };
  const std::vector<Step> steps = {
      {"simulate", "simulate --theta " + d + "/theta.json --times log:0.1:100:25 --shots 8192 --seed 7 --readout 0.97,0.05,0.03,0.95 -o " + d + "/data.json --probabilities " + d + "/probs.csv", {"data.json", "probs.csv"}},
      {"mitigate", "mitigate --data " + d + "/data.json -o " + d + "/mitigated.csv", {"mitigated.csv"}},
      {"tomo", "tomo --data " + d + "/data.json --seed 7 -o " + d + "/series.json --csv-dir " + d + "/series", {"series.json", "series/psi0.csv", "series/psi4.csv"}},
      {"fit", "fit --data " + d + "/data.json --prep psi0 --models M0,M1,M2 --seed 1 --jobs 2 -o " + d + "/fits.json", {"fits.json"}},
      {"predict", "predict --fits " + d + "/fits.json --state psi2 -o " + d + "/traj.csv", {"traj.csv"}},
      {"validate", "validate --fits " + d + "/fits.json --data " + d + "/data.json --preps psi1,psi2,psi3,psi4 -o " + d + "/validation.csv --json " + d + "/validation.json", {"validation.csv", "validation.json"}},
      {"nonmark", "nonmark --fits " + d + "/fits.json --horizon 100 --seed 3 -o " + d + "/nonmark.json --csv-dir " + d + "/nm", {"nonmark.json", "nm/model_sigma_plus_minus.csv"}},
      {"cpcheck", "cpcheck --fits " + d + "/fits.json --model M2 -o " + d + "/cp.csv --json " + d + "/cp.json", {"cp.csv", "cp.json"}},
      {"report", "report --data " + d + "/data.json --fits " + d + "/fits.json --out-dir " + d + "/report --seed 5", {"report/report.json", "report/validation.csv", "report/ranking.csv", "report/predicted_M1_psi3.csv", "report/sigma_M2_plusi_minusi.csv"}},
  };
  std::vector<std::string> failed;
  int compared = 0;
  for (const auto& s : steps) {
    std::map<std::string, std::string> first;
    for (int run = 0; run < 2; ++run) {
      const std::string cmd = g_cli + " " + s.args + " --no-timestamp > " + d + "/stdout.txt 2> " + d + "/stderr.txt";
      if (std::system(cmd.c_str()) != 0) {
        failed.push_back(s.name + " (exit: " + testkit::slurp(d + "/stderr.txt") + ")");
        break;
      }
      for (const auto& o : s.outputs) {
        const std::string text = testkit::slurp(dir.path() / o);
        if (run == 0) {
          first[o] = text;
        } else {
          ++compared;
          if (text.empty() || text != first[o]) failed.push_back(s.name + ":" + o);
        }
      }
    }
  }
  std::string detail = std::to_string(steps.size()) + " commands, " + std::to_string(compared) +
                       " outputs compared";
  for (const auto& f : failed) detail += "; differs/failed: " + f;
  return {failed.empty(), detail};
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*check)();
};

const Criterion kCriteria[] = {
    {1, "analytic solver matches time-domain oracle", solver_vs_oracle},
    {2, "structural invariants", structural_invariants},
    {3, "closed-form CP check matches numeric Choi spectrum", cp_checker},
    {4, "readout unfolding", mitigation},
    {5, "end-to-end parameter recovery", parameter_recovery},
    {6, "AIC model selection", model_selection},
    {7, "train/test prediction", train_test},
    {8, "non-Markovianity measure", non_markovianity},
    {9, "degenerate-pole robustness", degenerate_pole},
    {10, "CLI reproducibility", reproducibility},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string part; std::getline(ss, part, ',');) only.insert(std::stoi(part));
    } else if (a == "--cli" && i + 1 < argc) {
      g_cli = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--cli path]\n";
      return 64;
    }
  }
  bool all = true;
  for (const auto& c : kCriteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << c.title
              << " | " << o.detail << " [" << sci(seconds_since(t0)) << " s]" << std::endl;
  }
  return all ? 0 : 1;
}
