#include "pmme/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pmme/error.hpp"
#include "pmme/experiment.hpp"
#include "pmme/fit.hpp"
#include "pmme/format.hpp"
#include "pmme/nonmark.hpp"
#include "pmme/params_json.hpp"
#include "pmme/recon.hpp"
#include "pmme/solver.hpp"

#ifndef PMME_VERSION
#define PMME_VERSION "0.0.0"
#endif

namespace pmme::cli {

std::string version() { return PMME_VERSION; }

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Flat JSON object whose keys are long option names.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      const std::string name = opt->get_single_name();
      if (name.empty() || name == "help" || name == "config") continue;
      std::vector<std::string> values = opt->results();
      if (values.empty()) {
        if (name == "seed") continue;
        if (!default_also || opt->get_default_str().empty()) continue;
        values = {opt->get_default_str()};
      }
      j[name] = values.size() == 1 ? json(values[0]) : json(values);
    }
    return j.dump();
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_null()) continue;
      CLI::ConfigItem item;
      item.name = key;
      const auto text = [](const json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
      };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(text(v));
      } else {
        item.inputs.push_back(text(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }
};

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path + "': " + e.what());
  }
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Context {
  std::string name;
  CLI::App* app = nullptr;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
  CLI::Option* seed_opt = nullptr;
  std::uint64_t seed = 0;
  bool no_timestamp = false;
  int verbose = 0;

  bool has_seed() const { return seed_opt && seed_opt->count() > 0; }
  std::uint64_t require_seed() const {
    if (!has_seed()) {
      throw ValidationError("--seed is required (or set PMME_LAB_SEED)");
    }
    return seed;
  }
  void log(const std::string& msg) const {
    if (verbose > 0) *err << name << ": " << msg << '\n';
  }

  json provenance() const {
    json j = {{"tool", "pmme_lab"}, {"version", version()}, {"command", name}};
    j["config"] = json::parse(app->config_to_str(true, false));
    if (has_seed()) j["seed"] = seed;
    if (!no_timestamp) j["created"] = utc_now();
    return j;
  }

  // Empty path or "-" writes to standard output.
  void write(const std::string& path, const std::string& text) const {
    if (path.empty() || path == "-") {
      *out << text;
      return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + path + "'");
    f << text;
    if (!f) throw ValidationError("write failed for '" + path + "'");
  }
  void write_json(const std::string& path, const json& j) const { write(path, j.dump(1) + "\n"); }
};

// ---------------------------------------------------------------------------
// Shared inputs.

ModelParams load_theta(const std::string& path) {
  json j = load_json(path);
  if (j.contains("theta")) j = j["theta"];
  return params_from_json(j);
}

struct FitsFile {
  std::vector<FitResult> fits;
  std::vector<RankEntry> ranking;
  std::vector<std::string> train;
  json raw;
};

FitsFile load_fits(const std::string& path) {
  FitsFile f;
  f.raw = load_json(path);
  if (!f.raw.contains("fits") || !f.raw["fits"].is_array() || f.raw["fits"].empty()) {
    throw ValidationError("'" + path + "': no fits");
  }
  for (const auto& j : f.raw["fits"]) f.fits.push_back(fit_from_json(j));
  f.ranking = aic_rank(f.fits);
  f.train = f.fits.front().series_labels;
  return f;
}

const FitResult& select_fit(const FitsFile& f, const std::string& model) {
  const ModelId id = model.empty() ? f.ranking.front().model : model_id_from_string(model);
  for (const auto& r : f.fits) {
    if (r.model == id) return r;
  }
  throw ValidationError("fits file has no " + to_string(id) + " fit");
}

// Parameters from --theta or from the chosen fit in --fits.
struct ThetaSource {
  std::string theta_path;
  std::string fits_path;
  std::string model;

  void add(CLI::App& app) {
    auto* t = app.add_option("--theta", theta_path, "Model parameter JSON");
    auto* f = app.add_option("--fits", fits_path, "Fits JSON from the fit command");
    t->excludes(f);
    app.add_option("--model", model, "Model to use from --fits (default: best AIC)");
  }

  ModelParams resolve() const {
    if (!theta_path.empty()) return load_theta(theta_path);
    if (!fits_path.empty()) return select_fit(load_fits(fits_path), model).theta;
    throw ValidationError("one of --theta or --fits is required");
  }
};

std::optional<ReadoutModel> parse_readout(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto parts = split(s);
  if (parts.size() != 4) {
    throw ValidationError("--readout expects m00,m01,m10,m11 (column-stochastic)");
  }
  ReadoutModel r;
  try {
    r.m << std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]), std::stod(parts[3]);
  } catch (const std::exception&) {
    throw ValidationError("--readout: bad number in '" + s + "'");
  }
  r.validate();
  return r;
}

Preparation parse_state(const std::string& s) {
  if (s.find(',') != std::string::npos) {
    const auto parts = split(s);
    if (parts.size() != 3) throw ValidationError("--state expects a label or x,y,z");
    BlochVectord v;
    try {
      v = BlochVectord(std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]));
    } catch (const std::exception&) {
      throw ValidationError("--state: bad number in '" + s + "'");
    }
    if (v.norm() > 1.0 + 1e-12) throw ValidationError("--state: Bloch vector outside the ball");
    return {"custom", v};
  }
  return PreparationSet::parse(s).items().front();
}

std::pair<Preparation, Preparation> parse_pair(const std::string& s) {
  const auto items = PreparationSet::parse(s).items();
  if (items.size() != 2) throw ValidationError("--pair expects two labels, e.g. plus,minus");
  return {items[0], items[1]};
}

// Series from a tomo output or reconstructed from a raw dataset.
std::vector<BlochSeries> load_series(const std::string& path, std::vector<std::string> labels,
                                     const ReconOptions& opts) {
  const json j = load_json(path);
  std::vector<BlochSeries> all;
  std::vector<std::string> available;
  std::optional<TomographyDataset> ds;
  if (j.contains("series")) {
    for (const auto& s : j["series"]) all.push_back(series_from_json(s));
    for (const auto& s : all) available.push_back(s.prep_label);
  } else {
    ds = dataset_from_json(j);
    for (const auto& p : ds->preps.items()) {
      if (!ds->times(p.label).empty()) available.push_back(p.label);
    }
  }
  if (labels.empty()) labels = available;
  std::vector<BlochSeries> out;
  for (const auto& label : labels) {
    if (ds) {
      out.push_back(reconstruct_series(*ds, label, opts));
      continue;
    }
    const auto it = std::find_if(all.begin(), all.end(),
                                 [&](const BlochSeries& s) { return s.prep_label == label; });
    if (it == all.end()) throw ValidationError("no series for preparation '" + label + "'");
    out.push_back(*it);
  }
  return out;
}

std::vector<std::string> dataset_labels(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& s : load_series(path, {}, ReconOptions{kUnfoldIterations, 0, 0, false})) {
    out.push_back(s.prep_label);
  }
  return out;
}

std::vector<std::string> complement(const std::vector<std::string>& all,
                                    const std::vector<std::string>& used) {
  std::vector<std::string> out;
  for (const auto& l : all) {
    if (std::find(used.begin(), used.end(), l) == used.end()) out.push_back(l);
  }
  return out;
}

std::string to_csv(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

json pair_json(const Preparation& a, const Preparation& b) { return {a.label, b.label}; }

void write_cp_csv(std::ostream& os, const std::vector<ChoiReport>& reports) {
  os << "t,lambda1,lambda2,lambda3,lambda4,margin,cp_ok\n";
  for (const auto& r : reports) {
    os << format_number(r.time);
    for (const auto& l : r.eigenvalues) os << ',' << format_number(l.real());
    os << ',' << format_number(r.margin) << ',' << (r.cp_ok ? 1 : 0) << '\n';
  }
}

json cp_summary(const std::vector<ChoiReport>& reports) {
  int violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  json first = nullptr;
  for (const auto& r : reports) {
    min_margin = std::min(min_margin, r.margin);
    if (!r.cp_ok) {
      if (violations == 0) first = r.time;
      ++violations;
    }
  }
  return {{"n_times", reports.size()},
          {"violations", violations},
          {"min_margin", min_margin},
          {"first_violation_t", first}};
}

std::vector<ChoiReport> cp_scan(const ModelParams& theta, const std::vector<double>& times) {
  const Propagator prop = build_propagator(theta);
  std::vector<ChoiReport> out;
  out.reserve(times.size());
  for (const double t : times) out.push_back(choi_check(prop, theta, t));
  return out;
}

std::string trajectory_csv(const ModelParams& theta, const BlochVectord& v0,
                           const std::vector<double>& times) {
  const Evolution ev(theta, bloch_to_density(v0));
  std::vector<DensityMatrixd> states;
  states.reserve(times.size());
  for (const double t : times) states.push_back(ev.state(t));
  return to_csv([&](std::ostream& os) { write_trajectory_csv(os, times, states); });
}

// ---------------------------------------------------------------------------
// Commands. Each registers its options and returns the action to run after
// parsing.

using Action = std::function<int()>;

Action cmd_simulate(CLI::App& app, Context& ctx) {
  struct O {
    std::string theta, preps = "tableI", times = "log:0.1:100:25", readout, output, probs;
    std::int64_t shots = 8192;
  };
  auto o = std::make_shared<O>();
  app.add_option("--theta", o->theta, "Model parameter JSON")->required();
  app.add_option("--preps", o->preps, "tableI or comma-separated state labels");
  app.add_option("--times", o->times, "log:a:b:n, lin:a:b:n or a comma list (us)");
  app.add_option("--shots", o->shots, "Shots per basis; 0 stores exact probabilities")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--readout", o->readout, "Response matrix m00,m01,m10,m11");
  app.add_option("-o,--output", o->output, "Dataset JSON (default stdout)");
  app.add_option("--probabilities", o->probs, "Also write prep,t,basis,p_one CSV");
  return [&ctx, o] {
    const ModelParams theta = load_theta(o->theta);
    const PreparationSet preps = PreparationSet::parse(o->preps);
    const auto times = parse_time_grid(o->times);
    const std::uint64_t seed = o->shots > 0 ? ctx.require_seed() : ctx.seed;
    Simulation sim = simulate_dataset(theta, preps, times, o->shots, parse_readout(o->readout), seed);
    sim.dataset.metadata.labels["tool_version"] = version();
    if (!ctx.no_timestamp) sim.dataset.metadata.labels["created"] = utc_now();
    json j = dataset_to_json(sim.dataset);
    j["provenance"] = ctx.provenance();
    ctx.write_json(o->output, j);
    if (!o->probs.empty()) {
      ctx.write(o->probs, to_csv([&](std::ostream& os) { write_probabilities_csv(os, sim.dataset); }));
    }
    *ctx.err << "simulate: " << sim.dataset.records.size() << " records\n";
    for (const auto& w : sim.cp_warnings) {
      *ctx.err << "warning: map not completely positive at t = " << format_number(w.time)
               << " (margin " << format_number(w.margin) << ")\n";
    }
    return kExitOk;
  };
}

Action cmd_mitigate(CLI::App& app, Context& ctx) {
  struct O {
    std::string data, output;
    int iterations = kUnfoldIterations;
  };
  auto o = std::make_shared<O>();
  app.add_option("--data", o->data, "Dataset JSON")->required();
  app.add_option("--iterations", o->iterations, "Unfolding iterations")->check(CLI::PositiveNumber);
  app.add_option("-o,--output", o->output, "CSV prep,t,basis,p_one,p_one_mitigated");
  return [&ctx, o] {
    const TomographyDataset ds = load_dataset(o->data);
    if (!ds.readout) *ctx.err << "mitigate: dataset has no readout model; frequencies unchanged\n";
    const auto mitigated = mitigate_dataset(ds, o->iterations);
    std::ostringstream os;
    os << "prep,t,basis,p_one,p_one_mitigated\n";
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      const auto& r = ds.records[i];
      os << r.prep << ',' << format_number(r.t) << ',' << to_char(r.basis) << ','
         << format_number(r.frequency()) << ',' << format_number(mitigated[i]) << '\n';
    }
    ctx.write(o->output, os.str());
    return kExitOk;
  };
}

Action cmd_tomo(CLI::App& app, Context& ctx) {
  struct O {
    std::string data, preps, output, csv_dir;
    int resamples = kBootstrapResamples, iterations = kUnfoldIterations;
    bool no_mitigate = false;
  };
  auto o = std::make_shared<O>();
  app.add_option("--data", o->data, "Dataset JSON")->required();
  app.add_option("--preps", o->preps, "Comma-separated labels (default: all)");
  app.add_option("--resamples", o->resamples, "Bootstrap resamples for sigma (0 = floor only)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--iterations", o->iterations, "Unfolding iterations")->check(CLI::PositiveNumber);
  app.add_flag("--no-mitigate", o->no_mitigate, "Ignore the dataset's readout model");
  app.add_option("-o,--output", o->output, "Series JSON (default stdout)");
  app.add_option("--csv-dir", o->csv_dir, "Also write one t,vx,vy,vz,sx,sy,sz CSV per preparation");
  return [&ctx, o] {
    ReconOptions opts{o->iterations, o->resamples, 0, !o->no_mitigate};
    if (o->resamples > 0) opts.seed = ctx.require_seed();
    const auto series = load_series(o->data, split(o->preps), opts);
    json j = ctx.provenance();
    j["series"] = json::array();
    for (const auto& s : series) j["series"].push_back(series_to_json(s));
    ctx.write_json(o->output, j);
    if (!o->csv_dir.empty()) {
      fs::create_directories(o->csv_dir);
      for (const auto& s : series) {
        ctx.write((fs::path(o->csv_dir) / (s.prep_label + ".csv")).string(),
                  to_csv([&](std::ostream& os) { write_series_csv(os, s); }));
      }
    }
    return kExitOk;
  };
}

Action cmd_fit(CLI::App& app, Context& ctx) {
  struct O {
    std::string data, preps, models = "M0,M1,M2", output;
    int multistart = 16, jobs = 1, bootstrap = 0, resamples = kBootstrapResamples;
    int max_iterations = 20000;
    double tolerance = 1e-10;
  };
  auto o = std::make_shared<O>();
  app.add_option("--data", o->data, "Dataset or series JSON")->required();
  app.add_option("--prep,--preps", o->preps, "Training preparations (default: all)");
  app.add_option("--models", o->models, "Comma-separated subset of M0,M1,M2");
  app.add_option("--multistart", o->multistart, "Starting points per model")->check(CLI::PositiveNumber);
  app.add_option("--jobs", o->jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--bootstrap", o->bootstrap, "Parametric bootstrap replicates for 95% intervals")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--resamples", o->resamples, "Tomography bootstrap resamples for sigma")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--tolerance", o->tolerance, "Optimizer function tolerance");
  app.add_option("--max-iterations", o->max_iterations, "Evaluation budget per start");
  app.add_option("-o,--output", o->output, "Fits JSON (default stdout)");
  return [&ctx, o] {
    const std::uint64_t seed = ctx.require_seed();
    const auto series = load_series(o->data, split(o->preps), ReconOptions{kUnfoldIterations, o->resamples, seed, true});
    std::vector<ModelId> models;
    for (const auto& m : split(o->models)) models.push_back(model_id_from_string(m));
    if (models.empty()) throw ValidationError("--models is empty");
    std::sort(models.begin(), models.end(),
              [](ModelId a, ModelId b) { return parameter_count(a) < parameter_count(b); });
    models.erase(std::unique(models.begin(), models.end()), models.end());

    std::vector<FitResult> fits;
    for (const ModelId id : models) {
      FitConfig cfg;
      cfg.model = id;
      cfg.multistart = o->multistart;
      cfg.tolerance = o->tolerance;
      cfg.max_iterations = o->max_iterations;
      cfg.seed = seed;
      cfg.jobs = o->jobs;
      cfg.bootstrap = o->bootstrap;
      for (const auto& f : fits) cfg.warm_starts.push_back(f.theta);
      ctx.log("fitting " + to_string(id));
      fits.push_back(fit_model(series, cfg));
    }
    const auto ranking = aic_rank(fits);
    json j = ctx.provenance();
    j["train_preps"] = fits.front().series_labels;
    j["fits"] = json::array();
    for (const auto& f : fits) j["fits"].push_back(fit_to_json(f));
    j["ranking"] = ranking_to_json(ranking);
    ctx.write_json(o->output, j);
    for (const auto& e : ranking) {
      *ctx.err << to_string(e.model) << "  AIC " << format_number(e.aic) << "  delta "
               << format_number(e.delta) << "  " << e.band << '\n';
    }
    for (const auto& f : fits) {
      if (!f.converged) *ctx.err << "warning: " << to_string(f.model) << " fit did not converge\n";
    }
    return kExitOk;
  };
}

Action cmd_predict(CLI::App& app, Context& ctx) {
  struct O {
    ThetaSource src;
    std::string state = "psi0", times = "lin:0:100:1001", output;
  };
  auto o = std::make_shared<O>();
  o->src.add(app);
  app.add_option("--state", o->state, "Initial state label or Bloch vector x,y,z");
  app.add_option("--times", o->times, "Time grid (us)");
  app.add_option("-o,--output", o->output, "CSV t,vx,vy,vz,purity");
  return [&ctx, o] {
    const ModelParams theta = o->src.resolve();
    ctx.write(o->output, trajectory_csv(theta, parse_state(o->state).bloch, parse_time_grid(o->times)));
    return kExitOk;
  };
}

Action cmd_validate(CLI::App& app, Context& ctx) {
  struct O {
    std::string fits, data, preps, models, output, json_out;
  };
  auto o = std::make_shared<O>();
  app.add_option("--fits", o->fits, "Fits JSON")->required();
  app.add_option("--data", o->data, "Dataset or series JSON")->required();
  app.add_option("--preps", o->preps, "Test preparations (default: all not used for fitting)");
  app.add_option("--models", o->models, "Subset of fitted models (default: all)");
  app.add_option("-o,--output", o->output, "CSV model,statistic,p5,p50,p95");
  app.add_option("--json", o->json_out, "Also write per-point distances as JSON");
  return [&ctx, o] {
    const FitsFile f = load_fits(o->fits);
    auto labels = split(o->preps);
    if (labels.empty()) labels = complement(dataset_labels(o->data), f.train);
    if (labels.empty()) throw ValidationError("validate: no test preparations left");
    const auto series = load_series(o->data, labels, ReconOptions{kUnfoldIterations, 0, 0, true});
    std::vector<ValidationReport> reports;
    const auto wanted = split(o->models);
    for (const auto& fit : f.fits) {
      if (!wanted.empty() &&
          std::find(wanted.begin(), wanted.end(), to_string(fit.model)) == wanted.end()) {
        continue;
      }
      reports.push_back(validate_predictions(fit, series));
    }
    if (reports.empty()) throw ValidationError("validate: no matching models");
    ctx.write(o->output, to_csv([&](std::ostream& os) { write_validation_csv(os, reports); }));
    if (!o->json_out.empty()) {
      json j = ctx.provenance();
      j["reports"] = json::array();
      for (const auto& r : reports) j["reports"].push_back(validation_to_json(r));
      ctx.write_json(o->json_out, j);
    }
    return kExitOk;
  };
}

Action cmd_nonmark(CLI::App& app, Context& ctx) {
  struct O {
    ThetaSource src;
    std::string data, output, csv_dir;
    std::vector<std::string> pairs;
    double horizon = 100.0;
    int points = 2000, bootstrap = 0;
  };
  auto o = std::make_shared<O>();
  o->src.add(app);
  app.add_option("--data", o->data, "Dataset or series JSON for the data path");
  app.add_option("--pair", o->pairs, "State pair a,b (repeatable; default plus,minus and plusi,minusi)");
  app.add_option("--horizon", o->horizon, "Model path horizon (us)")->check(CLI::PositiveNumber);
  app.add_option("--points", o->points, "Initial model grid size")->check(CLI::Range(3, 10000000));
  app.add_option("--bootstrap", o->bootstrap, "Data path bootstrap resamples")->check(CLI::NonNegativeNumber);
  app.add_option("-o,--output", o->output, "Report JSON (default stdout)");
  app.add_option("--csv-dir", o->csv_dir, "Also write t,D and t,sigma CSVs");
  return [&ctx, o] {
    const bool model_path = !o->src.theta_path.empty() || !o->src.fits_path.empty();
    if (!model_path && o->data.empty()) {
      throw ValidationError("nonmark: give --theta/--fits, --data, or both");
    }
    std::vector<std::pair<Preparation, Preparation>> pairs;
    for (const auto& p : o->pairs) pairs.push_back(parse_pair(p));
    if (pairs.empty()) pairs = default_pairs();
    if (!o->csv_dir.empty()) fs::create_directories(o->csv_dir);
    const auto csv = [&](const std::string& stem, const std::string& text) {
      if (!o->csv_dir.empty()) ctx.write((fs::path(o->csv_dir) / (stem + ".csv")).string(), text);
    };

    json j = ctx.provenance();
    std::optional<ModelParams> theta;
    if (model_path) {
      theta = o->src.resolve();
      j["theta"] = params_to_json(*theta);
    }
    const std::uint64_t seed = o->bootstrap > 0 ? ctx.require_seed() : 0;
    j["pairs"] = json::array();
    for (const auto& [a, b] : pairs) {
      json entry = {{"pair", pair_json(a, b)}};
      const std::string stem = a.label + "_" + b.label;
      if (theta) {
        ModelMeasureOptions mo;
        mo.initial_points = o->points;
        const auto r = n_measure(*theta, a, b, o->horizon, mo);
        if (!r.converged) *ctx.err << "warning: model N not converged for " << stem << '\n';
        entry["model"] = nonmark_to_json(r);
        const auto d = model_distance_series(*theta, a, b, lin_grid(0.0, o->horizon, 1001));
        csv("model_distance_" + stem, to_csv([&](std::ostream& os) { write_distance_csv(os, d); }));
        csv("model_sigma_" + stem, to_csv([&](std::ostream& os) { write_sigma_csv(os, sigma_series(d)); }));
      }
      if (!o->data.empty()) {
        const int resamples = o->bootstrap > 0 ? kBootstrapResamples : 0;
        const auto s = load_series(o->data, {a.label, b.label},
                                   ReconOptions{kUnfoldIterations, resamples, seed, true});
        const auto r = o->bootstrap > 0 ? n_measure_bootstrap(s[0], s[1], o->bootstrap, seed)
                                        : n_measure(distance_series(s[0], s[1]));
        entry["data"] = nonmark_to_json(r);
        const auto d = distance_series(s[0], s[1]);
        csv("data_distance_" + stem, to_csv([&](std::ostream& os) { write_distance_csv(os, d); }));
        csv("data_sigma_" + stem, to_csv([&](std::ostream& os) { write_sigma_csv(os, sigma_series(d)); }));
      }
      j["pairs"].push_back(entry);
    }
    ctx.write_json(o->output, j);
    return kExitOk;
  };
}

Action cmd_cpcheck(CLI::App& app, Context& ctx) {
  struct O {
    ThetaSource src;
    std::string times = "lin:0:100:1001", output, json_out;
  };
  auto o = std::make_shared<O>();
  o->src.add(app);
  app.add_option("--times", o->times, "Time grid (us)");
  app.add_option("-o,--output", o->output, "CSV t,lambda1..lambda4,margin,cp_ok");
  app.add_option("--json", o->json_out, "Also write a JSON summary");
  return [&ctx, o] {
    const ModelParams theta = o->src.resolve();
    const auto reports = cp_scan(theta, parse_time_grid(o->times));
    ctx.write(o->output, to_csv([&](std::ostream& os) { write_cp_csv(os, reports); }));
    const json summary = cp_summary(reports);
    if (!o->json_out.empty()) {
      json j = ctx.provenance();
      j["theta"] = params_to_json(theta);
      j["summary"] = summary;
      ctx.write_json(o->json_out, j);
    }
    *ctx.err << "cpcheck: " << summary["violations"].get<int>() << " of " << reports.size()
             << " times violate complete positivity\n";
    return kExitOk;
  };
}

Action cmd_report(CLI::App& app, Context& ctx) {
  struct O {
    std::string data, fits, out_dir, test_preps;
    double horizon = 100.0;
    int points = 1001, resamples = kBootstrapResamples;
  };
  auto o = std::make_shared<O>();
  app.add_option("--data", o->data, "Dataset or series JSON")->required();
  app.add_option("--fits", o->fits, "Fits JSON")->required();
  app.add_option("--out-dir", o->out_dir, "Output directory")->required();
  app.add_option("--test-preps", o->test_preps, "Validation preparations (default: all unused)");
  app.add_option("--horizon", o->horizon, "Prediction and non-Markovianity horizon (us)")
      ->check(CLI::PositiveNumber);
  app.add_option("--points", o->points, "Prediction grid size")->check(CLI::Range(2, 10000000));
  app.add_option("--resamples", o->resamples, "Tomography bootstrap resamples")
      ->check(CLI::NonNegativeNumber);
  return [&ctx, o] {
    const std::uint64_t seed = ctx.require_seed();
    const FitsFile f = load_fits(o->fits);
    const fs::path dir(o->out_dir);
    fs::create_directories(dir);
    const auto put = [&](const std::string& name, const std::string& text) {
      ctx.write((dir / name).string(), text);
      return name;
    };
    json files = json::array();

    const auto series = load_series(o->data, {}, ReconOptions{kUnfoldIterations, o->resamples, seed, true});
    for (const auto& s : series) {
      files.push_back(put("observed_" + s.prep_label + ".csv",
                          to_csv([&](std::ostream& os) { write_series_csv(os, s); })));
    }

    const auto grid = lin_grid(0.0, o->horizon, o->points);
    const auto cp_grid = lin_grid(0.0, o->horizon, 1001);
    json models = json::array();
    for (const auto& fit : f.fits) {
      const std::string m = to_string(fit.model);
      for (const auto& s : series) {
        files.push_back(put("predicted_" + m + "_" + s.prep_label + ".csv",
                            trajectory_csv(fit.theta, s.initial, grid)));
      }
      json nm = json::array();
      for (const auto& [a, b] : default_pairs()) {
        const auto r = n_measure(fit.theta, a, b, o->horizon);
        nm.push_back({{"pair", pair_json(a, b)}, {"model", nonmark_to_json(r)}});
        const auto d = model_distance_series(fit.theta, a, b, cp_grid);
        const std::string stem = m + "_" + a.label + "_" + b.label;
        files.push_back(put("distance_" + stem + ".csv",
                            to_csv([&](std::ostream& os) { write_distance_csv(os, d); })));
        files.push_back(put("sigma_" + stem + ".csv",
                            to_csv([&](std::ostream& os) { write_sigma_csv(os, sigma_series(d)); })));
      }
      models.push_back({{"model", m},
                        {"fit", fit_to_json(fit)},
                        {"nonmarkovianity", nm},
                        {"cp", cp_summary(cp_scan(fit.theta, cp_grid))}});
    }

    auto test = split(o->test_preps);
    if (test.empty()) {
      std::vector<std::string> all;
      for (const auto& s : series) all.push_back(s.prep_label);
      test = complement(all, f.train);
    }
    json validation = json::array();
    if (!test.empty()) {
      std::vector<BlochSeries> test_series;
      for (const auto& label : test) {
        const auto it = std::find_if(series.begin(), series.end(),
                                     [&](const BlochSeries& s) { return s.prep_label == label; });
        if (it == series.end()) throw ValidationError("report: no data for '" + label + "'");
        test_series.push_back(*it);
      }
      std::vector<ValidationReport> reports;
      for (const auto& fit : f.fits) reports.push_back(validate_predictions(fit, test_series));
      for (const auto& r : reports) validation.push_back(validation_to_json(r));
      files.push_back(put("validation.csv",
                          to_csv([&](std::ostream& os) { write_validation_csv(os, reports); })));
    }

    std::ostringstream rank;
    rank << "model,aic,delta,band\n";
    for (const auto& e : f.ranking) {
      rank << to_string(e.model) << ',' << format_number(e.aic) << ',' << format_number(e.delta)
           << ',' << e.band << '\n';
    }
    files.push_back(put("ranking.csv", rank.str()));

    json j = ctx.provenance();
    j["train_preps"] = f.train;
    j["test_preps"] = test;
    j["ranking"] = ranking_to_json(f.ranking);
    j["models"] = models;
    j["validation"] = validation;
    j["files"] = files;
    ctx.write_json((dir / "report.json").string(), j);
    *ctx.err << "report: wrote " << files.size() + 1 << " files to " << o->out_dir << '\n';
    return kExitOk;
  };
}

struct Command {
  const char* name;
  const char* summary;
  bool seeded;
  Action (*setup)(CLI::App&, Context&);
};

const std::vector<Command>& commands() {
  static const std::vector<Command> table = {
      {"simulate", "Synthesize a tomography dataset from model parameters", true, cmd_simulate},
      {"mitigate", "Readout-error unfolding of every record", false, cmd_mitigate},
      {"tomo", "Reconstruct Bloch-vector series with bootstrap uncertainties", true, cmd_tomo},
      {"fit", "Fit M0/M1/M2 and rank them by AIC", true, cmd_fit},
      {"predict", "Evolve a state under fitted or given parameters", false, cmd_predict},
      {"validate", "Trace-distance percentiles on held-out preparations", false, cmd_validate},
      {"nonmark", "Information backflow measure from a model and/or data", true, cmd_nonmark},
      {"cpcheck", "Complete-positivity scan of the dynamical map", false, cmd_cpcheck},
      {"report", "JSON and CSV bundle of fits, predictions and diagnostics", true, cmd_report},
  };
  return table;
}

void usage(std::ostream& os) {
  os << "pmme_lab " << version() << "\n\nusage: pmme_lab <command> [options]\n\ncommands:\n";
  for (const auto& c : commands()) {
    os << "  " << c.name << std::string(10 - std::string(c.name).size(), ' ') << c.summary << '\n';
  }
  os << "\nRun 'pmme_lab <command> --help' for command options.\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    usage(err);
    return kExitUsage;
  }
  if (args[0] == "-h" || args[0] == "--help" || args[0] == "help") {
    usage(out);
    return kExitOk;
  }
  if (args[0] == "--version") {
    out << "pmme_lab " << version() << '\n';
    return kExitOk;
  }
  const auto& table = commands();
  const auto cmd = std::find_if(table.begin(), table.end(),
                                [&](const Command& c) { return args[0] == c.name; });
  if (cmd == table.end()) {
    err << "unknown command '" << args[0] << "'\n\n";
    usage(err);
    return kExitUsage;
  }

  CLI::App app{cmd->summary, std::string("pmme_lab ") + cmd->name};
  app.option_defaults()->always_capture_default();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON object of option values; command-line flags win");
  Context ctx;
  ctx.name = cmd->name;
  ctx.app = &app;
  ctx.out = &out;
  ctx.err = &err;
  app.add_flag("--no-timestamp", ctx.no_timestamp, "Omit creation times from outputs");
  app.add_flag("-v,--verbose", ctx.verbose, "Progress messages on stderr");
  if (cmd->seeded) {
    ctx.seed_opt = app.add_option("--seed", ctx.seed, "Random seed (falls back to PMME_LAB_SEED)")
                       ->envname("PMME_LAB_SEED");
  }

  try {
    const Action action = cmd->setup(app, ctx);
    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
    try {
      app.parse(rest);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << cmd->name << ": " << e.what() << "\nRun 'pmme_lab " << cmd->name << " --help'.\n";
      return kExitUsage;
    }
    return action();
  } catch (const ValidationError& e) {
    err << cmd->name << ": error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << cmd->name << ": numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << cmd->name << ": error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << cmd->name << ": internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace pmme::cli
