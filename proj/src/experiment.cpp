#include "pmme/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "pmme/error.hpp"
#include "pmme/format.hpp"
#include "pmme/params_json.hpp"

namespace pmme {

namespace {

const std::vector<Preparation>& table_one_states() {
  static const std::vector<Preparation> states = [] {
    const double third = 1.0 / 3.0;
    return std::vector<Preparation>{
        {"psi0", BlochVectord(std::sqrt(8.0 / 9.0), 0.0, -third)},
        {"psi1", BlochVectord(0.0, 0.0, -1.0)},
        {"psi2", BlochVectord(-std::sqrt(2.0 / 9.0), std::sqrt(2.0 / 3.0), -third)},
        {"psi3", BlochVectord(-std::sqrt(2.0 / 9.0), -std::sqrt(2.0 / 3.0), -third)},
        {"psi4", BlochVectord(0.50, -0.75, -0.41).normalized()}};
  }();
  return states;
}

const std::vector<Preparation>& cardinal_states() {
  static const std::vector<Preparation> states{
      {"plus", BlochVectord(1, 0, 0)},   {"minus", BlochVectord(-1, 0, 0)},
      {"plusi", BlochVectord(0, 1, 0)},  {"minusi", BlochVectord(0, -1, 0)},
      {"zero", BlochVectord(0, 0, 1)},   {"one", BlochVectord(0, 0, -1)}};
  return states;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw ValidationError(context + ": cannot parse number '" + s + "'");
  }
  return v;
}

std::mt19937_64 cell_rng(std::uint64_t seed, std::uint64_t cell) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32),
                    std::uint32_t(cell), std::uint32_t(cell >> 32)};
  return std::mt19937_64(seq);
}

template <typename T>
T required(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw ValidationError(where + ": missing key '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + ": wrong type for '" + key + "'");
  }
}

}  // namespace

PreparationSet::PreparationSet(std::vector<Preparation> items)
    : items_(std::move(items)) {
  std::set<std::string> seen;
  for (const auto& p : items_) {
    if (p.label.empty()) throw ValidationError("preparation: empty label");
    if (!seen.insert(p.label).second) {
      throw ValidationError("preparation: duplicate label '" + p.label + "'");
    }
    if (!p.bloch.allFinite() || std::abs(p.bloch.norm() - 1.0) > kBallTolerance) {
      throw ValidationError("preparation '" + p.label +
                            "': Bloch vector must have unit norm");
    }
  }
}

PreparationSet PreparationSet::table_one() {
  return PreparationSet(table_one_states());
}

PreparationSet PreparationSet::cardinal() {
  return PreparationSet(cardinal_states());
}

PreparationSet PreparationSet::parse(const std::string& spec) {
  if (spec == "tableI") return table_one();
  std::vector<Preparation> items;
  for (const auto& label : split(spec, ',')) {
    if (label == "tableI") {
      for (const auto& p : table_one_states()) items.push_back(p);
    } else {
      items.push_back({label, named_state(label)});
    }
  }
  if (items.empty()) throw ValidationError("preparation set is empty");
  return PreparationSet(std::move(items));
}

const Preparation& PreparationSet::at(const std::string& label) const {
  const auto idx = index_of(label);
  if (!idx) throw ValidationError("unknown preparation '" + label + "'");
  return items_[*idx];
}

std::optional<std::size_t> PreparationSet::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].label == label) return i;
  }
  return std::nullopt;
}

BlochVectord named_state(const std::string& label) {
  for (const auto* list : {&table_one_states(), &cardinal_states()}) {
    for (const auto& p : *list) {
      if (p.label == label) return p.bloch;
    }
  }
  throw ValidationError("unknown state label '" + label + "'");
}

char to_char(Basis b) {
  switch (b) {
    case Basis::X: return 'x';
    case Basis::Y: return 'y';
    case Basis::Z: return 'z';
  }
  return '?';
}

Basis basis_from_char(char c) {
  switch (c) {
    case 'x': case 'X': return Basis::X;
    case 'y': case 'Y': return Basis::Y;
    case 'z': case 'Z': return Basis::Z;
    default: break;
  }
  throw ValidationError(std::string("unknown basis '") + c + "'");
}

void ReadoutModel::validate() const {
  for (int j = 0; j < 2; ++j) {
    for (int k = 0; k < 2; ++k) {
      if (!(m(k, j) >= 0.0 && m(k, j) <= 1.0)) {
        throw ValidationError("readout: entries must lie in [0, 1]");
      }
    }
    if (std::abs(m(0, j) + m(1, j) - 1.0) > 1e-12) {
      throw ValidationError("readout: column " + std::to_string(j) +
                            " sums to " + format_number(m(0, j) + m(1, j)) +
                            ", not 1");
    }
  }
}

double ReadoutModel::observed_one(double p) const {
  return m(1, 0) * (1.0 - p) + m(1, 1) * p;
}

void TomographyDataset::validate() const {
  if (readout) readout->validate();
  if (metadata.shots < 0) throw ValidationError("dataset: negative default shots");

  std::map<std::pair<std::string, double>, std::array<int, 3>> frames;
  for (const auto& r : records) {
    if (!preps.index_of(r.prep)) {
      throw ValidationError("record references unknown preparation '" + r.prep + "'");
    }
    if (!std::isfinite(r.t) || r.t < 0.0) {
      throw ValidationError("record for '" + r.prep + "' has invalid time");
    }
    if (r.shots < 0 || r.count_one < 0) {
      throw ValidationError("record counts must be nonnegative");
    }
    if (r.count_one > r.shots && !r.exact()) {
      throw ValidationError("record (" + r.prep + ", " + format_number(r.t) + ", " +
                            to_char(r.basis) + "): count_one exceeds shots");
    }
    if (r.exact() && !(r.exact_frequency >= 0.0 && r.exact_frequency <= 1.0)) {
      throw ValidationError("exact record frequency outside [0, 1]");
    }
    auto& slot = frames[{r.prep, r.t}][int(r.basis)];
    if (++slot > 1) {
      throw ValidationError("duplicate record (" + r.prep + ", " +
                            format_number(r.t) + ", " + to_char(r.basis) + ")");
    }
  }
  std::string missing;
  for (const auto& [key, count] : frames) {
    for (const Basis b : kBases) {
      if (count[int(b)] == 0) {
        if (!missing.empty()) missing += ", ";
        missing += "(" + key.first + ", " + format_number(key.second) + ", " +
                   to_char(b) + ")";
      }
    }
  }
  if (!missing.empty()) {
    throw ValidationError("incomplete tomography frames: " + missing);
  }
}

std::vector<double> TomographyDataset::times(const std::string& prep) const {
  std::set<double> ts;
  for (const auto& r : records) {
    if (r.prep == prep) ts.insert(r.t);
  }
  return {ts.begin(), ts.end()};
}

Simulation simulate_dataset(const ModelParams& theta, const PreparationSet& preps,
                            std::span<const double> times, std::int64_t shots,
                            const std::optional<ReadoutModel>& readout,
                            std::uint64_t seed) {
  if (shots < 0) throw ValidationError("simulate: shots must be >= 1 or 0 (exact)");
  for (const double t : times) {
    if (!std::isfinite(t) || t < 0.0) throw ValidationError("simulate: times must be >= 0");
  }
  if (std::set<double>(times.begin(), times.end()).size() != times.size()) {
    throw ValidationError("simulate: duplicate times");
  }
  if (readout) readout->validate();

  Simulation sim;
  auto& ds = sim.dataset;
  ds.preps = preps;
  ds.readout = readout;
  ds.metadata.shots = shots;
  ds.metadata.seed = seed;
  ds.metadata.generator = theta;

  const Propagator prop = build_propagator(theta);
  for (const double t : times) {
    ChoiReport rep = choi_check(prop, theta, t);
    if (!rep.cp_ok) sim.cp_warnings.push_back(rep);
  }

  const ReadoutModel response = readout.value_or(ReadoutModel{});
  ds.records.reserve(preps.size() * times.size() * 3);
  for (std::size_t p = 0; p < preps.size(); ++p) {
    const auto& prep = preps.items()[p];
    const Evolution evo(theta, prop, bloch_to_density(prep.bloch));
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      const BlochVectord v = evo.bloch(times[ti]);
      for (const Basis b : kBases) {
        const double p_true = std::clamp(0.5 * (1.0 - v(int(b))), 0.0, 1.0);
        const double p_obs = std::clamp(response.observed_one(p_true), 0.0, 1.0);
        TomographyRecord rec{prep.label, times[ti], b, 0, shots, 0.0};
        if (shots == 0) {
          rec.exact_frequency = std::round(p_obs * 1e12) / 1e12;
        } else {
          const std::uint64_t cell = (p * times.size() + ti) * 3 + std::uint64_t(b);
          auto rng = cell_rng(seed, cell);
          std::binomial_distribution<std::int64_t> draw(shots, p_obs);
          rec.count_one = draw(rng);
        }
        ds.records.push_back(std::move(rec));
      }
    }
  }
  return sim;
}

std::vector<double> log_grid(double a, double b, int n) {
  if (!(a > 0.0) || !(b > a) || n < 2) {
    throw ValidationError("log grid needs 0 < a < b and n >= 2");
  }
  std::vector<double> out(n);
  const double la = std::log10(a), lb = std::log10(b);
  for (int i = 0; i < n; ++i) out[i] = std::pow(10.0, la + (lb - la) * i / (n - 1));
  out.front() = a;
  out.back() = b;
  return out;
}

std::vector<double> lin_grid(double a, double b, int n) {
  if (!(a >= 0.0) || !(b > a) || n < 2) {
    throw ValidationError("linear grid needs 0 <= a < b and n >= 2");
  }
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / (n - 1);
  out.back() = b;
  return out;
}

std::vector<double> parse_time_grid(const std::string& spec) {
  const auto parts = split(spec, ':');
  if (parts.size() == 4 && (parts[0] == "log" || parts[0] == "lin")) {
    const double a = parse_double(parts[1], "time grid");
    const double b = parse_double(parts[2], "time grid");
    const double n = parse_double(parts[3], "time grid");
    if (n != std::floor(n)) throw ValidationError("time grid: count must be an integer");
    return parts[0] == "log" ? log_grid(a, b, int(n)) : lin_grid(a, b, int(n));
  }
  if (parts.size() != 1) throw ValidationError("time grid: expected log:a:b:n, lin:a:b:n or a list");
  std::vector<double> out;
  for (const auto& item : split(spec, ',')) out.push_back(parse_double(item, "time grid"));
  if (out.empty()) throw ValidationError("time grid is empty");
  return out;
}

nlohmann::json dataset_to_json(const TomographyDataset& ds) {
  using nlohmann::json;
  json preps = json::array();
  for (const auto& p : ds.preps.items()) {
    preps.push_back({{"label", p.label},
                     {"bloch", {p.bloch.x(), p.bloch.y(), p.bloch.z()}}});
  }
  json records = json::array();
  for (const auto& r : ds.records) {
    json rec = {{"prep", r.prep}, {"t", r.t}, {"basis", std::string(1, to_char(r.basis))}};
    if (r.exact()) {
      rec["shots"] = 0;
      rec["frequency"] = r.exact_frequency;
    } else {
      rec["count_one"] = r.count_one;
      rec["shots"] = r.shots;
    }
    records.push_back(std::move(rec));
  }
  json meta = {{"shots", ds.metadata.shots},
               {"seed", ds.metadata.seed ? json(*ds.metadata.seed) : json(nullptr)},
               {"generator", ds.metadata.generator
                                 ? params_to_json(*ds.metadata.generator)
                                 : json(nullptr)},
               {"labels", ds.metadata.labels}};
  json readout = nullptr;
  if (ds.readout) {
    const auto& m = ds.readout->m;
    readout = {{"matrix", {{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}}}};
  }
  return {{"schema_version", kDatasetSchemaVersion},
          {"preparations", preps},
          {"readout", readout},
          {"metadata", meta},
          {"records", records}};
}

TomographyDataset dataset_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("dataset: expected a JSON object");
  const int version = required<int>(j, "schema_version", "dataset");
  if (version != kDatasetSchemaVersion) {
    throw ValidationError("dataset: unsupported schema_version " + std::to_string(version));
  }
  TomographyDataset ds;

  std::vector<Preparation> preps;
  for (const auto& p : required<nlohmann::json>(j, "preparations", "dataset")) {
    const auto v = required<std::vector<double>>(p, "bloch", "preparation");
    if (v.size() != 3) throw ValidationError("preparation: bloch needs 3 components");
    preps.push_back({required<std::string>(p, "label", "preparation"),
                     BlochVectord(v[0], v[1], v[2])});
  }
  ds.preps = PreparationSet(std::move(preps));

  if (const auto it = j.find("readout"); it != j.end() && !it->is_null()) {
    const auto rows = required<std::vector<std::vector<double>>>(*it, "matrix", "readout");
    if (rows.size() != 2 || rows[0].size() != 2 || rows[1].size() != 2) {
      throw ValidationError("readout: matrix must be 2x2");
    }
    ReadoutModel r;
    r.m << rows[0][0], rows[0][1], rows[1][0], rows[1][1];
    ds.readout = r;
  }

  if (const auto it = j.find("metadata"); it != j.end() && it->is_object()) {
    const auto& m = *it;
    ds.metadata.shots = m.value("shots", std::int64_t(8192));
    if (m.contains("seed") && !m["seed"].is_null()) {
      ds.metadata.seed = required<std::uint64_t>(m, "seed", "metadata");
    }
    if (m.contains("generator") && !m["generator"].is_null()) {
      ds.metadata.generator = params_from_json(m["generator"]);
    }
    if (m.contains("labels")) {
      ds.metadata.labels = required<std::map<std::string, std::string>>(m, "labels", "metadata");
    }
  }

  for (const auto& r : required<nlohmann::json>(j, "records", "dataset")) {
    TomographyRecord rec;
    rec.prep = required<std::string>(r, "prep", "record");
    rec.t = required<double>(r, "t", "record");
    const auto basis = required<std::string>(r, "basis", "record");
    if (basis.size() != 1) throw ValidationError("record: basis must be x, y or z");
    rec.basis = basis_from_char(basis[0]);
    rec.shots = required<std::int64_t>(r, "shots", "record");
    if (rec.shots == 0) {
      rec.exact_frequency = required<double>(r, "frequency", "record");
    } else {
      rec.count_one = required<std::int64_t>(r, "count_one", "record");
    }
    ds.records.push_back(std::move(rec));
  }
  ds.validate();
  return ds;
}

TomographyDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return dataset_from_json(j);
}

void save_dataset(const TomographyDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << dataset_to_json(ds).dump(1) << '\n';
}

void write_probabilities_csv(std::ostream& os, const TomographyDataset& ds) {
  os << "prep,t,basis,p_one\n";
  for (const auto& r : ds.records) {
    os << r.prep << ',' << format_number(r.t) << ',' << to_char(r.basis) << ','
       << format_number(r.frequency()) << '\n';
  }
}

}  // namespace pmme
