#pragma once

// Tomography datasets: preparation states, per-basis count records, a
// readout confusion model, synthetic generation and JSON persistence.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmme/model.hpp"
#include "pmme/qstate.hpp"
#include "pmme/solver.hpp"

namespace pmme {

struct Preparation {
  std::string label;
  BlochVectord bloch;
  bool operator==(const Preparation&) const = default;
};

/// Ordered, uniquely labelled pure preparation states.
class PreparationSet {
 public:
  PreparationSet() = default;
  /// Throws ValidationError on duplicate labels or non-unit vectors.
  explicit PreparationSet(std::vector<Preparation> items);

  /// psi0..psi4; psi4 is normalised from a vector rounded to two decimals.
  static PreparationSet table_one();
  /// plus, minus, plusi, minusi, zero, one.
  static PreparationSet cardinal();
  /// "tableI" or a comma-separated list of labels from table_one/cardinal.
  static PreparationSet parse(const std::string& spec);

  const std::vector<Preparation>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  /// Throws ValidationError for an unknown label.
  const Preparation& at(const std::string& label) const;
  std::optional<std::size_t> index_of(const std::string& label) const;

  bool operator==(const PreparationSet&) const = default;

 private:
  std::vector<Preparation> items_;
};

/// Unit-norm vector of a named state; throws ValidationError when unknown.
BlochVectord named_state(const std::string& label);

enum class Basis { X, Y, Z };
char to_char(Basis b);
Basis basis_from_char(char c);
inline constexpr std::array<Basis, 3> kBases{Basis::X, Basis::Y, Basis::Z};

/// One measured (prep, t, basis) cell. shots == 0 marks an exact-probability
/// record whose frequency is stored directly.
struct TomographyRecord {
  std::string prep;
  double t = 0.0;
  Basis basis = Basis::Z;
  std::int64_t count_one = 0;
  std::int64_t shots = 0;
  double exact_frequency = 0.0;

  bool exact() const { return shots == 0; }
  double frequency() const {
    return exact() ? exact_frequency : double(count_one) / double(shots);
  }
  bool operator==(const TomographyRecord&) const = default;
};

/// Column-stochastic response matrix, m(k, j) = P(measure k | prepared j).
struct ReadoutModel {
  Eigen::Matrix2d m = Eigen::Matrix2d::Identity();

  /// Throws ValidationError unless entries lie in [0, 1] and columns sum to
  /// one within 1e-12.
  void validate() const;
  /// Probability of reading 1 when the true outcome-1 probability is p.
  double observed_one(double p) const;
  bool operator==(const ReadoutModel&) const = default;
};

struct DatasetMetadata {
  std::int64_t shots = 8192;
  std::optional<std::uint64_t> seed;
  std::optional<ModelParams> generator;
  std::map<std::string, std::string> labels;
  bool operator==(const DatasetMetadata&) const = default;
};

struct TomographyDataset {
  PreparationSet preps;
  std::optional<ReadoutModel> readout;
  std::vector<TomographyRecord> records;
  DatasetMetadata metadata;

  /// Checks record invariants, known prep labels and frame completeness.
  void validate() const;
  /// Sorted distinct times measured for a preparation.
  std::vector<double> times(const std::string& prep) const;
  bool operator==(const TomographyDataset&) const = default;
};

inline constexpr int kDatasetSchemaVersion = 1;

struct Simulation {
  TomographyDataset dataset;
  /// Times at which the generating map is not completely positive.
  std::vector<ChoiReport> cp_warnings;
};

/// Born-rule probabilities of outcome 1, (1 - v_k) / 2, passed through the
/// readout model and sampled binomially per cell (shots >= 1), or stored
/// exactly rounded to 12 decimals (shots == 0).
Simulation simulate_dataset(const ModelParams& theta,
                            const PreparationSet& preps,
                            std::span<const double> times, std::int64_t shots,
                            const std::optional<ReadoutModel>& readout,
                            std::uint64_t seed);

/// "log:a:b:n", "lin:a:b:n" or a comma-separated list.
std::vector<double> parse_time_grid(const std::string& spec);
std::vector<double> log_grid(double a, double b, int n);
std::vector<double> lin_grid(double a, double b, int n);

nlohmann::json dataset_to_json(const TomographyDataset& ds);
/// Validates everything; throws ValidationError with the offending item.
TomographyDataset dataset_from_json(const nlohmann::json& j);

TomographyDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const TomographyDataset& ds, const std::filesystem::path& path);

/// prep,t,basis,p_one with the observed outcome-1 frequency of each cell.
void write_probabilities_csv(std::ostream& os, const TomographyDataset& ds);

}  // namespace pmme
