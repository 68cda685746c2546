// Experiment data model, rank transforms, hypotheses and interval families
// shared by every inference routine in the library.

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iteq {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Errors -------------------------------------------------------------------

/// Malformed or invalid input data (CLI exit code 2).
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid option combination or parameter value (CLI exit code 3).
class FlagError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A computed result broke an invariant it is guaranteed to satisfy (CLI exit
/// code 4).
class InvariantError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Exact computation refused because it would exceed the configured work cap.
class CapacityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Experiment data ----------------------------------------------------------

struct StratumShape {
  int size = 0;
  int treated = 0;
  int control() const { return size - treated; }

  friend bool operator==(const StratumShape&, const StratumShape&) = default;
};

/// Assignments, observed outcomes and optional stratum labels for n units.
///
/// Immutable after construction. Unit order is the tie-break order used by
/// every rank computation; when the rows were shuffled on load the applied
/// permutation is kept in `shuffle_permutation()` (row i of this object is
/// row `shuffle_permutation()[i]` of the source file).
class ExperimentData {
public:
  /// Validates and builds. `strata` may be empty (unstratified) or hold one
  /// label per unit. Throws InputError on any invariant violation.
  static ExperimentData create(std::vector<int> assignment, std::vector<double> outcome,
                               std::vector<std::string> strata = {},
                               std::vector<std::string> unit_ids = {});

  int n() const { return static_cast<int>(z_.size()); }
  int n_treated() const { return n_treated_; }
  int n_control() const { return n() - n_treated_; }

  std::span<const int> assignment() const { return z_; }
  std::span<const double> outcome() const { return y_; }
  int z(int i) const { return z_[static_cast<std::size_t>(i)]; }
  double y(int i) const { return y_[static_cast<std::size_t>(i)]; }

  bool stratified() const { return !stratum_labels_.empty(); }
  int num_strata() const { return stratified() ? static_cast<int>(stratum_labels_.size()) : 1; }
  /// Stratum index of every unit (all zero when unstratified).
  std::span<const int> stratum_of() const { return stratum_of_; }
  const std::vector<std::string>& stratum_labels() const { return stratum_labels_; }
  /// Unit indices of stratum s, in unit order.
  std::span<const int> stratum_units(int s) const { return members_[static_cast<std::size_t>(s)]; }
  StratumShape stratum_shape(int s) const;
  std::vector<StratumShape> stratum_shapes() const;

  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::vector<std::size_t>& shuffle_permutation() const { return shuffle_; }
  std::optional<std::uint64_t> shuffle_seed() const { return shuffle_seed_; }

  /// Returns a copy whose rows are reordered by a seeded uniform permutation.
  ExperimentData shuffled(std::uint64_t seed) const;

  /// Same units restricted to a single stratum (labels dropped).
  ExperimentData stratum_subset(int s) const;
  /// All units as one completely randomized experiment (labels dropped).
  ExperimentData without_strata() const;

  friend bool operator==(const ExperimentData&, const ExperimentData&) = default;
  friend ExperimentData switch_labels_negate(const ExperimentData& data);

private:
  std::vector<int> z_;
  std::vector<double> y_;
  std::vector<int> stratum_of_;
  std::vector<std::string> stratum_labels_;
  std::vector<std::vector<int>> members_;
  std::vector<std::string> unit_ids_;
  std::vector<std::size_t> shuffle_;
  std::optional<std::uint64_t> shuffle_seed_;
  int n_treated_ = 0;
};

struct SchemaOptions {
  std::optional<std::uint64_t> shuffle_seed;
};

/// Parses a CSV with header containing `z`, `y` and optionally `stratum` and
/// `unit_id`. Rows keep file order unless a shuffle seed is supplied.
ExperimentData load_experiment(std::string_view csv_text, const SchemaOptions& options = {});

/// Treatment labels flipped and outcomes negated; strata unchanged.
/// Individual effects are invariant under this map, so treated-side
/// machinery applied to the result infers effects among the original controls.
ExperimentData switch_labels_negate(const ExperimentData& data);

// Rank transforms ----------------------------------------------------------

enum class TransformKind { Wilcoxon, Stephenson, Table };

/// Monotone score function applied to ranks 1..n.
class RankTransform {
public:
  static RankTransform wilcoxon();
  /// phi(r) = C(r-1, s-1) for r >= s, 0 otherwise. Requires s >= 2.
  static RankTransform stephenson(int s);
  /// Explicit scores for ranks 1..scores.size(); must be nondecreasing.
  static RankTransform table(std::vector<double> scores);

  TransformKind kind() const { return kind_; }
  int stephenson_s() const { return s_; }

  /// phi(1), ..., phi(n).
  std::vector<double> scores(int n) const;
  std::string describe() const;

  friend bool operator==(const RankTransform&, const RankTransform&) = default;

private:
  TransformKind kind_ = TransformKind::Wilcoxon;
  int s_ = 0;
  std::vector<double> table_;
};

/// Binomial coefficient as a double; each factor is monotone in `m`, so the
/// result is nondecreasing in `m` even after rounding.
double binomial_coefficient(int m, int k);

// Hypotheses and intervals -------------------------------------------------

enum class Scope { AllUnits, Treated, Control };

std::string_view to_string(Scope scope);

struct QuantileHypothesis {
  int k = 0;
  double c = 0.0;
  Scope scope = Scope::AllUnits;
};

/// Interval of the form (lower, inf) or [lower, inf).
struct OneSidedInterval {
  double lower = kNegInf;
  bool closed = false;

  static OneSidedInterval whole_line() { return {kNegInf, false}; }
  bool informative() const { return lower != kNegInf; }
  bool contains(double x) const { return closed ? x >= lower : x > lower; }
  /// True when this interval is a (non-strict) subset of `other`.
  bool within(const OneSidedInterval& other) const;

  friend bool operator==(const OneSidedInterval&, const OneSidedInterval&) = default;
};

/// The narrower of two one-sided intervals (their intersection).
OneSidedInterval tighter(const OneSidedInterval& a, const OneSidedInterval& b);

enum class TargetKind {
  SampleQuantilesAll,
  SampleQuantilesTreated,
  SampleQuantilesControl,
  PopulationQuantiles,
  EffectCount,
};

struct FamilyTarget {
  TargetKind kind = TargetKind::SampleQuantilesAll;
  /// Population size for PopulationQuantiles; nullopt means superpopulation.
  std::optional<long long> population_size;
  /// Threshold for EffectCount.
  double threshold = 0.0;
};

struct FamilyEntry {
  double index = 0.0;  // quantile index k, or beta for population targets
  OneSidedInterval interval;
  friend bool operator==(const FamilyEntry&, const FamilyEntry&) = default;
};

struct IntervalFamily {
  std::vector<FamilyEntry> entries;  // ordered by index
  double level = 0.0;
  bool simultaneous = false;
  FamilyTarget target;
  std::vector<std::string> warnings;

  const OneSidedInterval* find(double index) const;
  /// Lower bounds nondecreasing along the entry order.
  bool nested() const;
};

/// Lower confidence bound for the number of units (out of n) with effect
/// above `c` implied by a nested simultaneous family over sample quantiles:
/// if tau_(k) is excluded below c then so is every larger quantile.
int count_lower_bound(const IntervalFamily& family, double c, int n);

// Monte Carlo configuration -------------------------------------------------

inline constexpr std::uint64_t kDefaultSeed = 20240917ULL;

struct MonteCarloConfig {
  std::uint64_t draws = 100000;
  std::uint64_t seed = kDefaultSeed;
  /// Worker threads; 0 means hardware concurrency. Never affects results.
  unsigned threads = 0;
};

}  // namespace iteq
