// Rank-score statistics and their randomization null distributions.

#pragma once

#include "iteq/core.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace iteq {

/// Ranks 1..n; ties (including repeated -inf) broken by position, earlier
/// position getting the smaller rank.
std::vector<int> ranks(std::span<const double> values);

/// Sum of phi(rank_i(y)) over units with z_i = 1.
double statistic(std::span<const int> z, std::span<const double> y, const RankTransform& transform);
double statistic_with_scores(std::span<const int> z, std::span<const double> y,
                             std::span<const double> scores);

/// Transform applying to stratum s: a single transform is shared by all strata.
const RankTransform& transform_for(std::span<const RankTransform> transforms, int s);

/// Sum over strata of the within-stratum statistic, evaluated at outcomes `y`
/// (one per unit, in unit order).
double stratified_statistic(const ExperimentData& data, std::span<const double> y,
                            std::span<const RankTransform> transforms);
/// Same, at the observed outcomes.
double stratified_statistic(const ExperimentData& data, std::span<const RankTransform> transforms);

// Null distributions -------------------------------------------------------

enum class NullMode { Exact, MonteCarlo, Auto };

struct NullOptions {
  NullMode mode = NullMode::Auto;
  MonteCarloConfig mc;
  /// Work cap for exact computation: assignments enumerated per stratum and
  /// support size of any intermediate convolution.
  std::uint64_t exact_cap = 1'000'000;
};

enum class Provenance { ExactEnumeration, MonteCarlo, GaussianApproximation };
enum class DesignKind { CRE, SCRE, Sensitivity };

struct NullDesign {
  DesignKind kind = DesignKind::CRE;
  std::vector<StratumShape> strata;
  double gamma = 1.0;     // sensitivity bound, Sensitivity designs only
  std::string structure;  // e.g. "pairs", "gkr"

  friend bool operator==(const NullDesign&, const NullDesign&) = default;
};

struct Mass {
  double value;
  double prob;
};

/// Survival function G(x) = P(t >= x) of a rank-score statistic.
class NullDistribution {
public:
  /// From an exact probability mass function (values need not be sorted).
  static NullDistribution from_masses(std::vector<Mass> masses, NullDesign design);
  /// Empirical distribution of Monte Carlo draws.
  static NullDistribution from_samples(std::vector<double> samples, NullDesign design,
                                       std::uint64_t seed);
  /// Gaussian tail with mean and standard deviation. When `lattice_step` > 0
  /// the statistic lives on that lattice and a half-step continuity
  /// correction is applied.
  static NullDistribution gaussian(double mean, double sd, double lattice_step, NullDesign design);
  /// Rebuilds a distribution from its stored parts (see serialize.hpp).
  /// Throws InputError when the parts are inconsistent.
  static NullDistribution restore(Provenance provenance, NullDesign design, std::vector<double> support,
                                  std::vector<double> tail, std::uint64_t draws, std::uint64_t seed, double mean,
                                  double sd, double lattice_step);

  double survival(double x) const;

  Provenance provenance() const { return provenance_; }
  std::uint64_t draws() const { return draws_; }
  std::uint64_t seed() const { return seed_; }
  const NullDesign& design() const { return design_; }

  /// Sorted distinct support points and P(t >= support[i]); empty for Gaussian.
  const std::vector<double>& support() const { return support_; }
  const std::vector<double>& tail() const { return tail_; }
  double gaussian_mean() const { return mean_; }
  double gaussian_sd() const { return sd_; }
  double lattice_step() const { return lattice_; }

  /// Binomial standard error of survival(x) for Monte Carlo provenance, else 0.
  double standard_error(double x) const;

  friend bool operator==(const NullDistribution&, const NullDistribution&) = default;

private:
  Provenance provenance_ = Provenance::ExactEnumeration;
  NullDesign design_;
  std::vector<double> support_;
  std::vector<double> tail_;
  std::uint64_t draws_ = 0;
  std::uint64_t seed_ = 0;
  double mean_ = 0.0, sd_ = 0.0, lattice_ = 0.0;
};

/// Exact pmf of the sum of a uniformly random size-`treated` subset of
/// `scores`. Throws CapacityError when C(n, treated) exceeds `cap`.
std::vector<Mass> subset_sum_masses(std::span<const double> scores, int treated, std::uint64_t cap);

/// Pmf of X + Y for independent X, Y; equal values merged.
std::vector<Mass> convolve(const std::vector<Mass>& a, const std::vector<Mass>& b);

/// Distribution of the statistic under complete randomization of n units.
NullDistribution null_distribution(StratumShape design, const RankTransform& transform,
                                   const NullOptions& options);

/// Distribution of the stratified statistic: independent complete
/// randomization within each stratum.
NullDistribution null_distribution(std::span<const StratumShape> strata,
                                   std::span<const RankTransform> transforms,
                                   const NullOptions& options);

/// C(n, k) as a saturating 64-bit count.
std::uint64_t choose_saturating(int n, int k);

}  // namespace iteq
