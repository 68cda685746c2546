// Confidence intervals for effect quantiles of a finite population or a
// superpopulation from which the experimental units were sampled.

#pragma once

#include "iteq/core.hpp"
#include "iteq/cre_inference.hpp"
#include "iteq/tail_distributions.hpp"

#include <span>
#include <vector>

namespace iteq {

enum class PopulationKind { Finite, Super };

struct PopulationTarget {
  PopulationKind kind = PopulationKind::Super;
  long long population_size = 0;  // Finite only
  std::vector<double> betas;      // strictly increasing in [0, 1]

  static PopulationTarget finite(long long N, std::vector<double> betas);
  static PopulationTarget super(std::vector<double> betas);

  /// Throws FlagError for bad betas or N < n.
  void validate(int n) const;
  /// k_j = ceil(N beta_j); Finite only.
  std::vector<long long> ranks() const;
};

/// Which units serve as the sample from the population.
enum class SampleUnits { All, Treated, Control };

struct PopulationPlan {
  PopulationTarget target;
  SampleUnits units = SampleUnits::All;
  double alpha = 0.1;
  int sample_size = 0;
  CorrectionSpec correction;  // k'_j in 1..sample_size (0 = uninformative)
};

/// Chooses k'_j with the correction held to split_gamma * alpha. Depends on
/// the design only.
PopulationPlan plan_population(int n, int n_t, const PopulationTarget& target, double alpha, double split_gamma,
                               SampleUnits units, const MonteCarloConfig& mc);

/// Simultaneous 1 - alpha intervals for the population quantiles. Uses the
/// stratified machinery when `data` has strata. `nulls` must match the
/// treated and label-switched designs.
IntervalFamily population_cis(const ExperimentData& data, std::span<const RankTransform> transforms,
                              const PopulationPlan& plan, const CreNulls& nulls);
IntervalFamily population_cis(const ExperimentData& data, std::span<const RankTransform> transforms,
                              const PopulationTarget& target, double alpha, const MonteCarloConfig& mc,
                              double split_gamma = 0.5, SampleUnits units = SampleUnits::All);

/// Step-function band over beta in (0, 1]: entry j holds the bound for
/// beta in [beta_j, beta_{j+1}); a leading entry at 0 is the whole line when
/// beta_1 > 0.
IntervalFamily population_band(const IntervalFamily& family);

}  // namespace iteq
