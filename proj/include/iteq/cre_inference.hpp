// Inference for completely randomized experiments: p-values, prediction
// intervals for effects among treated (or control) units, confidence
// intervals and bands for quantiles of all n effects.

#pragma once

#include "iteq/core.hpp"
#include "iteq/rank_engine.hpp"
#include "iteq/tail_distributions.hpp"
#include "iteq/worst_case.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace iteq {

enum class PValueMethod { Original, TreatedScope, BergerCorrected };

struct PValueResult {
  double value = 1.0;
  QuantileHypothesis hypothesis;
  PValueMethod method = PValueMethod::Original;
  int k_prime = -1;          // BergerCorrected only
  double correction = 0.0;   // BergerCorrected only
  double statistic_min = 0.0;
  Provenance null_provenance = Provenance::ExactEnumeration;
};

/// Null distributions for the treated orientation (n, n_t) and the
/// label-switched orientation (n, n_c).
struct CreNulls {
  NullDistribution treated;
  NullDistribution control;
};
CreNulls cre_nulls(int n, int n_t, const RankTransform& transform, const NullOptions& options);

/// Throws FlagError when `dist` was built for a different design.
void require_design(const NullDistribution& dist, std::span<const StratumShape> shapes);

// Test inversion -----------------------------------------------------------

/// Sorted distinct within-stratum differences Y_i - Y_j (treated i, control j):
/// the only points where the minimized statistic can jump as c varies.
std::vector<double> jump_grid(const ExperimentData& data);

/// inf{c : G(min stat with `capacity` slots at c) > alpha}, with the interval
/// closed when the infimum is attained. alpha <= 0 gives the whole line.
OneSidedInterval invert_lower_bound(const WorstCase& worst, const NullDistribution& dist,
                                    std::span<const double> grid, int capacity, double alpha);

/// Prediction intervals for tau_t(k), k = 1..n_t, at level 1 - alpha.
IntervalFamily treated_family(const WorstCase& worst, const NullDistribution& dist, std::span<const double> grid,
                              double alpha);

/// Pools treated-unit and control-unit families into a family over all n
/// quantiles: the k-th widest interval goes to tau_(k).
IntervalFamily pool_families(const IntervalFamily& treated, const IntervalFamily& control, double level);

// p-values -----------------------------------------------------------------

/// p^n_{k,c} = G(min stat over H^n_{k,c}).
PValueResult pvalue_all(const ExperimentData& data, const RankTransform& transform, int k, double c,
                        const NullDistribution& dist);
/// p^{n,t}_{k,c}; equals pvalue_all at n_c + k.
PValueResult pvalue_treated(const ExperimentData& data, const RankTransform& transform, int k, double c,
                            const NullDistribution& dist);
/// p^{n,t}_{k',c} + P(HG(n, n-k, n_t) > n_t - k'), truncated at 1.
PValueResult pvalue_berger(const ExperimentData& data, const RankTransform& transform, int k, double c, int k_prime,
                           const NullDistribution& dist);

// Interval families --------------------------------------------------------

/// Simultaneous prediction intervals for effects among treated units.
IntervalFamily prediction_intervals_treated(const ExperimentData& data, const RankTransform& transform, double alpha,
                                            const NullDistribution& dist);
/// Same for control units via label switching (dist built for (n, n_c)).
IntervalFamily prediction_intervals_control(const ExperimentData& data, const RankTransform& transform, double alpha,
                                            const NullDistribution& dist);

/// Inverting p^n_{k,c} for all k = 1..n: uninformative for k <= n_c.
IntervalFamily original_intervals(const ExperimentData& data, const RankTransform& transform, double alpha,
                                  const NullDistribution& dist);

/// Simultaneous 1 - 2 alpha intervals for all n quantiles from treated and
/// control prediction intervals.
IntervalFamily combine_treated_control(const ExperimentData& data, const RankTransform& transform, double alpha,
                                       const CreNulls& nulls);

/// Confidence interval for tau_(k) using the hypergeometric correction.
/// `warning` receives a message when the correction exhausts alpha.
OneSidedInterval ci_single(const ExperimentData& data, const RankTransform& transform, int k, double alpha,
                           double gamma, const NullDistribution& dist, std::string* warning = nullptr);

struct CountInterval {
  int lower = 0;
  int upper = 0;
  bool contiguous = true;  // false if the accepted set had gaps (lower is then the hull)
};

/// Confidence set {n - k : corrected p-value > alpha} for n(c), the number of
/// units with effect above c.
CountInterval ci_count(const ExperimentData& data, const RankTransform& transform, double c, double alpha,
                       double gamma, const NullDistribution& dist);

/// k' choices for one orientation of simultaneous inference; depends on the
/// design only, so it can be reused across data sets of the same shape.
struct SimultaneousPlan {
  std::vector<int> ks;
  double alpha = 0.1;     // overall level 1 - alpha
  bool combine_sides = false;
  CorrectionSpec treated;
  std::optional<CorrectionSpec> control;  // present when combine_sides
};
SimultaneousPlan plan_simultaneous(int n, int n_t, const std::vector<int>& ks, double alpha, double gamma,
                                   bool combine_sides, const MonteCarloConfig& mc);

/// Simultaneous intervals for tau_(k_j), j = 1..J. With `combine_sides`, each
/// orientation runs at alpha/2 and the tighter bound is kept.
IntervalFamily simultaneous_cis(const ExperimentData& data, const RankTransform& transform,
                                const SimultaneousPlan& plan, const CreNulls& nulls);
IntervalFamily simultaneous_cis(const ExperimentData& data, const RankTransform& transform, const std::vector<int>& ks,
                                double alpha, double gamma, const MonteCarloConfig& mc, const CreNulls& nulls,
                                bool combine_sides);

/// Individual (not simultaneous) corrected intervals for each k_j, combining
/// both orientations at alpha/2 when requested.
IntervalFamily individual_cis(const ExperimentData& data, const RankTransform& transform, const std::vector<int>& ks,
                              double alpha, double gamma, const CreNulls& nulls, bool combine_sides);

/// Step-function extension of a simultaneous family over k_1 < ... < k_J to
/// every k = 1..n: tau_(k) gets the bound of the largest k_j <= k.
IntervalFamily band(const IntervalFamily& family, int n);

}  // namespace iteq
