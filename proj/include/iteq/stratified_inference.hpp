// Stratified randomized experiments and matched observational studies under
// a bounded-confounding sensitivity model.

#pragma once

#include "iteq/core.hpp"
#include "iteq/cre_inference.hpp"
#include "iteq/rank_engine.hpp"
#include "iteq/worst_case.hpp"

#include <optional>
#include <span>
#include <vector>

namespace iteq {

// Stratified experiments ---------------------------------------------------

/// Null distributions for the treated orientation and the label-switched one.
using ScreNulls = CreNulls;
ScreNulls scre_nulls(const ExperimentData& data, std::span<const RankTransform> transforms,
                     const NullOptions& options);

/// G~(min stat over H^n_{k,c}) with independent randomization per stratum.
PValueResult pvalue_scre(const ExperimentData& data, std::span<const RankTransform> transforms, int k, double c,
                         const NullDistribution& dist);
/// Treated-scope version; equals pvalue_scre at n_c + k.
PValueResult pvalue_scre_treated(const ExperimentData& data, std::span<const RankTransform> transforms, int k,
                                 double c, const NullDistribution& dist);

/// Prediction intervals for effects among treated units, k = 1..n_t.
IntervalFamily intervals_scre(const ExperimentData& data, std::span<const RankTransform> transforms, double alpha,
                              const NullDistribution& dist);
/// Same for control units (dist built for the label-switched shapes).
IntervalFamily intervals_scre_control(const ExperimentData& data, std::span<const RankTransform> transforms,
                                      double alpha, const NullDistribution& dist);
/// Simultaneous 1 - 2 alpha family over all n quantiles.
IntervalFamily combine_scre(const ExperimentData& data, std::span<const RankTransform> transforms, double alpha,
                            const ScreNulls& nulls);

// Sensitivity analysis -----------------------------------------------------

struct SensitivityModel {
  double gamma_bound = 1.0;  // Gamma >= 1

  static SensitivityModel from_gamma(double gamma);
  static SensitivityModel from_log_gamma(double log_gamma);
};

enum class SensitivityMode { PairsExact, GaussianGKR };

/// Throws InputError unless every set has exactly one treated unit and at
/// least two units.
void validate_matched_sets(const ExperimentData& data);

/// Worst-case tail G~_Gamma of the stratified statistic over confounders.
/// Gamma = 1 gives the stratified randomization null built with `options`.
/// PairsExact is exact when the convolution fits under options.exact_cap and
/// otherwise (or in MonteCarlo mode) simulated with per-draw uniforms, so
/// draws are coupled across Gamma for a fixed seed.
NullDistribution worst_case_tail(std::span<const StratumShape> shapes, std::span<const RankTransform> transforms,
                                 double gamma, SensitivityMode mode, const NullOptions& options);

/// Per-stratum GKR mean and variance under the worst binary confounder.
struct GkrMoments {
  double mean = 0.0;
  double variance = 0.0;
  int b = 0;  // number of units with u = 1
};
GkrMoments gkr_moments(std::span<const double> scores, double gamma);

/// G~_Gamma(min stat over H^{n,t}_{k,c}), k = 0..n_t.
PValueResult pvalue_sensitivity(const ExperimentData& data, std::span<const RankTransform> transforms, int k, double c,
                                double gamma, SensitivityMode mode, const NullOptions& options);

/// Prediction intervals for effects among treated units at a given Gamma.
IntervalFamily sensitivity_intervals(const ExperimentData& data, std::span<const RankTransform> transforms,
                                     double alpha, const NullDistribution& worst_tail);

struct SensitivityCurve {
  std::vector<double> gammas;
  std::vector<IntervalFamily> families;  // one per Gamma
  /// Per k = 1..n_t: the largest Gamma whose interval excludes 0.
  std::vector<std::optional<double>> largest_gamma_excluding_zero;
};
SensitivityCurve sensitivity_curve(const ExperimentData& data, std::span<const RankTransform> transforms, double alpha,
                                   const std::vector<double>& gammas, SensitivityMode mode, const NullOptions& options);

}  // namespace iteq
