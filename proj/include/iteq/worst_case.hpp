// Infimum of the (stratified) rank-score statistic over the composite null
// "at most m effects exceed c": the m slots go to the treated units with the
// largest observed outcomes, whose imputed control outcomes become -inf.

#pragma once

#include "iteq/core.hpp"

#include <span>
#include <vector>

namespace iteq {

/// Slots with effect +inf per stratum; sum(slots) <= capacity, slots[s] <= n_st.
struct Allocation {
  std::vector<int> slots;
  double value = 0.0;
};

/// Presorted stratum for repeated evaluation at many (m, c).
class StratumEvaluator {
public:
  StratumEvaluator(std::span<const int> z, std::span<const double> y, std::vector<double> scores);

  int size() const { return static_cast<int>(scores_.size()); }
  int treated() const { return static_cast<int>(treated_y_.size()); }

  /// Statistic when the m treated units with largest outcomes are imputed -inf
  /// and the remaining treated are imputed Y - c. Requires 0 <= m <= treated().
  double value(int m, double c) const;
  /// value(0..max_m, c), sharing the control counts.
  std::vector<double> profile(int max_m, double c) const;

private:
  std::vector<int> below_counts(double c) const;
  double tail_value(int m, const std::vector<int>& below) const;

  std::vector<double> scores_;
  std::vector<double> prefix_;     // prefix_[m] = phi(1) + ... + phi(m)
  std::vector<double> treated_y_;  // sorted by (y, index)
  std::vector<int> treated_idx_;
  std::vector<double> control_y_;  // sorted by (y, index)
  std::vector<int> control_idx_;
};

/// All strata of a data set, ready for minimization.
class WorstCase {
public:
  WorstCase(const ExperimentData& data, std::span<const RankTransform> transforms);

  int n() const { return n_; }
  int n_treated() const { return n_treated_; }

  /// Minimum over allocations with total at most `capacity` slots.
  double min_stat(int capacity, double c) const;
  Allocation best_allocation(int capacity, double c) const;
  /// min_stat(j, c) for every j = 0..n_treated.
  std::vector<double> min_stat_by_capacity(double c) const;

  /// Minimum for H^n_{k,c} (AllUnits) or H^{n,t}_{k,c} (Treated).
  double min_stat(QuantileHypothesis h) const;
  int capacity_for(QuantileHypothesis h) const;

  const std::vector<StratumEvaluator>& strata() const { return strata_; }

private:
  std::vector<StratumEvaluator> strata_;
  int n_ = 0;
  int n_treated_ = 0;
  bool one_treated_each_ = false;
};

/// inf over H^n_{k,c} of t(Z, Y - Z o delta) for unstratified data.
double min_stat_cre(const ExperimentData& data, const RankTransform& transform, int k, double c);

/// Same for the stratified statistic, solved exactly by dynamic programming
/// over strata.
double min_stat_scre(const ExperimentData& data, std::span<const RankTransform> transforms, int k, double c);

/// Test oracle: exhaustive minimum over effect vectors with entries in
/// {c, +inf} plus any `extra` values (each <= c), honouring the count bound of
/// the scope. Uses the stratified statistic when the data are stratified.
/// Requires n <= 8.
double brute_force_min(const ExperimentData& data, std::span<const RankTransform> transforms, Scope scope, int k,
                       double c, std::span<const double> extra = {});

/// Test oracle: minimum over every feasible allocation, each stratum value
/// computed by explicit imputation.
Allocation exhaustive_allocation_min(const ExperimentData& data, std::span<const RankTransform> transforms, int k,
                                     double c);

}  // namespace iteq
