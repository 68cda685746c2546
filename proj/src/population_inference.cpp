#include "iteq/population_inference.hpp"

#include "iteq/stratified_inference.hpp"

#include <algorithm>
#include <cmath>

namespace iteq {

PopulationTarget PopulationTarget::finite(long long N, std::vector<double> betas) {
  return {PopulationKind::Finite, N, std::move(betas)};
}

PopulationTarget PopulationTarget::super(std::vector<double> betas) {
  return {PopulationKind::Super, 0, std::move(betas)};
}

void PopulationTarget::validate(int n) const {
  if (betas.empty()) throw FlagError("at least one quantile level is required");
  for (std::size_t j = 0; j < betas.size(); ++j) {
    if (!(betas[j] >= 0.0 && betas[j] <= 1.0)) throw FlagError("quantile levels must lie in [0, 1]");
    if (j > 0 && !(betas[j] > betas[j - 1])) throw FlagError("quantile levels must be strictly increasing");
  }
  if (kind == PopulationKind::Finite && population_size < n)
    throw FlagError("population size must be at least the sample size");
}

std::vector<long long> PopulationTarget::ranks() const {
  std::vector<long long> ks;
  for (double b : betas) ks.push_back(population_rank(population_size, b));
  return ks;
}

PopulationPlan plan_population(int n, int n_t, const PopulationTarget& target, double alpha, double split_gamma,
                               SampleUnits units, const MonteCarloConfig& mc) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw FlagError("alpha must lie in (0, 1)");
  if (!(split_gamma > 0.0 && split_gamma < 1.0)) throw FlagError("the budget split must lie in (0, 1)");
  target.validate(n);
  PopulationPlan plan;
  plan.target = target;
  plan.units = units;
  plan.alpha = alpha;
  plan.sample_size = units == SampleUnits::All ? n : units == SampleUnits::Treated ? n_t : n - n_t;
  if (plan.sample_size < 1) throw InputError("the sampled group is empty");
  if (target.kind == PopulationKind::Finite)
    plan.correction = choose_kprime_multi(target.population_size, plan.sample_size, target.ranks(), alpha, split_gamma, mc);
  else
    plan.correction = choose_kprime_multinomial(plan.sample_size, target.betas, alpha, split_gamma, mc);
  return plan;
}

namespace {

IntervalFamily sample_family(const ExperimentData& data, std::span<const RankTransform> transforms,
                             SampleUnits units, double alpha, const CreNulls& nulls) {
  const bool strata = data.stratified();
  switch (units) {
    case SampleUnits::All:
      return strata ? combine_scre(data, transforms, alpha / 2, nulls)
                    : combine_treated_control(data, transforms[0], alpha / 2, nulls);
    case SampleUnits::Treated:
      return strata ? intervals_scre(data, transforms, alpha, nulls.treated)
                    : prediction_intervals_treated(data, transforms[0], alpha, nulls.treated);
    case SampleUnits::Control:
      break;
  }
  return strata ? intervals_scre_control(data, transforms, alpha, nulls.control)
                : prediction_intervals_control(data, transforms[0], alpha, nulls.control);
}

}  // namespace

IntervalFamily population_cis(const ExperimentData& data, std::span<const RankTransform> transforms,
                              const PopulationPlan& plan, const CreNulls& nulls) {
  if (transforms.empty()) throw FlagError("no rank transform given");
  IntervalFamily f;
  f.level = 1.0 - plan.alpha;
  f.simultaneous = true;
  f.target.kind = TargetKind::PopulationQuantiles;
  if (plan.target.kind == PopulationKind::Finite) f.target.population_size = plan.target.population_size;

  const double adjusted = plan.alpha - plan.correction.correction;
  const auto& betas = plan.target.betas;
  if (adjusted <= 0.0) {
    f.warnings.push_back("sampling correction exhausts alpha; intervals are the whole line");
    for (double b : betas) f.entries.push_back({b, OneSidedInterval::whole_line()});
    return f;
  }
  const auto sample = sample_family(data, transforms, plan.units, adjusted, nulls);
  if (static_cast<int>(sample.entries.size()) != plan.sample_size)
    throw FlagError("plan was built for a different sample size");
  f.warnings = sample.warnings;
  for (std::size_t j = 0; j < betas.size(); ++j) {
    const int kp = plan.correction.k_primes[j];
    f.entries.push_back(
        {betas[j], kp > 0 ? sample.entries[static_cast<std::size_t>(kp - 1)].interval : OneSidedInterval::whole_line()});
  }
  return f;
}

IntervalFamily population_cis(const ExperimentData& data, std::span<const RankTransform> transforms,
                              const PopulationTarget& target, double alpha, const MonteCarloConfig& mc,
                              double split_gamma, SampleUnits units) {
  const auto plan = plan_population(data.n(), data.n_treated(), target, alpha, split_gamma, units, mc);
  const NullOptions options{.mode = NullMode::Auto, .mc = mc};
  const auto nulls = data.stratified() ? scre_nulls(data, transforms, options)
                                       : cre_nulls(data.n(), data.n_treated(), transforms[0], options);
  return population_cis(data, transforms, plan, nulls);
}

IntervalFamily population_band(const IntervalFamily& family) {
  IntervalFamily f;
  f.level = family.level;
  f.simultaneous = true;
  f.target = family.target;
  f.warnings = family.warnings;
  if (!family.entries.empty() && family.entries.front().index > 0.0)
    f.entries.push_back({0.0, OneSidedInterval::whole_line()});
  // Quantiles are nondecreasing in beta, so any bound carries to larger betas.
  OneSidedInterval running = OneSidedInterval::whole_line();
  for (const auto& e : family.entries) {
    running = tighter(running, e.interval);
    f.entries.push_back({e.index, running});
  }
  return f;
}

}  // namespace iteq
