#include "iteq/cre_inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace iteq {

CreNulls cre_nulls(int n, int n_t, const RankTransform& transform, const NullOptions& options) {
  auto treated = null_distribution(StratumShape{n, n_t}, transform, options);
  if (n_t == n - n_t) return {treated, treated};
  return {treated, null_distribution(StratumShape{n, n - n_t}, transform, options)};
}

void require_design(const NullDistribution& dist, std::span<const StratumShape> shapes) {
  const auto& built = dist.design().strata;
  if (built.empty()) return;
  if (!std::equal(built.begin(), built.end(), shapes.begin(), shapes.end()))
    throw FlagError("null distribution was built for a different design");
}

namespace {

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw FlagError("alpha must lie in (0, 1)");
}

WorstCase cre_worst_case(const ExperimentData& data, const RankTransform& transform) {
  const RankTransform ts[] = {transform};
  return WorstCase(data.without_strata(), ts);
}

void require_cre(const NullDistribution& dist, int n, int n_t) {
  const StratumShape shape[] = {{n, n_t}};
  require_design(dist, shape);
}

}  // namespace

// Test inversion -----------------------------------------------------------

std::vector<double> jump_grid(const ExperimentData& data) {
  std::vector<double> grid;
  for (int s = 0; s < data.num_strata(); ++s) {
    const auto units = data.stratum_units(s);
    for (int i : units) {
      if (data.z(i) != 1) continue;
      for (int j : units)
        if (data.z(j) == 0) grid.push_back(data.y(i) - data.y(j));
    }
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

namespace {

// Positions 0, 1, ..., 2m: the open cell below grid[0], grid[0], the open
// cell (grid[0], grid[1]), ..., grid[m-1], the open cell above grid[m-1].
// The p-value is nondecreasing along them.
double representative(std::span<const double> grid, std::size_t pos) {
  const std::size_t m = grid.size();
  if (pos % 2 == 1) return grid[pos / 2];
  if (pos == 0) return kNegInf;
  if (pos == 2 * m) return kInf;
  const double a = grid[pos / 2 - 1], b = grid[pos / 2];
  const double mid = a + (b - a) / 2;
  // No double strictly between: the cell is empty, reuse its left end.
  return (mid > a && mid < b) ? mid : a;
}

OneSidedInterval interval_from(std::span<const double> grid, std::size_t first_accepted) {
  if (first_accepted == 0) return OneSidedInterval::whole_line();
  if (first_accepted % 2 == 1) return {grid[first_accepted / 2], true};
  return {grid[first_accepted / 2 - 1], false};
}

template <class Accepted>
std::size_t first_accepted(std::size_t lo, std::size_t hi, Accepted accepted) {
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (accepted(mid)) hi = mid;
    else lo = mid + 1;
  }
  return lo;
}

void check_inversion(double alpha, std::span<const double> grid) {
  if (alpha >= 1.0) throw FlagError("alpha must be below 1");
  if (grid.empty()) throw InputError("no treated-control pairs to invert over");
}

// Inverts many capacities against one null, evaluating each grid position at
// most once for all capacities.
class FamilyInverter {
public:
  FamilyInverter(const WorstCase& worst, const NullDistribution& dist, std::span<const double> grid)
      : worst_(worst), dist_(dist), grid_(grid) {}

  // `start` is a position known to be rejected or the first candidate.
  std::pair<OneSidedInterval, std::size_t> invert(int capacity, double alpha, std::size_t start = 0) {
    if (alpha <= 0.0) return {OneSidedInterval::whole_line(), 0};
    check_inversion(alpha, grid_);
    const auto cap = static_cast<std::size_t>(std::clamp(capacity, 0, worst_.n_treated()));
    const auto accepted = [&](std::size_t pos) { return dist_.survival(minima(pos)[cap]) > alpha; };
    const std::size_t pos = first_accepted(start, 2 * grid_.size(), accepted);
    return {interval_from(grid_, pos), pos};
  }

private:
  const std::vector<double>& minima(std::size_t pos) {
    auto it = cache_.find(pos);
    if (it == cache_.end()) it = cache_.emplace(pos, worst_.min_stat_by_capacity(representative(grid_, pos))).first;
    return it->second;
  }

  const WorstCase& worst_;
  const NullDistribution& dist_;
  std::span<const double> grid_;
  std::map<std::size_t, std::vector<double>> cache_;
};

}  // namespace

OneSidedInterval invert_lower_bound(const WorstCase& worst, const NullDistribution& dist,
                                    std::span<const double> grid, int capacity, double alpha) {
  if (alpha <= 0.0) return OneSidedInterval::whole_line();
  check_inversion(alpha, grid);
  const auto accepted = [&](std::size_t pos) {
    return dist.survival(worst.min_stat(capacity, representative(grid, pos))) > alpha;
  };
  return interval_from(grid, first_accepted(0, 2 * grid.size(), accepted));
}

IntervalFamily treated_family(const WorstCase& worst, const NullDistribution& dist, std::span<const double> grid,
                              double alpha) {
  if (alpha >= 1.0) throw FlagError("alpha must be below 1");
  IntervalFamily f;
  f.level = 1.0 - alpha;
  f.simultaneous = true;
  f.target.kind = TargetKind::SampleQuantilesTreated;
  FamilyInverter inverter(worst, dist, grid);
  // Bounds are nested in k, so each search starts where the previous ended.
  std::size_t start = 0;
  for (int k = 1; k <= worst.n_treated(); ++k) {
    const auto [interval, pos] = inverter.invert(worst.n_treated() - k, alpha, start);
    start = pos;
    f.entries.push_back({static_cast<double>(k), interval});
  }
  return f;
}

IntervalFamily pool_families(const IntervalFamily& treated, const IntervalFamily& control, double level) {
  std::vector<OneSidedInterval> all;
  for (const auto& e : treated.entries) all.push_back(e.interval);
  for (const auto& e : control.entries) all.push_back(e.interval);
  // Widest first: smaller lower bound, and closed before open at a tie.
  std::stable_sort(all.begin(), all.end(), [](const OneSidedInterval& a, const OneSidedInterval& b) {
    if (a.lower != b.lower) return a.lower < b.lower;
    return a.closed && !b.closed;
  });
  IntervalFamily f;
  f.level = level;
  f.simultaneous = true;
  f.target.kind = TargetKind::SampleQuantilesAll;
  for (std::size_t k = 0; k < all.size(); ++k) f.entries.push_back({static_cast<double>(k + 1), all[k]});
  f.warnings = treated.warnings;
  f.warnings.insert(f.warnings.end(), control.warnings.begin(), control.warnings.end());
  return f;
}

// p-values -----------------------------------------------------------------

PValueResult pvalue_all(const ExperimentData& data, const RankTransform& transform, int k, double c,
                        const NullDistribution& dist) {
  require_cre(dist, data.n(), data.n_treated());
  PValueResult r;
  r.hypothesis = {k, c, Scope::AllUnits};
  r.method = PValueMethod::Original;
  r.statistic_min = cre_worst_case(data, transform).min_stat(r.hypothesis);
  r.value = dist.survival(r.statistic_min);
  r.null_provenance = dist.provenance();
  return r;
}

PValueResult pvalue_treated(const ExperimentData& data, const RankTransform& transform, int k, double c,
                            const NullDistribution& dist) {
  require_cre(dist, data.n(), data.n_treated());
  PValueResult r;
  r.hypothesis = {k, c, Scope::Treated};
  r.method = PValueMethod::TreatedScope;
  r.statistic_min = cre_worst_case(data, transform).min_stat(r.hypothesis);
  r.value = dist.survival(r.statistic_min);
  r.null_provenance = dist.provenance();
  return r;
}

PValueResult pvalue_berger(const ExperimentData& data, const RankTransform& transform, int k, double c, int k_prime,
                           const NullDistribution& dist) {
  const int n = data.n(), n_t = data.n_treated();
  if (k < 0 || k > n) throw FlagError("quantile index k out of range 0..n");
  if (k_prime < 0 || k_prime > n_t) throw FlagError("k' out of range 0..n_t");
  auto r = pvalue_treated(data, transform, k_prime, c, dist);
  r.hypothesis = {k, c, Scope::AllUnits};
  r.method = PValueMethod::BergerCorrected;
  r.k_prime = k_prime;
  r.correction = Hypergeometric(n, n - k, n_t).upper_tail(n_t - k_prime);
  r.value = std::min(1.0, r.value + r.correction);
  return r;
}

// Interval families --------------------------------------------------------

IntervalFamily prediction_intervals_treated(const ExperimentData& data, const RankTransform& transform, double alpha,
                                            const NullDistribution& dist) {
  require_alpha(alpha);
  require_cre(dist, data.n(), data.n_treated());
  const auto pooled = data.without_strata();
  return treated_family(cre_worst_case(pooled, transform), dist, jump_grid(pooled), alpha);
}

IntervalFamily prediction_intervals_control(const ExperimentData& data, const RankTransform& transform, double alpha,
                                            const NullDistribution& dist) {
  // Effects are unchanged by the switch, so treated-unit intervals of the
  // switched data are intervals for effects among the original controls.
  auto f = prediction_intervals_treated(switch_labels_negate(data.without_strata()), transform, alpha, dist);
  f.target.kind = TargetKind::SampleQuantilesControl;
  return f;
}

IntervalFamily original_intervals(const ExperimentData& data, const RankTransform& transform, double alpha,
                                  const NullDistribution& dist) {
  const auto treated = prediction_intervals_treated(data, transform, alpha, dist);
  IntervalFamily f;
  f.level = 1.0 - alpha;
  f.simultaneous = true;
  f.target.kind = TargetKind::SampleQuantilesAll;
  const int n_c = data.n_control();
  for (int k = 1; k <= data.n(); ++k) {
    const auto interval = k <= n_c ? OneSidedInterval::whole_line()
                                   : treated.entries[static_cast<std::size_t>(k - n_c - 1)].interval;
    f.entries.push_back({static_cast<double>(k), interval});
  }
  return f;
}

IntervalFamily combine_treated_control(const ExperimentData& data, const RankTransform& transform, double alpha,
                                       const CreNulls& nulls) {
  require_alpha(alpha);
  if (alpha >= 0.5) throw FlagError("alpha must lie in (0, 0.5) when combining treated and control intervals");
  const auto t = prediction_intervals_treated(data, transform, alpha, nulls.treated);
  const auto c = prediction_intervals_control(data, transform, alpha, nulls.control);
  return pool_families(t, c, 1.0 - 2.0 * alpha);
}

OneSidedInterval ci_single(const ExperimentData& data, const RankTransform& transform, int k, double alpha,
                           double gamma, const NullDistribution& dist, std::string* warning) {
  require_alpha(alpha);
  require_cre(dist, data.n(), data.n_treated());
  const int n = data.n(), n_t = data.n_treated();
  const int k_prime = choose_kprime_single(n, n_t, k, alpha, gamma);
  const double correction = Hypergeometric(n, n - k, n_t).upper_tail(n_t - k_prime);
  const double adjusted = alpha - correction;
  if (adjusted <= 0.0) {
    if (warning) *warning = "correction exhausts alpha for k=" + std::to_string(k) + "; interval is the whole line";
    return OneSidedInterval::whole_line();
  }
  if (k_prime == 0) return OneSidedInterval::whole_line();
  const auto pooled = data.without_strata();
  return invert_lower_bound(cre_worst_case(pooled, transform), dist, jump_grid(pooled), n_t - k_prime, adjusted);
}

CountInterval ci_count(const ExperimentData& data, const RankTransform& transform, double c, double alpha,
                       double gamma, const NullDistribution& dist) {
  require_alpha(alpha);
  require_cre(dist, data.n(), data.n_treated());
  const int n = data.n(), n_t = data.n_treated();
  const auto worst = cre_worst_case(data, transform);
  std::vector<int> accepted;
  for (int k = 0; k <= n; ++k) {
    const int k_prime = choose_kprime_single(n, n_t, k, alpha, gamma);
    const double correction = Hypergeometric(n, n - k, n_t).upper_tail(n_t - k_prime);
    const double p = std::min(1.0, dist.survival(worst.min_stat({k_prime, c, Scope::Treated})) + correction);
    if (p > alpha) accepted.push_back(n - k);
  }
  CountInterval out;
  std::sort(accepted.begin(), accepted.end());
  out.lower = accepted.front();
  out.upper = accepted.back();
  out.contiguous = accepted.back() - accepted.front() + 1 == static_cast<int>(accepted.size());
  return out;
}

namespace {

std::vector<long long> to_long(const std::vector<int>& ks) { return {ks.begin(), ks.end()}; }

void require_ks(const std::vector<int>& ks, int n) {
  if (ks.empty()) throw FlagError("at least one quantile index is required");
  for (std::size_t j = 0; j < ks.size(); ++j) {
    if (ks[j] < 1 || ks[j] > n) throw FlagError("quantile indices must lie in 1..n");
    if (j > 0 && ks[j] <= ks[j - 1]) throw FlagError("quantile indices must be strictly increasing");
  }
}

// Intervals I^{alpha'}_{t(k'_j)} for one orientation.
std::vector<OneSidedInterval> oriented_intervals(const ExperimentData& data, const RankTransform& transform,
                                                 const CorrectionSpec& spec, double alpha,
                                                 const NullDistribution& dist, std::vector<std::string>& warnings,
                                                 const char* side) {
  const double adjusted = alpha - spec.correction;
  std::vector<OneSidedInterval> out(spec.k_primes.size(), OneSidedInterval::whole_line());
  if (adjusted <= 0.0) {
    warnings.push_back(std::string(side) + ": correction exhausts alpha; intervals are the whole line");
    return out;
  }
  require_cre(dist, data.n(), data.n_treated());
  const auto worst = cre_worst_case(data, transform);
  const auto grid = jump_grid(data);
  FamilyInverter inverter(worst, dist, grid);
  for (std::size_t j = 0; j < out.size(); ++j) {
    const int kp = spec.k_primes[j];
    if (kp > 0) out[j] = inverter.invert(data.n_treated() - kp, adjusted).first;
  }
  return out;
}

}  // namespace

SimultaneousPlan plan_simultaneous(int n, int n_t, const std::vector<int>& ks, double alpha, double gamma,
                                   bool combine_sides, const MonteCarloConfig& mc) {
  require_alpha(alpha);
  require_ks(ks, n);
  SimultaneousPlan plan;
  plan.ks = ks;
  plan.alpha = alpha;
  plan.combine_sides = combine_sides;
  const double side_alpha = combine_sides ? alpha / 2 : alpha;
  plan.treated = choose_kprime_multi(n, n_t, to_long(ks), side_alpha, gamma, mc);
  if (combine_sides) plan.control = choose_kprime_multi(n, n - n_t, to_long(ks), side_alpha, gamma, mc);
  return plan;
}

IntervalFamily simultaneous_cis(const ExperimentData& data, const RankTransform& transform,
                                const SimultaneousPlan& plan, const CreNulls& nulls) {
  const auto pooled = data.without_strata();
  const double side_alpha = plan.combine_sides ? plan.alpha / 2 : plan.alpha;
  IntervalFamily f;
  f.level = 1.0 - plan.alpha;
  f.simultaneous = true;
  f.target.kind = TargetKind::SampleQuantilesAll;
  auto bounds = oriented_intervals(pooled, transform, plan.treated, side_alpha, nulls.treated, f.warnings, "treated");
  if (plan.combine_sides) {
    const auto switched = switch_labels_negate(pooled);
    const auto other = oriented_intervals(switched, transform, *plan.control, side_alpha, nulls.control, f.warnings,
                                          "control");
    for (std::size_t j = 0; j < bounds.size(); ++j) bounds[j] = tighter(bounds[j], other[j]);
  }
  for (std::size_t j = 0; j < bounds.size(); ++j) f.entries.push_back({static_cast<double>(plan.ks[j]), bounds[j]});
  return f;
}

IntervalFamily simultaneous_cis(const ExperimentData& data, const RankTransform& transform, const std::vector<int>& ks,
                                double alpha, double gamma, const MonteCarloConfig& mc, const CreNulls& nulls,
                                bool combine_sides) {
  const auto plan = plan_simultaneous(data.n(), data.n_treated(), ks, alpha, gamma, combine_sides, mc);
  return simultaneous_cis(data, transform, plan, nulls);
}

IntervalFamily individual_cis(const ExperimentData& data, const RankTransform& transform, const std::vector<int>& ks,
                              double alpha, double gamma, const CreNulls& nulls, bool combine_sides) {
  require_alpha(alpha);
  require_ks(ks, data.n());
  const auto pooled = data.without_strata();
  const auto switched = switch_labels_negate(pooled);
  const double side_alpha = combine_sides ? alpha / 2 : alpha;
  IntervalFamily f;
  f.level = 1.0 - alpha;
  f.simultaneous = false;
  f.target.kind = TargetKind::SampleQuantilesAll;
  for (int k : ks) {
    std::string warning;
    auto interval = ci_single(pooled, transform, k, side_alpha, gamma, nulls.treated, &warning);
    if (combine_sides)
      interval = tighter(interval, ci_single(switched, transform, k, side_alpha, gamma, nulls.control, &warning));
    if (!warning.empty()) f.warnings.push_back(warning);
    f.entries.push_back({static_cast<double>(k), interval});
  }
  return f;
}

IntervalFamily band(const IntervalFamily& family, int n) {
  IntervalFamily f;
  f.level = family.level;
  f.simultaneous = true;
  f.target = family.target;
  f.warnings = family.warnings;
  for (int k = 1; k <= n; ++k) {
    OneSidedInterval interval = OneSidedInterval::whole_line();
    for (const auto& e : family.entries)
      if (e.index <= k) interval = e.interval;
    f.entries.push_back({static_cast<double>(k), interval});
  }
  return f;
}

}  // namespace iteq
