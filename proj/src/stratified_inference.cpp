#include "iteq/stratified_inference.hpp"

#include "iteq/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iteq {

namespace {

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw FlagError("alpha must lie in (0, 1)");
}

std::vector<StratumShape> switched_shapes(const ExperimentData& data) {
  auto shapes = data.stratum_shapes();
  for (auto& s : shapes) s.treated = s.size - s.treated;
  return shapes;
}

}  // namespace

ScreNulls scre_nulls(const ExperimentData& data, std::span<const RankTransform> transforms,
                     const NullOptions& options) {
  const auto shapes = data.stratum_shapes();
  const auto other = switched_shapes(data);
  auto treated = null_distribution(shapes, transforms, options);
  if (shapes == other) return {treated, treated};
  return {treated, null_distribution(other, transforms, options)};
}

PValueResult pvalue_scre(const ExperimentData& data, std::span<const RankTransform> transforms, int k, double c,
                         const NullDistribution& dist) {
  require_design(dist, data.stratum_shapes());
  PValueResult r;
  r.hypothesis = {k, c, Scope::AllUnits};
  r.statistic_min = WorstCase(data, transforms).min_stat(r.hypothesis);
  r.value = dist.survival(r.statistic_min);
  r.null_provenance = dist.provenance();
  return r;
}

PValueResult pvalue_scre_treated(const ExperimentData& data, std::span<const RankTransform> transforms, int k,
                                 double c, const NullDistribution& dist) {
  require_design(dist, data.stratum_shapes());
  PValueResult r;
  r.hypothesis = {k, c, Scope::Treated};
  r.method = PValueMethod::TreatedScope;
  r.statistic_min = WorstCase(data, transforms).min_stat(r.hypothesis);
  r.value = dist.survival(r.statistic_min);
  r.null_provenance = dist.provenance();
  return r;
}

IntervalFamily intervals_scre(const ExperimentData& data, std::span<const RankTransform> transforms, double alpha,
                              const NullDistribution& dist) {
  require_alpha(alpha);
  require_design(dist, data.stratum_shapes());
  return treated_family(WorstCase(data, transforms), dist, jump_grid(data), alpha);
}

IntervalFamily intervals_scre_control(const ExperimentData& data, std::span<const RankTransform> transforms,
                                      double alpha, const NullDistribution& dist) {
  auto f = intervals_scre(switch_labels_negate(data), transforms, alpha, dist);
  f.target.kind = TargetKind::SampleQuantilesControl;
  return f;
}

IntervalFamily combine_scre(const ExperimentData& data, std::span<const RankTransform> transforms, double alpha,
                            const ScreNulls& nulls) {
  require_alpha(alpha);
  if (alpha >= 0.5) throw FlagError("alpha must lie in (0, 0.5) when combining treated and control intervals");
  return pool_families(intervals_scre(data, transforms, alpha, nulls.treated),
                       intervals_scre_control(data, transforms, alpha, nulls.control), 1.0 - 2.0 * alpha);
}

// Sensitivity analysis -----------------------------------------------------

SensitivityModel SensitivityModel::from_gamma(double gamma) {
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw FlagError("Gamma must be a finite number >= 1");
  return {gamma};
}

SensitivityModel SensitivityModel::from_log_gamma(double log_gamma) {
  if (!(log_gamma >= 0.0)) throw FlagError("log Gamma must be >= 0");
  return from_gamma(std::exp(log_gamma));
}

void validate_matched_sets(const ExperimentData& data) {
  for (const auto& s : data.stratum_shapes()) {
    if (s.size < 2) throw InputError("matched sets need at least two units");
    if (s.treated != 1) throw InputError("matched sets need exactly one treated unit");
  }
}

GkrMoments gkr_moments(std::span<const double> scores, double gamma) {
  std::vector<double> q(scores.begin(), scores.end());
  std::sort(q.begin(), q.end());
  const int n = static_cast<int>(q.size());
  GkrMoments best;
  best.mean = kNegInf;
  for (int b = 1; b < n; ++b) {
    double s1 = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double w = i >= n - b ? gamma : 1.0;
      s1 += w * q[static_cast<std::size_t>(i)];
      s2 += w * q[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i)];
    }
    const double denom = (n - b) + gamma * b;
    const double mean = s1 / denom;
    const double var = std::max(0.0, s2 / denom - mean * mean);
    if (mean > best.mean || (mean == best.mean && var > best.variance)) best = {mean, var, b};
  }
  return best;
}

namespace {

NullDesign sensitivity_design(std::span<const StratumShape> shapes, double gamma, const char* structure) {
  NullDesign d;
  d.kind = DesignKind::Sensitivity;
  d.strata.assign(shapes.begin(), shapes.end());
  d.gamma = gamma;
  d.structure = structure;
  return d;
}

// Common lattice spacing of the statistic when all scores are integers.
double integer_lattice(const std::vector<std::vector<double>>& scores) {
  long long g = 0;
  for (const auto& q : scores) {
    for (std::size_t i = 1; i < q.size(); ++i) {
      const double d = std::abs(q[i] - q[0]);
      if (d != std::floor(d) || d > 1e15) return 0.0;
      g = std::gcd(g, static_cast<long long>(d));
    }
  }
  return static_cast<double>(g);
}

NullDistribution pairs_exact(const std::vector<std::vector<double>>& scores, double p, const NullDesign& design,
                             std::uint64_t cap) {
  std::vector<Mass> acc{{0.0, 1.0}};
  for (const auto& q : scores) {
    const double lo = std::min(q[0], q[1]), hi = std::max(q[0], q[1]);
    std::vector<Mass> pair = lo == hi ? std::vector<Mass>{{lo, 1.0}} : std::vector<Mass>{{lo, 1.0 - p}, {hi, p}};
    if (acc.size() * pair.size() > cap) throw CapacityError("exact pair convolution exceeds the cap; use Monte Carlo");
    acc = convolve(acc, pair);
  }
  return NullDistribution::from_masses(std::move(acc), design);
}

NullDistribution pairs_monte_carlo(const std::vector<std::vector<double>>& scores, double p, const NullDesign& design,
                                   const MonteCarloConfig& mc) {
  if (mc.draws == 0) throw FlagError("Monte Carlo draw count must be positive");
  std::vector<double> samples(mc.draws);
  parallel_for(mc.draws, mc.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng = Rng::substream(mc.seed, r);
      double value = 0.0;
      for (const auto& q : scores) {
        const double u = rng.uniform01();
        value += u < p ? std::max(q[0], q[1]) : std::min(q[0], q[1]);
      }
      samples[r] = value;
    }
  });
  return NullDistribution::from_samples(std::move(samples), design, mc.seed);
}

}  // namespace

NullDistribution worst_case_tail(std::span<const StratumShape> shapes, std::span<const RankTransform> transforms,
                                 double gamma, SensitivityMode mode, const NullOptions& options) {
  SensitivityModel::from_gamma(gamma);
  if (shapes.empty()) throw FlagError("design has no strata");
  std::vector<std::vector<double>> scores;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    if (shapes[s].size < 2 || shapes[s].treated != 1)
      throw InputError("sensitivity analysis needs sets of at least two units with one treated unit");
    if (mode == SensitivityMode::PairsExact && shapes[s].size != 2)
      throw FlagError("pairs mode needs every matched set to have two units");
    scores.push_back(transform_for(transforms, static_cast<int>(s)).scores(shapes[s].size));
  }
  if (gamma == 1.0) return null_distribution(shapes, transforms, options);

  if (mode == SensitivityMode::GaussianGKR) {
    double mean = 0, var = 0;
    for (const auto& q : scores) {
      const auto m = gkr_moments(q, gamma);
      mean += m.mean;
      var += m.variance;
    }
    return NullDistribution::gaussian(mean, std::sqrt(var), integer_lattice(scores),
                                      sensitivity_design(shapes, gamma, "gkr"));
  }

  const double p = gamma / (1.0 + gamma);
  const auto design = sensitivity_design(shapes, gamma, "pairs");
  switch (options.mode) {
    case NullMode::Exact:
      return pairs_exact(scores, p, design, options.exact_cap);
    case NullMode::MonteCarlo:
      return pairs_monte_carlo(scores, p, design, options.mc);
    case NullMode::Auto:
      break;
  }
  try {
    return pairs_exact(scores, p, design, options.exact_cap);
  } catch (const CapacityError&) {
    return pairs_monte_carlo(scores, p, design, options.mc);
  }
}

PValueResult pvalue_sensitivity(const ExperimentData& data, std::span<const RankTransform> transforms, int k, double c,
                                double gamma, SensitivityMode mode, const NullOptions& options) {
  validate_matched_sets(data);
  const auto shapes = data.stratum_shapes();
  const auto tail = worst_case_tail(shapes, transforms, gamma, mode, options);
  return pvalue_scre_treated(data, transforms, k, c, tail);
}

IntervalFamily sensitivity_intervals(const ExperimentData& data, std::span<const RankTransform> transforms,
                                     double alpha, const NullDistribution& worst_tail) {
  validate_matched_sets(data);
  return intervals_scre(data, transforms, alpha, worst_tail);
}

SensitivityCurve sensitivity_curve(const ExperimentData& data, std::span<const RankTransform> transforms, double alpha,
                                   const std::vector<double>& gammas, SensitivityMode mode,
                                   const NullOptions& options) {
  validate_matched_sets(data);
  require_alpha(alpha);
  if (gammas.empty()) throw FlagError("Gamma grid is empty");
  SensitivityCurve curve;
  curve.gammas = gammas;
  curve.largest_gamma_excluding_zero.assign(static_cast<std::size_t>(data.n_treated()), std::nullopt);
  const auto shapes = data.stratum_shapes();
  const auto worst = WorstCase(data, transforms);
  const auto grid = jump_grid(data);
  for (double gamma : gammas) {
    const auto tail = worst_case_tail(shapes, transforms, gamma, mode, options);
    auto f = treated_family(worst, tail, grid, alpha);
    for (std::size_t k = 0; k < f.entries.size(); ++k) {
      auto& best = curve.largest_gamma_excluding_zero[k];
      if (!f.entries[k].interval.contains(0.0) && (!best || gamma > *best)) best = gamma;
    }
    if (mode == SensitivityMode::GaussianGKR && gamma != 1.0)
      f.warnings.push_back("Gaussian approximation to the worst-case null; valid as the number of sets grows");
    curve.families.push_back(std::move(f));
  }
  return curve;
}

}  // namespace iteq
