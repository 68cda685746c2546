#include "iteq/rank_engine.hpp"

#include "iteq/random.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>

namespace iteq {

std::vector<int> ranks(std::span<const double> values) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
  });
  std::vector<int> out(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) out[static_cast<std::size_t>(order[r])] = static_cast<int>(r) + 1;
  return out;
}

double statistic_with_scores(std::span<const int> z, std::span<const double> y,
                             std::span<const double> scores) {
  const auto r = ranks(y);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i] == 1) total += scores[static_cast<std::size_t>(r[i] - 1)];
  return total;
}

double statistic(std::span<const int> z, std::span<const double> y, const RankTransform& transform) {
  const auto scores = transform.scores(static_cast<int>(y.size()));
  return statistic_with_scores(z, y, scores);
}

const RankTransform& transform_for(std::span<const RankTransform> transforms, int s) {
  if (transforms.empty()) throw FlagError("at least one rank transform is required");
  return transforms.size() == 1 ? transforms[0] : transforms[static_cast<std::size_t>(s)];
}

double stratified_statistic(const ExperimentData& data, std::span<const double> y,
                            std::span<const RankTransform> transforms) {
  if (transforms.size() != 1 && transforms.size() != static_cast<std::size_t>(data.num_strata()))
    throw FlagError("need one rank transform or one per stratum");
  double total = 0.0;
  for (int s = 0; s < data.num_strata(); ++s) {
    const auto units = data.stratum_units(s);
    std::vector<int> zs;
    std::vector<double> ys;
    for (int i : units) {
      zs.push_back(data.z(i));
      ys.push_back(y[static_cast<std::size_t>(i)]);
    }
    total += statistic(zs, ys, transform_for(transforms, s));
  }
  return total;
}

double stratified_statistic(const ExperimentData& data, std::span<const RankTransform> transforms) {
  return stratified_statistic(data, data.outcome(), transforms);
}

// NullDistribution ---------------------------------------------------------

NullDistribution NullDistribution::from_masses(std::vector<Mass> masses, NullDesign design) {
  std::sort(masses.begin(), masses.end(), [](const Mass& a, const Mass& b) { return a.value < b.value; });
  NullDistribution d;
  d.provenance_ = Provenance::ExactEnumeration;
  d.design_ = std::move(design);
  for (const auto& m : masses) {
    if (!d.support_.empty() && d.support_.back() == m.value) {
      d.tail_.back() += m.prob;
    } else {
      d.support_.push_back(m.value);
      d.tail_.push_back(m.prob);
    }
  }
  // Accumulate from the top so small tails keep full relative precision.
  double acc = 0.0;
  for (std::size_t i = d.tail_.size(); i-- > 0;) {
    acc += d.tail_[i];
    d.tail_[i] = std::min(1.0, acc);
  }
  if (!d.tail_.empty()) d.tail_[0] = 1.0;
  return d;
}

NullDistribution NullDistribution::from_samples(std::vector<double> samples, NullDesign design,
                                                std::uint64_t seed) {
  std::sort(samples.begin(), samples.end());
  NullDistribution d;
  d.provenance_ = Provenance::MonteCarlo;
  d.design_ = std::move(design);
  d.draws_ = samples.size();
  d.seed_ = seed;
  const double total = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i == 0 || samples[i] != samples[i - 1]) {
      d.support_.push_back(samples[i]);
      d.tail_.push_back(static_cast<double>(samples.size() - i) / total);
    }
  }
  return d;
}

NullDistribution NullDistribution::gaussian(double mean, double sd, double lattice_step, NullDesign design) {
  NullDistribution d;
  d.provenance_ = Provenance::GaussianApproximation;
  d.design_ = std::move(design);
  d.mean_ = mean;
  d.sd_ = sd;
  d.lattice_ = lattice_step;
  return d;
}

NullDistribution NullDistribution::restore(Provenance provenance, NullDesign design, std::vector<double> support,
                                           std::vector<double> tail, std::uint64_t draws, std::uint64_t seed,
                                           double mean, double sd, double lattice_step) {
  if (support.size() != tail.size()) throw InputError("null distribution: support and tail lengths differ");
  if (!std::is_sorted(support.begin(), support.end()) ||
      std::adjacent_find(support.begin(), support.end()) != support.end())
    throw InputError("null distribution: support must be strictly increasing");
  for (std::size_t i = 0; i < tail.size(); ++i)
    if (!(tail[i] >= 0.0 && tail[i] <= 1.0) || (i > 0 && tail[i] > tail[i - 1]))
      throw InputError("null distribution: tail must be nonincreasing in [0, 1]");
  if (provenance == Provenance::GaussianApproximation ? !support.empty() || !(sd >= 0.0) : support.empty())
    throw InputError("null distribution: parts do not match the provenance");
  NullDistribution d;
  d.provenance_ = provenance;
  d.design_ = std::move(design);
  d.support_ = std::move(support);
  d.tail_ = std::move(tail);
  d.draws_ = draws;
  d.seed_ = seed;
  d.mean_ = mean;
  d.sd_ = sd;
  d.lattice_ = lattice_step;
  return d;
}

double NullDistribution::survival(double x) const {
  if (x == kNegInf) return 1.0;
  if (x == kInf) return 0.0;
  if (provenance_ == Provenance::GaussianApproximation) {
    const double shifted = x - 0.5 * lattice_;
    if (sd_ <= 0.0) return shifted <= mean_ ? 1.0 : 0.0;
    return 0.5 * std::erfc((shifted - mean_) / (sd_ * std::sqrt(2.0)));
  }
  // Sums of the same scores accumulated in a different order may differ in
  // the last bits; treat such values as equal (conservative direction).
  const double tol = 64.0 * DBL_EPSILON * std::max(1.0, std::abs(x));
  const auto it = std::lower_bound(support_.begin(), support_.end(), x - tol);
  if (it == support_.end()) return 0.0;
  return tail_[static_cast<std::size_t>(it - support_.begin())];
}

double NullDistribution::standard_error(double x) const {
  if (provenance_ != Provenance::MonteCarlo || draws_ == 0) return 0.0;
  const double g = survival(x);
  return std::sqrt(g * (1.0 - g) / static_cast<double>(draws_));
}

// Exact enumeration ----------------------------------------------------------

std::uint64_t choose_saturating(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 result = 1;
  for (int i = 1; i <= k; ++i) {
    result = result * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (result > UINT64_MAX) return UINT64_MAX;
  }
  return static_cast<std::uint64_t>(result);
}

std::vector<Mass> subset_sum_masses(std::span<const double> scores, int treated, std::uint64_t cap) {
  const int n = static_cast<int>(scores.size());
  const std::uint64_t count = choose_saturating(n, treated);
  if (count > cap)
    throw CapacityError("exact enumeration needs " + std::to_string(count) +
                        " assignments (cap " + std::to_string(cap) + "); use Monte Carlo");
  // Enumerate the smaller side and take the complement when that is control.
  const bool complement = treated > n - treated;
  const int k = complement ? n - treated : treated;
  double total = 0.0;
  for (double v : scores) total += v;

  std::vector<double> sums;
  sums.reserve(static_cast<std::size_t>(count));
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    double s = 0.0;
    for (int i : idx) s += scores[static_cast<std::size_t>(i)];
    sums.push_back(complement ? total - s : s);
    int pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (int j = pos + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  std::sort(sums.begin(), sums.end());
  std::vector<Mass> masses;
  const double p = 1.0 / static_cast<double>(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (!masses.empty() && masses.back().value == sums[i])
      masses.back().prob += p;
    else
      masses.push_back({sums[i], p});
  }
  return masses;
}

std::vector<Mass> convolve(const std::vector<Mass>& a, const std::vector<Mass>& b) {
  std::vector<Mass> out;
  out.reserve(a.size() * b.size());
  for (const auto& x : a)
    for (const auto& y : b) out.push_back({x.value + y.value, x.prob * y.prob});
  std::sort(out.begin(), out.end(), [](const Mass& l, const Mass& r) { return l.value < r.value; });
  std::vector<Mass> merged;
  for (const auto& m : out) {
    if (!merged.empty() && merged.back().value == m.value)
      merged.back().prob += m.prob;
    else
      merged.push_back(m);
  }
  return merged;
}

namespace {

NullDesign design_of(std::span<const StratumShape> strata) {
  NullDesign d;
  d.kind = strata.size() == 1 ? DesignKind::CRE : DesignKind::SCRE;
  d.strata.assign(strata.begin(), strata.end());
  return d;
}

NullDistribution exact_null(std::span<const StratumShape> strata, const std::vector<std::vector<double>>& scores,
                            std::uint64_t cap) {
  std::vector<Mass> acc{{0.0, 1.0}};
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const auto masses = subset_sum_masses(scores[s], strata[s].treated, cap);
    if (acc.size() * masses.size() > cap)
      throw CapacityError("exact stratified convolution exceeds the cap; use Monte Carlo");
    acc = s == 0 ? masses : convolve(acc, masses);
  }
  return NullDistribution::from_masses(std::move(acc), design_of(strata));
}

NullDistribution monte_carlo_null(std::span<const StratumShape> strata,
                                  const std::vector<std::vector<double>>& scores, const MonteCarloConfig& mc) {
  if (mc.draws == 0) throw FlagError("Monte Carlo draw count must be positive");
  std::vector<double> totals(strata.size(), 0.0);
  for (std::size_t s = 0; s < strata.size(); ++s)
    for (double v : scores[s]) totals[s] += v;

  std::vector<double> samples(mc.draws);
  parallel_for(mc.draws, mc.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<int> buffer;
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng = Rng::substream(mc.seed, r);
      double value = 0.0;
      for (std::size_t s = 0; s < strata.size(); ++s) {
        const int n = strata[s].size;
        const bool complement = strata[s].treated > n - strata[s].treated;
        const int k = complement ? n - strata[s].treated : strata[s].treated;
        buffer.resize(static_cast<std::size_t>(n));
        std::iota(buffer.begin(), buffer.end(), 0);
        double picked = 0.0;
        for (int j = 0; j < k; ++j) {
          const auto swap_with = static_cast<std::size_t>(j) + rng.below(static_cast<std::uint64_t>(n - j));
          std::swap(buffer[static_cast<std::size_t>(j)], buffer[swap_with]);
          picked += scores[s][static_cast<std::size_t>(buffer[static_cast<std::size_t>(j)])];
        }
        value += complement ? totals[s] - picked : picked;
      }
      samples[r] = value;
    }
  });
  return NullDistribution::from_samples(std::move(samples), design_of(strata), mc.seed);
}

}  // namespace

NullDistribution null_distribution(std::span<const StratumShape> strata, std::span<const RankTransform> transforms,
                                   const NullOptions& options) {
  if (strata.empty()) throw FlagError("design has no strata");
  std::vector<std::vector<double>> scores;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    if (strata[s].treated < 0 || strata[s].treated > strata[s].size) throw FlagError("invalid stratum shape");
    scores.push_back(transform_for(transforms, static_cast<int>(s)).scores(strata[s].size));
  }
  switch (options.mode) {
    case NullMode::Exact:
      return exact_null(strata, scores, options.exact_cap);
    case NullMode::MonteCarlo:
      return monte_carlo_null(strata, scores, options.mc);
    case NullMode::Auto:
      try {
        return exact_null(strata, scores, options.exact_cap);
      } catch (const CapacityError&) {
        return monte_carlo_null(strata, scores, options.mc);
      }
  }
  return monte_carlo_null(strata, scores, options.mc);
}

NullDistribution null_distribution(StratumShape design, const RankTransform& transform, const NullOptions& options) {
  const StratumShape strata[] = {design};
  const RankTransform transforms[] = {transform};
  return null_distribution(std::span<const StratumShape>(strata), std::span<const RankTransform>(transforms), options);
}

}  // namespace iteq
