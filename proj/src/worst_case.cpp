#include "iteq/worst_case.hpp"

#include "iteq/rank_engine.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace iteq {

StratumEvaluator::StratumEvaluator(std::span<const int> z, std::span<const double> y, std::vector<double> scores)
    : scores_(std::move(scores)) {
  prefix_.assign(scores_.size() + 1, 0.0);
  for (std::size_t r = 0; r < scores_.size(); ++r) prefix_[r + 1] = prefix_[r] + scores_[r];

  std::vector<int> order(z.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return y[static_cast<std::size_t>(a)] < y[static_cast<std::size_t>(b)];
  });
  for (int i : order) {
    const auto u = static_cast<std::size_t>(i);
    if (z[u] == 1) {
      treated_y_.push_back(y[u]);
      treated_idx_.push_back(i);
    } else {
      control_y_.push_back(y[u]);
      control_idx_.push_back(i);
    }
  }
}

// For each treated unit (ascending), the number of controls ranked below its
// imputed outcome Y - c. Comparing Y_i - Y_j against c directly keeps the
// ordering exact at the jump points c = Y_i - Y_j.
std::vector<int> StratumEvaluator::below_counts(double c) const {
  std::vector<int> below(treated_y_.size());
  const std::size_t nc = control_y_.size();
  std::size_t strict = 0, weak = 0;
  for (std::size_t a = 0; a < treated_y_.size(); ++a) {
    const double ya = treated_y_[a];
    while (strict < nc && ya - control_y_[strict] > c) ++strict;
    if (weak < strict) weak = strict;
    while (weak < nc && ya - control_y_[weak] >= c) ++weak;
    int count = static_cast<int>(strict);
    for (std::size_t j = strict; j < weak; ++j)
      if (control_idx_[j] < treated_idx_[a]) ++count;
    below[a] = count;
  }
  return below;
}

double StratumEvaluator::tail_value(int m, const std::vector<int>& below) const {
  double total = prefix_[static_cast<std::size_t>(m)];
  const int rest = treated() - m;
  for (int pos = 0; pos < rest; ++pos) {
    const int rank = m + pos + below[static_cast<std::size_t>(pos)] + 1;
    total += scores_[static_cast<std::size_t>(rank - 1)];
  }
  return total;
}

double StratumEvaluator::value(int m, double c) const { return tail_value(m, below_counts(c)); }

std::vector<double> StratumEvaluator::profile(int max_m, double c) const {
  const auto below = below_counts(c);
  std::vector<double> out;
  for (int m = 0; m <= std::min(max_m, treated()); ++m) out.push_back(tail_value(m, below));
  return out;
}

WorstCase::WorstCase(const ExperimentData& data, std::span<const RankTransform> transforms)
    : n_(data.n()), n_treated_(data.n_treated()) {
  one_treated_each_ = data.num_strata() > 1;
  for (int s = 0; s < data.num_strata(); ++s) {
    std::vector<int> z;
    std::vector<double> y;
    for (int i : data.stratum_units(s)) {
      z.push_back(data.z(i));
      y.push_back(data.y(i));
    }
    strata_.emplace_back(z, y, transform_for(transforms, s).scores(static_cast<int>(z.size())));
    if (strata_.back().treated() != 1) one_treated_each_ = false;
  }
}

Allocation WorstCase::best_allocation(int capacity, double c) const {
  capacity = std::clamp(capacity, 0, n_treated_);
  Allocation best;
  if (strata_.size() == 1) {
    best.slots = {capacity};
    best.value = strata_[0].value(capacity, c);
    return best;
  }

  if (one_treated_each_) {
    // Each stratum either takes its single slot or not: pick the largest gains.
    std::vector<std::pair<double, int>> gains;
    best.slots.assign(strata_.size(), 0);
    for (std::size_t s = 0; s < strata_.size(); ++s) {
      const auto f = strata_[s].profile(1, c);
      best.value += f[0];
      gains.emplace_back(f[0] - f[1], static_cast<int>(s));
    }
    std::stable_sort(gains.begin(), gains.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < capacity && i < static_cast<int>(gains.size()); ++i) {
      if (gains[static_cast<std::size_t>(i)].first <= 0.0) break;
      best.value -= gains[static_cast<std::size_t>(i)].first;
      best.slots[static_cast<std::size_t>(gains[static_cast<std::size_t>(i)].second)] = 1;
    }
    return best;
  }

  // dp[s][j]: minimum over the first s strata using exactly j slots.
  const auto S = strata_.size();
  const auto width = static_cast<std::size_t>(capacity) + 1;
  std::vector<std::vector<double>> dp(S + 1, std::vector<double>(width, kInf));
  std::vector<std::vector<int>> choice(S, std::vector<int>(width, 0));
  dp[0][0] = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    const auto f = strata_[s].profile(capacity, c);
    for (std::size_t j = 0; j < width; ++j) {
      if (dp[s][j] == kInf) continue;
      for (std::size_t m = 0; m < f.size() && j + m < width; ++m) {
        const double v = dp[s][j] + f[m];
        if (v < dp[s + 1][j + m]) {
          dp[s + 1][j + m] = v;
          choice[s][j + m] = static_cast<int>(m);
        }
      }
    }
  }
  std::size_t used = 0;
  for (std::size_t j = 1; j < width; ++j)
    if (dp[S][j] < dp[S][used]) used = j;
  best.value = dp[S][used];
  best.slots.assign(S, 0);
  for (std::size_t s = S; s-- > 0;) {
    const int m = choice[s][used];
    best.slots[s] = m;
    used -= static_cast<std::size_t>(m);
  }
  return best;
}

std::vector<double> WorstCase::min_stat_by_capacity(double c) const {
  const auto width = static_cast<std::size_t>(n_treated_) + 1;
  std::vector<double> row;
  if (strata_.size() == 1) {
    row = strata_[0].profile(n_treated_, c);
  } else if (one_treated_each_) {
    std::vector<double> gains;
    double base = 0.0;
    for (const auto& s : strata_) {
      const auto f = s.profile(1, c);
      base += f[0];
      gains.push_back(f[0] - f[1]);
    }
    std::sort(gains.begin(), gains.end(), std::greater<>());
    row.push_back(base);
    for (double g : gains) row.push_back(row.back() - std::max(g, 0.0));
  } else {
    row.assign(width, kInf);
    row[0] = 0.0;
    std::size_t reach = 0;
    for (const auto& s : strata_) {
      const auto f = s.profile(s.treated(), c);
      std::vector<double> next(width, kInf);
      for (std::size_t j = 0; j <= reach; ++j)
        for (std::size_t m = 0; m < f.size(); ++m) next[j + m] = std::min(next[j + m], row[j] + f[m]);
      reach += f.size() - 1;
      row = std::move(next);
    }
  }
  for (std::size_t j = 1; j < row.size(); ++j) row[j] = std::min(row[j], row[j - 1]);
  return row;
}

double WorstCase::min_stat(int capacity, double c) const { return best_allocation(capacity, c).value; }

int WorstCase::capacity_for(QuantileHypothesis h) const {
  switch (h.scope) {
    case Scope::AllUnits:
      if (h.k < 0 || h.k > n_) throw FlagError("quantile index k out of range 0..n");
      return std::min(n_ - h.k, n_treated_);
    case Scope::Treated:
      if (h.k < 0 || h.k > n_treated_) throw FlagError("quantile index k out of range 0..n_t");
      return n_treated_ - h.k;
    case Scope::Control:
      break;
  }
  throw FlagError("control-scope hypotheses are tested on label-switched data");
}

double WorstCase::min_stat(QuantileHypothesis h) const { return min_stat(capacity_for(h), h.c); }

double min_stat_cre(const ExperimentData& data, const RankTransform& transform, int k, double c) {
  const RankTransform ts[] = {transform};
  return WorstCase(data.without_strata(), ts).min_stat({k, c, Scope::AllUnits});
}

double min_stat_scre(const ExperimentData& data, std::span<const RankTransform> transforms, int k, double c) {
  return WorstCase(data, transforms).min_stat({k, c, Scope::AllUnits});
}

// Oracles ------------------------------------------------------------------

namespace {

double evaluate(const ExperimentData& data, std::span<const RankTransform> transforms, const std::vector<double>& y) {
  return stratified_statistic(data, y, transforms);
}

}  // namespace

double brute_force_min(const ExperimentData& data, std::span<const RankTransform> transforms, Scope scope, int k,
                       double c, std::span<const double> extra) {
  const int n = data.n();
  if (n > 8) throw FlagError("brute force limited to n <= 8");
  int budget = 0;
  if (scope == Scope::AllUnits) budget = n - k;
  else if (scope == Scope::Treated) budget = data.n_treated() - k;
  else throw FlagError("brute force supports AllUnits and Treated scopes");
  if (budget < 0) throw FlagError("k out of range");

  std::vector<double> values(extra.begin(), extra.end());
  values.push_back(c);
  values.push_back(kInf);  // index values.size() - 1 is the large effect
  const std::size_t large = values.size() - 1;

  std::vector<std::size_t> choice(static_cast<std::size_t>(n), 0);
  double best = kInf;
  std::function<void(int, int)> rec = [&](int i, int used) {
    if (i == n) {
      std::vector<double> y(static_cast<std::size_t>(n));
      for (int u = 0; u < n; ++u) {
        const auto uu = static_cast<std::size_t>(u);
        const double delta = values[choice[uu]];
        y[uu] = data.z(u) == 1 ? (delta == kInf ? kNegInf : data.y(u) - delta) : data.y(u);
      }
      best = std::min(best, evaluate(data, transforms, y));
      return;
    }
    const bool counts = scope == Scope::AllUnits || data.z(i) == 1;
    // Control effects never enter the imputation; under the treated scope they
    // are left at c.
    const std::size_t options = (scope == Scope::Treated && data.z(i) == 0) ? 1 : values.size();
    for (std::size_t v = 0; v < options; ++v) {
      const std::size_t pick = options == 1 ? large - 1 : v;
      const int next = used + ((pick == large && counts) ? 1 : 0);
      if (next > budget) continue;
      choice[static_cast<std::size_t>(i)] = pick;
      rec(i + 1, next);
    }
  };
  rec(0, 0);
  return best;
}

Allocation exhaustive_allocation_min(const ExperimentData& data, std::span<const RankTransform> transforms, int k,
                                     double c) {
  const int S = data.num_strata();
  std::vector<std::vector<double>> f(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    const auto units = data.stratum_units(s);
    std::vector<int> treated;
    for (int i : units)
      if (data.z(i) == 1) treated.push_back(i);
    // Largest outcome first; among ties the later unit first.
    std::sort(treated.begin(), treated.end(), [&](int a, int b) {
      return data.y(a) != data.y(b) ? data.y(a) > data.y(b) : a > b;
    });
    for (std::size_t m = 0; m <= treated.size(); ++m) {
      std::vector<int> z;
      std::vector<double> y;
      for (int i : units) {
        z.push_back(data.z(i));
        if (data.z(i) == 0) {
          y.push_back(data.y(i));
          continue;
        }
        const auto pos = static_cast<std::size_t>(std::find(treated.begin(), treated.end(), i) - treated.begin());
        y.push_back(pos < m ? kNegInf : data.y(i) - c);
      }
      f[static_cast<std::size_t>(s)].push_back(statistic(z, y, transform_for(transforms, s)));
    }
  }
  const int budget = std::max(0, data.n() - k);
  Allocation best;
  best.value = kInf;
  std::vector<int> slots(static_cast<std::size_t>(S), 0);
  std::function<void(int, int, double)> rec = [&](int s, int used, double acc) {
    if (s == S) {
      if (acc < best.value) {
        best.value = acc;
        best.slots = slots;
      }
      return;
    }
    const auto& fs = f[static_cast<std::size_t>(s)];
    for (int m = 0; m < static_cast<int>(fs.size()) && used + m <= budget; ++m) {
      slots[static_cast<std::size_t>(s)] = m;
      rec(s + 1, used + m, acc + fs[static_cast<std::size_t>(m)]);
    }
  };
  rec(0, 0, 0.0);
  return best;
}

}  // namespace iteq
