#include "iteq/tail_distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace iteq {

// DiscreteTable ------------------------------------------------------------

void DiscreteTable::assign_from_logs(long long lo, const std::vector<double>& logs) {
  lo_ = lo;
  const double top = *std::max_element(logs.begin(), logs.end());
  pmf_.resize(logs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    pmf_[i] = std::exp(logs[i] - top);
    total += pmf_[i];
  }
  for (auto& p : pmf_) p /= total;
  upper_.assign(pmf_.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = pmf_.size(); i-- > 0;) {
    upper_[i] = acc;
    acc += pmf_[i];
  }
}

double DiscreteTable::pmf(long long x) const {
  if (x < lo() || x > hi()) return 0.0;
  return pmf_[static_cast<std::size_t>(x - lo_)];
}

double DiscreteTable::upper_tail(long long x) const {
  if (x < lo()) return 1.0;
  if (x >= hi()) return 0.0;
  return upper_[static_cast<std::size_t>(x - lo_)];
}

double DiscreteTable::cdf(long long x) const { return 1.0 - upper_tail(x); }

long long DiscreteTable::smallest_with_tail_at_most(double t) const {
  // upper_ is nonincreasing; first index with upper_ <= t.
  const auto it = std::lower_bound(upper_.begin(), upper_.end(), t, [](double u, double v) { return u > v; });
  return lo_ + static_cast<long long>(it - upper_.begin());
}

long long DiscreteTable::quantile(double q) const {
  if (q <= 0.0) return lo();
  return smallest_with_tail_at_most(1.0 - q + 1e-12);
}

long long DiscreteTable::sample(Rng& rng) const {
  double u = rng.uniform01();
  for (std::size_t i = 0; i < pmf_.size(); ++i) {
    u -= pmf_[i];
    if (u < 0.0) return lo_ + static_cast<long long>(i);
  }
  return hi();
}

namespace {

double log_choose(long long n, long long k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// Chop-down inversion from the mode: `ratio_up(x)` = p(x+1)/p(x) and
// `ratio_down(x)` = p(x-1)/p(x).
template <class Up, class Down>
long long chop_down(long long lo, long long hi, long long mode, double p_mode, Up ratio_up, Down ratio_down,
                    Rng& rng) {
  double u = rng.uniform01() - p_mode;
  if (u < 0.0) return mode;
  long long up = mode, down = mode;
  double p_up = p_mode, p_down = p_mode;
  while (up < hi || down > lo) {
    if (up < hi) {
      p_up *= ratio_up(up);
      ++up;
      u -= p_up;
      if (u < 0.0) return up;
    }
    if (down > lo) {
      p_down *= ratio_down(down);
      --down;
      u -= p_down;
      if (u < 0.0) return down;
    }
  }
  return mode;
}

}  // namespace

// Hypergeometric -------------------------------------------------------------

Hypergeometric::Hypergeometric(long long N, long long K, long long n) {
  if (N < 0 || K < 0 || K > N || n < 0 || n > N)
    throw FlagError("invalid hypergeometric parameters (N=" + std::to_string(N) + ", K=" + std::to_string(K) +
                    ", n=" + std::to_string(n) + ")");
  const long long lo = std::max(0LL, n - (N - K));
  const long long hi = std::min(n, K);
  std::vector<double> logs{0.0};
  for (long long x = lo; x < hi; ++x) {
    const double r = std::log(static_cast<double>(K - x)) + std::log(static_cast<double>(n - x)) -
                     std::log(static_cast<double>(x + 1)) - std::log(static_cast<double>(N - K - n + x + 1));
    logs.push_back(logs.back() + r);
  }
  assign_from_logs(lo, logs);
}

long long Hypergeometric::draw(long long N, long long K, long long n, Rng& rng) {
  const long long lo = std::max(0LL, n - (N - K));
  const long long hi = std::min(n, K);
  if (lo == hi) return lo;
  const long long mode = std::clamp((n + 1) * (K + 1) / (N + 2), lo, hi);
  const double p_mode = std::exp(log_choose(K, mode) + log_choose(N - K, n - mode) - log_choose(N, n));
  const auto up = [&](long long x) {
    return static_cast<double>(K - x) * static_cast<double>(n - x) /
           (static_cast<double>(x + 1) * static_cast<double>(N - K - n + x + 1));
  };
  const auto down = [&](long long x) {
    return static_cast<double>(x) * static_cast<double>(N - K - n + x) /
           (static_cast<double>(K - x + 1) * static_cast<double>(n - x + 1));
  };
  return chop_down(lo, hi, mode, p_mode, up, down, rng);
}

// Binomial -----------------------------------------------------------------

Binomial::Binomial(long long n, double p) {
  if (n < 0 || !(p >= 0.0 && p <= 1.0)) throw FlagError("invalid binomial parameters");
  if (p == 0.0 || p == 1.0 || n == 0) {
    assign_from_logs(p == 1.0 ? n : 0, {0.0});
    return;
  }
  std::vector<double> logs{0.0};
  const double odds = std::log(p) - std::log1p(-p);
  for (long long x = 0; x < n; ++x)
    logs.push_back(logs.back() + std::log(static_cast<double>(n - x)) - std::log(static_cast<double>(x + 1)) + odds);
  assign_from_logs(0, logs);
}

long long Binomial::draw(long long n, double p, Rng& rng) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  const long long mode = std::min(n, static_cast<long long>(std::floor(static_cast<double>(n + 1) * p)));
  const double p_mode = std::exp(log_choose(n, mode) + static_cast<double>(mode) * std::log(p) +
                                 static_cast<double>(n - mode) * std::log1p(-p));
  const double odds = p / (1.0 - p);
  const auto up = [&](long long x) { return static_cast<double>(n - x) / static_cast<double>(x + 1) * odds; };
  const auto down = [&](long long x) { return static_cast<double>(x) / static_cast<double>(n - x + 1) / odds; };
  return chop_down(0, n, mode, p_mode, up, down, rng);
}

std::vector<long long> draw_multivariate_hypergeometric(const std::vector<long long>& counts, long long n, Rng& rng) {
  long long remaining = std::accumulate(counts.begin(), counts.end(), 0LL);
  std::vector<long long> out(counts.size(), 0);
  for (std::size_t c = 0; c + 1 < counts.size() && n > 0; ++c) {
    out[c] = Hypergeometric::draw(remaining, counts[c], n, rng);
    remaining -= counts[c];
    n -= out[c];
  }
  if (!counts.empty()) out.back() += n;
  return out;
}

std::vector<long long> draw_multinomial(const std::vector<double>& probs, long long n, Rng& rng) {
  double remaining = 1.0;
  std::vector<long long> out(probs.size(), 0);
  for (std::size_t c = 0; c + 1 < probs.size() && n > 0; ++c) {
    const double p = remaining > 0.0 ? std::clamp(probs[c] / remaining, 0.0, 1.0) : 1.0;
    out[c] = Binomial::draw(n, p, rng);
    remaining -= probs[c];
    n -= out[c];
  }
  if (!probs.empty()) out.back() += n;
  return out;
}

long long population_rank(long long N, double beta) {
  const double x = static_cast<double>(N) * beta;
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<long long>(r);
  return static_cast<long long>(std::ceil(x));
}

// Union corrections --------------------------------------------------------

namespace {

// Marginal laws of H_j and, for J > 1, Monte Carlo draws of (H_1..H_J).
class UnionModel {
public:
  static UnionModel finite(long long N, int n, const std::vector<long long>& ks) {
    if (ks.empty()) throw FlagError("at least one quantile index is required");
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (ks[j] < 0 || ks[j] > N) throw FlagError("quantile index outside 0..N");
      if (j > 0 && ks[j] <= ks[j - 1]) throw FlagError("quantile indices must be strictly increasing");
    }
    if (n < 0 || n > N) throw FlagError("sample size must lie in 0..N");
    UnionModel m;
    m.n_ = n;
    for (long long k : ks) m.marginals_.push_back(Hypergeometric(N, N - k, n));
    m.cells_.push_back(ks[0]);
    for (std::size_t j = 1; j < ks.size(); ++j) m.cells_.push_back(ks[j] - ks[j - 1]);
    m.cells_.push_back(N - ks.back());
    return m;
  }

  static UnionModel iid(int n, const std::vector<double>& betas) {
    if (betas.empty()) throw FlagError("at least one quantile level is required");
    for (std::size_t j = 0; j < betas.size(); ++j) {
      if (!(betas[j] >= 0.0 && betas[j] <= 1.0)) throw FlagError("quantile levels must lie in [0, 1]");
      if (j > 0 && betas[j] <= betas[j - 1]) throw FlagError("quantile levels must be strictly increasing");
    }
    UnionModel m;
    m.n_ = n;
    m.iid_ = true;
    for (double b : betas) m.marginals_.push_back(Binomial(n, 1.0 - b));
    m.probs_.push_back(betas[0]);
    for (std::size_t j = 1; j < betas.size(); ++j) m.probs_.push_back(betas[j] - betas[j - 1]);
    m.probs_.push_back(1.0 - betas.back());
    return m;
  }

  std::size_t J() const { return marginals_.size(); }
  const DiscreteTable& marginal(std::size_t j) const { return marginals_[j]; }

  void check(const std::vector<int>& k_primes) const {
    if (k_primes.size() != J()) throw FlagError("need one k' per quantile");
    for (int kp : k_primes)
      if (kp < 0 || kp > n_) throw FlagError("k' must lie in 0..n");
  }

  double bonferroni(const std::vector<int>& k_primes) const {
    double total = 0.0;
    for (std::size_t j = 0; j < J(); ++j) total += marginals_[j].upper_tail(n_ - k_primes[j]);
    return std::min(1.0, total);
  }

  // Suffix counts H_j = sum of cells j..J for every draw, row-major.
  void simulate(const MonteCarloConfig& mc) {
    if (simulated_) return;
    if (mc.draws == 0) throw FlagError("Monte Carlo draw count must be positive");
    draws_ = mc.draws;
    suffix_.assign(draws_ * J(), 0);
    parallel_for(draws_, mc.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) {
        Rng rng = Rng::substream(mc.seed, r);
        const auto cells = iid_ ? draw_multinomial(probs_, n_, rng) : draw_multivariate_hypergeometric(cells_, n_, rng);
        long long acc = 0;
        for (std::size_t j = J(); j-- > 0;) {
          acc += cells[j + 1];
          suffix_[r * J() + j] = static_cast<int>(acc);
        }
      }
    });
    simulated_ = true;
  }

  TailProbability union_mc(const std::vector<int>& k_primes) const {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < draws_; ++r) {
      for (std::size_t j = 0; j < J(); ++j) {
        if (suffix_[r * J() + j] > n_ - k_primes[j]) {
          ++hits;
          break;
        }
      }
    }
    TailProbability t;
    t.exact = false;
    t.value = static_cast<double>(hits) / static_cast<double>(draws_);
    t.standard_error = std::sqrt(t.value * (1.0 - t.value) / static_cast<double>(draws_));
    return t;
  }

  TailProbability evaluate(const std::vector<int>& k_primes, const MonteCarloConfig& mc, bool force_mc) {
    check(k_primes);
    if (J() == 1 && !force_mc) return {marginals_[0].upper_tail(n_ - k_primes[0]), 0.0, true};
    simulate(mc);
    return union_mc(k_primes);
  }

  CorrectionSpec choose(double alpha, double gamma, const MonteCarloConfig& mc) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw FlagError("alpha must lie in (0, 1)");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw FlagError("gamma must lie in [0, 1)");
    const double budget = gamma * alpha;
    const auto kprimes_at = [&](double kappa) {
      std::vector<int> kp;
      for (const auto& m : marginals_)
        kp.push_back(n_ - static_cast<int>(m.smallest_with_tail_at_most(kappa * budget)));
      return kp;
    };
    const auto assess = [&](double kappa) {
      CorrectionSpec spec;
      spec.gamma = gamma;
      spec.kappa = kappa;
      spec.k_primes = kprimes_at(kappa);
      spec.bonferroni = bonferroni(spec.k_primes);
      if (J() == 1) {
        spec.correction = spec.mc_estimate = spec.bonferroni;
      } else {
        simulate(mc);
        spec.mc_estimate = union_mc(spec.k_primes).value;
        spec.correction = std::min(spec.mc_estimate, spec.bonferroni);
      }
      return spec;
    };

    std::vector<double> grid{1.0 / static_cast<double>(J())};
    for (int m = 1; m <= 1000; ++m) {
      const double v = m / 1000.0;
      if (v > grid[0] + 1e-12) grid.push_back(v);
    }
    auto top = assess(grid.back());
    if (top.correction <= budget) return top;
    // grid[lo] feasible (union bound), grid[hi] not; the correction is
    // nondecreasing in kappa because the draws are shared.
    std::size_t lo = 0, hi = grid.size() - 1;
    auto best = assess(grid[lo]);
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      auto s = assess(grid[mid]);
      if (s.correction <= budget) {
        lo = mid;
        best = std::move(s);
      } else {
        hi = mid;
      }
    }
    return best;
  }

private:
  int n_ = 0;
  bool iid_ = false;
  std::vector<DiscreteTable> marginals_;
  std::vector<long long> cells_;
  std::vector<double> probs_;
  bool simulated_ = false;
  std::size_t draws_ = 0;
  std::vector<int> suffix_;
};

}  // namespace

TailProbability delta_h(const std::vector<int>& k_primes, long long N, int n, const std::vector<long long>& ks,
                        const MonteCarloConfig& mc, bool force_monte_carlo) {
  return UnionModel::finite(N, n, ks).evaluate(k_primes, mc, force_monte_carlo);
}

TailProbability delta_m(const std::vector<int>& k_primes, int n, const std::vector<double>& betas,
                        const MonteCarloConfig& mc, bool force_monte_carlo) {
  return UnionModel::iid(n, betas).evaluate(k_primes, mc, force_monte_carlo);
}

int choose_kprime_single(int n, int n_t, int k, double alpha, double gamma) {
  if (k < 0 || k > n) throw FlagError("quantile index k out of range 0..n");
  if (!(alpha > 0.0 && alpha < 1.0)) throw FlagError("alpha must lie in (0, 1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw FlagError("gamma must lie in [0, 1)");
  const Hypergeometric h(n, n - k, n_t);
  return n_t - static_cast<int>(h.smallest_with_tail_at_most(gamma * alpha));
}

CorrectionSpec choose_kprime_multi(long long N, int n, const std::vector<long long>& ks, double alpha, double gamma,
                                   const MonteCarloConfig& mc) {
  return UnionModel::finite(N, n, ks).choose(alpha, gamma, mc);
}

CorrectionSpec choose_kprime_multinomial(int n, const std::vector<double>& betas, double alpha, double gamma,
                                         const MonteCarloConfig& mc) {
  return UnionModel::iid(n, betas).choose(alpha, gamma, mc);
}

std::vector<TailProbability> delta_h_converges(const std::vector<long long>& N_sequence, int n,
                                               const std::vector<double>& betas, const std::vector<int>& k_primes,
                                               const MonteCarloConfig& mc) {
  const auto m = delta_m(k_primes, n, betas, mc);
  std::vector<TailProbability> out;
  for (long long N : N_sequence) {
    std::vector<long long> ks;
    for (double b : betas) ks.push_back(population_rank(N, b));
    const auto h = delta_h(k_primes, N, n, ks, mc);
    out.push_back({std::abs(h.value - m.value),
                   std::sqrt(h.standard_error * h.standard_error + m.standard_error * m.standard_error),
                   h.exact && m.exact});
  }
  return out;
}

}  // namespace iteq
