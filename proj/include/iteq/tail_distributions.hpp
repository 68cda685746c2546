// Hypergeometric and binomial tails, the union-event corrections for
// simultaneous inference, and the rules choosing the shifted indices k'.

#pragma once

#include "iteq/core.hpp"
#include "iteq/random.hpp"

#include <cstdint>
#include <vector>

namespace iteq {

/// Probability table of an integer-valued distribution on [lo, lo + size).
class DiscreteTable {
public:
  long long lo() const { return lo_; }
  long long hi() const { return lo_ + static_cast<long long>(pmf_.size()) - 1; }
  double pmf(long long x) const;
  double cdf(long long x) const;
  /// P(X > x).
  double upper_tail(long long x) const;
  /// min{x : CDF(x) >= q}.
  long long quantile(double q) const;
  /// Smallest x with P(X > x) <= t.
  long long smallest_with_tail_at_most(double t) const;
  /// Inversion sampling.
  long long sample(Rng& rng) const;

protected:
  /// Builds from log-probabilities relative to any base, normalising.
  void assign_from_logs(long long lo, const std::vector<double>& logs);

private:
  long long lo_ = 0;
  std::vector<double> pmf_;
  std::vector<double> upper_;  // upper_[i] = P(X > lo + i), summed from the top
};

/// HG(N, K, n): successes in n draws without replacement from N items, K of
/// which are successes.
class Hypergeometric : public DiscreteTable {
public:
  Hypergeometric(long long N, long long K, long long n);
  /// One draw without building a table (chop-down search from the mode).
  static long long draw(long long N, long long K, long long n, Rng& rng);
};

class Binomial : public DiscreteTable {
public:
  Binomial(long long n, double p);
  static long long draw(long long n, double p, Rng& rng);
};

/// Counts of a sample of size n from an urn with `counts[c]` balls of color c.
std::vector<long long> draw_multivariate_hypergeometric(const std::vector<long long>& counts, long long n, Rng& rng);
/// Cell counts of n i.i.d. categorical draws with probabilities `probs`.
std::vector<long long> draw_multinomial(const std::vector<double>& probs, long long n, Rng& rng);

/// ceil(N * beta), robust to representation error in beta.
long long population_rank(long long N, double beta);

struct TailProbability {
  double value = 0.0;
  double standard_error = 0.0;  // zero when exact
  bool exact = true;
};

/// Delta_H: P(union_j { H_j > n - k'_j }) where H_j is the number of sampled
/// items among the N - k_j largest, for a simple random sample of size n from
/// N. Exact for J = 1 unless `force_monte_carlo`.
TailProbability delta_h(const std::vector<int>& k_primes, long long N, int n, const std::vector<long long>& ks,
                        const MonteCarloConfig& mc, bool force_monte_carlo = false);

/// Delta_M: the i.i.d. analogue, H_j ~ Bin(n, 1 - beta_j) jointly multinomial.
TailProbability delta_m(const std::vector<int>& k_primes, int n, const std::vector<double>& betas,
                        const MonteCarloConfig& mc, bool force_monte_carlo = false);

/// k' = n_t - q_{HG(n, n-k, n_t)}(1 - gamma * alpha); correction <= gamma * alpha.
int choose_kprime_single(int n, int n_t, int k, double alpha, double gamma);

struct CorrectionSpec {
  std::vector<int> k_primes;
  double correction = 0.0;    // the Delta used to shrink alpha
  double mc_estimate = 0.0;   // Monte Carlo union probability (J > 1)
  double bonferroni = 0.0;    // sum of exact per-index tails
  double gamma = 0.5;
  double kappa = 1.0;
};

/// Largest kappa on the grid {1/J} U {0.001 m} with Delta <= gamma * alpha,
/// for the finite-sampling model (n draws from N; in a completely randomized
/// experiment N = n units and the sample is the n_t treated).
CorrectionSpec choose_kprime_multi(long long N, int n, const std::vector<long long>& ks, double alpha, double gamma,
                                   const MonteCarloConfig& mc);

/// Same for i.i.d. sampling with quantile levels `betas`.
CorrectionSpec choose_kprime_multinomial(int n, const std::vector<double>& betas, double alpha, double gamma,
                                         const MonteCarloConfig& mc);

/// |Delta_H(k'; N, n, ceil(N beta)) - Delta_M(k'; n, beta)| for each N.
std::vector<TailProbability> delta_h_converges(const std::vector<long long>& N_sequence, int n,
                                               const std::vector<double>& betas, const std::vector<int>& k_primes,
                                               const MonteCarloConfig& mc);

}  // namespace iteq
