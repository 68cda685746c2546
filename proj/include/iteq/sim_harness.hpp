// Simulation studies: method comparison across correlation levels, the
// budget split study, and coverage audits against known effects.

#pragma once

#include "iteq/core.hpp"
#include "iteq/cre_inference.hpp"
#include "iteq/population_inference.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace iteq {

/// Y(0) ~ N(0, rho2), Y(1) ~ N(2, 1 - rho2), independent; so tau ~ N(2, 1).
struct DgpSpec {
  int n = 100;
  double rho2 = 0.5;
  double treat_fraction = 0.5;
  int replications = 500;
  std::uint64_t seed = kDefaultSeed;
  /// When set, Y(1) = Y(0) + constant_effect.
  std::optional<double> constant_effect;

  void validate() const;
  int n_treated() const;
};

struct PotentialOutcomes {
  std::vector<double> y0, y1;
  std::vector<double> tau() const;
};

struct SimulatedExperiment {
  ExperimentData data;
  std::vector<double> tau;  // latent, in unit order
};

/// Potential outcomes for `n` units from stream `stream`.
PotentialOutcomes draw_potential_outcomes(const DgpSpec& spec, int n, Rng& rng);
/// One complete-randomization experiment on the given units.
SimulatedExperiment run_experiment(const PotentialOutcomes& units, int n_t, Rng& rng);
/// Replicate `replicate` of the data-generating process: fresh outcomes and assignment.
SimulatedExperiment generate(const DgpSpec& spec, std::uint64_t replicate);

/// Quantile of tau in the superpopulation: 2 + Phi^{-1}(beta), or the
/// constant effect.
double superpopulation_quantile(const DgpSpec& spec, double beta);

/// Median on the extended real line; an even count averages the middle pair.
double extended_median(std::vector<double> values);

// Method comparison ---------------------------------------------------------

enum class Method { M0, M1, M2Simultaneous, M2Individual };
std::string to_string(Method m);

struct ComparisonRow {
  double rho2 = 0.0;
  int quantile_pct = 0;
  std::string method_or_gamma;
  double median_lower = kNegInf;
  int n_informative = 0;
};

struct StudyOptions {
  std::vector<double> rho2s{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> quantile_pcts{50, 60, 70, 80, 90};
  int n = 100;
  double treat_fraction = 0.5;
  int replications = 500;
  double alpha = 0.1;  // 90% lower limits
  int stephenson_s = 6;
  double gamma = 0.5;
  std::uint64_t seed = kDefaultSeed;
  MonteCarloConfig mc;  // null distributions and k' selection
};

/// M0: original intervals at alpha. M1: treated and control prediction
/// intervals combined at alpha / 2 each. M2: corrected intervals on both
/// sides at alpha / 2 each with the given gamma, simultaneous over the
/// quantiles or one at a time.
std::vector<ComparisonRow> method_comparison(const StudyOptions& options, const std::vector<Method>& methods);

/// M2 (simultaneous and individual) across budget splits gamma.
std::vector<ComparisonRow> gamma_study(const StudyOptions& options, const std::vector<double>& gammas);

void write_rows_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);

// Coverage audits ----------------------------------------------------------

enum class Procedure {
  CombinedFamily,     // all n sample quantiles, level 1 - 2 alpha
  SingleQuantile,     // one corrected interval per quantile, level 1 - alpha each
  Simultaneous,       // corrected simultaneous intervals, level 1 - alpha
  FinitePopulation,   // population quantiles of a fixed population of size N
  Superpopulation,    // quantiles of the superpopulation
};
std::string to_string(Procedure p);

struct AuditOptions {
  Procedure procedure = Procedure::CombinedFamily;
  double alpha = 0.1;
  std::vector<double> betas{0.5, 0.6, 0.7, 0.8, 0.9};
  double gamma = 0.5;
  bool combine_sides = false;
  long long population_size = 0;  // FinitePopulation
  int stephenson_s = 6;
  MonteCarloConfig mc;
};

struct CoverageResult {
  double nominal = 0.0;
  double coverage = 0.0;  // all targets covered at once
  double standard_error = 0.0;
  std::vector<double> per_target;
  int replications = 0;
};

CoverageResult coverage_audit(const DgpSpec& spec, const AuditOptions& options);

}  // namespace iteq
