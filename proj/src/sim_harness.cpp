#include "iteq/sim_harness.hpp"

#include "iteq/random.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace iteq {

void DgpSpec::validate() const {
  if (n < 2) throw FlagError("need at least two units");
  if (!(rho2 > 0.0 && rho2 < 1.0)) throw FlagError("rho2 must lie in (0, 1)");
  if (!(treat_fraction > 0.0 && treat_fraction < 1.0)) throw FlagError("treated fraction must lie in (0, 1)");
  if (replications < 1) throw FlagError("need at least one replication");
  const int nt = n_treated();
  if (nt < 1 || nt >= n) throw FlagError("design must have treated and control units");
}

int DgpSpec::n_treated() const { return static_cast<int>(std::lround(n * treat_fraction)); }

std::vector<double> PotentialOutcomes::tau() const {
  std::vector<double> t(y0.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = y1[i] - y0[i];
  return t;
}

PotentialOutcomes draw_potential_outcomes(const DgpSpec& spec, int n, Rng& rng) {
  PotentialOutcomes u;
  const double sd0 = std::sqrt(spec.rho2), sd1 = std::sqrt(1.0 - spec.rho2);
  for (int i = 0; i < n; ++i) {
    const double y0 = sd0 * rng.normal();
    const double z1 = rng.normal();
    u.y0.push_back(y0);
    u.y1.push_back(spec.constant_effect ? y0 + *spec.constant_effect : 2.0 + sd1 * z1);
  }
  return u;
}

SimulatedExperiment run_experiment(const PotentialOutcomes& units, int n_t, Rng& rng) {
  const auto n = units.y0.size();
  std::vector<int> z(n, 0);
  std::fill(z.begin(), z.begin() + n_t, 1);
  std::shuffle(z.begin(), z.end(), rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = z[i] ? units.y1[i] : units.y0[i];
  return {ExperimentData::create(std::move(z), std::move(y)), units.tau()};
}

SimulatedExperiment generate(const DgpSpec& spec, std::uint64_t replicate) {
  spec.validate();
  Rng rng = Rng::substream(spec.seed, replicate);
  const auto units = draw_potential_outcomes(spec, spec.n, rng);
  return run_experiment(units, spec.n_treated(), rng);
}

double superpopulation_quantile(const DgpSpec& spec, double beta) {
  if (spec.constant_effect) return *spec.constant_effect;
  if (beta <= 0.0) return kNegInf;
  if (beta >= 1.0) return kInf;
  return 2.0 + boost::math::quantile(boost::math::normal_distribution<>(), beta);
}

double extended_median(std::vector<double> values) {
  if (values.empty()) throw FlagError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  if (m % 2 == 1) return values[m / 2];
  const double a = values[m / 2 - 1], b = values[m / 2];
  if (a == kNegInf || b == kInf || a == b) return a == kNegInf ? a : (b == kInf ? b : a);
  return a + (b - a) / 2;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::M0: return "M0";
    case Method::M1: return "M1";
    case Method::M2Simultaneous: return "M2-simultaneous";
    case Method::M2Individual: return "M2-individual";
  }
  return "?";
}

std::string to_string(Procedure p) {
  switch (p) {
    case Procedure::CombinedFamily: return "combined-family";
    case Procedure::SingleQuantile: return "single-quantile";
    case Procedure::Simultaneous: return "simultaneous";
    case Procedure::FinitePopulation: return "finite-population";
    case Procedure::Superpopulation: return "superpopulation";
  }
  return "?";
}

namespace {

std::vector<int> ranks_for(const std::vector<int>& pcts, int n) {
  std::vector<int> ks;
  for (int p : pcts) ks.push_back(std::max(1, static_cast<int>(population_rank(n, p / 100.0))));
  return ks;
}

// One study cell: lower limits [variant][quantile][replicate].
using Limits = std::vector<std::vector<std::vector<double>>>;

struct Variant {
  std::string label;
  Method method;
  double gamma;
};

std::vector<ComparisonRow> run_study(const StudyOptions& o, const std::vector<Variant>& variants) {
  if (o.quantile_pcts.empty()) throw FlagError("no quantiles requested");
  const auto transform = RankTransform::stephenson(o.stephenson_s);
  const DgpSpec base{.n = o.n, .rho2 = 0.5, .treat_fraction = o.treat_fraction, .replications = o.replications,
                     .seed = o.seed, .constant_effect = std::nullopt};
  base.validate();
  const int n = o.n, n_t = base.n_treated();
  const auto ks = ranks_for(o.quantile_pcts, n);
  const auto nulls = cre_nulls(n, n_t, transform, {.mode = NullMode::Auto, .mc = o.mc});

  // k' choices depend on the design only.
  std::vector<std::optional<SimultaneousPlan>> plans(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v)
    if (variants[v].method == Method::M2Simultaneous)
      plans[v] = plan_simultaneous(n, n_t, ks, o.alpha, variants[v].gamma, true, o.mc);

  std::vector<ComparisonRow> rows;
  for (std::size_t r = 0; r < o.rho2s.size(); ++r) {
    DgpSpec spec = base;
    spec.rho2 = o.rho2s[r];
    spec.seed = o.seed + r;
    spec.validate();
    Limits limits(variants.size(), std::vector<std::vector<double>>(ks.size(), std::vector<double>(
                                                                                 static_cast<std::size_t>(o.replications))));
    parallel_for(static_cast<std::size_t>(o.replications), o.mc.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t rep = begin; rep < end; ++rep) {
        const auto sim = generate(spec, rep);
        for (std::size_t v = 0; v < variants.size(); ++v) {
          std::vector<double> lower(ks.size());
          switch (variants[v].method) {
            case Method::M0: {
              const auto f = original_intervals(sim.data, transform, o.alpha, nulls.treated);
              for (std::size_t j = 0; j < ks.size(); ++j)
                lower[j] = f.entries[static_cast<std::size_t>(ks[j] - 1)].interval.lower;
              break;
            }
            case Method::M1: {
              const auto f = combine_treated_control(sim.data, transform, o.alpha / 2, nulls);
              for (std::size_t j = 0; j < ks.size(); ++j)
                lower[j] = f.entries[static_cast<std::size_t>(ks[j] - 1)].interval.lower;
              break;
            }
            case Method::M2Simultaneous: {
              const auto f = simultaneous_cis(sim.data, transform, *plans[v], nulls);
              for (std::size_t j = 0; j < ks.size(); ++j) lower[j] = f.entries[j].interval.lower;
              break;
            }
            case Method::M2Individual: {
              const auto f = individual_cis(sim.data, transform, ks, o.alpha, variants[v].gamma, nulls, true);
              for (std::size_t j = 0; j < ks.size(); ++j) lower[j] = f.entries[j].interval.lower;
              break;
            }
          }
          for (std::size_t j = 0; j < ks.size(); ++j) limits[v][j][rep] = lower[j];
        }
      }
    });
    for (std::size_t v = 0; v < variants.size(); ++v)
      for (std::size_t j = 0; j < ks.size(); ++j) {
        const auto& xs = limits[v][j];
        ComparisonRow row;
        row.rho2 = spec.rho2;
        row.quantile_pct = o.quantile_pcts[j];
        row.method_or_gamma = variants[v].label;
        row.median_lower = extended_median(xs);
        row.n_informative = static_cast<int>(std::count_if(xs.begin(), xs.end(), [](double x) { return x != kNegInf; }));
        rows.push_back(row);
      }
  }
  return rows;
}

std::string gamma_label(double gamma) {
  std::ostringstream s;
  s << "gamma=" << gamma;
  return s.str();
}

}  // namespace

std::vector<ComparisonRow> method_comparison(const StudyOptions& options, const std::vector<Method>& methods) {
  std::vector<Variant> variants;
  for (auto m : methods) variants.push_back({to_string(m), m, options.gamma});
  return run_study(options, variants);
}

std::vector<ComparisonRow> gamma_study(const StudyOptions& options, const std::vector<double>& gammas) {
  std::vector<Variant> variants;
  for (double g : gammas) {
    if (!(g >= 0.0 && g < 1.0)) throw FlagError("gamma must lie in [0, 1)");
    variants.push_back({gamma_label(g) + "/simultaneous", Method::M2Simultaneous, g});
    variants.push_back({gamma_label(g) + "/individual", Method::M2Individual, g});
  }
  return run_study(options, variants);
}

void write_rows_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "rho2,quantile_pct,method_or_gamma,median_lower,n_informative\n";
  for (const auto& r : rows) {
    out << r.rho2 << ',' << r.quantile_pct << ',' << r.method_or_gamma << ',';
    if (r.median_lower == kNegInf) out << "-inf";
    else out << std::setprecision(17) << r.median_lower << std::setprecision(6);
    out << ',' << r.n_informative << '\n';
  }
}

// Coverage audits ----------------------------------------------------------

CoverageResult coverage_audit(const DgpSpec& spec, const AuditOptions& o) {
  spec.validate();
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw FlagError("alpha must lie in (0, 1)");
  const auto transform = RankTransform::stephenson(o.stephenson_s);
  const RankTransform transforms[] = {transform};
  const int n = spec.n, n_t = spec.n_treated();
  const auto nulls = cre_nulls(n, n_t, transform, {.mode = NullMode::Auto, .mc = o.mc});

  std::vector<int> ks;
  for (double b : o.betas) ks.push_back(std::max(1, static_cast<int>(population_rank(n, b))));

  CoverageResult result;
  result.replications = spec.replications;
  result.nominal = o.procedure == Procedure::CombinedFamily ? 1.0 - 2.0 * o.alpha : 1.0 - o.alpha;

  std::optional<SimultaneousPlan> sim_plan;
  std::optional<PopulationPlan> pop_plan;
  PotentialOutcomes population;
  std::vector<double> population_targets;
  switch (o.procedure) {
    case Procedure::Simultaneous:
      sim_plan = plan_simultaneous(n, n_t, ks, o.alpha, o.gamma, o.combine_sides, o.mc);
      break;
    case Procedure::FinitePopulation: {
      if (o.population_size < n) throw FlagError("population size must be at least n");
      const auto target = PopulationTarget::finite(o.population_size, o.betas);
      pop_plan = plan_population(n, n_t, target, o.alpha, o.gamma, SampleUnits::All, o.mc);
      // The population is fixed across replications.
      Rng rng = Rng::substream(spec.seed, ~std::uint64_t{0});
      population = draw_potential_outcomes(spec, static_cast<int>(o.population_size), rng);
      auto tau = population.tau();
      std::sort(tau.begin(), tau.end());
      for (long long k : target.ranks()) population_targets.push_back(tau[static_cast<std::size_t>(std::max(1LL, k) - 1)]);
      break;
    }
    case Procedure::Superpopulation:
      pop_plan = plan_population(n, n_t, PopulationTarget::super(o.betas), o.alpha, o.gamma, SampleUnits::All, o.mc);
      for (double b : o.betas) population_targets.push_back(superpopulation_quantile(spec, b));
      break;
    default:
      break;
  }

  const std::size_t targets = o.procedure == Procedure::CombinedFamily ? static_cast<std::size_t>(n) : ks.size();
  const auto reps = static_cast<std::size_t>(spec.replications);
  std::vector<std::vector<char>> hit(reps, std::vector<char>(targets, 0));
  parallel_for(reps, o.mc.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t rep = begin; rep < end; ++rep) {
      SimulatedExperiment sim;
      if (o.procedure == Procedure::FinitePopulation) {
        Rng rng = Rng::substream(spec.seed, rep);
        std::vector<std::size_t> rows(population.y0.size());
        std::iota(rows.begin(), rows.end(), 0);
        std::shuffle(rows.begin(), rows.end(), rng);
        PotentialOutcomes sample;
        for (int i = 0; i < n; ++i) {
          sample.y0.push_back(population.y0[rows[static_cast<std::size_t>(i)]]);
          sample.y1.push_back(population.y1[rows[static_cast<std::size_t>(i)]]);
        }
        sim = run_experiment(sample, n_t, rng);
      } else {
        sim = generate(spec, rep);
      }
      auto tau = sim.tau;
      std::sort(tau.begin(), tau.end());
      auto& h = hit[rep];
      switch (o.procedure) {
        case Procedure::CombinedFamily: {
          const auto f = combine_treated_control(sim.data, transform, o.alpha, nulls);
          for (std::size_t k = 0; k < targets; ++k) h[k] = f.entries[k].interval.contains(tau[k]);
          break;
        }
        case Procedure::SingleQuantile:
          for (std::size_t j = 0; j < targets; ++j)
            h[j] = ci_single(sim.data, transform, ks[j], o.alpha, o.gamma, nulls.treated)
                       .contains(tau[static_cast<std::size_t>(ks[j] - 1)]);
          break;
        case Procedure::Simultaneous: {
          const auto f = simultaneous_cis(sim.data, transform, *sim_plan, nulls);
          for (std::size_t j = 0; j < targets; ++j)
            h[j] = f.entries[j].interval.contains(tau[static_cast<std::size_t>(ks[j] - 1)]);
          break;
        }
        case Procedure::FinitePopulation:
        case Procedure::Superpopulation: {
          const auto f = population_cis(sim.data, transforms, *pop_plan, nulls);
          for (std::size_t j = 0; j < targets; ++j) h[j] = f.entries[j].interval.contains(population_targets[j]);
          break;
        }
      }
    }
  });

  result.per_target.assign(targets, 0.0);
  int all = 0;
  for (const auto& h : hit) {
    bool every = true;
    for (std::size_t j = 0; j < targets; ++j) {
      result.per_target[j] += h[j];
      every = every && h[j];
    }
    all += every;
  }
  for (auto& p : result.per_target) p /= static_cast<double>(reps);
  result.coverage = static_cast<double>(all) / static_cast<double>(reps);
  result.standard_error = std::sqrt(result.coverage * (1 - result.coverage) / static_cast<double>(reps));
  return result;
}

}  // namespace iteq
