#include "doctest.h"

#include "iteq/population_inference.hpp"
#include "iteq/stratified_inference.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

using namespace iteq;

namespace {

struct Units {
  std::vector<double> y0, y1;
};

Units draw_units(Rng& rng, int n, double rho2) {
  Units u;
  for (int i = 0; i < n; ++i) {
    u.y0.push_back(std::sqrt(rho2) * rng.normal());
    u.y1.push_back(2.0 + std::sqrt(1 - rho2) * rng.normal());
  }
  return u;
}

ExperimentData assign(Rng& rng, const Units& u, const std::vector<std::size_t>& rows, int n_t) {
  std::vector<int> z(rows.size(), 0);
  for (int i = 0; i < n_t; ++i) z[static_cast<std::size_t>(i)] = 1;
  std::shuffle(z.begin(), z.end(), rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < rows.size(); ++i) y.push_back(z[i] ? u.y1[rows[i]] : u.y0[rows[i]]);
  return ExperimentData::create(z, y);
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

const MonteCarloConfig kMc{.draws = 20000, .seed = 11};
const std::vector<double> kBetas{0.5, 0.6, 0.7, 0.8, 0.9};

}  // namespace

TEST_CASE("population targets") {
  CHECK_THROWS_AS(PopulationTarget::finite(30, {0.5}).validate(40), FlagError);
  CHECK_THROWS_AS(PopulationTarget::super({0.6, 0.5}).validate(40), FlagError);
  CHECK_THROWS_AS(PopulationTarget::super({1.2}).validate(40), FlagError);
  CHECK_NOTHROW(PopulationTarget::super({0.0, 1.0}).validate(40));
  CHECK(PopulationTarget::finite(80, {0.5, 0.7, 0.9}).ranks() == std::vector<long long>{40, 56, 72});
  CHECK_THROWS_AS(plan_population(40, 20, PopulationTarget::super({0.5}), 0.1, 0.0, SampleUnits::All, kMc), FlagError);
}

TEST_CASE("population of the sampled units reduces to sample quantiles") {
  Rng rng(71);
  const auto t = RankTransform::stephenson(3);
  const RankTransform ts[] = {t};
  const auto u = draw_units(rng, 30, 0.5);
  const auto d = assign(rng, u, all_rows(30), 15);
  const auto target = PopulationTarget::finite(30, kBetas);
  const auto plan = plan_population(30, 15, target, 0.1, 0.5, SampleUnits::All, kMc);
  CHECK(plan.correction.correction == 0.0);
  for (std::size_t j = 0; j < kBetas.size(); ++j)
    CHECK(plan.correction.k_primes[j] == target.ranks()[j]);
  const auto nulls = cre_nulls(30, 15, t, {.mc = kMc});
  const auto f = population_cis(d, ts, plan, nulls);
  const auto sample = combine_treated_control(d, t, 0.05, nulls);
  for (std::size_t j = 0; j < kBetas.size(); ++j) {
    CHECK(f.entries[j].index == kBetas[j]);
    CHECK(f.entries[j].interval == sample.entries[static_cast<std::size_t>(target.ranks()[j] - 1)].interval);
  }
  CHECK(f.level == doctest::Approx(0.9));
  CHECK(f.target.kind == TargetKind::PopulationQuantiles);
  CHECK(f.target.population_size == 30);
}

TEST_CASE("top quantile of a superpopulation") {
  Rng rng(72);
  const auto t = RankTransform::wilcoxon();
  const RankTransform ts[] = {t};
  const auto d = assign(rng, draw_units(rng, 20, 0.5), all_rows(20), 10);
  const auto plan = plan_population(20, 10, PopulationTarget::super({1.0}), 0.1, 0.5, SampleUnits::All, kMc);
  CHECK(plan.correction.k_primes[0] == 20);
  CHECK(plan.correction.correction == 0.0);
  const auto nulls = cre_nulls(20, 10, t, {.mc = kMc});
  const auto f = population_cis(d, ts, plan, nulls);
  CHECK(f.entries[0].interval == combine_treated_control(d, t, 0.05, nulls).entries.back().interval);
  CHECK_FALSE(f.target.population_size.has_value());
}

TEST_CASE("treated-only and control-only samples") {
  Rng rng(73);
  const auto t = RankTransform::stephenson(2);
  const RankTransform ts[] = {t};
  const auto d = assign(rng, draw_units(rng, 40, 0.5), all_rows(40), 25);
  const auto nulls = cre_nulls(40, 25, t, {.mc = kMc});
  const auto target = PopulationTarget::super(kBetas);
  const auto pt = plan_population(40, 25, target, 0.1, 0.5, SampleUnits::Treated, kMc);
  const auto pc = plan_population(40, 25, target, 0.1, 0.5, SampleUnits::Control, kMc);
  CHECK(pt.sample_size == 25);
  CHECK(pc.sample_size == 15);
  const auto ft = population_cis(d, ts, pt, nulls);
  const auto fc = population_cis(d, ts, pc, nulls);
  const double at = 0.1 - pt.correction.correction, ac = 0.1 - pc.correction.correction;
  const auto pred_t = prediction_intervals_treated(d, t, at, nulls.treated);
  const auto pred_c = prediction_intervals_control(d, t, ac, nulls.control);
  for (std::size_t j = 0; j < kBetas.size(); ++j) {
    const int kt = pt.correction.k_primes[j], kc = pc.correction.k_primes[j];
    if (kt > 0) CHECK(ft.entries[j].interval == pred_t.entries[static_cast<std::size_t>(kt - 1)].interval);
    if (kc > 0) CHECK(fc.entries[j].interval == pred_c.entries[static_cast<std::size_t>(kc - 1)].interval);
  }
}

TEST_CASE("stratified data use the stratified machinery") {
  Rng rng(74);
  const auto t = RankTransform::wilcoxon();
  const RankTransform ts[] = {t};
  std::vector<int> z;
  std::vector<double> y;
  std::vector<std::string> labels;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 8; ++i) {
      z.push_back(i < 4);
      y.push_back(rng.normal() + (i < 4 ? 1.5 : 0.0) + s);
      labels.push_back(std::to_string(s));
    }
  const auto d = ExperimentData::create(z, y, labels);
  const auto plan = plan_population(32, 16, PopulationTarget::super(kBetas), 0.1, 0.5, SampleUnits::All, kMc);
  const auto nulls = scre_nulls(d, ts, {.mc = kMc});
  const auto f = population_cis(d, ts, plan, nulls);
  const auto sample = combine_scre(d, ts, (0.1 - plan.correction.correction) / 2, nulls);
  for (std::size_t j = 0; j < kBetas.size(); ++j) {
    const int kp = plan.correction.k_primes[j];
    CHECK(f.entries[j].interval ==
          (kp > 0 ? sample.entries[static_cast<std::size_t>(kp - 1)].interval : OneSidedInterval::whole_line()));
  }
}

TEST_CASE("exhausted alpha") {
  Rng rng(75);
  const auto t = RankTransform::wilcoxon();
  const RankTransform ts[] = {t};
  const auto d = assign(rng, draw_units(rng, 10, 0.5), all_rows(10), 5);
  PopulationPlan plan;
  plan.target = PopulationTarget::super({0.5});
  plan.alpha = 0.1;
  plan.sample_size = 10;
  plan.correction.k_primes = {5};
  plan.correction.correction = 0.1;
  const auto f = population_cis(d, ts, plan, cre_nulls(10, 5, t, {}));
  CHECK_FALSE(f.entries[0].interval.informative());
  CHECK(f.warnings.size() == 1);
}

TEST_CASE("bands widen with the population size") {
  Rng rng(76);
  const auto t = RankTransform::stephenson(6);
  const RankTransform ts[] = {t};
  const int n = 233, n_t = 164;
  const auto u = draw_units(rng, n, 0.5);
  const auto d = assign(rng, u, all_rows(n), n_t);
  const auto nulls = cre_nulls(n, n_t, t, {.mode = NullMode::MonteCarlo, .mc = kMc});
  std::vector<IntervalFamily> fams;
  for (long long N : {233LL, 1000LL, 5000LL}) {
    const auto plan = plan_population(n, n_t, PopulationTarget::finite(N, kBetas), 0.1, 0.5, SampleUnits::All, kMc);
    fams.push_back(population_cis(d, ts, plan, nulls));
  }
  for (std::size_t i = 1; i < fams.size(); ++i)
    for (std::size_t j = 0; j < kBetas.size(); ++j)
      CHECK(fams[i].entries[j].interval.lower <= fams[i - 1].entries[j].interval.lower);
  CHECK(fams[0].entries.back().interval.informative());
}

TEST_CASE("finite populations approach the superpopulation") {
  const int n = 60;
  const auto super = plan_population(n, 30, PopulationTarget::super(kBetas), 0.1, 0.5, SampleUnits::All, kMc);
  double prev_gap = 1.0;
  for (long long N : {1000LL, 100000LL, 10000000LL}) {
    const auto fin = plan_population(n, 30, PopulationTarget::finite(N, kBetas), 0.1, 0.5, SampleUnits::All, kMc);
    int gap = 0;
    for (std::size_t j = 0; j < kBetas.size(); ++j)
      gap = std::max(gap, std::abs(fin.correction.k_primes[j] - super.correction.k_primes[j]));
    CHECK(gap <= 1);
    const auto conv = delta_h_converges({N}, n, kBetas, super.correction.k_primes, kMc);
    CHECK(conv[0].value <= prev_gap + 3 * conv[0].standard_error);
    prev_gap = conv[0].value;
  }
  CHECK(prev_gap <= 0.01);
}

TEST_CASE("population bands") {
  IntervalFamily one;
  one.entries = {{0.7, {1.0, true}}};
  const auto b1 = population_band(one);
  REQUIRE(b1.entries.size() == 2);
  CHECK(b1.entries[0].index == 0.0);
  CHECK_FALSE(b1.entries[0].interval.informative());
  CHECK(b1.entries[1].interval.lower == 1.0);

  IntervalFamily f;
  f.entries = {{0.5, {0.2, true}}, {0.6, {0.1, true}}, {0.7, {0.9, false}}, {0.8, {1.4, true}}, {0.9, {2.0, true}}};
  const auto b = population_band(f);
  CHECK(b.nested());
  CHECK(b.entries[2].interval.lower == 0.2);
  CHECK(b.entries.back().interval.lower == 2.0);
}

TEST_CASE("finite-population coverage") {
  Rng rng(77);
  const auto t = RankTransform::stephenson(3);
  const RankTransform ts[] = {t};
  const int N = 80, n = 40, n_t = 20;
  const double alpha = 0.1;
  const auto pop = draw_units(rng, N, 0.5);
  std::vector<double> tau;
  for (int i = 0; i < N; ++i) tau.push_back(pop.y1[static_cast<std::size_t>(i)] - pop.y0[static_cast<std::size_t>(i)]);
  std::sort(tau.begin(), tau.end());
  const auto target = PopulationTarget::finite(N, kBetas);
  const auto plan = plan_population(n, n_t, target, alpha, 0.5, SampleUnits::All, kMc);
  const auto nulls = cre_nulls(n, n_t, t, {.mode = NullMode::MonteCarlo, .mc = kMc});
  const int reps = 300;
  int covered = 0;
  for (int r = 0; r < reps; ++r) {
    auto rows = all_rows(N);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(n);
    const auto f = population_cis(assign(rng, pop, rows, n_t), ts, plan, nulls);
    bool all = true;
    for (std::size_t j = 0; j < kBetas.size(); ++j)
      all = all && f.entries[j].interval.contains(tau[static_cast<std::size_t>(target.ranks()[j] - 1)]);
    covered += all;
  }
  const double rate = static_cast<double>(covered) / reps;
  CHECK(rate >= 1 - alpha - 3 * std::sqrt(alpha * (1 - alpha) / reps));
}

TEST_CASE("superpopulation coverage") {
  Rng rng(78);
  const auto t = RankTransform::stephenson(3);
  const RankTransform ts[] = {t};
  const int n = 40, n_t = 20;
  const double alpha = 0.1;
  const auto plan = plan_population(n, n_t, PopulationTarget::super(kBetas), alpha, 0.5, SampleUnits::All, kMc);
  const auto nulls = cre_nulls(n, n_t, t, {.mode = NullMode::MonteCarlo, .mc = kMc});
  const boost::math::normal_distribution<> tau_dist(2.0, 1.0);
  const int reps = 300;
  int covered = 0;
  for (int r = 0; r < reps; ++r) {
    const auto u = draw_units(rng, n, 0.5);
    const auto f = population_cis(assign(rng, u, all_rows(n), n_t), ts, plan, nulls);
    bool all = true;
    for (std::size_t j = 0; j < kBetas.size(); ++j)
      all = all && f.entries[j].interval.contains(boost::math::quantile(tau_dist, kBetas[j]));
    covered += all;
  }
  const double rate = static_cast<double>(covered) / reps;
  CHECK(rate >= 1 - alpha - 3 * std::sqrt(alpha * (1 - alpha) / reps));
}
