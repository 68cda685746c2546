#include "doctest.h"

#include "iteq/stratified_inference.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>

using namespace iteq;
using iteq::oracle::sensitivity_oracle;

namespace {

const NullOptions kExact{.mode = NullMode::Exact};

// Strata built from (size, treated) pairs, outcomes drawn at random.
ExperimentData make_stratified(Rng& rng, const std::vector<StratumShape>& shapes, int levels) {
  std::vector<int> z;
  std::vector<double> y;
  std::vector<std::string> labels;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    std::vector<int> zs(static_cast<std::size_t>(shapes[s].size), 0);
    for (int i = 0; i < shapes[s].treated; ++i) zs[static_cast<std::size_t>(i)] = 1;
    std::shuffle(zs.begin(), zs.end(), rng);
    for (int v : zs) {
      z.push_back(v);
      y.push_back(levels > 0 ? static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) : rng.normal());
      labels.push_back("s" + std::to_string(s));
    }
  }
  return ExperimentData::create(z, y, labels);
}

// All joint assignments of a stratified design, each as a per-unit 0/1 vector
// in stratum-concatenated order.
void enumerate_assignments(const std::vector<StratumShape>& shapes, std::size_t s, std::vector<int>& z,
                           const std::function<void(const std::vector<int>&)>& visit) {
  if (s == shapes.size()) {
    visit(z);
    return;
  }
  const int n = shapes[s].size;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != shapes[s].treated) continue;
    const auto before = z.size();
    for (int i = 0; i < n; ++i) z.push_back(mask >> i & 1u);
    enumerate_assignments(shapes, s + 1, z, visit);
    z.resize(before);
  }
}

// Exact stratified null survival by enumeration.
double enumerated_survival(const std::vector<StratumShape>& shapes, const RankTransform& t, double x) {
  double hits = 0, total = 0;
  std::vector<int> z;
  enumerate_assignments(shapes, 0, z, [&](const std::vector<int>& zz) {
    double stat = 0;
    std::size_t offset = 0;
    for (const auto& sh : shapes) {
      const auto q = t.scores(sh.size);
      for (int i = 0; i < sh.size; ++i)
        if (zz[offset + static_cast<std::size_t>(i)]) stat += q[static_cast<std::size_t>(i)];
      offset += static_cast<std::size_t>(sh.size);
    }
    total += 1;
    hits += stat >= x - 1e-9;
  });
  return hits / total;
}

std::vector<StratumShape> pairs(int S) { return std::vector<StratumShape>(static_cast<std::size_t>(S), {2, 1}); }

}  // namespace

TEST_CASE("stratified p-values: degenerate cases") {
  Rng rng(51);
  const auto w = RankTransform::wilcoxon();
  const RankTransform ts[] = {w};
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = make_stratified(rng, {{7, 3}}, 5);
    const auto g = null_distribution(StratumShape{7, 3}, w, kExact);
    const int k = static_cast<int>(rng.below(8));
    const double c = static_cast<double>(rng.below(5)) - 2;
    CHECK(pvalue_scre(d, ts, k, c, g).value == pvalue_all(d, w, k, c, g).value);
    CHECK(pvalue_scre(d, ts, 0, c, g).value == 1.0);
    CHECK(intervals_scre(d, ts, 0.1, g).entries == prediction_intervals_treated(d, w, 0.1, g).entries);
  }
}

TEST_CASE("stratified p-values against enumeration") {
  Rng rng(52);
  const std::vector<std::vector<StratumShape>> designs = {
      {{4, 2}, {4, 2}}, {{3, 1}, {3, 2}}, {{2, 1}, {3, 1}, {3, 2}}, {{4, 1}, {4, 3}}};
  for (int rep = 0; rep < 200; ++rep) {
    const auto& shapes = designs[static_cast<std::size_t>(rep) % designs.size()];
    const auto d = make_stratified(rng, shapes, 4);
    const auto t = rep % 2 ? RankTransform::wilcoxon() : RankTransform::stephenson(2);
    const RankTransform ts[] = {t};
    const auto g = null_distribution(shapes, ts, kExact);
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(d.n() + 1)));
    const double c = static_cast<double>(rng.below(7)) - 3;
    const double x = brute_force_min(d, ts, Scope::AllUnits, k, c);
    const auto p = pvalue_scre(d, ts, k, c, g);
    CHECK(p.statistic_min == doctest::Approx(x));
    CHECK(p.value == doctest::Approx(enumerated_survival(shapes, t, x)));
  }
}

TEST_CASE("stratified treated-scope identity") {
  Rng rng(53);
  const auto t = RankTransform::stephenson(3);
  const RankTransform ts[] = {t};
  for (int rep = 0; rep < 200; ++rep) {
    const int S = 2 + static_cast<int>(rng.below(3));
    std::vector<StratumShape> shapes;
    for (int s = 0; s < S; ++s) {
      const int n = 2 + static_cast<int>(rng.below(4));
      shapes.push_back({n, 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)))});
    }
    const auto d = make_stratified(rng, shapes, rep % 2 ? 4 : 0);
    const auto g = null_distribution(d.stratum_shapes(), ts, kExact);
    const auto grid = jump_grid(d);
    const double c = grid[rng.below(grid.size())];
    for (int k = 0; k <= d.n_treated(); ++k)
      REQUIRE(pvalue_scre_treated(d, ts, k, c, g).value == pvalue_scre(d, ts, d.n_control() + k, c, g).value);
  }
}

TEST_CASE("per-stratum shifts leave p-values unchanged") {
  Rng rng(54);
  const auto t = RankTransform::wilcoxon();
  const RankTransform ts[] = {t};
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = make_stratified(rng, {{4, 2}, {5, 2}, {3, 1}}, 6);
    std::vector<double> y(d.outcome().begin(), d.outcome().end());
    std::vector<std::string> labels;
    for (int i = 0; i < d.n(); ++i) {
      y[static_cast<std::size_t>(i)] += 10.0 * d.stratum_of()[static_cast<std::size_t>(i)];
      labels.push_back(d.stratum_labels()[static_cast<std::size_t>(d.stratum_of()[static_cast<std::size_t>(i)])]);
    }
    const auto shifted =
        ExperimentData::create(std::vector<int>(d.assignment().begin(), d.assignment().end()), y, labels);
    const auto g = null_distribution(d.stratum_shapes(), ts, kExact);
    for (int k = 0; k <= d.n(); ++k)
      for (double c : {-2.0, 0.0, 0.5, 3.0})
        REQUIRE(pvalue_scre(d, ts, k, c, g).value == pvalue_scre(shifted, ts, k, c, g).value);
    CHECK(intervals_scre(d, ts, 0.2, g).entries == intervals_scre(shifted, ts, 0.2, g).entries);
  }
}

TEST_CASE("matched-set-shaped data") {
  Rng rng(55);
  const auto t = RankTransform::stephenson(2);
  const RankTransform ts[] = {t};
  std::vector<StratumShape> shapes(512, {3, 1});
  auto d = make_stratified(rng, shapes, 0);
  std::vector<double> y(d.outcome().begin(), d.outcome().end());
  for (int i = 0; i < d.n(); ++i)
    if (d.z(i)) y[static_cast<std::size_t>(i)] += 0.5;
  std::vector<std::string> labels;
  for (int i = 0; i < d.n(); ++i) labels.push_back(d.stratum_labels()[static_cast<std::size_t>(d.stratum_of()[static_cast<std::size_t>(i)])]);
  d = ExperimentData::create(std::vector<int>(d.assignment().begin(), d.assignment().end()), y, labels);
  const auto nulls = scre_nulls(d, ts, {});
  const auto f = intervals_scre(d, ts, 0.1, nulls.treated);
  CHECK(f.entries.size() == 512);
  CHECK(f.nested());
  CHECK(f.entries.back().interval.informative());
  const auto both = combine_scre(d, ts, 0.05, nulls);
  CHECK(both.entries.size() == static_cast<std::size_t>(d.n()));
  CHECK(both.nested());
  CHECK(both.level == doctest::Approx(0.9));
}

TEST_CASE("matched-set validation") {
  Rng rng(56);
  const auto w = RankTransform::wilcoxon();
  const RankTransform ts[] = {w};
  CHECK_THROWS_AS(validate_matched_sets(make_stratified(rng, {{3, 2}, {2, 1}}, 0)), InputError);
  CHECK_NOTHROW(validate_matched_sets(make_stratified(rng, {{3, 1}, {2, 1}}, 0)));
  const std::vector<StratumShape> mixed{{3, 1}, {2, 1}};
  CHECK_THROWS_AS(worst_case_tail(mixed, ts, 2.0, SensitivityMode::PairsExact, kExact), FlagError);
  const std::vector<StratumShape> single{{1, 1}, {2, 1}};
  CHECK_THROWS_AS(worst_case_tail(single, ts, 2.0, SensitivityMode::GaussianGKR, kExact), InputError);
  CHECK_THROWS_AS(SensitivityModel::from_gamma(0.5), FlagError);
  CHECK(SensitivityModel::from_log_gamma(std::log(2.2)).gamma_bound == doctest::Approx(2.2));
}

TEST_CASE("worst-case tails: limiting cases") {
  const auto w = RankTransform::wilcoxon();
  const RankTransform ts[] = {w};
  const auto one = pairs(1);
  const auto g2 = worst_case_tail(one, ts, 2.0, SensitivityMode::PairsExact, kExact);
  CHECK(g2.survival(2.0) == doctest::Approx(2.0 / 3));
  CHECK(g2.survival(1.0) == doctest::Approx(1.0));

  const auto many = pairs(6);
  const auto huge = worst_case_tail(many, ts, 1e6, SensitivityMode::PairsExact, kExact);
  CHECK(huge.survival(12.0) > 1 - 1e-4);
  CHECK(huge.survival(12.5) == 0.0);
  CHECK(huge.survival(11.0) == doctest::Approx(1.0));

  // Gamma = 1 is the stratified randomization null.
  const std::vector<StratumShape> sets{{3, 1}, {4, 1}, {2, 1}};
  const auto st = RankTransform::stephenson(2);
  const RankTransform sts[] = {st};
  for (auto mode : {SensitivityMode::PairsExact, SensitivityMode::GaussianGKR}) {
    const auto& shapes = mode == SensitivityMode::PairsExact ? many : sets;
    CHECK(worst_case_tail(shapes, sts, 1.0, mode, kExact) == null_distribution(shapes, sts, kExact));
  }
  const NullOptions mc{.mode = NullMode::MonteCarlo, .mc = {.draws = 5000, .seed = 3}};
  CHECK(worst_case_tail(sets, sts, 1.0, SensitivityMode::GaussianGKR, mc) == null_distribution(sets, sts, mc));
}

TEST_CASE("pairs tails against binary-u enumeration") {
  const auto w = RankTransform::wilcoxon();
  const RankTransform ts[] = {w};
  for (int S = 1; S <= 4; ++S) {
    const auto shapes = pairs(S);
    for (double gamma : {1.0, 1.5, 2.0, 4.0}) {
      const auto exact = worst_case_tail(shapes, ts, gamma, SensitivityMode::PairsExact, kExact);
      const NullOptions mc{.mode = NullMode::MonteCarlo, .mc = {.draws = 100000, .seed = 7}};
      const auto sim = worst_case_tail(shapes, ts, gamma, SensitivityMode::PairsExact, mc);
      for (int x = S; x <= 2 * S; ++x) {
        const double oracle = sensitivity_oracle(shapes, w, gamma, x);
        CHECK(exact.survival(x) == doctest::Approx(oracle));
        const double se = std::sqrt(std::max(oracle * (1 - oracle), 1e-12) / 100000);
        CHECK(std::abs(sim.survival(x) - oracle) <= 3 * se + 1e-12);
      }
    }
  }
}

TEST_CASE("sensitivity p-values against full enumeration") {
  Rng rng(57);
  const auto w = RankTransform::wilcoxon();
  const RankTransform ts[] = {w};
  for (int rep = 0; rep < 60; ++rep) {
    const int S = 2 + static_cast<int>(rng.below(3));
    const auto shapes = pairs(S);
    const auto d = make_stratified(rng, shapes, 5);
    const double gamma = 1.0 + static_cast<double>(rng.below(4));
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(S + 1)));
    const double c = static_cast<double>(rng.below(5)) - 2;
    const double x = brute_force_min(d, ts, Scope::Treated, k, c);
    const auto p = pvalue_sensitivity(d, ts, k, c, gamma, SensitivityMode::PairsExact, kExact);
    CHECK(p.value == doctest::Approx(sensitivity_oracle(shapes, w, gamma, x)));
  }
}

TEST_CASE("sensitivity p-values at Gamma = 1 and monotone in Gamma") {
  Rng rng(58);
  const auto t = RankTransform::stephenson(2);
  const RankTransform ts[] = {t};
  const std::vector<double> grid{1.0, 1.3, 2.2, 4.0, 8.3, 38.4};
  for (int rep = 0; rep < 20; ++rep) {
    const auto pair_data = make_stratified(rng, pairs(30), 0);
    const auto set_data = make_stratified(rng, std::vector<StratumShape>(20, {3, 1}), 0);
    for (const auto* d : {&pair_data, &set_data}) {
      const auto g = null_distribution(d->stratum_shapes(), ts, kExact);
      const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(d->n_treated())));
      const double c = rng.normal() - 0.5;
      const auto mode = d == &pair_data ? SensitivityMode::PairsExact : SensitivityMode::GaussianGKR;
      CHECK(pvalue_sensitivity(*d, ts, k, c, 1.0, mode, kExact).value ==
            pvalue_scre(*d, ts, d->n_control() + k, c, g).value);
      const NullOptions coupled{.mode = NullMode::MonteCarlo, .mc = {.draws = 20000, .seed = 9}};
      for (const auto& opts : {kExact, coupled}) {
        double prev = 0;
        for (double gamma : grid) {
          const auto p = pvalue_sensitivity(*d, ts, k, c, gamma, mode, opts);
          // Leaving Gamma = 1 switches from the randomization null to a
          // simulated or Gaussian worst case.
          double slack = 1e-12;
          if (gamma == 1.3 && opts.mode == NullMode::MonteCarlo) slack = 3 * 0.5 / std::sqrt(20000.0);
          if (gamma == 1.3 && mode == SensitivityMode::GaussianGKR) slack = 0.02;
          CHECK(p.value >= prev - slack);
          prev = p.value;
        }
      }
    }
  }
}

TEST_CASE("GKR moments") {
  const auto t = RankTransform::stephenson(2);
  for (int n : {2, 3, 5, 8}) {
    const auto q = t.scores(n);
    double prev = kNegInf;
    for (double gamma : {1.0, 1.3, 2.2, 4.0, 8.3, 38.4}) {
      const auto m = gkr_moments(q, gamma);
      CHECK(m.mean >= prev);
      prev = m.mean;
    }
    double mean = 0;
    for (double v : q) mean += v / n;
    CHECK(gkr_moments(q, 1.0).mean == doctest::Approx(mean));
  }
  const double q2[] = {1.0, 2.0};
  CHECK(gkr_moments(q2, 2.0).mean == doctest::Approx(5.0 / 3));
  CHECK(gkr_moments(q2, 2.0).variance == doctest::Approx(2.0 / 9));
}

TEST_CASE("pairs exact versus Gaussian approximation") {
  const auto w = RankTransform::wilcoxon();
  const RankTransform ts[] = {w};
  const auto shapes = pairs(500);
  for (double gamma : {1.3, 2.2, 4.0}) {
    const auto exact = worst_case_tail(shapes, ts, gamma, SensitivityMode::PairsExact, kExact);
    const auto gkr = worst_case_tail(shapes, ts, gamma, SensitivityMode::GaussianGKR, kExact);
    CHECK(exact.provenance() == Provenance::ExactEnumeration);
    CHECK(gkr.provenance() == Provenance::GaussianApproximation);
    double worst = 0;
    for (double x : exact.support()) worst = std::max(worst, std::abs(exact.survival(x) - gkr.survival(x)));
    CHECK(worst <= 0.02);
  }
}

TEST_CASE("sensitivity curves") {
  Rng rng(59);
  const auto w = RankTransform::wilcoxon();
  const RankTransform ts[] = {w};
  const std::vector<double> grid{1.0, 1.3, 2.2, 4.0, 8.3, 38.4};
  for (int rep = 0; rep < 10; ++rep) {
    auto d = make_stratified(rng, pairs(25), 0);
    std::vector<double> y(d.outcome().begin(), d.outcome().end());
    std::vector<std::string> labels;
    for (int i = 0; i < d.n(); ++i) {
      if (d.z(i)) y[static_cast<std::size_t>(i)] += 1.5;
      labels.push_back(d.stratum_labels()[static_cast<std::size_t>(d.stratum_of()[static_cast<std::size_t>(i)])]);
    }
    d = ExperimentData::create(std::vector<int>(d.assignment().begin(), d.assignment().end()), y, labels);
    const auto only_one = sensitivity_curve(d, ts, 0.1, {1.0}, SensitivityMode::PairsExact, kExact);
    CHECK(only_one.families[0].entries ==
          intervals_scre(d, ts, 0.1, null_distribution(d.stratum_shapes(), ts, kExact)).entries);
    const auto curve = sensitivity_curve(d, ts, 0.1, grid, SensitivityMode::PairsExact, kExact);
    for (std::size_t k = 0; k < curve.families[0].entries.size(); ++k)
      for (std::size_t g = 1; g < grid.size(); ++g)
        CHECK(curve.families[g].entries[k].interval.lower <= curve.families[g - 1].entries[k].interval.lower);
  }

  // S = 3 pairs with all-positive differences, checked against enumeration.
  const auto d = ExperimentData::create({1, 0, 1, 0, 0, 1}, {5, 1, 7, 2, 3, 9}, {"a", "a", "b", "b", "c", "c"});
  const auto shapes = d.stratum_shapes();
  const std::vector<double> small_grid{1.0, 1.5, 3.0, 6.0};
  const double alpha = 0.2;
  const auto curve = sensitivity_curve(d, ts, alpha, small_grid, SensitivityMode::PairsExact, kExact);
  for (int k = 1; k <= 3; ++k) {
    std::optional<double> expected;
    for (double gamma : small_grid) {
      const double x = brute_force_min(d, ts, Scope::Treated, k, 0.0);
      if (sensitivity_oracle(shapes, w, gamma, x) <= alpha) expected = gamma;
    }
    CHECK(curve.largest_gamma_excluding_zero[static_cast<std::size_t>(k - 1)] == expected);
  }
  CHECK(curve.largest_gamma_excluding_zero[2] == 1.0);
}
