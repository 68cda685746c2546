#include "doctest.h"

#include "iteq/random.hpp"
#include "iteq/rank_engine.hpp"
#include "iteq/worst_case.hpp"

#include <algorithm>
#include <string>

using namespace iteq;

namespace {

std::vector<double> jump_grid(const ExperimentData& d) {
  std::vector<double> g{kNegInf, kInf};
  for (int i = 0; i < d.n(); ++i)
    for (int j = 0; j < d.n(); ++j)
      if (d.z(i) == 1 && d.z(j) == 0 && d.stratum_of()[static_cast<std::size_t>(i)] ==
                                            d.stratum_of()[static_cast<std::size_t>(j)]) {
        g.push_back(d.y(i) - d.y(j));
        g.push_back(d.y(i) - d.y(j) + 0.5);
      }
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

ExperimentData random_stratified(Rng& rng, int S, int max_size) {
  std::vector<int> z;
  std::vector<double> y;
  std::vector<std::string> st;
  for (int s = 0; s < S; ++s) {
    const int size = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_size - 1)));
    const int nt = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size - 1)));
    for (int i = 0; i < size; ++i) {
      z.push_back(i < nt ? 1 : 0);
      y.push_back(static_cast<double>(rng.below(5)));
      st.push_back("s" + std::to_string(s));
    }
  }
  // Scramble unit order so treated are not always first.
  std::vector<std::size_t> perm(z.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> z2;
  std::vector<double> y2;
  std::vector<std::string> st2;
  for (auto p : perm) {
    z2.push_back(z[p]);
    y2.push_back(y[p]);
    st2.push_back(st[p]);
  }
  return ExperimentData::create(z2, y2, st2);
}

}  // namespace

TEST_CASE("documented examples") {
  const auto w = RankTransform::wilcoxon();
  const auto d = ExperimentData::create({1, 0, 0}, {5, 1, 2});
  CHECK(min_stat_cre(d, w, 2, 0.0) == 1);
  CHECK(min_stat_cre(d, w, 3, 0.0) == 3);
  CHECK(min_stat_cre(d, w, 0, 0.0) == 1);

  const auto d2 = ExperimentData::create({1, 0, 1, 0, 0}, {4, 1, 7, 2, 3});
  CHECK(min_stat_cre(d2, w, 0, 2.0) == 1 + 2);

  const auto st = load_experiment("z,y,stratum\n1,5,a\n0,1,a\n1,5,b\n0,1,b");
  const RankTransform ts[] = {w};
  CHECK(min_stat_scre(st, ts, 3, 0.0) == 3);
  CHECK(min_stat_scre(st, ts, 0, 0.0) == 2);
  const auto single = ExperimentData::create({1, 0, 0, 1}, {5, 1, 2, 0});
  for (int k = 0; k <= 4; ++k)
    CHECK(min_stat_scre(single, ts, k, 1.0) == min_stat_cre(single, w, k, 1.0));
}

TEST_CASE("k = n forces delta = c") {
  const auto w = RankTransform::stephenson(2);
  const auto d = ExperimentData::create({1, 0, 1, 0}, {3, 1, 0, 2});
  const RankTransform ts[] = {w};
  const double c = 0.5;
  const std::vector<double> imputed{3 - c, 1, 0 - c, 2};
  CHECK(brute_force_min(d, ts, Scope::AllUnits, 4, c) == statistic(d.assignment(), imputed, w));
  CHECK(min_stat_cre(d, w, 4, c) == statistic(d.assignment(), imputed, w));
}

TEST_CASE("unstratified minimum equals brute force on every design with n <= 6") {
  Rng rng(1);
  const RankTransform transforms[] = {RankTransform::wilcoxon(), RankTransform::stephenson(3)};
  int checked = 0;
  for (int n = 2; n <= 6; ++n) {
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
      std::vector<int> z(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
      std::vector<double> y(static_cast<std::size_t>(n));
      for (auto& v : y) v = static_cast<double>(rng.below(4));
      const auto d = ExperimentData::create(z, y);
      for (const auto& t : transforms) {
        const RankTransform ts[] = {t};
        const WorstCase wc(d, ts);
        for (double c : jump_grid(d)) {
          const double extra[] = {c - 1.0};
          for (int k = 0; k <= n; ++k) {
            const double bf = brute_force_min(d, ts, Scope::AllUnits, k, c, n <= 5 ? std::span<const double>(extra)
                                                                                  : std::span<const double>());
            REQUIRE(min_stat_cre(d, t, k, c) == bf);
            REQUIRE(wc.min_stat({k, c, Scope::AllUnits}) == bf);
            ++checked;
          }
          for (int k = 0; k <= d.n_treated(); ++k) {
            const double bt = brute_force_min(d, ts, Scope::Treated, k, c);
            REQUIRE(bt == brute_force_min(d, ts, Scope::AllUnits, d.n_control() + k, c));
            REQUIRE(wc.min_stat({k, c, Scope::Treated}) == bt);
          }
        }
      }
    }
  }
  CHECK(checked > 10000);
}

TEST_CASE("stratified minimum equals allocation enumeration and brute force") {
  Rng rng(2);
  const RankTransform ts[] = {RankTransform::wilcoxon()};
  for (int rep = 0; rep < 300; ++rep) {
    const auto d = random_stratified(rng, 2, 3);
    for (double c : jump_grid(d)) {
      for (int k = 0; k <= d.n(); ++k) {
        const double dp = min_stat_scre(d, ts, k, c);
        REQUIRE(dp == exhaustive_allocation_min(d, ts, k, c).value);
        REQUIRE(dp == brute_force_min(d, ts, Scope::AllUnits, k, c));
      }
    }
  }
}

TEST_CASE("per-stratum transforms and larger strata") {
  Rng rng(3);
  const RankTransform ts[] = {RankTransform::wilcoxon(), RankTransform::stephenson(2), RankTransform::stephenson(3)};
  for (int rep = 0; rep < 200; ++rep) {
    const auto d = random_stratified(rng, 3, 4);
    const WorstCase wc(d, ts);
    for (double c : jump_grid(d)) {
      for (int k = 0; k <= d.n(); k += 2) {
        const auto alloc = wc.best_allocation(wc.capacity_for({k, c, Scope::AllUnits}), c);
        REQUIRE(alloc.value == exhaustive_allocation_min(d, ts, k, c).value);
        int used = 0;
        for (int m : alloc.slots) used += m;
        REQUIRE(used <= d.n() - k);
      }
    }
  }
}

TEST_CASE("one treated per stratum fast path equals enumeration") {
  Rng rng(4);
  const RankTransform ts[] = {RankTransform::stephenson(2)};
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<int> z;
    std::vector<double> y;
    std::vector<std::string> st;
    const int S = 2 + static_cast<int>(rng.below(4));
    for (int s = 0; s < S; ++s) {
      const int size = 2 + static_cast<int>(rng.below(2));
      const int treated_at = static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
      for (int i = 0; i < size; ++i) {
        z.push_back(i == treated_at ? 1 : 0);
        y.push_back(static_cast<double>(rng.below(6)));
        st.push_back(std::to_string(s));
      }
    }
    const auto d = ExperimentData::create(z, y, st);
    for (double c : jump_grid(d))
      for (int k = 0; k <= d.n(); ++k) REQUIRE(min_stat_scre(d, ts, k, c) == exhaustive_allocation_min(d, ts, k, c).value);
  }
}

TEST_CASE("minimum is nonincreasing in c and nondecreasing in k") {
  Rng rng(5);
  const auto t = RankTransform::stephenson(3);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 4 + static_cast<int>(rng.below(10));
    std::vector<int> z(static_cast<std::size_t>(n), 0);
    std::vector<double> y(static_cast<std::size_t>(n));
    z[0] = 1;
    for (int i = 2; i < n; ++i) z[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(2));
    for (auto& v : y) v = rng.normal();
    const auto d = ExperimentData::create(z, y);
    const auto grid = jump_grid(d);
    for (int k = 0; k <= n; ++k) {
      double prev = kInf;
      for (double c : grid) {
        const double v = min_stat_cre(d, t, k, c);
        REQUIRE(v <= prev);
        prev = v;
        if (k > 0) REQUIRE(v >= min_stat_cre(d, t, k - 1, c));
      }
    }
  }
}

TEST_CASE("brute force rejects large designs") {
  std::vector<int> z(9, 0);
  z[0] = 1;
  const auto d = ExperimentData::create(z, std::vector<double>(9, 0.0));
  const RankTransform ts[] = {RankTransform::wilcoxon()};
  CHECK_THROWS_AS(brute_force_min(d, ts, Scope::AllUnits, 0, 0.0), FlagError);
}

TEST_CASE("all-capacity minima agree with single-capacity minima") {
  Rng rng(6);
  const RankTransform ts[] = {RankTransform::wilcoxon()};
  for (int rep = 0; rep < 300; ++rep) {
    const int S = 1 + static_cast<int>(rng.below(4));
    const auto d = random_stratified(rng, S, 5);
    const WorstCase w(d, ts);
    for (double c : jump_grid(d)) {
      const auto row = w.min_stat_by_capacity(c);
      REQUIRE(row.size() == static_cast<std::size_t>(d.n_treated()) + 1);
      for (int j = 0; j <= d.n_treated(); ++j) REQUIRE(row[static_cast<std::size_t>(j)] == w.min_stat(j, c));
    }
  }
  // One treated unit per stratum.
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<int> z;
    std::vector<double> y;
    std::vector<std::string> st;
    for (int s = 0; s < 5; ++s)
      for (int i = 0; i < 3; ++i) {
        z.push_back(i == 0 ? 1 : 0);
        y.push_back(rng.normal());
        st.push_back(std::to_string(s));
      }
    const auto d = ExperimentData::create(z, y, st);
    const WorstCase w(d, ts);
    for (double c : jump_grid(d)) {
      const auto row = w.min_stat_by_capacity(c);
      for (int j = 0; j <= d.n_treated(); ++j) REQUIRE(row[static_cast<std::size_t>(j)] == w.min_stat(j, c));
    }
  }
}
