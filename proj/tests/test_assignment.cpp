#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dhpm/assignment.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

using namespace dhpm;

namespace {

// Minimum over every injective row -> column map.
double brute_force_min(const CostMatrix& c) {
  std::vector<int> cols(static_cast<std::size_t>(c.cols()));
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // Permutations of all columns cover every injection of the first M.
  do {
    double total = 0.0;
    for (Eigen::Index r = 0; r < c.rows(); ++r) total += c(r, cols[std::size_t(r)]);
    best = std::min(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

CostMatrix random_costs(std::mt19937_64& rng, int m, int k, bool integer) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> ui(0, 4);
  CostMatrix c(m, k);
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = integer ? double(ui(rng)) : u(rng);
  return c;
}

}  // namespace

TEST_CASE("hungarian examples") {
  CostMatrix a(2, 2);
  a << 1, 2, 3, 1;
  auto r = hungarian_assign(a);
  CHECK(r.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  CHECK(r.total_cost == 2.0);

  CostMatrix b(1, 1);
  b << 0;
  CHECK(hungarian_assign(b).pairs == std::vector<std::pair<int, int>>{{0, 0}});

  CostMatrix c(2, 2);
  c << 5, 1, 1, 5;
  r = hungarian_assign(c);
  CHECK(r.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}});
  CHECK(r.total_cost == 2.0);
  CHECK(r.gt_for(0) == 1);
  CostMatrix wide(1, 3);
  wide << 0.5, 0.1, 0.9;
  const auto single = hungarian_assign(wide);
  CHECK(single.gt_for(1) == 0);
  CHECK_FALSE(single.gt_for(0).has_value());
}

TEST_CASE("hungarian errors") {
  CHECK_THROWS_AS(hungarian_assign(CostMatrix::Zero(3, 2)), std::invalid_argument);
  CostMatrix bad = CostMatrix::Zero(2, 2);
  bad(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian_assign(bad), std::invalid_argument);
  bad(1, 0) = std::nan("");
  CHECK_THROWS_AS(hungarian_assign(bad), std::invalid_argument);
  CHECK(hungarian_assign(CostMatrix::Zero(0, 4)).pairs.empty());
}

TEST_CASE("hungarian matches the permutation oracle") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 400; ++trial) {
    const int k = 1 + int(rng() % 6);
    const int m = 1 + int(rng() % std::uint64_t(k));
    const auto costs = random_costs(rng, m, k, trial % 2 == 1);
    const auto r = hungarian_assign(costs);

    REQUIRE(r.pairs.size() == std::size_t(m));
    std::vector<bool> used(std::size_t(k), false);
    double total = 0.0;
    for (std::size_t i = 0; i < r.pairs.size(); ++i) {
      const auto [g, p] = r.pairs[i];
      CHECK(g == int(i));
      CHECK_FALSE(used[std::size_t(p)]);
      used[std::size_t(p)] = true;
      total += costs(g, p);
    }
    CHECK(total == doctest::Approx(r.total_cost).epsilon(1e-12));
    CHECK(r.total_cost == doctest::Approx(brute_force_min(costs)).epsilon(1e-12));
  }
}

TEST_CASE("dense match examples") {
  CostMatrix d(2, 3);
  d << 0.1, 0.5, 0.3, 0.4, 0.2, 0.35;

  auto m = dense_match(d, 2);
  CHECK(m.target[0] == 0);
  CHECK(m.target[1] == 1);
  CHECK(m.target[2] == 0);
  CHECK(m.clusters[0] == std::vector<int>{0, 2});
  CHECK(m.clusters[1] == std::vector<int>{1});
  CHECK(m.active_count() == 3);

  m = dense_match(d, 1);
  CHECK(m.active == std::vector<bool>{true, true, false});

  m = dense_match(CostMatrix(0, 4), 2);
  CHECK(m.active_count() == 0);
  for (const auto& t : m.target) CHECK_FALSE(t.has_value());

  CHECK_THROWS_AS(dense_match(d, 0), std::invalid_argument);
}

TEST_CASE("dense match against brute force") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 1 + int(rng() % 4);
    const int k = 1 + int(rng() % 10);
    const auto costs = random_costs(rng, m, k, trial % 3 == 0);
    const int cap = 1 + int(rng() % 4);
    const auto match = dense_match(costs, cap);

    for (int p = 0; p < k; ++p) {
      int best = 0;
      for (int g = 1; g < m; ++g)
        if (costs(g, p) < costs(best, p)) best = g;
      CHECK(match.target[std::size_t(p)] == best);
    }
    for (std::size_t g = 0; g < match.clusters.size(); ++g) {
      const auto& cl = match.clusters[g];
      int active = 0;
      for (std::size_t i = 0; i < cl.size(); ++i) {
        if (i > 0) CHECK(costs(int(g), cl[i - 1]) <= costs(int(g), cl[i]));
        active += match.active[std::size_t(cl[i])] ? 1 : 0;
        CHECK(match.active[std::size_t(cl[i])] == (i < std::size_t(cap)));
      }
      CHECK(active == std::min<int>(cap, int(cl.size())));
    }
  }
}

TEST_CASE("dense match cap monotonicity") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto costs = random_costs(rng, 3, 12, false);
    std::size_t prev = 0;
    for (int cap = 1; cap <= 12; ++cap) {
      const auto now = dense_match(costs, cap);
      CHECK(now.active_count() >= prev);
      if (cap > 1) {
        const auto before = dense_match(costs, cap - 1);
        for (std::size_t p = 0; p < now.active.size(); ++p)
          if (before.active[p]) CHECK(now.active[p]);
      }
      prev = now.active_count();
    }
    CHECK(prev == 12);
  }
}

TEST_CASE("default cap") {
  CHECK(default_cap(50) == 8);
  CHECK(default_cap(25) == 4);
  CHECK(default_cap(3) == 1);
  CHECK(default_cap(1) == 1);
  for (int k = 1; k <= 200; ++k) CHECK(default_cap(k) == std::max(1, 4 * k / 25));
}
