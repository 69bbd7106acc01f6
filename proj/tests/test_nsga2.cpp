#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "tscf/errors.hpp"
#include "tscf/nsga2.hpp"
#include "tscf/rng.hpp"

using namespace tscf;
using nsga2::Point;

namespace {

std::vector<Point> random_population(Rng& rng, std::size_t n, bool coarse) {
  std::vector<Point> pts(n, Point(3));
  for (auto& p : pts)
    for (auto& v : p) v = coarse ? static_cast<double>(rng.index(5)) : rng.uniform();
  return pts;
}

}  // namespace

TEST_CASE("strict domination") {
  const std::vector<Point> pts{{1, 1, 1}, {2, 2, 2}};
  const auto fronts = nsga2::fast_non_dominated_sort(pts);
  REQUIRE(fronts.size() == 2);
  CHECK(fronts[0] == std::vector<std::size_t>{0});
  CHECK(fronts[1] == std::vector<std::size_t>{1});
  CHECK(nsga2::dominates({1, 2}, {1, 3}));
  CHECK_FALSE(nsga2::dominates({1, 2}, {1, 2}));
  CHECK_FALSE(nsga2::dominates({1, 3}, {2, 2}));
}

TEST_CASE("sorting matches the peeling oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(50);
    const auto pts = random_population(rng, n, trial % 2 == 0);
    CHECK(nsga2::fast_non_dominated_sort(pts) == oracle::fronts(pts));
  }
}

TEST_CASE("crowding distance by hand") {
  const std::vector<Point> pts{{0, 4}, {1, 3}, {3, 1}, {4, 0}, {9, 9}};
  const std::vector<std::size_t> front{0, 1, 2, 3};
  const auto d = nsga2::crowding_distance(pts, front);
  CHECK(std::isinf(d[0]));
  CHECK(std::isinf(d[3]));
  // objective 0: (3 - 0) / 4, objective 1: (4 - 1) / 4
  CHECK(d[1] == doctest::Approx(1.5));
  CHECK(d[2] == doctest::Approx(1.5));

  const std::vector<std::size_t> pair{0, 4};
  for (double v : nsga2::crowding_distance(pts, pair)) CHECK(std::isinf(v));
}

TEST_CASE("survivors fill whole fronts then the most isolated") {
  const std::vector<Point> pts{{0, 4}, {1, 3}, {3, 1}, {4, 0}, {2, 2.5}, {5, 5}, {6, 6}};
  // front 0 = {0, 1, 2, 3, 4}; crowding of 1, 4, 2 is 0.875, 1.0, 1.125
  const auto d = nsga2::crowding_distance(pts, std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(d[1] == doctest::Approx(0.875));
  CHECK(d[4] == doctest::Approx(1.0));
  CHECK(d[2] == doctest::Approx(1.125));
  const auto s = nsga2::select_survivors(pts, 4);
  CHECK(std::set<std::size_t>(s.begin(), s.end()) == std::set<std::size_t>{0, 2, 3, 4});
  const auto all = nsga2::select_survivors(pts, 6);
  CHECK(std::set<std::size_t>(all.begin(), all.end()) == std::set<std::size_t>{0, 1, 2, 3, 4, 5});
  CHECK_THROWS_AS(nsga2::select_survivors(pts, 8), ContractError);
}

TEST_CASE("survivors never skip a better front") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pts = random_population(rng, 10 + rng.index(40), false);
    const std::size_t count = 1 + rng.index(pts.size());
    const auto s = nsga2::select_survivors(pts, count);
    CHECK(s.size() == count);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == count);
    const auto fronts = oracle::fronts(pts);
    std::vector<std::size_t> rank(pts.size());
    for (std::size_t f = 0; f < fronts.size(); ++f)
      for (auto i : fronts[f]) rank[i] = f;
    std::size_t worst = 0;
    for (auto i : s) worst = std::max(worst, rank[i]);
    const std::set<std::size_t> chosen(s.begin(), s.end());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (rank[i] < worst) CHECK(chosen.count(i) == 1);
    }
  }
}
