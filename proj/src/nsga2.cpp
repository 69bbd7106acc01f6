#include "tscf/nsga2.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "tscf/errors.hpp"

namespace tscf::nsga2 {

bool dominates(const Point& a, const Point& b) {
  bool strictly = false;
  for (std::size_t m = 0; m < a.size(); ++m) {
    if (a[m] > b[m]) return false;
    if (a[m] < b[m]) strictly = true;
  }
  return strictly;
}

std::vector<std::vector<std::size_t>> fast_non_dominated_sort(std::span<const Point> points) {
  const std::size_t n = points.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<std::size_t> counter(n, 0);
  std::vector<std::vector<std::size_t>> fronts;
  std::vector<std::size_t> current;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates(points[p], points[q])) {
        dominated[p].push_back(q);
      } else if (dominates(points[q], points[p])) {
        ++counter[p];
      }
    }
    if (counter[p] == 0) current.push_back(p);
  }
  while (!current.empty()) {
    std::vector<std::size_t> next;
    for (std::size_t p : current) {
      for (std::size_t q : dominated[p]) {
        if (--counter[q] == 0) next.push_back(q);
      }
    }
    fronts.push_back(std::move(current));
    std::sort(next.begin(), next.end());
    current = std::move(next);
  }
  return fronts;
}

std::vector<double> crowding_distance(std::span<const Point> points,
                                      std::span<const std::size_t> front) {
  const std::size_t n = front.size();
  std::vector<double> dist(n, 0.0);
  if (n == 0) return dist;
  if (n <= 2) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    return dist;
  }
  const std::size_t objectives = points[front[0]].size();
  std::vector<std::size_t> order(n);
  for (std::size_t m = 0; m < objectives; ++m) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return points[front[a]][m] < points[front[b]][m];
    });
    const double lo = points[front[order.front()]][m];
    const double hi = points[front[order.back()]][m];
    dist[order.front()] = std::numeric_limits<double>::infinity();
    dist[order.back()] = std::numeric_limits<double>::infinity();
    if (hi <= lo) continue;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      dist[order[i]] += (points[front[order[i + 1]]][m] - points[front[order[i - 1]]][m]) / (hi - lo);
    }
  }
  return dist;
}

std::vector<std::size_t> select_survivors(std::span<const Point> points, std::size_t count) {
  if (count > points.size()) throw ContractError("cannot select more survivors than points");
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  for (const auto& front : fast_non_dominated_sort(points)) {
    if (chosen.size() + front.size() <= count) {
      chosen.insert(chosen.end(), front.begin(), front.end());
      if (chosen.size() == count) break;
      continue;
    }
    const auto crowd = crowding_distance(points, front);
    std::vector<std::size_t> order(front.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return crowd[a] > crowd[b]; });
    for (std::size_t i = 0; chosen.size() < count; ++i) chosen.push_back(front[order[i]]);
    break;
  }
  return chosen;
}

}  // namespace tscf::nsga2
