#pragma once

#include <cstddef>
#include <span>
#include <vector>

/// Non-dominated sorting and crowding (all objectives minimised).
namespace tscf::nsga2 {

using Point = std::vector<double>;

/// a is no worse than b everywhere and strictly better somewhere.
bool dominates(const Point& a, const Point& b);

/// Fronts in order; indices ascending within each front.
std::vector<std::vector<std::size_t>> fast_non_dominated_sort(std::span<const Point> points);

/// Crowding distance for each member of `front` (same order). Boundary
/// members get +inf.
std::vector<double> crowding_distance(std::span<const Point> points,
                                      std::span<const std::size_t> front);

/// Picks `count` survivors: whole fronts first, the last partial front by
/// descending crowding distance (ties by index).
std::vector<std::size_t> select_survivors(std::span<const Point> points, std::size_t count);

}  // namespace tscf::nsga2
