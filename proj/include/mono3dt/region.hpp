#pragma once

// Exact areas of unions of axis-aligned rectangles (coordinate compression).

#include <algorithm>
#include <span>
#include <vector>

#include "mono3dt/geometry.hpp"

namespace mono3dt {

inline double union_area(std::span<const Box2D> rects) {
  std::vector<double> xs;
  xs.reserve(rects.size() * 2);
  for (const auto& r : rects) {
    if (r.area() <= 0.0) continue;
    xs.push_back(r.x_min);
    xs.push_back(r.x_max);
  }
  if (xs.size() < 2) return 0.0;
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  double total = 0.0;
  std::vector<std::pair<double, double>> spans;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double x0 = xs[i];
    const double x1 = xs[i + 1];
    spans.clear();
    for (const auto& r : rects) {
      if (r.area() <= 0.0) continue;
      if (r.x_min <= x0 && r.x_max >= x1) spans.emplace_back(r.y_min, r.y_max);
    }
    if (spans.empty()) continue;
    std::sort(spans.begin(), spans.end());
    double covered = 0.0;
    double lo = spans.front().first;
    double hi = spans.front().second;
    for (std::size_t k = 1; k < spans.size(); ++k) {
      if (spans[k].first > hi) {
        covered += hi - lo;
        lo = spans[k].first;
        hi = spans[k].second;
      } else {
        hi = std::max(hi, spans[k].second);
      }
    }
    covered += hi - lo;
    total += covered * (x1 - x0);
  }
  return total;
}

/// Area of `target` covered by the union of `others`.
inline double covered_area(const Box2D& target, std::span<const Box2D> others) {
  std::vector<Box2D> clipped;
  clipped.reserve(others.size());
  for (const auto& o : others) {
    const Box2D c = intersect(target, o);
    if (c.area() > 0.0) clipped.push_back(c);
  }
  return std::min(union_area(clipped), target.area());
}

}  // namespace mono3dt
