#pragma once

// Ordinary least squares and a two-segment (single breakpoint) linear fit
// used to describe how answer recall tracks retrieval quality.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "genki/error.hpp"

namespace genki {

struct Point {
  double x = 0;
  double y = 0;
};

struct LineFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;  // 1 for a zero-variance response
  std::size_t n = 0;
  double sse = 0;
};

/// Least-squares line through `pts[begin, end)`.
inline LineFit ols(const std::vector<Point>& pts, std::size_t begin, std::size_t end) {
  const std::size_t n = end - begin;
  if (n < 2) throw InvalidArgument("ols: need at least 2 points");
  double mx = 0, my = 0;
  for (std::size_t i = begin; i < end; ++i) {
    mx += pts[i].x;
    my += pts[i].y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = begin; i < end; ++i) {
    const double dx = pts[i].x - mx, dy = pts[i].y - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0) throw InvalidArgument("ols: x values have zero variance");
  LineFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = begin; i < end; ++i) {
    const double r = pts[i].y - (f.intercept + f.slope * pts[i].x);
    f.sse += r * r;
  }
  f.r2 = syy == 0 ? 1.0 : std::clamp(1.0 - f.sse / syy, 0.0, 1.0);
  return f;
}

inline LineFit ols(const std::vector<Point>& pts) { return ols(pts, 0, pts.size()); }

struct FitResult {
  LineFit segment1;
  LineFit segment2;
  double breakpoint = 0;
  LineFit single;  // one line through every point
};

/// Tries every interior point as the breakpoint; the two segments share it
/// and each holds at least 3 points. Keeps the split with the largest
/// r2_1 + r2_2 (smaller total SSE on ties).
inline FitResult two_segment_fit(std::vector<Point> pts) {
  if (pts.size() < 6) throw InvalidArgument("two_segment_fit: need at least 6 points");
  for (const auto& p : pts)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw InvalidArgument("two_segment_fit: non-finite point");
  std::stable_sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
  const double xmin = pts.front().x, xmax = pts.back().x;

  FitResult best;
  best.single = ols(pts);
  double best_score = -std::numeric_limits<double>::infinity();
  double best_sse = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t b = 2; b + 3 <= pts.size(); ++b) {
    const double bx = pts[b].x;
    if (!(bx > xmin && bx < xmax)) continue;
    LineFit s1, s2;
    try {
      s1 = ols(pts, 0, b + 1);
      s2 = ols(pts, b, pts.size());
    } catch (const InvalidArgument&) {
      continue;  // degenerate x spread in one segment
    }
    const double score = s1.r2 + s2.r2;
    const double sse = s1.sse + s2.sse;
    if (score > best_score || (score == best_score && sse < best_sse)) {
      best_score = score;
      best_sse = sse;
      best.segment1 = s1;
      best.segment2 = s2;
      best.breakpoint = bx;
      found = true;
    }
  }
  if (!found) throw InvalidArgument("two_segment_fit: no admissible breakpoint");
  return best;
}

}  // namespace genki
