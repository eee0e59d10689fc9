#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "weblm/errors.hpp"

namespace weblm {

// Page-pixel box, top-left origin.
struct BoundingBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x1() const { return x0 + w; }
  double y1() const { return y0 + h; }

  bool contains(const BoundingBox& inner, double margin = 0.0) const {
    return inner.x0 >= x0 + margin && inner.y0 >= y0 + margin &&
           inner.x1() <= x1() - margin && inner.y1() <= y1() - margin;
  }

  static BoundingBox join(const BoundingBox& a, const BoundingBox& b) {
    double nx0 = std::min(a.x0, b.x0);
    double ny0 = std::min(a.y0, b.y0);
    double nx1 = std::max(a.x1(), b.x1());
    double ny1 = std::max(a.y1(), b.y1());
    return {nx0, ny0, nx1 - nx0, ny1 - ny0};
  }
};

// Discretized coordinates in [0, 1000].
struct NormalizedBox {
  int x0 = 0;
  int x1 = 0;
  int y0 = 0;
  int y1 = 0;
  int w = 0;
  int h = 0;

  bool operator==(const NormalizedBox&) const = default;

  static NormalizedBox from_corners(int x0, int x1, int y0, int y1) {
    NormalizedBox b;
    b.x0 = x0;
    b.x1 = x1;
    b.y0 = y0;
    b.y1 = y1;
    b.w = x1 - x0;
    b.h = y1 - y0;
    return b;
  }

  bool valid() const {
    return 0 <= x0 && x0 <= x1 && x1 <= 1000 && 0 <= y0 && y0 <= y1 && y1 <= 1000 &&
           w == x1 - x0 && h == y1 - y0;
  }
};

enum class PerturbDirection { Enlarge, Reduce };

// Round half away from zero, then clamp to [0, 1000].
inline int discretize_coord(double v) {
  double r = (v >= 0.0) ? std::floor(v + 0.5) : std::ceil(v - 0.5);
  r = std::min(1000.0, std::max(0.0, r));
  return static_cast<int>(r);
}

inline NormalizedBox normalize_box(const BoundingBox& box, int page_w, int page_h) {
  if (page_w < 1 || page_h < 1) fail(Errc::ConfigError, "page dimensions must be >= 1");
  int x0 = discretize_coord(1000.0 * box.x0 / page_w);
  int x1 = discretize_coord(1000.0 * box.x1() / page_w);
  int y0 = discretize_coord(1000.0 * box.y0 / page_h);
  int y1 = discretize_coord(1000.0 * box.y1() / page_h);
  if (x1 < x0) x1 = x0;
  if (y1 < y0) y1 = y0;
  return NormalizedBox::from_corners(x0, x1, y0, y1);
}

// Scale width and height by (1 +- scale) about the box center, re-discretize.
inline NormalizedBox perturb_box(const NormalizedBox& box, PerturbDirection dir,
                                 double scale = 0.5) {
  double factor = dir == PerturbDirection::Enlarge ? 1.0 + scale : 1.0 - scale;
  double cx = 0.5 * (box.x0 + box.x1);
  double cy = 0.5 * (box.y0 + box.y1);
  double hw = 0.5 * box.w * factor;
  double hh = 0.5 * box.h * factor;
  int x0 = discretize_coord(cx - hw);
  int x1 = discretize_coord(cx + hw);
  int y0 = discretize_coord(cy - hh);
  int y1 = discretize_coord(cy + hh);
  if (x1 < x0) x1 = x0;
  if (y1 < y0) y1 = y0;
  return NormalizedBox::from_corners(x0, x1, y0, y1);
}

inline NormalizedBox union_box(const NormalizedBox& a, const NormalizedBox& b) {
  return NormalizedBox::from_corners(std::min(a.x0, b.x0), std::max(a.x1, b.x1),
                                     std::min(a.y0, b.y0), std::max(a.y1, b.y1));
}

}  // namespace weblm
