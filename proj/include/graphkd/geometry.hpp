#pragma once

#include <algorithm>
#include <cmath>

#include "graphkd/error.hpp"

namespace graphkd {

// Axis-aligned box in normalized image coordinates, corners (x1,y1)-(x2,y2).
struct BoxGeometry {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 < x2 && y1 < y2 && x1 >= 0.0 && y1 >= 0.0 &&
           x2 <= 1.0 && y2 <= 1.0;
  }

  void validate() const {
    require(valid(), errkind::kInvalidBox,
            "box must satisfy 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1");
  }

  bool operator==(const BoxGeometry& o) const {
    return x1 == o.x1 && y1 == o.y1 && x2 == o.x2 && y2 == o.y2;
  }
};

inline BoxGeometry union_box(const BoxGeometry& a, const BoxGeometry& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

// Intersection over union; 0 for disjoint boxes. Works for any consistent
// coordinate units (normalized or pixel).
inline double iou(const BoxGeometry& a, const BoxGeometry& b) {
  double ix1 = std::max(a.x1, b.x1);
  double iy1 = std::max(a.y1, b.y1);
  double ix2 = std::min(a.x2, b.x2);
  double iy2 = std::min(a.y2, b.y2);
  double iw = ix2 - ix1;
  double ih = iy2 - iy1;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  double inter = iw * ih;
  double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline BoxGeometry hflip(const BoxGeometry& b) {
  return {1.0 - b.x2, b.y1, 1.0 - b.x1, b.y2};
}

}  // namespace graphkd
