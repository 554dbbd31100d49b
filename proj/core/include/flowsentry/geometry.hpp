#pragma once

#include <vector>

namespace flowsentry {

/// A point in the density-flow plane: density in veh/km, flow in veh/h.
struct Point {
  double rho = 0.0;
  double flow = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Closed polyline, first point repeated as last.
using Polyline = std::vector<Point>;

/// Signed shoelace area; positive for counter-clockwise rings.
double signed_area(const Polyline& ring);

inline double area(const Polyline& ring) {
  double a = signed_area(ring);
  return a < 0 ? -a : a;
}

} // namespace flowsentry
