#include "flowsentry/geometry.hpp"

namespace flowsentry {

double signed_area(const Polyline& ring) {
  if (ring.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i)
    twice += ring[i].rho * ring[i + 1].flow - ring[i + 1].rho * ring[i].flow;
  // tolerate rings that were not explicitly closed
  if (!(ring.front() == ring.back()))
    twice += ring.back().rho * ring.front().flow - ring.front().rho * ring.back().flow;
  return 0.5 * twice;
}

} // namespace flowsentry
