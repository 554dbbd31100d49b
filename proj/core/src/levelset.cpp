#include "flowsentry/levelset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "flowsentry/error.hpp"
#include "flowsentry/stats.hpp"

namespace flowsentry::levelset {
namespace {

constexpr double kLevelTolerance = 1e-4;
constexpr int kMaxBisectionSteps = 40;
constexpr double kDensifyDivisions = 500.0;

double point_segment_distance2(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = ax + t * dx - px, cy = ay + t * dy - py;
  return cx * cx + cy * cy;
}

// Crossing-number test for one ring (PNPOLY).
bool ray_cast(const Polyline& ring, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const double xi = ring[i].rho, yi = ring[i].flow;
    const double xj = ring[j].rho, yj = ring[j].flow;
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
  }
  return inside;
}

} // namespace

void RegionConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(ErrorKind::invalid_argument, "alpha must lie in (0, 1)");
  if (!(min_component_area_fraction >= 0.0 && min_component_area_fraction < 1.0))
    throw Error(ErrorKind::invalid_argument, "min_component_area_fraction must lie in [0, 1)");
}

double mass_above(const kde::DensityGrid& grid, double z) {
  const std::size_t nr = grid.resolution().n_rho, nf = grid.resolution().n_flow;
  const auto& v = grid.values();
  double sum = 0.0;
  for (std::size_t k = 0; k < nf; ++k) {
    const double wk = (k == 0 || k + 1 == nf) ? 0.5 : 1.0;
    for (std::size_t j = 0; j < nr; ++j) {
      const double x = v[k * nr + j];
      if (x >= z) sum += wk * ((j == 0 || j + 1 == nr) ? 0.5 : 1.0) * x;
    }
  }
  return sum * grid.cell_width_rho() * grid.cell_width_flow();
}

double find_level(const kde::DensityGrid& grid, double alpha) {
  RegionConfig{alpha, 0.0}.validate();
  const double target = 1.0 - alpha;
  const double total = mass_above(grid, 0.0);
  if (total < target - kLevelTolerance)
    throw Error(ErrorKind::degenerate_data,
                "grid holds only " + std::to_string(total) + " of the probability mass; widen the grid bounds");

  // H(z) = target - mass_above(z) is nondecreasing in z
  double lo = 0.0, hi = grid.max_value();
  for (int step = 0; step < kMaxBisectionSteps; ++step) {
    const double mid = 0.5 * (lo + hi);
    const double h = target - mass_above(grid, mid);
    if (std::abs(h) <= kLevelTolerance) return mid;
    if (h < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<Polyline> extract_contour(const kde::DensityGrid& grid, double z) {
  if (!(z > 0.0) || !(z < grid.max_value()))
    throw Error(ErrorKind::degenerate_data, "no grid cell crosses the requested level");

  // Pad with a ring of zero-valued nodes so that every isoline closes.
  const std::size_t nr = grid.resolution().n_rho, nf = grid.resolution().n_flow;
  const std::size_t pr = nr + 2, pf = nf + 2;
  auto node = [&](std::size_t j, std::size_t k) -> double {
    if (j == 0 || k == 0 || j == pr - 1 || k == pf - 1) return 0.0;
    return grid.value(j - 1, k - 1);
  };
  const double hx = grid.cell_width_rho(), hy = grid.cell_width_flow();
  const double x0 = grid.rho_at(0) - hx, y0 = grid.flow_at(0) - hy;

  // Edge ids: horizontal edge (j,k)-(j+1,k) -> 2*(k*pr+j); vertical (j,k)-(j,k+1) -> +1.
  auto h_edge = [&](std::size_t j, std::size_t k) { return std::uint64_t(2 * (k * pr + j)); };
  auto v_edge = [&](std::size_t j, std::size_t k) { return std::uint64_t(2 * (k * pr + j) + 1); };
  auto edge_point = [&](std::uint64_t id) -> Point {
    const std::size_t base = id / 2;
    const std::size_t j = base % pr, k = base / pr;
    const bool vertical = id % 2 == 1;
    const double va = node(j, k);
    const double vb = vertical ? node(j, k + 1) : node(j + 1, k);
    const double t = (z - va) / (vb - va);
    const double x = x0 + j * hx, y = y0 + k * hy;
    return vertical ? Point{x, y + t * hy} : Point{x + t * hx, y};
  };

  std::unordered_map<std::uint64_t, std::uint64_t> next; // start edge -> end edge
  for (std::size_t k = 0; k + 1 < pf; ++k) {
    for (std::size_t j = 0; j + 1 < pr; ++j) {
      // corners counter-clockwise from bottom-left, edge i joins corner i to i+1
      const double c[4] = {node(j, k), node(j + 1, k), node(j + 1, k + 1), node(j, k + 1)};
      const bool in[4] = {c[0] >= z, c[1] >= z, c[2] >= z, c[3] >= z};
      const int count = in[0] + in[1] + in[2] + in[3];
      if (count == 0 || count == 4) continue;
      const std::uint64_t edges[4] = {h_edge(j, k), v_edge(j + 1, k), h_edge(j, k + 1), v_edge(j, k)};

      int exits[2], entries[2], ne = 0, nn = 0;
      for (int i = 0; i < 4; ++i) {
        const bool a = in[i], b = in[(i + 1) % 4];
        if (a && !b) exits[ne++] = i;
        if (!a && b) entries[nn++] = i;
      }
      if (ne == 1) {
        next[edges[exits[0]]] = edges[entries[0]];
        continue;
      }
      // saddle: pair each exit with the following entry when the centre is
      // high (corners joined), else with the preceding one
      const bool centre_high = 0.25 * (c[0] + c[1] + c[2] + c[3]) >= z;
      for (int e = 0; e < 2; ++e) {
        const int i = exits[e];
        const int partner = centre_high ? (i + 1) % 4 : (i + 3) % 4;
        next[edges[i]] = edges[partner];
      }
    }
  }

  std::vector<Polyline> rings;
  while (!next.empty()) {
    // deterministic start: smallest remaining edge id
    std::uint64_t start = std::numeric_limits<std::uint64_t>::max();
    for (const auto& kv : next) start = std::min(start, kv.first);
    Polyline ring;
    std::uint64_t cur = start;
    while (true) {
      ring.push_back(edge_point(cur));
      auto it = next.find(cur);
      if (it == next.end())
        throw Error(ErrorKind::degenerate_data, "open isoline while tracing contour");
      const std::uint64_t nxt = it->second;
      next.erase(it);
      if (nxt == start) break;
      cur = nxt;
    }
    ring.push_back(ring.front());
    if (ring.size() >= 4) rings.push_back(std::move(ring));
  }
  if (rings.empty()) throw Error(ErrorKind::degenerate_data, "no grid cell crosses the requested level");
  return rings;
}

std::vector<Polyline> filter_components(std::vector<Polyline> rings, double min_fraction) {
  if (rings.empty()) throw Error(ErrorKind::invalid_argument, "no contour components to filter");
  double total = 0.0;
  for (const auto& r : rings) total += area(r);
  const double floor = min_fraction * total;
  auto largest = std::max_element(rings.begin(), rings.end(),
                                  [](const Polyline& a, const Polyline& b) { return area(a) < area(b); });
  std::vector<Polyline> kept;
  for (auto it = rings.begin(); it != rings.end(); ++it)
    if (area(*it) >= floor || it == largest) kept.push_back(std::move(*it));
  return kept;
}

AxisScales axis_scales_from_iqr(std::span<const Point> training) {
  std::vector<double> rho, flow;
  rho.reserve(training.size());
  flow.reserve(training.size());
  for (const auto& p : training) {
    rho.push_back(p.rho);
    flow.push_back(p.flow);
  }
  if (training.size() < 2) throw Error(ErrorKind::insufficient_data, "need training points for axis scales");
  AxisScales s{stats::iqr(rho), stats::iqr(flow)};
  if (!(s.rho > 0.0) || !(s.flow > 0.0))
    throw Error(ErrorKind::degenerate_data, "training interquartile range is zero");
  return s;
}

TypicalRegion::TypicalRegion(double z_star, std::vector<Polyline> rings, double alpha,
                             AxisScales scales, std::optional<double> max_training_distance)
    : z_star_(z_star), rings_(std::move(rings)), alpha_(alpha), scales_(scales),
      max_training_distance_(max_training_distance) {
  if (rings_.empty()) throw Error(ErrorKind::invalid_argument, "typical region needs at least one ring");
  if (!(scales_.rho > 0.0) || !(scales_.flow > 0.0))
    throw Error(ErrorKind::invalid_argument, "axis scales must be positive");
  if (max_training_distance_ && !(*max_training_distance_ > 0.0))
    throw Error(ErrorKind::invalid_argument, "max training distance must be positive");

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (auto& ring : rings_) {
    if (ring.size() < 3) throw Error(ErrorKind::invalid_argument, "ring has fewer than 3 points");
    if (!(ring.front() == ring.back())) ring.push_back(ring.front());
    Polyline scaled;
    scaled.reserve(ring.size());
    for (const auto& p : ring) {
      Point s{p.rho / scales_.rho, p.flow / scales_.flow};
      xmin = std::min(xmin, s.rho);
      xmax = std::max(xmax, s.rho);
      ymin = std::min(ymin, s.flow);
      ymax = std::max(ymax, s.flow);
      scaled.push_back(s);
    }
    scaled_rings_.push_back(std::move(scaled));
  }
  const double diag = std::hypot(xmax - xmin, ymax - ymin);
  spacing_ = diag / kDensifyDivisions;
  boundary_eps_ = 1e-12 * diag;

  std::vector<std::pair<Point, Point>> pts; // (scaled, raw)
  for (std::size_t r = 0; r < rings_.size(); ++r) {
    const auto& raw = rings_[r];
    const auto& sc = scaled_rings_[r];
    for (std::size_t i = 0; i + 1 < sc.size(); ++i) {
      const double len = std::hypot(sc[i + 1].rho - sc[i].rho, sc[i + 1].flow - sc[i].flow);
      const auto pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / spacing_)));
      for (std::size_t p = 0; p < pieces; ++p) {
        const double t = static_cast<double>(p) / static_cast<double>(pieces);
        Point s{sc[i].rho + t * (sc[i + 1].rho - sc[i].rho), sc[i].flow + t * (sc[i + 1].flow - sc[i].flow)};
        Point w = p == 0 ? raw[i]
                         : Point{raw[i].rho + t * (raw[i + 1].rho - raw[i].rho),
                                 raw[i].flow + t * (raw[i + 1].flow - raw[i].flow)};
        pts.emplace_back(s, w);
      }
    }
  }
  std::stable_sort(pts.begin(), pts.end(),
                   [](const auto& a, const auto& b) { return a.first.rho < b.first.rho; });
  boundary_scaled_.reserve(pts.size());
  boundary_raw_.reserve(pts.size());
  for (const auto& [s, w] : pts) {
    boundary_scaled_.push_back(s);
    boundary_raw_.push_back(w);
  }
}

bool TypicalRegion::on_boundary(double sx, double sy) const {
  const double eps2 = boundary_eps_ * boundary_eps_;
  for (const auto& ring : scaled_rings_)
    for (std::size_t i = 0; i + 1 < ring.size(); ++i)
      if (point_segment_distance2(sx, sy, ring[i].rho, ring[i].flow, ring[i + 1].rho,
                                  ring[i + 1].flow) <= eps2)
        return true;
  return false;
}

bool TypicalRegion::contains(Point p) const {
  const double sx = p.rho / scales_.rho, sy = p.flow / scales_.flow;
  bool inside = false;
  for (const auto& ring : scaled_rings_)
    if (ray_cast(ring, sx, sy)) inside = !inside;
  return inside || on_boundary(sx, sy);
}

BoundaryHit TypicalRegion::nearest_boundary(Point p) const {
  const double sx = p.rho / scales_.rho, sy = p.flow / scales_.flow;
  // sweep outward from the query abscissa; points are sorted by scaled rho
  const auto start = std::lower_bound(boundary_scaled_.begin(), boundary_scaled_.end(), sx,
                                      [](const Point& a, double x) { return a.rho < x; });
  double best2 = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  const auto n = static_cast<std::ptrdiff_t>(boundary_scaled_.size());
  const std::ptrdiff_t mid = start - boundary_scaled_.begin();
  for (std::ptrdiff_t i = mid; i < n; ++i) {
    const double dx = boundary_scaled_[i].rho - sx;
    if (dx * dx > best2) break;
    const double dy = boundary_scaled_[i].flow - sy;
    if (dx * dx + dy * dy < best2) {
      best2 = dx * dx + dy * dy;
      best = static_cast<std::size_t>(i);
    }
  }
  for (std::ptrdiff_t i = mid - 1; i >= 0; --i) {
    const double dx = boundary_scaled_[i].rho - sx;
    if (dx * dx > best2) break;
    const double dy = boundary_scaled_[i].flow - sy;
    if (dx * dx + dy * dy < best2) {
      best2 = dx * dx + dy * dy;
      best = static_cast<std::size_t>(i);
    }
  }
  return {std::sqrt(best2), boundary_raw_[best]};
}

double TypicalRegion::distance_to_boundary(Point p) const {
  double d = nearest_boundary(p).distance;
  if (d == 0.0 && !contains(p)) d = std::numeric_limits<double>::denorm_min();
  return d;
}

ExitSide TypicalRegion::exit_side(Point p) const {
  if (contains(p)) throw Error(ErrorKind::contract_violation, "exit_side called on an interior point");
  const Point b = nearest_boundary(p).point;
  return (p.rho <= b.rho && p.flow >= b.flow) ? ExitSide::left : ExitSide::right;
}

double TypicalRegion::total_area() const {
  double total = 0.0;
  for (const auto& r : rings_) total += area(r);
  return total;
}

TypicalRegion TypicalRegion::with_normalizer(double max_training_distance) const {
  TypicalRegion copy = *this;
  if (!(max_training_distance > 0.0))
    throw Error(ErrorKind::invalid_argument, "max training distance must be positive");
  copy.max_training_distance_ = max_training_distance;
  return copy;
}

std::string TypicalRegion::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha_;
  j["z_star"] = z_star_;
  j["axis_scales"] = {{"rho", scales_.rho}, {"flow", scales_.flow}};
  j["max_training_distance"] =
      max_training_distance_ ? nlohmann::json(*max_training_distance_) : nlohmann::json(nullptr);
  auto polys = nlohmann::json::array();
  for (const auto& ring : rings_) {
    auto verts = nlohmann::json::array();
    for (const auto& p : ring) verts.push_back({p.rho, p.flow});
    polys.push_back(std::move(verts));
  }
  j["polygons"] = std::move(polys);
  return j.dump(1);
}

TypicalRegion TypicalRegion::from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    std::vector<Polyline> rings;
    for (const auto& verts : j.at("polygons")) {
      Polyline ring;
      for (const auto& v : verts) ring.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      rings.push_back(std::move(ring));
    }
    std::optional<double> normalizer;
    if (j.contains("max_training_distance") && !j["max_training_distance"].is_null())
      normalizer = j["max_training_distance"].get<double>();
    AxisScales scales{j.at("axis_scales").at("rho").get<double>(),
                      j.at("axis_scales").at("flow").get<double>()};
    return TypicalRegion(j.at("z_star").get<double>(), std::move(rings), j.at("alpha").get<double>(),
                         scales, normalizer);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_input, std::string("bad region JSON: ") + e.what());
  }
}

TypicalRegion build_region(const kde::DensityGrid& grid, const RegionConfig& config,
                           const AxisScales& scales) {
  config.validate();
  const double z = find_level(grid, config.alpha);
  auto rings = filter_components(extract_contour(grid, z), config.min_component_area_fraction);
  return TypicalRegion(z, std::move(rings), config.alpha, scales);
}

double contained_fraction(const TypicalRegion& region, std::span<const Point> points) {
  if (points.empty()) return 0.0;
  std::size_t inside = 0;
  for (const auto& p : points) inside += region.contains(p) ? 1 : 0;
  return static_cast<double>(inside) / static_cast<double>(points.size());
}

} // namespace flowsentry::levelset
