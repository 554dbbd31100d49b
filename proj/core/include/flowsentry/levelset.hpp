#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowsentry/geometry.hpp"
#include "flowsentry/kde.hpp"

namespace flowsentry::levelset {

struct RegionConfig {
  double alpha = 0.05;
  double min_component_area_fraction = 0.05;

  /// Throws Error(invalid_argument) when a field is out of range.
  void validate() const;
};

/// Trapezoidal integral of the grid restricted to cells with value >= z.
double mass_above(const kde::DensityGrid& grid, double z);

/// Height z* whose superlevel set holds 1 - alpha of the mass, by bisection
/// on [0, max] to a probability tolerance of 1e-4. Throws when the grid
/// itself holds less than 1 - alpha.
double find_level(const kde::DensityGrid& grid, double alpha);

/// Marching-squares isolines at `z`, each closed. Rings run
/// counter-clockwise around regions with value >= z (holes run clockwise).
/// Saddle cells join the high corners when the cell-centre average is >= z.
std::vector<Polyline> extract_contour(const kde::DensityGrid& grid, double z);

/// Drops rings whose area is below `min_fraction` of the summed area of all
/// rings. The largest ring always survives.
std::vector<Polyline> filter_components(std::vector<Polyline> rings, double min_fraction);

/// Per-axis divisors applied before any distance computation.
struct AxisScales {
  double rho = 1.0;
  double flow = 1.0;
};

/// Interquartile ranges of the training densities and flows.
AxisScales axis_scales_from_iqr(std::span<const Point> training);

enum class ExitSide { left, right };

struct BoundaryHit {
  double distance = 0.0; // in scaled units
  Point point;           // nearest densified boundary point, raw units
};

/// The typical region: the filtered superlevel set of a fitted KDE.
///
/// Membership uses the even-odd rule over all retained rings with the
/// boundary itself counted as inside. Distances are Euclidean after
/// dividing each axis by its scale, measured to a boundary densified to a
/// spacing of at most 1/500 of the scaled bounding-box diagonal.
class TypicalRegion {
public:
  TypicalRegion(double z_star, std::vector<Polyline> rings, double alpha, AxisScales scales,
                std::optional<double> max_training_distance = std::nullopt);

  bool contains(Point p) const;
  double distance_to_boundary(Point p) const;
  BoundaryHit nearest_boundary(Point p) const;

  /// Side through which an exterior point left the region. Throws
  /// Error(contract_violation) for interior points.
  ExitSide exit_side(Point p) const;

  double z_star() const { return z_star_; }
  double alpha() const { return alpha_; }
  const std::vector<Polyline>& rings() const { return rings_; }
  const AxisScales& scales() const { return scales_; }
  std::optional<double> max_training_distance() const { return max_training_distance_; }
  const std::vector<Point>& boundary_points() const { return boundary_raw_; }
  double spacing() const { return spacing_; }
  double total_area() const;

  TypicalRegion with_normalizer(double max_training_distance) const;

  std::string to_json() const;
  static TypicalRegion from_json(const std::string& text);

private:
  bool on_boundary(double sx, double sy) const;

  double z_star_;
  std::vector<Polyline> rings_;
  double alpha_;
  AxisScales scales_;
  std::optional<double> max_training_distance_;

  std::vector<Polyline> scaled_rings_;
  double spacing_ = 0.0;
  double boundary_eps_ = 0.0;
  // densified boundary, sorted by scaled rho
  std::vector<Point> boundary_scaled_;
  std::vector<Point> boundary_raw_;
};

/// find_level + extract_contour + filter_components.
TypicalRegion build_region(const kde::DensityGrid& grid, const RegionConfig& config,
                           const AxisScales& scales);

/// Fraction of `points` that `region` contains.
double contained_fraction(const TypicalRegion& region, std::span<const Point> points);

} // namespace flowsentry::levelset
