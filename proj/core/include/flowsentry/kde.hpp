#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flowsentry/geometry.hpp"

namespace flowsentry::kde {

/// Symmetric 2x2 bandwidth matrix in (density, flow) units:
/// [[rho_rho, rho_flow], [rho_flow, flow_flow]].
struct BandwidthMatrix {
  double rho_rho = 0.0;
  double rho_flow = 0.0;
  double flow_flow = 0.0;

  double determinant() const { return rho_rho * flow_flow - rho_flow * rho_flow; }
  bool positive_definite() const { return rho_rho > 0.0 && determinant() > 0.0; }
  BandwidthMatrix scaled(double t) const { return {rho_rho * t, rho_flow * t, flow_flow * t}; }
};

enum class BandwidthMethod { normal_reference, plug_in };

inline constexpr std::size_t kDefaultMinSamples = 50;

/// Sample covariance (n - 1 denominator).
BandwidthMatrix sample_covariance(std::span<const Point> samples);

/// AMISE-optimal bandwidth under a Gaussian reference or a two-stage plug-in.
///
/// normal_reference: N^(-1/3) * S, the bivariate Gaussian-reference
/// minimiser with S the sample covariance.
///
/// plug_in: the data are sphered with S, the Laplacian functional
/// psi_4 = int (lap p)^2 is estimated with a pilot kernel whose bandwidth
/// comes from a kernel estimate of psi_6, itself piloted by the normal
/// reference value of psi_8. The result is h^2 * S with
/// h^6 = 1 / (2 pi N psi_4). Functional estimates use at most 4000 evenly
/// strided samples.
///
/// Throws insufficient_data below `min_samples`, degenerate_data when S is
/// singular.
BandwidthMatrix select_bandwidth(std::span<const Point> samples,
                                 BandwidthMethod method = BandwidthMethod::normal_reference,
                                 std::size_t min_samples = kDefaultMinSamples);

/// One-dimensional Gaussian-reference rule (4/3)^(1/5) s N^(-1/5), with s
/// the sample standard deviation.
double univariate_normal_reference(std::span<const double> samples);

struct FitOptions {
  std::size_t min_samples = kDefaultMinSamples;
};

/// Fitted Gaussian KDE. Immutable; all queries are thread-safe.
class DensityModel {
public:
  static DensityModel fit(std::vector<Point> samples, const BandwidthMatrix& bandwidth,
                          FitOptions options = {});

  /// (1/N) sum_i k_H(x - X_i), exact over all samples.
  double evaluate(Point x) const;

  const std::vector<Point>& samples() const { return samples_; }
  const BandwidthMatrix& bandwidth() const { return bandwidth_; }
  std::size_t size() const { return samples_.size(); }

  /// Entries of H^-1.
  double inv_rho_rho() const { return inv_rr_; }
  double inv_rho_flow() const { return inv_rf_; }
  double inv_flow_flow() const { return inv_ff_; }
  /// 1 / (2 pi sqrt(det H) N).
  double normalizer() const { return norm_; }

private:
  DensityModel() = default;

  std::vector<Point> samples_;
  BandwidthMatrix bandwidth_;
  double inv_rr_ = 0, inv_rf_ = 0, inv_ff_ = 0, norm_ = 0;
};

struct GridBounds {
  double rho_min = 0.0;
  double rho_max = 0.0;
  double flow_min = 0.0;
  double flow_max = 0.0;
};

struct GridResolution {
  std::size_t n_rho = 512;
  std::size_t n_flow = 512;
};

inline constexpr std::size_t kMinGridResolution = 128;

/// Density values at cell centres over a rectangular domain. Values are
/// stored row-major with flow as the row index: value(i_rho, i_flow) is
/// values()[i_flow * n_rho + i_rho].
class DensityGrid {
public:
  DensityGrid(GridBounds bounds, GridResolution resolution, std::vector<double> values);

  const GridBounds& bounds() const { return bounds_; }
  const GridResolution& resolution() const { return resolution_; }
  const std::vector<double>& values() const { return values_; }

  double value(std::size_t i_rho, std::size_t i_flow) const {
    return values_[i_flow * resolution_.n_rho + i_rho];
  }
  double cell_width_rho() const { return (bounds_.rho_max - bounds_.rho_min) / resolution_.n_rho; }
  double cell_width_flow() const {
    return (bounds_.flow_max - bounds_.flow_min) / resolution_.n_flow;
  }
  double rho_at(std::size_t i_rho) const { return bounds_.rho_min + (i_rho + 0.5) * cell_width_rho(); }
  double flow_at(std::size_t i_flow) const {
    return bounds_.flow_min + (i_flow + 0.5) * cell_width_flow();
  }
  double max_value() const;

  /// Trapezoidal rule over the lattice of cell centres.
  double integral() const;

  std::string to_json() const;
  static DensityGrid from_json(const std::string& text);

private:
  GridBounds bounds_;
  GridResolution resolution_;
  std::vector<double> values_;
};

/// Sample hull padded by `pad_sd` marginal bandwidth standard deviations.
GridBounds default_bounds(const DensityModel& model, double pad_sd = 3.0);

/// Evaluates the model at every cell centre. Throws on inverted bounds or a
/// resolution below 128 per axis; appends a warning when samples fall
/// outside the bounds. Kernel terms below exp(-40) of their peak are not
/// accumulated.
DensityGrid evaluate_grid(const DensityModel& model, const GridBounds& bounds,
                          GridResolution resolution = {},
                          std::vector<std::string>* warnings = nullptr);

} // namespace flowsentry::kde
