#include "flowsentry/kde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include <nlohmann/json.hpp>

#include "flowsentry/error.hpp"

namespace flowsentry::kde {
namespace {

using std::numbers::pi;

// Kernel terms with Mahalanobis distance^2 above this are skipped on the grid.
constexpr double kCutoffMahalanobis2 = 80.0;
constexpr std::size_t kMaxFunctionalSamples = 4000;

void require_count(std::size_t n, std::size_t floor) {
  if (n < floor)
    throw Error(ErrorKind::insufficient_data,
                "need at least " + std::to_string(floor) + " samples, have " + std::to_string(n));
}

void require_finite(std::span<const Point> samples) {
  for (const auto& p : samples)
    if (!std::isfinite(p.rho) || !std::isfinite(p.flow))
      throw Error(ErrorKind::malformed_input, "non-finite sample in KDE input");
}

// Coefficients of P_r(s), where lap^r of the unit bivariate Gaussian is
// phi(x) P_r(|x|^2).
std::vector<double> laplacian_power_poly(int r) {
  std::vector<double> q{1.0};
  for (int step = 0; step < r; ++step) {
    std::vector<double> next(q.size() + 1, 0.0);
    // 4 s q'' + (4 - 4 s) q' + (s - 2) q
    for (std::size_t k = 0; k < q.size(); ++k) {
      double c = q[k];
      if (k >= 2) next[k - 1] += 4.0 * k * (k - 1) * c;
      if (k >= 1) {
        next[k - 1] += 4.0 * k * c;
        next[k] -= 4.0 * k * c;
      }
      next[k + 1] += c;
      next[k] -= 2.0 * c;
    }
    q = std::move(next);
  }
  return q;
}

double poly_eval(const std::vector<double>& c, double s) {
  double v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * s + *it;
  return v;
}

// Normal-reference value of int p lap^r p for the standard bivariate normal.
double reference_functional(int r) {
  double f = 1.0;
  for (int k = 2; k <= r; ++k) f *= k;
  return (r % 2 == 0 ? 1.0 : -1.0) * f / (4.0 * pi);
}

// (1/M^2) sum_ij lap^r phi_g(z_i - z_j) on sphered data.
double functional_estimate(std::span<const Point> z, int r, double g) {
  auto poly = laplacian_power_poly(r);
  const double g2 = g * g;
  const double scale = 1.0 / (2.0 * pi * std::pow(g, 2.0 + 2.0 * r));
  const std::size_t m = z.size();
  double off_diag = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      double dx = z[i].rho - z[j].rho;
      double dy = z[i].flow - z[j].flow;
      double s = (dx * dx + dy * dy) / g2;
      if (s > 2.0 * kCutoffMahalanobis2) continue;
      off_diag += std::exp(-0.5 * s) * poly_eval(poly, s);
    }
  }
  double diag = static_cast<double>(m) * poly_eval(poly, 0.0);
  return scale * (diag + 2.0 * off_diag) / (static_cast<double>(m) * m);
}

double pilot_bandwidth(int r, double next_functional, std::size_t m) {
  double p0 = poly_eval(laplacian_power_poly(r), 0.0);
  return std::pow(-p0 / (pi * static_cast<double>(m) * next_functional), 1.0 / (2.0 * r + 4.0));
}

} // namespace

BandwidthMatrix sample_covariance(std::span<const Point> samples) {
  const double n = static_cast<double>(samples.size());
  double mr = 0, mf = 0;
  for (const auto& p : samples) {
    mr += p.rho;
    mf += p.flow;
  }
  mr /= n;
  mf /= n;
  double srr = 0, srf = 0, sff = 0;
  for (const auto& p : samples) {
    double a = p.rho - mr, b = p.flow - mf;
    srr += a * a;
    srf += a * b;
    sff += b * b;
  }
  return {srr / (n - 1), srf / (n - 1), sff / (n - 1)};
}

BandwidthMatrix select_bandwidth(std::span<const Point> samples, BandwidthMethod method,
                                 std::size_t min_samples) {
  require_count(samples.size(), std::max<std::size_t>(min_samples, 2));
  require_finite(samples);
  const BandwidthMatrix cov = sample_covariance(samples);
  // relative singularity test: det / (var_r var_f) is 1 - correlation^2
  if (!(cov.rho_rho > 0.0 && cov.flow_flow > 0.0) ||
      cov.determinant() <= 1e-12 * cov.rho_rho * cov.flow_flow)
    throw Error(ErrorKind::degenerate_data, "sample covariance is singular");

  const double n = static_cast<double>(samples.size());
  if (method == BandwidthMethod::normal_reference) return cov.scaled(std::pow(n, -1.0 / 3.0));

  // Sphere with the Cholesky factor of S: z = L^-1 (x - mean).
  const double l11 = std::sqrt(cov.rho_rho);
  const double l21 = cov.rho_flow / l11;
  const double l22 = std::sqrt(cov.flow_flow - l21 * l21);
  double mr = 0, mf = 0;
  for (const auto& p : samples) {
    mr += p.rho;
    mf += p.flow;
  }
  mr /= n;
  mf /= n;
  const std::size_t stride = (samples.size() + kMaxFunctionalSamples - 1) / kMaxFunctionalSamples;
  std::vector<Point> z;
  for (std::size_t i = 0; i < samples.size(); i += stride) {
    double a = (samples[i].rho - mr) / l11;
    double b = ((samples[i].flow - mf) - l21 * a) / l22;
    z.push_back({a, b});
  }
  const std::size_t m = z.size();

  double psi6 = functional_estimate(z, 3, pilot_bandwidth(3, reference_functional(4), m));
  if (!(psi6 < 0.0)) psi6 = reference_functional(3);
  double psi4 = functional_estimate(z, 2, pilot_bandwidth(2, psi6, m));
  if (!(psi4 > 0.0)) psi4 = reference_functional(2);

  const double h2 = std::pow(1.0 / (2.0 * pi * n * psi4), 1.0 / 3.0);
  return cov.scaled(h2);
}

double univariate_normal_reference(std::span<const double> samples) {
  require_count(samples.size(), 2);
  const double n = static_cast<double>(samples.size());
  double mean = 0;
  for (double v : samples) mean += v;
  mean /= n;
  double ss = 0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double s = std::sqrt(ss / (n - 1));
  if (!(s > 0.0)) throw Error(ErrorKind::degenerate_data, "zero sample variance");
  return std::pow(4.0 / 3.0, 0.2) * s * std::pow(n, -0.2);
}

DensityModel DensityModel::fit(std::vector<Point> samples, const BandwidthMatrix& bandwidth,
                               FitOptions options) {
  require_count(samples.size(), std::max<std::size_t>(options.min_samples, 1));
  require_finite(samples);
  if (!bandwidth.positive_definite())
    throw Error(ErrorKind::invalid_argument, "bandwidth matrix is not positive definite");

  DensityModel m;
  m.samples_ = std::move(samples);
  m.bandwidth_ = bandwidth;
  const double det = bandwidth.determinant();
  m.inv_rr_ = bandwidth.flow_flow / det;
  m.inv_rf_ = -bandwidth.rho_flow / det;
  m.inv_ff_ = bandwidth.rho_rho / det;
  m.norm_ = 1.0 / (2.0 * pi * std::sqrt(det) * static_cast<double>(m.samples_.size()));
  return m;
}

double DensityModel::evaluate(Point x) const {
  double sum = 0.0;
  for (const auto& s : samples_) {
    double dx = x.rho - s.rho, dy = x.flow - s.flow;
    sum += std::exp(-0.5 * (inv_rr_ * dx * dx + 2.0 * inv_rf_ * dx * dy + inv_ff_ * dy * dy));
  }
  return norm_ * sum;
}

DensityGrid::DensityGrid(GridBounds bounds, GridResolution resolution, std::vector<double> values)
    : bounds_(bounds), resolution_(resolution), values_(std::move(values)) {
  if (!(bounds_.rho_min < bounds_.rho_max) || !(bounds_.flow_min < bounds_.flow_max))
    throw Error(ErrorKind::invalid_argument, "grid bounds are inverted or empty");
  if (resolution_.n_rho < 2 || resolution_.n_flow < 2)
    throw Error(ErrorKind::invalid_argument, "grid needs at least 2 cells per axis");
  if (values_.size() != resolution_.n_rho * resolution_.n_flow)
    throw Error(ErrorKind::invalid_argument, "grid value count does not match resolution");
}

double DensityGrid::max_value() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

double DensityGrid::integral() const {
  const std::size_t nr = resolution_.n_rho, nf = resolution_.n_flow;
  double sum = 0.0;
  for (std::size_t k = 0; k < nf; ++k) {
    double wk = (k == 0 || k + 1 == nf) ? 0.5 : 1.0;
    for (std::size_t j = 0; j < nr; ++j) {
      double wj = (j == 0 || j + 1 == nr) ? 0.5 : 1.0;
      sum += wk * wj * values_[k * nr + j];
    }
  }
  return sum * cell_width_rho() * cell_width_flow();
}

std::string DensityGrid::to_json() const {
  nlohmann::json j;
  j["bounds"] = {{"rho_min", bounds_.rho_min},
                 {"rho_max", bounds_.rho_max},
                 {"flow_min", bounds_.flow_min},
                 {"flow_max", bounds_.flow_max}};
  j["resolution"] = {{"n_rho", resolution_.n_rho}, {"n_flow", resolution_.n_flow}};
  j["layout"] = "row-major, flow rows";
  j["values"] = values_;
  return j.dump();
}

DensityGrid DensityGrid::from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    GridBounds b{j.at("bounds").at("rho_min").get<double>(), j.at("bounds").at("rho_max").get<double>(),
                 j.at("bounds").at("flow_min").get<double>(),
                 j.at("bounds").at("flow_max").get<double>()};
    GridResolution r{j.at("resolution").at("n_rho").get<std::size_t>(),
                     j.at("resolution").at("n_flow").get<std::size_t>()};
    return DensityGrid(b, r, j.at("values").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_input, std::string("bad grid JSON: ") + e.what());
  }
}

GridBounds default_bounds(const DensityModel& model, double pad_sd) {
  const auto& s = model.samples();
  auto [rmin, rmax] = std::minmax_element(s.begin(), s.end(),
                                          [](const Point& a, const Point& b) { return a.rho < b.rho; });
  auto [fmin, fmax] = std::minmax_element(
      s.begin(), s.end(), [](const Point& a, const Point& b) { return a.flow < b.flow; });
  const double pr = pad_sd * std::sqrt(model.bandwidth().rho_rho);
  const double pf = pad_sd * std::sqrt(model.bandwidth().flow_flow);
  return {rmin->rho - pr, rmax->rho + pr, fmin->flow - pf, fmax->flow + pf};
}

DensityGrid evaluate_grid(const DensityModel& model, const GridBounds& bounds,
                          GridResolution resolution, std::vector<std::string>* warnings) {
  if (!(bounds.rho_min < bounds.rho_max) || !(bounds.flow_min < bounds.flow_max))
    throw Error(ErrorKind::invalid_argument, "grid bounds are inverted or empty");
  if (resolution.n_rho < kMinGridResolution || resolution.n_flow < kMinGridResolution)
    throw Error(ErrorKind::invalid_argument, "grid resolution must be at least 128 x 128");

  if (warnings) {
    std::size_t outside = 0;
    for (const auto& p : model.samples())
      if (p.rho < bounds.rho_min || p.rho > bounds.rho_max || p.flow < bounds.flow_min ||
          p.flow > bounds.flow_max)
        ++outside;
    if (outside > 0)
      warnings->push_back(std::to_string(outside) + " samples lie outside the grid bounds");
  }

  const std::size_t nr = resolution.n_rho, nf = resolution.n_flow;
  const double hx = (bounds.rho_max - bounds.rho_min) / nr;
  const double hy = (bounds.flow_max - bounds.flow_min) / nf;
  const double x0 = bounds.rho_min + 0.5 * hx;
  const double y0 = bounds.flow_min + 0.5 * hy;
  const double a = model.inv_rho_rho(), b = model.inv_rho_flow();
  const double sigma_ff = model.bandwidth().flow_flow;
  const double row_reach = std::sqrt(kCutoffMahalanobis2 * sigma_ff);
  const double norm = model.normalizer();
  const double step_ratio = std::exp(-a * hx * hx);

  std::vector<double> values(nr * nf, 0.0);

  // Each worker owns a band of flow rows and walks every sample in order,
  // so the per-cell summation order does not depend on the thread count.
  auto fill_rows = [&](std::size_t row_begin, std::size_t row_end) {
    for (const auto& s : model.samples()) {
      double klo = std::ceil((s.flow - row_reach - y0) / hy);
      double khi = std::floor((s.flow + row_reach - y0) / hy);
      auto k_first = static_cast<long long>(std::max(klo, static_cast<double>(row_begin)));
      auto k_last = static_cast<long long>(std::min(khi, static_cast<double>(row_end) - 1.0));
      for (long long k = k_first; k <= k_last; ++k) {
        const double dy = y0 + k * hy - s.flow;
        const double rest = kCutoffMahalanobis2 - dy * dy / sigma_ff;
        if (rest <= 0.0) continue;
        const double centre = s.rho - b * dy / a;
        const double half = std::sqrt(rest / a);
        double jlo = std::max(std::ceil((centre - half - x0) / hx), 0.0);
        double jhi = std::min(std::floor((centre + half - x0) / hx), static_cast<double>(nr) - 1.0);
        if (jlo > jhi) continue;
        auto j = static_cast<std::size_t>(jlo);
        const auto j_last = static_cast<std::size_t>(jhi);
        // exponent is -0.5 a u^2 - 0.5 dy^2 / sigma_ff with u = x - centre
        double u = x0 + j * hx - centre;
        double val = std::exp(-0.5 * (a * u * u + dy * dy / sigma_ff));
        double ratio = std::exp(-0.5 * a * (2.0 * u * hx + hx * hx));
        double* row = values.data() + static_cast<std::size_t>(k) * nr;
        for (; j <= j_last; ++j) {
          row[j] += val;
          val *= ratio;
          ratio *= step_ratio;
        }
      }
    }
  };

  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(nf / 32, 1));
  if (workers <= 1) {
    fill_rows(0, nf);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(fill_rows, nf * w / workers, nf * (w + 1) / workers);
  }
  for (double& v : values) v *= norm;
  return DensityGrid(bounds, resolution, std::move(values));
}

} // namespace flowsentry::kde
