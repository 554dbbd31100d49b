#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "flowsentry/error.hpp"
#include "flowsentry/kde.hpp"

using namespace flowsentry;
using namespace flowsentry::kde;
using std::numbers::pi;

namespace {

std::vector<Point> gaussian_cloud(std::size_t n, std::uint64_t seed, double sx = 1, double sy = 1, double rho = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Point> v(n);
  for (auto& p : v) {
    const double a = g(rng), b = g(rng);
    p = {sx * a, sy * (rho * a + std::sqrt(1 - rho * rho) * b)};
  }
  return v;
}

BandwidthMatrix identity() { return {1.0, 0.0, 1.0}; }

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::io;
}

// Golden-section minimiser.
template <class F>
double argmin(F f, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1) / 2;
  double a = lo, b = hi, c = b - r * (b - a), d = a + r * (b - a);
  for (int i = 0; i < 200; ++i) {
    if (f(c) < f(d)) b = d;
    else a = c;
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  return (a + b) / 2;
}

} // namespace

TEST_CASE("univariate reference rule minimises the Gaussian AMISE") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(3.0, 2.5);
  std::vector<double> x(500);
  for (auto& v : x) v = g(rng);
  double m = 0, ss = 0;
  for (double v : x) m += v;
  m /= x.size();
  for (double v : x) ss += (v - m) * (v - m);
  const double s = std::sqrt(ss / (x.size() - 1));
  const double n = static_cast<double>(x.size());
  const double Rk = 1.0 / (2.0 * std::sqrt(pi));
  const double Rf2 = 3.0 / (8.0 * std::sqrt(pi) * std::pow(s, 5));
  auto amise = [&](double h) { return Rk / (n * h) + std::pow(h, 4) * Rf2 / 4.0; };
  const double oracle = argmin(amise, 1e-3, 10.0);
  CHECK(univariate_normal_reference(x) == doctest::Approx(oracle).epsilon(1e-7));
}

TEST_CASE("normal reference bandwidth") {
  const auto pts = gaussian_cloud(1000, 3, 2.0, 5.0, 0.4);
  const auto S = sample_covariance(pts);
  const auto H = select_bandwidth(pts);
  const double f = std::pow(1000.0, -1.0 / 3.0);
  CHECK(H.rho_rho == doctest::Approx(f * S.rho_rho));
  CHECK(H.rho_flow == doctest::Approx(f * S.rho_flow));
  CHECK(H.flow_flow == doctest::Approx(f * S.flow_flow));
  CHECK(H.positive_definite());
}

TEST_CASE("plug-in bandwidth is close to the reference rule on Gaussian data") {
  // For Gaussian data the plug-in target coincides with N^(-1/3) S.
  const auto pts = gaussian_cloud(4000, 5, 1.5, 300.0, -0.6);
  const auto ref = select_bandwidth(pts, BandwidthMethod::normal_reference);
  const auto pi_h = select_bandwidth(pts, BandwidthMethod::plug_in);
  CHECK(pi_h.positive_definite());
  CHECK(pi_h.rho_rho / ref.rho_rho == doctest::Approx(1.0).epsilon(0.25));
  CHECK(pi_h.flow_flow / ref.flow_flow == doctest::Approx(1.0).epsilon(0.25));
  // plug-in is a scalar multiple of S
  CHECK(pi_h.rho_flow / pi_h.rho_rho == doctest::Approx(ref.rho_flow / ref.rho_rho).epsilon(1e-9));
}

TEST_CASE("plug-in narrows for a bimodal sample") {
  auto a = gaussian_cloud(1500, 8);
  auto b = gaussian_cloud(1500, 9);
  for (auto& p : b) p.rho += 6.0;
  a.insert(a.end(), b.begin(), b.end());
  const auto ref = select_bandwidth(a, BandwidthMethod::normal_reference);
  const auto pi_h = select_bandwidth(a, BandwidthMethod::plug_in);
  CHECK(pi_h.rho_rho < ref.rho_rho);
}

TEST_CASE("bandwidth errors") {
  const std::vector<Point> same(100, Point{1.0, 2.0});
  CHECK(kind_of([&] { select_bandwidth(same); }) == ErrorKind::degenerate_data);
  std::vector<Point> line;
  for (int i = 0; i < 100; ++i) line.push_back({double(i), 2.0 * i});
  CHECK(kind_of([&] { select_bandwidth(line); }) == ErrorKind::degenerate_data);
  CHECK(kind_of([&] { select_bandwidth(gaussian_cloud(10, 1)); }) == ErrorKind::insufficient_data);
  CHECK(kind_of([&] { select_bandwidth(gaussian_cloud(10, 1), BandwidthMethod::plug_in); }) ==
        ErrorKind::insufficient_data);
}

TEST_CASE("fit") {
  const auto m = DensityModel::fit(gaussian_cloud(100, 1), identity());
  CHECK(m.size() == 100);
  CHECK(m.inv_rho_rho() == doctest::Approx(1.0));
  CHECK(m.normalizer() == doctest::Approx(1.0 / (2 * pi * 100)));
  CHECK_THROWS_AS(DensityModel::fit(gaussian_cloud(100, 1), BandwidthMatrix{1.0, 2.0, 1.0}), Error);
  CHECK(kind_of([] { DensityModel::fit({}, identity()); }) == ErrorKind::insufficient_data);
  CHECK(DensityModel::fit({{0, 0}}, identity(), FitOptions{1}).size() == 1);
}

TEST_CASE("evaluate by hand") {
  const auto one = DensityModel::fit({{0, 0}}, identity(), FitOptions{1});
  CHECK(one.evaluate({0, 0}) == doctest::Approx(1.0 / (2 * pi)).epsilon(1e-14));
  const auto two = DensityModel::fit({{0, 0}, {2, 0}}, identity(), FitOptions{1});
  CHECK(two.evaluate({1, 0}) == doctest::Approx(std::exp(-0.5) / (2 * pi)).epsilon(1e-14));
  CHECK(two.evaluate({1, 0}) == doctest::Approx(0.096532).epsilon(1e-5));
  // correlated kernel against a direct Gaussian density
  const BandwidthMatrix H{2.0, 0.6, 0.5};
  const auto c = DensityModel::fit({{1, -1}}, H, FitOptions{1});
  const double det = H.determinant();
  const double dx = 0.3 - 1, dy = 0.2 + 1;
  const double q = (H.flow_flow * dx * dx - 2 * H.rho_flow * dx * dy + H.rho_rho * dy * dy) / det;
  CHECK(c.evaluate({0.3, 0.2}) == doctest::Approx(std::exp(-q / 2) / (2 * pi * std::sqrt(det))).epsilon(1e-13));
}

TEST_CASE("symmetry and translation") {
  auto pts = gaussian_cloud(200, 21, 1.0, 3.0, 0.3);
  const auto n = pts.size();
  for (std::size_t i = 0; i < n; ++i) pts.push_back({-pts[i].rho, -pts[i].flow});
  const auto H = select_bandwidth(pts);
  const auto m = DensityModel::fit(pts, H);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int k = 0; k < 50; ++k) {
    const Point x{u(rng), 3 * u(rng)};
    const double a = m.evaluate(x), b = m.evaluate({-x.rho, -x.flow});
    CHECK(std::abs(a - b) <= 1e-12 * std::max(a, 1e-300) + 1e-300);
  }
  auto shifted = pts;
  for (auto& p : shifted) p = {p.rho + 17.5, p.flow - 1234.0};
  const auto ms = DensityModel::fit(shifted, H);
  for (int k = 0; k < 50; ++k) {
    const Point x{u(rng), 3 * u(rng)};
    const double a = m.evaluate(x), b = ms.evaluate({x.rho + 17.5, x.flow - 1234.0});
    CHECK(std::abs(a - b) <= 1e-9 * a);
  }
}

TEST_CASE("grid normalisation on a standard normal sample") {
  const auto m = DensityModel::fit(gaussian_cloud(10000, 17), select_bandwidth(gaussian_cloud(10000, 17)));
  const auto g = evaluate_grid(m, default_bounds(m));
  CHECK(g.integral() == doctest::Approx(1.0).epsilon(0.01));
  CHECK(*std::min_element(g.values().begin(), g.values().end()) >= 0.0);
}

TEST_CASE("grid agrees with exact evaluation") {
  const auto pts = gaussian_cloud(3000, 23, 4.0, 900.0, 0.5);
  const auto m = DensityModel::fit(pts, select_bandwidth(pts));
  const auto g = evaluate_grid(m, default_bounds(m), {128, 160});
  const double peak = g.max_value();
  for (std::size_t i = 0; i < 128; i += 7)
    for (std::size_t j = 0; j < 160; j += 11)
      CHECK(std::abs(g.value(i, j) - m.evaluate({g.rho_at(i), g.flow_at(j)})) <= 1e-12 * peak);
}

TEST_CASE("grid refinement") {
  const auto pts = gaussian_cloud(2000, 29);
  const auto m = DensityModel::fit(pts, select_bandwidth(pts));
  const auto b = default_bounds(m);
  const auto coarse = evaluate_grid(m, b, {128, 128});
  const auto fine = evaluate_grid(m, b, {256, 256});
  double worst = 0;
  for (std::size_t j = 0; j < 128; ++j)
    for (std::size_t i = 0; i < 128; ++i) {
      const double avg = (fine.value(2 * i, 2 * j) + fine.value(2 * i + 1, 2 * j) + fine.value(2 * i, 2 * j + 1) +
                          fine.value(2 * i + 1, 2 * j + 1)) / 4;
      worst = std::max(worst, std::abs(avg - coarse.value(i, j)));
    }
  CHECK(worst < 0.01 * coarse.max_value());
}

TEST_CASE("peak falls as the bandwidth grows") {
  const auto pts = gaussian_cloud(800, 31);
  const auto H = select_bandwidth(pts);
  double last = INFINITY;
  for (double t : {1.0, 1.5, 2.0, 4.0}) {
    const auto m = DensityModel::fit(pts, H.scaled(t));
    const auto g = evaluate_grid(m, {-6, 6, -6, 6}, {128, 128});
    CHECK(g.max_value() < last);
    last = g.max_value();
  }
}

TEST_CASE("grid errors and warnings") {
  const auto pts = gaussian_cloud(200, 37);
  const auto m = DensityModel::fit(pts, select_bandwidth(pts));
  CHECK(kind_of([&] { evaluate_grid(m, {1, -1, -1, 1}); }) == ErrorKind::invalid_argument);
  CHECK(kind_of([&] { evaluate_grid(m, {-1, 1, -1, 1}, {64, 512}); }) == ErrorKind::invalid_argument);
  std::vector<std::string> warnings;
  evaluate_grid(m, {-0.5, 0.5, -0.5, 0.5}, {128, 128}, &warnings);
  CHECK(warnings.size() == 1);
}

TEST_CASE("grid is deterministic and round-trips through JSON") {
  const auto pts = gaussian_cloud(500, 41, 2.0, 50.0, 0.2);
  const auto m = DensityModel::fit(pts, select_bandwidth(pts));
  const auto a = evaluate_grid(m, default_bounds(m), {128, 128});
  const auto b = evaluate_grid(m, default_bounds(m), {128, 128});
  CHECK(a.values() == b.values());
  const auto c = DensityGrid::from_json(a.to_json());
  CHECK(c.values() == a.values());
  CHECK(c.bounds().rho_min == a.bounds().rho_min);
  CHECK(c.bounds().flow_max == a.bounds().flow_max);
  CHECK(c.resolution().n_flow == 128);
  CHECK_THROWS_AS(DensityGrid::from_json("{\"bounds\": 3}"), Error);
}
