#include "flowsentry/stats.hpp"

#include <algorithm>
#include <cmath>

#include "flowsentry/error.hpp"

namespace flowsentry::stats {

double mean(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorKind::insufficient_data, "mean of empty set");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_dev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorKind::insufficient_data, "quantile of empty set");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::span<const double> v, double p) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, p);
}

double median(std::span<const double> v) { return quantile(v, 0.5); }

double iqr(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
}

double mad(std::span<const double> v) {
  const double m = median(v);
  std::vector<double> dev;
  dev.reserve(v.size());
  for (double x : v) dev.push_back(std::abs(x - m));
  return median(dev);
}

} // namespace flowsentry::stats
