#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace flowsentry::plot {

namespace {

constexpr double kWidth = 800, kHeight = 500, kMargin = 60;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Axis {
  double lo, hi, px_lo, px_hi;
  double operator()(double v) const {
    const double span = hi > lo ? hi - lo : 1.0;
    return px_lo + (v - lo) / span * (px_hi - px_lo);
  }
};

Axis padded(double lo, double hi, double px_lo, double px_hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.03 * (hi - lo);
  return {lo - pad, hi + pad, px_lo, px_hi};
}

void header(std::ostringstream& s, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << xlabel << "</text>\n";
  s << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
    << kHeight / 2 << ")\">" << ylabel << "</text>\n";
  s << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin << "\" height=\""
    << kHeight - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
}

void ticks(std::ostringstream& s, const Axis& x, const Axis& y) {
  for (int k = 0; k <= 4; ++k) {
    const double xv = x.lo + (x.hi - x.lo) * k / 4.0;
    const double yv = y.lo + (y.hi - y.lo) * k / 4.0;
    s << "<text x=\"" << num(x(xv)) << "\" y=\"" << kHeight - kMargin + 16
      << "\" text-anchor=\"middle\" font-size=\"10\">" << num(xv) << "</text>\n";
    s << "<text x=\"" << kMargin - 6 << "\" y=\"" << num(y(yv)) << "\" text-anchor=\"end\" font-size=\"10\">"
      << num(yv) << "</text>\n";
  }
}

} // namespace

std::string scatter_svg(std::span<const Point> points, const levelset::TypicalRegion* region,
                        std::size_t max_points) {
  double rlo = 0, rhi = 1, flo = 0, fhi = 1;
  bool first = true;
  auto grow = [&](const Point& p) {
    if (first) {
      rlo = rhi = p.rho;
      flo = fhi = p.flow;
      first = false;
    }
    rlo = std::min(rlo, p.rho);
    rhi = std::max(rhi, p.rho);
    flo = std::min(flo, p.flow);
    fhi = std::max(fhi, p.flow);
  };
  for (const auto& p : points) grow(p);
  if (region)
    for (const auto& ring : region->rings())
      for (const auto& p : ring) grow(p);
  const Axis x = padded(rlo, rhi, kMargin, kWidth - kMargin);
  const Axis y = padded(flo, fhi, kHeight - kMargin, kMargin);

  std::ostringstream s;
  header(s, "Density-flow", "density (veh/km)", "flow (veh/h)");
  ticks(s, x, y);
  const std::size_t stride = std::max<std::size_t>(1, (points.size() + max_points - 1) / std::max<std::size_t>(max_points, 1));
  s << "<g class=\"samples\" fill=\"steelblue\" fill-opacity=\"0.3\">\n";
  for (std::size_t i = 0; i < points.size(); i += stride)
    s << "<circle cx=\"" << num(x(points[i].rho)) << "\" cy=\"" << num(y(points[i].flow)) << "\" r=\"1.2\"/>\n";
  s << "</g>\n";
  if (region) {
    for (const auto& ring : region->rings()) {
      s << "<path class=\"region\" fill=\"none\" stroke=\"crimson\" stroke-width=\"1.5\" d=\"";
      for (std::size_t i = 0; i < ring.size(); ++i)
        s << (i == 0 ? "M" : " L") << num(x(ring[i].rho)) << ',' << num(y(ring[i].flow));
      s << " Z\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string travel_time_svg(std::span<const ingest::TrafficSample> samples, std::span<const FlagInterval> flags) {
  std::vector<std::pair<double, double>> pts; // minutes since first sample, seconds
  const Minute t0 = samples.empty() ? Minute{} : samples.front().timestamp;
  double tmax = 1, ylo = 0, yhi = 1;
  bool first = true;
  for (const auto& smp : samples) {
    if (!smp.travel_time_s) continue;
    const double t = static_cast<double>(minutes_between(t0, smp.timestamp));
    pts.emplace_back(t, *smp.travel_time_s);
    if (first) {
      ylo = yhi = *smp.travel_time_s;
      first = false;
    }
    ylo = std::min(ylo, *smp.travel_time_s);
    yhi = std::max(yhi, *smp.travel_time_s);
  }
  if (!samples.empty()) tmax = std::max(1.0, static_cast<double>(minutes_between(t0, samples.back().timestamp)));
  const Axis x = padded(0, tmax, kMargin, kWidth - kMargin);
  const Axis y = padded(ylo, yhi, kHeight - kMargin, kMargin);

  std::ostringstream s;
  header(s, "Travel time", "minutes since " + (samples.empty() ? std::string("start") : format_timestamp(t0)),
         "travel time (s)");
  ticks(s, x, y);
  for (const auto& f : flags) {
    const double a = x(static_cast<double>(minutes_between(t0, f.start)));
    const double b = x(static_cast<double>(minutes_between(t0, f.end) + 1));
    s << "<rect class=\"flag-marker\" x=\"" << num(a) << "\" y=\"" << kMargin << "\" width=\""
      << num(std::max(b - a, 1.0)) << "\" height=\"" << kHeight - 2 * kMargin
      << "\" fill=\"orange\" fill-opacity=\"0.4\"/>\n";
  }
  s << "<polyline class=\"series\" fill=\"none\" stroke=\"black\" stroke-width=\"0.6\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i)
    s << (i ? " " : "") << num(x(pts[i].first)) << ',' << num(y(pts[i].second));
  s << "\"/>\n</svg>\n";
  return s.str();
}

Histogram duration_histogram(std::span<const long long> durations, std::size_t bins) {
  Histogram h;
  bins = std::max<std::size_t>(bins, 1);
  if (durations.empty()) {
    h.counts.assign(bins, 0);
    return h;
  }
  const auto [mn, mx] = std::minmax_element(durations.begin(), durations.end());
  h.lo = static_cast<double>(*mn);
  h.width = std::max(1.0, static_cast<double>(*mx - *mn + 1) / static_cast<double>(bins));
  h.counts.assign(bins, 0);
  for (long long d : durations) {
    auto k = static_cast<std::size_t>((static_cast<double>(d) - h.lo) / h.width);
    h.counts[std::min(k, bins - 1)]++;
  }
  return h;
}

std::string histogram_svg(const Histogram& h, const std::string& title) {
  std::size_t cmax = 1;
  for (auto c : h.counts) cmax = std::max(cmax, c);
  const double n = static_cast<double>(h.counts.size());
  const Axis x{h.lo, h.lo + h.width * n, kMargin, kWidth - kMargin};
  const Axis y{0, static_cast<double>(cmax) * 1.05, kHeight - kMargin, kMargin};
  std::ostringstream s;
  header(s, title, "excursion duration (min)", "count");
  ticks(s, x, y);
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const double a = x(h.lo + h.width * static_cast<double>(k));
    const double b = x(h.lo + h.width * static_cast<double>(k + 1));
    const double top = y(static_cast<double>(h.counts[k]));
    s << "<rect class=\"bar\" data-count=\"" << h.counts[k] << "\" x=\"" << num(a) << "\" y=\"" << num(top)
      << "\" width=\"" << num(b - a) << "\" height=\"" << num(y(0) - top)
      << "\" fill=\"slategray\" stroke=\"white\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

} // namespace flowsentry::plot
