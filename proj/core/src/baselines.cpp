#include "flowsentry/baselines.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "flowsentry/error.hpp"
#include "flowsentry/stats.hpp"

namespace flowsentry::baselines {

int weekly_bin(Minute t, std::chrono::minutes tz_offset) {
  using namespace std::chrono;
  const Minute local = t + tz_offset;
  const auto day = floor<days>(local);
  const long long minute_of_day = (local - day).count();
  // 1970-01-01 was a Thursday
  const long long weekday = ((day.time_since_epoch().count() + 3) % 7 + 7) % 7;
  return static_cast<int>(weekday * (24 * 60 / kBinMinutes) + minute_of_day / kBinMinutes);
}

SndBinStats bin_statistics(std::span<const double> speeds, std::size_t min_count) {
  SndBinStats s;
  s.count = speeds.size();
  if (speeds.empty() || speeds.size() < min_count) return s;
  std::vector<double> sorted(speeds.begin(), speeds.end());
  std::sort(sorted.begin(), sorted.end());
  s.mean = stats::mean(sorted);
  s.sd = stats::std_dev(sorted);
  s.median = stats::quantile_sorted(sorted, 0.5);
  s.iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
  s.mad = stats::mad(sorted);
  s.usable = true;
  return s;
}

SndProfile snd_fit(std::span<const ingest::TrafficSample> training, std::chrono::minutes tz_offset,
                   std::size_t min_count) {
  if (training.empty()) throw Error(ErrorKind::insufficient_data, "no training data for SND profile");
  const auto [first, last] = std::minmax_element(
      training.begin(), training.end(),
      [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  if (minutes_between(first->timestamp, last->timestamp) + 1 < 7 * 24 * 60)
    throw Error(ErrorKind::insufficient_data, "SND profile needs at least one week of training data");

  std::array<std::vector<double>, kWeeklyBins> speeds;
  for (const auto& s : training)
    if (s.speed_kmh) speeds[weekly_bin(s.timestamp, tz_offset)].push_back(*s.speed_kmh);
  SndProfile profile;
  profile.tz_offset = tz_offset;
  for (int b = 0; b < kWeeklyBins; ++b) profile.bins[b] = bin_statistics(speeds[b], min_count);
  return profile;
}

std::optional<double> snd_threshold(const SndProfile& profile, int bin, double c, SndVariant variant) {
  if (!(c >= 0.0)) throw Error(ErrorKind::invalid_argument, "SND multiplier c must be nonnegative");
  if (bin < 0 || bin >= kWeeklyBins) throw Error(ErrorKind::invalid_argument, "weekly bin out of range");
  const auto& s = profile.bins[bin];
  if (!s.usable) return std::nullopt;
  double t = 0.0;
  switch (variant) {
  case SndVariant::mean_sd: t = s.mean - c * s.sd; break;
  case SndVariant::median_iqr: t = s.median - c * s.iqr; break;
  case SndVariant::median_mad: t = s.median - c * s.mad; break;
  }
  return std::min(profile.speed_cap_kmh, t);
}

std::vector<FlagInterval> persistent_alarms(std::span<const Minute> times, std::span<const char> low,
                                            int persistence) {
  std::vector<FlagInterval> out;
  std::size_t run_start = 0, run_len = 0;
  auto flush = [&](std::size_t end_index) {
    if (run_len >= static_cast<std::size_t>(persistence))
      out.push_back({times[run_start], times[end_index]});
    run_len = 0;
  };
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (run_len > 0 && minutes_between(times[i - 1], times[i]) != 1) flush(i - 1);
    if (low[i]) {
      if (run_len == 0) run_start = i;
      ++run_len;
    } else if (run_len > 0) {
      flush(i - 1);
    }
  }
  if (run_len > 0) flush(times.size() - 1);
  return out;
}

AlarmResult snd_detect(std::span<const ingest::TrafficSample> stream, const SndProfile& profile,
                       double c, SndVariant variant, int persistence) {
  std::vector<Minute> times;
  std::vector<char> low;
  times.reserve(stream.size());
  low.reserve(stream.size());
  std::array<std::optional<double>, kWeeklyBins> thresholds;
  for (int b = 0; b < kWeeklyBins; ++b) thresholds[b] = snd_threshold(profile, b, c, variant);
  AlarmResult result;
  for (const auto& s : stream) {
    const auto& thr = thresholds[weekly_bin(s.timestamp, profile.tz_offset)];
    times.push_back(s.timestamp);
    bool is_low = false;
    if (s.speed_kmh && thr) {
      ++result.applications;
      is_low = *s.speed_kmh < *thr;
    }
    low.push_back(is_low ? 1 : 0);
  }
  result.alarms = persistent_alarms(times, low, persistence);
  return result;
}

void McMasterParams::validate() const {
  if (!(rho_crit > 0.0) || !(f_crit > 0.0))
    throw Error(ErrorKind::invalid_argument, "McMaster critical density and flow must be positive");
  if (!(b >= 0.0) || !(b + 2.0 * c * rho_crit >= 0.0))
    throw Error(ErrorKind::invalid_argument, "McMaster LUD must be nondecreasing on [0, rho_crit]");
}

TrafficState mcmaster_classify(Point p, const McMasterParams& params) {
  if (p.rho > params.rho_crit) return TrafficState::congested;
  if (p.flow < params.lud(p.rho) && p.flow < params.f_crit) return TrafficState::congested;
  return TrafficState::uncongested;
}

AlarmResult mcmaster_detect(std::span<const ingest::TrafficSample> stream,
                            const McMasterParams& params, int persistence) {
  params.validate();
  std::vector<Minute> times;
  std::vector<char> low;
  AlarmResult result;
  for (const auto& s : stream) {
    times.push_back(s.timestamp);
    bool congested = false;
    if (s.has_density()) {
      ++result.applications;
      congested = mcmaster_classify(s.point(), params) == TrafficState::congested;
    }
    low.push_back(congested ? 1 : 0);
  }
  result.alarms = persistent_alarms(times, low, persistence);
  return result;
}

std::array<double, 3> fit_quadratic_quantile(std::span<const Point> points, double tau) {
  if (points.size() < 3) throw Error(ErrorKind::insufficient_data, "quantile regression needs 3 points");
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::invalid_argument, "quantile must lie in (0, 1)");
  // centre and scale rho for conditioning
  double rmax = 0.0, fscale = 0.0;
  for (const auto& p : points) {
    rmax = std::max(rmax, std::abs(p.rho));
    fscale = std::max(fscale, std::abs(p.flow));
  }
  if (!(rmax > 0.0)) throw Error(ErrorKind::degenerate_data, "all densities are zero");
  fscale = std::max(fscale, 1.0);
  const double floor = 1e-6 * fscale;

  std::array<double, 3> beta{0, 0, 0};
  std::vector<double> w(points.size(), 1.0);
  for (int iter = 0; iter < 100; ++iter) {
    double m[3][4] = {};
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double x = points[i].rho / rmax;
      const double basis[3] = {1.0, x, x * x};
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) m[r][c] += w[i] * basis[r] * basis[c];
        m[r][3] += w[i] * basis[r] * points[i].flow;
      }
    }
    // Gaussian elimination with partial pivoting
    for (int col = 0; col < 3; ++col) {
      int piv = col;
      for (int r = col + 1; r < 3; ++r)
        if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
      if (std::abs(m[piv][col]) < 1e-300)
        throw Error(ErrorKind::degenerate_data, "quantile regression design is singular");
      for (int c = 0; c < 4; ++c) std::swap(m[col][c], m[piv][c]);
      for (int r = 0; r < 3; ++r) {
        if (r == col) continue;
        const double f = m[r][col] / m[col][col];
        for (int c = col; c < 4; ++c) m[r][c] -= f * m[col][c];
      }
    }
    std::array<double, 3> next{m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]};
    double change = 0.0;
    for (int k = 0; k < 3; ++k) change = std::max(change, std::abs(next[k] - beta[k]));
    beta = next;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double x = points[i].rho / rmax;
      const double r = points[i].flow - (beta[0] + beta[1] * x + beta[2] * x * x);
      w[i] = (r > 0.0 ? tau : 1.0 - tau) / std::max(std::abs(r), floor);
    }
    if (change < 1e-9 * fscale) break;
  }
  return {beta[0], beta[1] / rmax, beta[2] / (rmax * rmax)};
}

McMasterParams mcmaster_seed(std::span<const ingest::TrafficSample> training, double tau) {
  std::vector<double> speeds, densities, flows;
  for (const auto& s : training)
    if (s.has_density()) {
      speeds.push_back(*s.speed_kmh);
      densities.push_back(*s.density);
      flows.push_back(*s.flow_vph);
    }
  if (densities.size() < 10) throw Error(ErrorKind::insufficient_data, "too few samples for McMaster seed");
  const double free_speed = stats::quantile(speeds, 0.95);
  std::vector<Point> uncongested;
  for (const auto& s : training)
    if (s.has_density() && *s.speed_kmh >= 0.75 * free_speed) uncongested.push_back(s.point());
  if (uncongested.size() < 10)
    throw Error(ErrorKind::insufficient_data, "too few uncongested samples for McMaster seed");

  McMasterParams p;
  const auto coef = fit_quadratic_quantile(uncongested, tau);
  p.a = coef[0];
  p.b = std::max(coef[1], 0.0);
  p.c = coef[2];
  p.rho_crit = stats::quantile(densities, 0.99);
  p.f_crit = stats::quantile(flows, 0.9);
  if (p.b + 2.0 * p.c * p.rho_crit < 0.0) p.c = -p.b / (2.0 * p.rho_crit);
  return p;
}

std::string SndProfile::to_json() const {
  nlohmann::json j;
  j["speed_cap_kmh"] = speed_cap_kmh;
  j["tz_offset_min"] = tz_offset.count();
  j["bin_minutes"] = kBinMinutes;
  nlohmann::json bins = nlohmann::json::object();
  for (int b = 0; b < kWeeklyBins; ++b) {
    const auto& s = this->bins[b];
    bins[std::to_string(b)] = {{"count", s.count}, {"usable", s.usable}, {"mean", s.mean},
                               {"median", s.median}, {"sd", s.sd}, {"iqr", s.iqr}, {"mad", s.mad}};
  }
  j["bins"] = std::move(bins);
  return j.dump(1);
}

SndProfile SndProfile::from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    SndProfile p;
    p.speed_cap_kmh = j.at("speed_cap_kmh").get<double>();
    p.tz_offset = std::chrono::minutes{j.at("tz_offset_min").get<long long>()};
    for (int b = 0; b < kWeeklyBins; ++b) {
      const auto& e = j.at("bins").at(std::to_string(b));
      auto& s = p.bins[b];
      s.count = e.at("count").get<std::size_t>();
      s.usable = e.at("usable").get<bool>();
      s.mean = e.at("mean").get<double>();
      s.median = e.at("median").get<double>();
      s.sd = e.at("sd").get<double>();
      s.iqr = e.at("iqr").get<double>();
      s.mad = e.at("mad").get<double>();
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_input, std::string("bad SND profile JSON: ") + e.what());
  }
}

} // namespace flowsentry::baselines
