#include "flowsentry/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "flowsentry/error.hpp"

namespace flowsentry::simgen {

namespace {

constexpr int kDay = 24 * 60;

bool bottleneck_active(const ScenarioConfig& c, long long minute) {
  if (!c.bimodal_bottleneck) return false;
  const auto& b = *c.bimodal_bottleneck;
  const long long day = minute / kDay;
  const long long m = minute % kDay;
  return day % b.period_days == 0 && m >= b.start_minute && m < b.start_minute + b.duration_min;
}

double bump(double m, double centre, double width) {
  const double z = (m - centre) / width;
  return std::exp(-0.5 * z * z);
}

} // namespace

std::vector<double> default_demand_profile() {
  std::vector<double> p(kDay);
  for (int m = 0; m < kDay; ++m) {
    const double x = m;
    // daytime plateau between 06:00 and 21:00
    const double day = 1.0 / (1.0 + std::exp(-(x - 6.5 * 60) / 40.0)) -
                       1.0 / (1.0 + std::exp(-(x - 21.0 * 60) / 50.0));
    p[m] = 0.08 + 0.45 * day + 0.25 * bump(x, 8 * 60, 70) + 0.3 * bump(x, 17.5 * 60, 80);
  }
  return p;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::invalid_argument, "scenario: " + msg); };
  if (weeks < 1) fail("weeks must be at least 1");
  if (!(free_flow_speed > 0 && capacity_flow > 0 && critical_density > 0 && length_m > 0))
    fail("rates must be positive");
  if (!(jam_density > critical_density)) fail("jam density must exceed critical density");
  if (!(noise_scale >= 0 && flow_jitter >= 0 && daily_variation >= 0)) fail("noise must be nonnegative");
  if (!(relaxation_min > 0)) fail("relaxation time must be positive");
  if (!(weekend_factor > 0)) fail("weekend factor must be positive");
  if (!demand_profile.empty()) {
    if (demand_profile.size() != kDay) fail("demand profile needs 1440 values");
    for (double d : demand_profile)
      if (!(d >= 0 && d <= 1)) fail("demand multipliers must lie in [0, 1]");
  }
  for (const auto& inc : incident_plan) {
    if (!(inc.capacity_drop > 0 && inc.capacity_drop < 1)) fail("capacity_drop must lie in (0, 1)");
    if (inc.duration_min <= 0) fail("incident duration must be positive");
  }
  if (bimodal_bottleneck) {
    const auto& b = *bimodal_bottleneck;
    if (b.period_days < 1 || b.duration_min <= 0 || b.start_minute < 0 ||
        b.start_minute + b.duration_min > kDay)
      fail("bad bottleneck window");
    if (!(b.speed_drop > 0 && b.speed_drop < free_flow_speed)) fail("speed_drop must lie in (0, free_flow_speed)");
  }
}

double backbone_flow(const ScenarioConfig& c, double rho) {
  const double cong = c.capacity_flow * (c.jam_density - rho) / (c.jam_density - c.critical_density);
  return std::max(0.0, std::min(c.free_flow_speed * rho, cong));
}

double congested_density(const ScenarioConfig& c, double q) {
  return c.jam_density - q * (c.jam_density - c.critical_density) / c.capacity_flow;
}

Scenario generate(const ScenarioConfig& config) {
  config.validate();
  auto incidents = config.incident_plan;
  std::sort(incidents.begin(), incidents.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < incidents.size(); ++i)
    if (incidents[i].start < incidents[i - 1].start + std::chrono::minutes{incidents[i - 1].duration_min})
      throw Error(ErrorKind::invalid_argument, "scenario: incidents overlap");

  const auto profile = config.demand_profile.empty() ? default_demand_profile() : config.demand_profile;
  const long long total = static_cast<long long>(config.weeks) * 7 * kDay;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double C = config.capacity_flow;
  const double vf = config.free_flow_speed;
  const double flow_cap = C * (1.0 + 3.0 * config.noise_scale);
  const double relax = 1.0 - std::exp(-1.0 / config.relaxation_min);

  Scenario out;
  out.samples.reserve(static_cast<std::size_t>(total));
  double day_factor = 1.0;
  double queue = 0.0; // vehicles
  double rho = -1.0;  // relaxing density state
  double flow_state = 0.0;
  std::size_t next_inc = 0;
  std::optional<std::size_t> active; // incident whose label is open
  Minute label_start{};

  for (long long t = 0; t < total; ++t) {
    const Minute now = config.origin + std::chrono::minutes{t};
    const long long day = t / kDay;
    if (t % kDay == 0) {
      day_factor = std::exp(config.daily_variation * gauss(rng));
      if (day % 7 >= 5) day_factor *= config.weekend_factor;
    }
    const double demand = std::min(C, C * profile[t % kDay] * day_factor);

    // incident bookkeeping
    while (next_inc < incidents.size() && incidents[next_inc].start <= now && !active) {
      active = next_inc;
      label_start = incidents[next_inc].start;
      ++next_inc;
    }
    bool blocked = false;
    double capacity = C;
    if (active) {
      const auto& inc = incidents[*active];
      if (now < inc.start + std::chrono::minutes{inc.duration_min}) {
        blocked = true;
        capacity = C * (1.0 - inc.capacity_drop);
      }
    }

    // queue dynamics, rates in veh/h over a one-minute step
    const double offered = demand + queue * 60.0;
    const double outflow = std::min(offered, capacity);
    queue = std::max(0.0, queue + (demand - outflow) / 60.0);
    const bool queued = queue > 1e-9;

    double true_flow, target_rho;
    if (queued || blocked) {
      true_flow = outflow;
      target_rho = queued ? congested_density(config, outflow) : outflow / vf;
    } else if (bottleneck_active(config, t)) {
      const double vb = vf - config.bimodal_bottleneck->speed_drop;
      target_rho = C * config.jam_density / (vb * (config.jam_density - config.critical_density) + C);
      true_flow = vb * target_rho;
    } else {
      true_flow = demand;
      target_rho = demand / vf;
    }
    if (rho < 0.0 || !active) {
      // free and bottleneck states switch instantly
      rho = target_rho;
      flow_state = true_flow;
    } else {
      rho += (target_rho - rho) * relax;
      flow_state += (true_flow - flow_state) * relax;
    }
    rho = std::max(rho, 1e-6);
    const double true_speed = std::min(vf, flow_state / rho);
    if (active && !blocked && !queued) {
      out.labels.push_back({config.link_id, ingest::EventCategory::accident, label_start,
                            now - std::chrono::minutes{1}});
      active.reset();
      rho = target_rho;
      flow_state = true_flow;
    }

    const double speed = std::max(1.0, true_speed * std::exp(config.noise_scale * gauss(rng)));
    const double flow = std::min(flow_cap, flow_state * std::exp(config.flow_jitter * gauss(rng)));
    const double tt = config.length_m / (speed / 3.6);
    out.samples.push_back(ingest::make_sample(config.link_id, now, speed, flow, tt));
  }
  if (active)
    out.labels.push_back({config.link_id, ingest::EventCategory::accident, label_start,
                          config.origin + std::chrono::minutes{total - 1}});
  return out;
}

std::vector<IncidentSpec> plan_incidents(const ScenarioConfig& config, std::size_t count, std::uint64_t seed) {
  const long long total_days = static_cast<long long>(config.weeks) * 7;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<long long> pick_day(0, total_days - 1);
  std::uniform_int_distribution<int> pick_minute(7 * 60, 18 * 60);
  std::uniform_int_distribution<int> pick_duration(20, 60);
  std::uniform_real_distribution<double> pick_drop(0.55, 0.8);

  auto clear_of_bottleneck = [&](long long start, long long end) {
    for (long long t = start - 120; t <= end + 120; t += 5)
      if (t >= 0 && bottleneck_active(config, t)) return false;
    return true;
  };

  std::vector<IncidentSpec> out;
  std::vector<long long> starts;
  for (int attempt = 0; out.size() < count && attempt < 100000; ++attempt) {
    const long long day = pick_day(rng);
    if (day % 7 >= 5) continue; // weekday incidents only
    const long long start = day * kDay + pick_minute(rng);
    const int duration = pick_duration(rng);
    const double drop = pick_drop(rng);
    if (!clear_of_bottleneck(start, start + duration + 120)) continue;
    if (std::any_of(starts.begin(), starts.end(), [&](long long s) { return std::abs(s - start) < 6 * 60; }))
      continue;
    starts.push_back(start);
    out.push_back({config.origin + std::chrono::minutes{start}, duration, drop});
  }
  if (out.size() < count) throw Error(ErrorKind::invalid_argument, "could not place the requested incidents");
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  return out;
}

} // namespace flowsentry::simgen
