#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowsentry/ingest.hpp"

namespace flowsentry::simgen {

struct IncidentSpec {
  Minute start;
  int duration_min = 30;
  double capacity_drop = 0.6; // fraction of capacity lost, in (0, 1)
};

/// A recurrent, unlabelled slow regime: on days where
/// `day_index % period_days == 0`, between `start_minute` and
/// `start_minute + duration_min` of the day, traffic runs on the congested
/// branch at `free_flow_speed - speed_drop`.
struct BimodalBottleneck {
  int period_days = 5;
  double speed_drop = 55.0;
  int start_minute = 15 * 60;
  int duration_min = 240;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int weeks = 3;
  Minute origin = parse_timestamp("2017-04-03T00:00:00Z"); // a Monday
  std::string link_id = "SYN1";
  double length_m = 1000.0;

  double free_flow_speed = 110.0; // km/h
  double capacity_flow = 4500.0;  // veh/h
  double critical_density = 35.0; // veh/km
  double jam_density = 140.0;     // veh/km, closes the congested branch

  /// Demand as a fraction of capacity, one value per minute of the day.
  std::vector<double> demand_profile;
  double weekend_factor = 0.8;
  /// Lognormal sigma of a per-day demand multiplier.
  double daily_variation = 0.05;

  double noise_scale = 0.05; // lognormal sigma on speed
  double flow_jitter = 0.02; // lognormal sigma on flow
  double relaxation_min = 8.0;

  std::vector<IncidentSpec> incident_plan;
  std::optional<BimodalBottleneck> bimodal_bottleneck;

  void validate() const;
};

/// Two-peak weekday shape: quiet nights, morning and evening peaks.
std::vector<double> default_demand_profile();

/// Triangular backbone min(v_f rho, C (rho_j - rho) / (rho_j - rho_c)).
double backbone_flow(const ScenarioConfig& c, double rho);
/// Density on the congested branch carrying flow q.
double congested_density(const ScenarioConfig& c, double q);

struct Scenario {
  std::vector<ingest::TrafficSample> samples;
  std::vector<ingest::EventLabel> labels; // one accident label per incident
};

/// Minute-resolution samples. Deterministic for a fixed config. Throws
/// Error(invalid_argument) for a bad config or overlapping incidents.
Scenario generate(const ScenarioConfig& config);

/// `count` daytime incidents spread over the scenario, at least six hours
/// apart and clear of bottleneck windows.
std::vector<IncidentSpec> plan_incidents(const ScenarioConfig& config, std::size_t count,
                                         std::uint64_t seed);

} // namespace flowsentry::simgen
