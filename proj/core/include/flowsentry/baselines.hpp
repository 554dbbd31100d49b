#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowsentry/flag_interval.hpp"
#include "flowsentry/ingest.hpp"

namespace flowsentry::baselines {

/// 45 mph in km/h.
inline constexpr double kSndSpeedCapKmh = 45.0 * 1.609344;
inline constexpr int kBinMinutes = 15;
inline constexpr int kWeeklyBins = 7 * 24 * 60 / kBinMinutes; // 672
inline constexpr std::size_t kMinBinCount = 8;
inline constexpr int kDefaultPersistence = 3;

/// Weekly 15-minute bin of `t` in local time; bin 0 starts Monday 00:00.
int weekly_bin(Minute t, std::chrono::minutes tz_offset);

struct SndBinStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  double iqr = 0.0;
  double mad = 0.0;
  bool usable = false;
};

/// Robust statistics of the speeds in one bin; unusable below `min_count`.
SndBinStats bin_statistics(std::span<const double> speeds, std::size_t min_count = kMinBinCount);

struct SndProfile {
  std::array<SndBinStats, kWeeklyBins> bins{};
  double speed_cap_kmh = kSndSpeedCapKmh;
  std::chrono::minutes tz_offset{0};

  std::string to_json() const;
  static SndProfile from_json(const std::string& text);
};

/// Per-bin statistics over every training occurrence of the bin. Needs at
/// least one week of data.
SndProfile snd_fit(std::span<const ingest::TrafficSample> training,
                   std::chrono::minutes tz_offset = std::chrono::minutes{0},
                   std::size_t min_count = kMinBinCount);

enum class SndVariant { mean_sd, median_iqr, median_mad };

/// min(cap, location - c * scale), or nullopt for an unusable bin.
std::optional<double> snd_threshold(const SndProfile& profile, int bin, double c,
                                    SndVariant variant = SndVariant::median_iqr);

struct AlarmResult {
  std::vector<FlagInterval> alarms;
  std::size_t applications = 0;
};

/// Alarms over runs of at least `persistence` consecutive low minutes,
/// backdated to the first minute of the run. `low[i]` refers to `times[i]`;
/// a missing minute breaks a run.
std::vector<FlagInterval> persistent_alarms(std::span<const Minute> times,
                                            std::span<const char> low, int persistence);

/// Speed strictly below the bin threshold for `persistence` minutes.
AlarmResult snd_detect(std::span<const ingest::TrafficSample> stream, const SndProfile& profile,
                       double c, SndVariant variant = SndVariant::median_iqr,
                       int persistence = kDefaultPersistence);

/// Quadratic lower bound of uncongested data, LUD(rho) = a + b rho + c rho^2,
/// plus a critical density and a critical flow. Density stands in for
/// occupancy at link level.
struct McMasterParams {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double rho_crit = 0.0;
  double f_crit = 0.0;

  double lud(double rho) const { return a + (b + c * rho) * rho; }
  /// Throws unless rho_crit, f_crit > 0 and LUD is nondecreasing on [0, rho_crit].
  void validate() const;

  friend auto operator<=>(const McMasterParams&, const McMasterParams&) = default;
};

enum class TrafficState { uncongested, congested };

/// congested iff rho > rho_crit, or flow < LUD(rho) and flow < f_crit.
TrafficState mcmaster_classify(Point p, const McMasterParams& params);

AlarmResult mcmaster_detect(std::span<const ingest::TrafficSample> stream,
                            const McMasterParams& params, int persistence = kDefaultPersistence);

/// Quantile regression (IRLS) of flow on (1, rho, rho^2) at quantile `tau`.
std::array<double, 3> fit_quadratic_quantile(std::span<const Point> points, double tau);

/// LUD seed from the low quantile of the uncongested training points, with
/// rho_crit and f_crit at high training quantiles.
McMasterParams mcmaster_seed(std::span<const ingest::TrafficSample> training, double tau = 0.02);

} // namespace flowsentry::baselines
