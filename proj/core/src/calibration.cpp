#include "flowsentry/calibration.hpp"

#include <algorithm>

#include "flowsentry/stats.hpp"

namespace flowsentry::evaluation {

std::vector<double> dftb_severity_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 40; ++k) g.push_back(k * 0.05);
  return g;
}

std::vector<double> dftb_duration_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 60; ++k) g.push_back(k);
  return g;
}

std::vector<double> snd_c_grid() {
  std::vector<double> g;
  for (int k = 0; k <= 50; ++k) g.push_back(k * 0.1);
  return g;
}

CalibrationResult<double> calibrate_dftb(std::span<const ingest::TrafficSample> stream,
                                         std::span<const ingest::EventLabel> labels,
                                         const levelset::TypicalRegion& region, detector::Mode mode,
                                         std::span<const double> grid) {
  std::vector<double> owned;
  if (grid.empty()) {
    owned = mode == detector::Mode::severity_threshold ? dftb_severity_grid() : dftb_duration_grid();
    grid = owned;
  }
  const auto scored = detector::score_stream(stream, region);
  const std::string link = stream.empty() ? std::string() : stream.front().link_id;
  return calibrate(grid, [&](double thr) {
    const auto cfg = mode == detector::Mode::severity_threshold ? detector::DetectorConfig::severity(thr)
                                                                : detector::DetectorConfig::duration(thr);
    const auto r = detector::track_scored(scored, link, cfg);
    return score(detector::flag_intervals(r.flags), labels, r.applications);
  });
}

CalibrationResult<double> calibrate_snd(std::span<const ingest::TrafficSample> stream,
                                        std::span<const ingest::EventLabel> labels,
                                        const baselines::SndProfile& profile, baselines::SndVariant variant,
                                        std::span<const double> grid) {
  std::vector<double> owned;
  if (grid.empty()) {
    owned = snd_c_grid();
    grid = owned;
  }
  return calibrate(grid, [&](double c) {
    const auto r = baselines::snd_detect(stream, profile, c, variant);
    return score(r.alarms, labels, r.applications);
  });
}

CalibrationResult<baselines::McMasterParams>
calibrate_mcmaster(std::span<const ingest::TrafficSample> stream, std::span<const ingest::EventLabel> labels) {
  using baselines::McMasterParams;
  const auto seed = baselines::mcmaster_seed(stream);
  std::vector<double> rho, flow;
  for (const auto& s : stream)
    if (s.has_density()) {
      rho.push_back(*s.density);
      flow.push_back(*s.flow_vph);
    }
  std::sort(rho.begin(), rho.end());
  std::sort(flow.begin(), flow.end());
  const double f_scale = stats::quantile_sorted(flow, 0.5);

  auto eval = [&](const McMasterParams& p) {
    const auto r = baselines::mcmaster_detect(stream, p);
    return score(r.alarms, labels, r.applications);
  };
  auto valid = [](const McMasterParams& p) {
    try {
      p.validate();
      return true;
    } catch (const Error&) {
      return false;
    }
  };

  std::vector<McMasterParams> coarse;
  for (double shift : {-0.3, -0.15, 0.0, 0.15})
    for (double bc : {0.8, 1.0, 1.2})
      for (double qr : {0.9, 0.95, 0.98, 0.99, 0.995})
        for (double qf : {0.5, 0.75, 0.9}) {
          McMasterParams p{seed.a + shift * f_scale, seed.b * bc, seed.c * bc,
                           stats::quantile_sorted(rho, qr), stats::quantile_sorted(flow, qf)};
          if (valid(p)) coarse.push_back(p);
        }
  const auto first = calibrate(std::span<const McMasterParams>(coarse), eval);

  const auto& b = first.best;
  std::vector<McMasterParams> fine;
  for (double da : {-0.075, 0.0, 0.075})
    for (double bc : {0.9, 1.0, 1.1})
      for (double r : {0.97, 1.0, 1.03})
        for (double f : {0.95, 1.0, 1.05}) {
          McMasterParams p{b.a + da * f_scale, b.b * bc, b.c * bc, b.rho_crit * r, b.f_crit * f};
          if (valid(p)) fine.push_back(p);
        }
  auto second = calibrate(std::span<const McMasterParams>(fine), eval);
  second.points.insert(second.points.begin(), first.points.begin(), first.points.end());
  return second;
}

} // namespace flowsentry::evaluation
