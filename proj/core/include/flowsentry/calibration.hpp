#pragma once

#include <span>
#include <vector>

#include "flowsentry/baselines.hpp"
#include "flowsentry/detector.hpp"
#include "flowsentry/evaluation.hpp"

// PI-minimising parameter searches for each detector family.
namespace flowsentry::evaluation {

/// 0.05, 0.10, ..., 2.00
std::vector<double> dftb_severity_grid();
/// 1, 2, ..., 60 minutes
std::vector<double> dftb_duration_grid();
/// 0.0, 0.1, ..., 5.0
std::vector<double> snd_c_grid();

/// Severity or duration threshold for a calibrated region. An empty grid
/// selects the default grid of the mode.
CalibrationResult<double> calibrate_dftb(std::span<const ingest::TrafficSample> stream,
                                         std::span<const ingest::EventLabel> labels,
                                         const levelset::TypicalRegion& region,
                                         detector::Mode mode = detector::Mode::severity_threshold,
                                         std::span<const double> grid = {});

CalibrationResult<double> calibrate_snd(std::span<const ingest::TrafficSample> stream,
                                        std::span<const ingest::EventLabel> labels,
                                        const baselines::SndProfile& profile,
                                        baselines::SndVariant variant = baselines::SndVariant::median_iqr,
                                        std::span<const double> grid = {});

/// Coarse grid around the quantile-regression seed (LUD offset and scale,
/// critical density and flow quantiles), then a finer grid around the
/// coarse winner. Invalid parameter sets are skipped.
CalibrationResult<baselines::McMasterParams>
calibrate_mcmaster(std::span<const ingest::TrafficSample> stream, std::span<const ingest::EventLabel> labels);

} // namespace flowsentry::evaluation
