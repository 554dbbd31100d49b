#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowsentry/detector.hpp"
#include "flowsentry/ingest.hpp"
#include "flowsentry/kde.hpp"
#include "flowsentry/levelset.hpp"

namespace flowsentry::cli {

namespace fs = std::filesystem;

struct RunConfig {
  std::string subcommand;
  std::vector<fs::path> inputs;
  std::optional<fs::path> events;
  std::optional<fs::path> region;
  std::vector<std::string> flag_files; // evaluate: name=path
  fs::path out_dir = ".";

  double alpha = 0.05;
  detector::Mode mode = detector::Mode::severity_threshold;
  std::optional<double> threshold;
  std::optional<double> percentile;
  std::uint64_t seed = 1;
  int tz_offset_min = 0;
  std::optional<std::string> link; // restricts series input to one link

  // Plug-in by default: the Gaussian reference oversmooths the two-branch
  // density-flow cloud and the region ends up holding too much of the data.
  kde::BandwidthMethod bandwidth = kde::BandwidthMethod::plug_in;
  kde::GridResolution grid;

  std::string detector = "dftb"; // calibrate: dftb, snd, mcmaster
  std::string what = "grid";     // export: grid, snd-profile, table1

  // simulate
  int weeks = 3;
  std::size_t incidents = 10;
  bool bimodal = false;
  double noise = 0.05;

  bool table1 = false; // evaluate the embedded fixture

  /// Throws Error(invalid_argument) or Error(io) for a bad configuration.
  void validate() const;
};

/// Grid resolution from FLOWSENTRY_GRID ("256" or "256x384"), if set.
std::optional<kde::GridResolution> grid_from_env();

/// A region fitted to one link's training data, with its normaliser set
/// and the durations of the right-side training excursions.
struct FittedRegion {
  levelset::TypicalRegion region;
  kde::BandwidthMatrix bandwidth;
  std::vector<long long> training_durations;
  std::size_t samples = 0;
  double in_region_fraction = 0.0;
  std::vector<std::string> warnings;
};

FittedRegion fit_region(std::span<const ingest::TrafficSample> training, double alpha,
                        kde::BandwidthMethod method = kde::BandwidthMethod::plug_in,
                        kde::GridResolution grid = {});

std::string region_file_json(const FittedRegion& fitted);

struct RegionFile {
  levelset::TypicalRegion region;
  std::vector<long long> training_durations;
};
RegionFile read_region_file(const fs::path& path);

/// Detector config from mode, threshold and percentile. In duration mode
/// a percentile is resolved against the training durations.
detector::DetectorConfig detector_config(const RunConfig& config, std::span<const long long> training_durations);

int cmd_fit(const RunConfig& config, std::ostream& out);
int cmd_detect(const RunConfig& config, std::ostream& out);
int cmd_calibrate(const RunConfig& config, std::ostream& out);
int cmd_evaluate(const RunConfig& config, std::ostream& out);
int cmd_simulate(const RunConfig& config, std::ostream& out);
int cmd_export(const RunConfig& config, std::ostream& out);
int cmd_plot(const RunConfig& config, std::ostream& out);

/// Dispatches on config.subcommand. Maps errors to exit codes: 2 for
/// usage, input and I/O problems, 1 for computation failures.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parses argv and runs.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace flowsentry::cli
