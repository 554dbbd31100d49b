#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowsentry/error.hpp"
#include "flowsentry/flag_interval.hpp"
#include "flowsentry/ingest.hpp"

namespace flowsentry::evaluation {

inline constexpr double kEpsilonDr = 1.01;
inline constexpr double kEpsilonFar = 0.001;

/// Percent of labels overlapped by a flag on [start, end + grace]. Throws
/// Error(undefined_metric) for an empty label set.
double detection_rate(std::span<const FlagInterval> flags, std::span<const ingest::EventLabel> labels,
                      std::chrono::minutes grace = std::chrono::minutes{0});

/// 100 * flagged minutes outside every label / n_applications.
double false_alarm_rate(std::span<const FlagInterval> flags, std::span<const ingest::EventLabel> labels,
                        std::size_t n_applications);

/// Mean detection lag over detected labels, lags clamped at 0. Throws
/// Error(undefined_metric) when nothing was detected.
double mean_time_to_detect(std::span<const FlagInterval> flags,
                           std::span<const ingest::EventLabel> labels,
                           std::chrono::minutes grace = std::chrono::minutes{0});

inline double performance_index(double dr, double far, double mttd) {
  return (kEpsilonDr - dr / 100.0) * (far / 100.0 + kEpsilonFar) * mttd;
}

struct Metrics {
  double dr = 0.0;
  double far = 0.0;
  std::optional<double> mttd; // missing when no event was detected
  std::optional<double> pi;
};

/// All four metrics at once. Throws for an empty label set or zero applications.
Metrics score(std::span<const FlagInterval> flags, std::span<const ingest::EventLabel> labels,
              std::size_t n_applications, std::chrono::minutes grace = std::chrono::minutes{0});

template <class Param>
struct CalibrationPoint {
  Param param;
  Metrics metrics;
};

template <class Param>
struct CalibrationResult {
  Param best;
  Metrics metrics;
  std::vector<CalibrationPoint<Param>> points;
};

/// True when `a` beats `b`: lower PI, then higher DR, then lower FAR.
/// Both must have a defined PI.
inline bool better(const Metrics& a, const Metrics& b) {
  if (*a.pi != *b.pi) return *a.pi < *b.pi;
  if (a.dr != b.dr) return a.dr > b.dr;
  return a.far < b.far;
}

/// Exhaustive search minimising PI. `eval(param)` returns Metrics; points
/// with undefined PI are skipped. Remaining ties go to the smaller parameter.
template <class Param, class Eval>
CalibrationResult<Param> calibrate(std::span<const Param> grid, Eval&& eval) {
  if (grid.empty()) throw Error(ErrorKind::invalid_argument, "calibration grid is empty");
  CalibrationResult<Param> out{grid.front(), {}, {}};
  out.points.reserve(grid.size());
  std::optional<std::size_t> best;
  for (const auto& p : grid) {
    out.points.push_back({p, eval(p)});
    const auto& cand = out.points.back();
    if (!cand.metrics.pi) continue;
    if (!best) {
      best = out.points.size() - 1;
      continue;
    }
    const auto& cur = out.points[*best];
    if (better(cand.metrics, cur.metrics) ||
        (!better(cur.metrics, cand.metrics) && cand.param < cur.param))
      best = out.points.size() - 1;
  }
  if (!best) throw Error(ErrorKind::undefined_metric, "every calibration point has an undefined PI");
  out.best = out.points[*best].param;
  out.metrics = out.points[*best].metrics;
  return out;
}

/// {start, start + step, ...} up to and including `stop` (within step/1000).
std::vector<double> linear_grid(double start, double stop, double step);

enum class PairedTest { paired_t, wilcoxon_signed_rank, sign };
std::string_view to_string(PairedTest t);

struct PairedTestResult {
  PairedTest test = PairedTest::paired_t;
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_effective = 0;
  /// "exact", "normal" or "t".
  std::string method;
};

/// Differences are taken as x2 - x1 throughout.
PairedTestResult paired_t_test(std::span<const double> x1, std::span<const double> x2, double mu0 = 0.0);

enum class WilcoxonMethod {
  /// Exact when n <= 25 and no zero differences or tied magnitudes were
  /// found, normal approximation otherwise.
  automatic,
  exact,
  normal,
};

inline constexpr std::size_t kWilcoxonMinN = 6;
inline constexpr std::size_t kWilcoxonExactMaxN = 25;

/// Statistic is the signed-rank sum W; zero differences are dropped and
/// tied magnitudes get average ranks.
PairedTestResult wilcoxon_signed_rank(std::span<const double> x1, std::span<const double> x2,
                                      WilcoxonMethod method = WilcoxonMethod::automatic);

/// Statistic is S, the number of positive differences. Exact binomial p.
PairedTestResult sign_test(std::span<const double> x1, std::span<const double> x2);

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double std_dev = 0.0;
  double iqr = 0.0;
};

/// Needs at least two values.
Summary summarize(std::span<const double> values);

/// One link of the 17-link comparison fixture.
struct Table1Row {
  std::string location;
  double length_km = 0.0;
  double dr_snd = 0.0, dr_dftb = 0.0;
  double far_snd = 0.0, far_dftb = 0.0;
  double mttd_snd = 0.0, mttd_dftb = 0.0;
};

std::vector<Table1Row> parse_table1(std::istream& in);
/// The 17-link fixture compiled into the library.
std::string_view table1_csv();
std::vector<Table1Row> embedded_table1();

/// Per-link, per-detector metrics.
struct EvalReport {
  std::vector<std::string> detectors;
  struct Row {
    std::string link_id;
    std::vector<Metrics> metrics; // one per detector
  };
  std::vector<Row> rows;

  /// Column of one metric ("dr", "far", "mttd", "pi") for one detector,
  /// skipping links where it is undefined.
  std::vector<double> column(std::size_t detector, std::string_view metric) const;

  /// `link_id`, then each metric for every detector in turn, then the mean,
  /// median, std_dev and iqr rows.
  void write_csv(std::ostream& out) const;
};

EvalReport report_from_table1(std::span<const Table1Row> rows);

/// Paired comparison of one metric between two detectors.
struct MetricComparison {
  std::string metric;
  std::size_t n = 0;
  std::optional<double> mean_diff;
  std::optional<double> median_diff;
  std::optional<PairedTestResult> paired_t;
  std::optional<PairedTestResult> wilcoxon;
  std::optional<PairedTestResult> sign;
  /// Reason per missing test, e.g. "wilcoxon: insufficient_n".
  std::vector<std::string> notes;
};

MetricComparison compare(std::string metric, std::span<const double> x1, std::span<const double> x2,
                         WilcoxonMethod method = WilcoxonMethod::automatic);

/// Comparisons of detector `b` against detector `a` over links where both
/// metrics are defined.
std::vector<MetricComparison> compare_detectors(const EvalReport& report, std::size_t a, std::size_t b,
                                                WilcoxonMethod method = WilcoxonMethod::automatic);

std::string comparisons_to_json(std::span<const MetricComparison> comparisons,
                                const std::string& baseline, const std::string& candidate);

} // namespace flowsentry::evaluation
