#include <benchmark/benchmark.h>

#include <random>

#include "flowsentry/baselines.hpp"
#include "flowsentry/detector.hpp"
#include "flowsentry/evaluation.hpp"
#include "flowsentry/kde.hpp"
#include "flowsentry/levelset.hpp"
#include "flowsentry/simgen.hpp"

using namespace flowsentry;

namespace {

std::vector<Point> gaussian_points(std::size_t n, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Point> pts(n);
  for (auto& p : pts) p = {25 + 8 * g(rng), 2500 + 600 * g(rng)};
  return pts;
}

// Three weeks of synthetic minutes, the usual training window.
const simgen::Scenario& three_weeks() {
  static const simgen::Scenario s = [] {
    simgen::ScenarioConfig c;
    c.incident_plan = simgen::plan_incidents(c, 10, 2);
    return simgen::generate(c);
  }();
  return s;
}

const levelset::TypicalRegion& fitted_region() {
  static const levelset::TypicalRegion r = [] {
    const auto pts = ingest::density_flow_points(three_weeks().samples);
    const auto m = kde::DensityModel::fit(pts, kde::select_bandwidth(pts));
    const auto g = kde::evaluate_grid(m, kde::default_bounds(m));
    return detector::calibrate_normalizer(levelset::build_region(g, {}, levelset::axis_scales_from_iqr(pts)), pts);
  }();
  return r;
}

} // namespace

static void BM_Bandwidth(benchmark::State& state) {
  const auto pts = gaussian_points(30000);
  const auto method = state.range(0) ? kde::BandwidthMethod::plug_in : kde::BandwidthMethod::normal_reference;
  for (auto _ : state) benchmark::DoNotOptimize(kde::select_bandwidth(pts, method));
  state.SetLabel(state.range(0) ? "plug_in" : "normal_reference");
}
BENCHMARK(BM_Bandwidth)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_EvaluateGrid(benchmark::State& state) {
  const auto pts = gaussian_points(static_cast<std::size_t>(state.range(0)));
  const auto m = kde::DensityModel::fit(pts, kde::select_bandwidth(pts));
  const auto b = kde::default_bounds(m);
  const auto n = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(kde::evaluate_grid(m, b, {n, n}));
}
BENCHMARK(BM_EvaluateGrid)->Args({30000, 256})->Args({30000, 512})->Args({100000, 512})->Unit(benchmark::kMillisecond);

static void BM_BuildRegion(benchmark::State& state) {
  const auto pts = gaussian_points(30000);
  const auto m = kde::DensityModel::fit(pts, kde::select_bandwidth(pts));
  const auto g = kde::evaluate_grid(m, kde::default_bounds(m));
  const auto scales = levelset::axis_scales_from_iqr(pts);
  for (auto _ : state) benchmark::DoNotOptimize(levelset::build_region(g, {}, scales));
}
BENCHMARK(BM_BuildRegion)->Unit(benchmark::kMillisecond);

static void BM_Contains(benchmark::State& state) {
  const auto& r = fitted_region();
  const auto pts = ingest::density_flow_points(three_weeks().samples);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(r.contains(pts[i]));
    i = (i + 1) % pts.size();
  }
}
BENCHMARK(BM_Contains);

static void BM_DistanceToBoundary(benchmark::State& state) {
  const auto& r = fitted_region();
  const auto pts = ingest::density_flow_points(three_weeks().samples);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(r.distance_to_boundary(pts[i]));
    i = (i + 1) % pts.size();
  }
}
BENCHMARK(BM_DistanceToBoundary);

static void BM_TrackThreeWeeks(benchmark::State& state) {
  const auto& r = fitted_region();
  const auto& s = three_weeks().samples;
  for (auto _ : state) benchmark::DoNotOptimize(detector::track(s, r, detector::DetectorConfig::severity(0.5)));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.size()));
}
BENCHMARK(BM_TrackThreeWeeks)->Unit(benchmark::kMillisecond);

static void BM_SndDetectThreeWeeks(benchmark::State& state) {
  const auto& s = three_weeks().samples;
  const auto profile = baselines::snd_fit(s);
  for (auto _ : state) benchmark::DoNotOptimize(baselines::snd_detect(s, profile, 1.5));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.size()));
}
BENCHMARK(BM_SndDetectThreeWeeks)->Unit(benchmark::kMillisecond);

static void BM_WilcoxonExact(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.2, 1);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(n, 0.0), y(n);
  for (auto& v : y) v = g(rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluation::wilcoxon_signed_rank(x, y, evaluation::WilcoxonMethod::exact));
}
BENCHMARK(BM_WilcoxonExact)->Arg(10)->Arg(17)->Arg(25)->Arg(50);

static void BM_Simulate(benchmark::State& state) {
  simgen::ScenarioConfig c;
  c.weeks = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(simgen::generate(c));
}
BENCHMARK(BM_Simulate)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
