#include <doctest.h>

#include <map>
#include <sstream>

#include "flowsentry/baselines.hpp"
#include "flowsentry/error.hpp"
#include "flowsentry/kde.hpp"
#include "flowsentry/levelset.hpp"
#include "flowsentry/simgen.hpp"
#include "flowsentry/stats.hpp"

using namespace flowsentry;
using namespace flowsentry::simgen;
using std::chrono::minutes;

namespace {

std::string serialize(const Scenario& s) {
  std::ostringstream out;
  ingest::write_series(out, s.samples);
  ingest::write_events(out, s.labels);
  return out.str();
}

ScenarioConfig quiet() {
  ScenarioConfig c;
  c.noise_scale = 0;
  c.flow_jitter = 0;
  c.daily_variation = 0;
  return c;
}

} // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(ScenarioConfig{}.validate());
  auto c = ScenarioConfig{};
  c.weeks = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.critical_density = 200;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.incident_plan = {{c.origin + minutes(600), 30, 1.0}};
  CHECK_THROWS_AS(generate(c), Error);
  c = {};
  c.demand_profile = {0.5, 0.5};
  CHECK_THROWS_AS(generate(c), Error);
}

TEST_CASE("backbone") {
  const ScenarioConfig c;
  CHECK(backbone_flow(c, 0) == 0);
  CHECK(backbone_flow(c, 10) == doctest::Approx(1100));
  CHECK(backbone_flow(c, c.jam_density) == doctest::Approx(0));
  CHECK(backbone_flow(c, c.critical_density) == doctest::Approx(std::min(110 * 35.0, 4500.0)));
  for (double q : {500.0, 2000.0, 3500.0})
    CHECK(backbone_flow(c, congested_density(c, q)) == doctest::Approx(q));
  CHECK(default_demand_profile().size() == 1440);
}

TEST_CASE("same seed gives identical output") {
  ScenarioConfig c;
  c.weeks = 1;
  c.incident_plan = plan_incidents(c, 3, 9);
  CHECK(serialize(generate(c)) == serialize(generate(c)));
  auto d = c;
  d.seed = 2;
  CHECK(serialize(generate(c)) != serialize(generate(d)));
}

TEST_CASE("noise-free samples lie on the backbone") {
  auto c = quiet();
  c.bimodal_bottleneck = BimodalBottleneck{};
  const auto s = generate(c);
  REQUIRE(s.samples.size() == 3u * 7 * 1440);
  CHECK(s.labels.empty());
  std::vector<Point> pts;
  for (const auto& x : s.samples) {
    REQUIRE(x.has_density());
    CHECK(*x.flow_vph == doctest::Approx(backbone_flow(c, *x.density)).epsilon(1e-9));
    pts.push_back(x.point());
  }
  const auto model = kde::DensityModel::fit(pts, kde::select_bandwidth(pts));
  const auto grid = kde::evaluate_grid(model, kde::default_bounds(model), {256, 256});
  const auto region = levelset::build_region(grid, {}, levelset::axis_scales_from_iqr(pts));
  CHECK(levelset::contained_fraction(region, pts) >= 0.95);
}

TEST_CASE("incident density exceeds the baseline tail") {
  ScenarioConfig base;
  base.weeks = 1;
  const Minute start = base.origin + minutes(1440 + 10 * 60);
  auto with = base;
  with.incident_plan = {{start, 30, 0.6}};
  const auto quiet_run = generate(base), inc = generate(with);
  std::vector<double> dens;
  for (const auto& x : quiet_run.samples) dens.push_back(*x.density);
  const double p99 = stats::quantile(dens, 0.99);
  double peak = 0;
  for (const auto& x : inc.samples)
    if (x.timestamp >= start && x.timestamp < start + minutes(30)) peak = std::max(peak, *x.density);
  CHECK(peak > p99);
  REQUIRE(inc.labels.size() == 1);
  CHECK(inc.labels[0].start == start);
  CHECK(inc.labels[0].end >= start + minutes(29));
  CHECK(inc.labels[0].category == ingest::EventCategory::accident);
}

TEST_CASE("overlapping incidents are rejected") {
  ScenarioConfig c;
  c.weeks = 1;
  const Minute s = c.origin + minutes(600);
  c.incident_plan = {{s, 30, 0.6}, {s + minutes(20), 30, 0.6}};
  CHECK_THROWS_AS(generate(c), Error);
}

TEST_CASE("flow stays under the noise cap") {
  ScenarioConfig c;
  c.noise_scale = 0.1;
  c.incident_plan = plan_incidents(c, 8, 3);
  for (const auto& x : generate(c).samples) CHECK(*x.flow_vph <= c.capacity_flow * (1 + 3 * c.noise_scale));
}

TEST_CASE("labels agree with generated congestion") {
  ScenarioConfig c;
  c.weeks = 4;
  c.incident_plan = plan_incidents(c, 12, 5);
  const auto s = generate(c);
  REQUIRE(s.labels.size() == 12);
  for (const auto& l : s.labels) {
    bool congested = false;
    for (const auto& x : s.samples)
      if (x.timestamp >= l.start && x.timestamp <= l.end && *x.density > c.critical_density) congested = true;
    CHECK(congested);
  }
}

TEST_CASE("planned incidents") {
  ScenarioConfig c;
  c.weeks = 6;
  c.bimodal_bottleneck = BimodalBottleneck{};
  const auto plan = plan_incidents(c, 20, 4);
  REQUIRE(plan.size() == 20);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& p = plan[i];
    CHECK(p.capacity_drop > 0);
    CHECK(p.capacity_drop < 1);
    const long long m = minutes_between(c.origin, p.start);
    const long long day = m / 1440, tod = m % 1440;
    CHECK(day % 7 < 5);
    CHECK(tod >= 7 * 60);
    CHECK(tod + p.duration_min <= 18 * 60 + 60);
    if (i > 0) CHECK(minutes_between(plan[i - 1].start, p.start) >= 6 * 60);
  }
  CHECK_NOTHROW(generate([&] {
    auto d = c;
    d.incident_plan = plan;
    return d;
  }()));
}

TEST_CASE("bottleneck produces two speed regimes in a bin") {
  ScenarioConfig c;
  c.weeks = 6;
  c.bimodal_bottleneck = BimodalBottleneck{};
  const auto s = generate(c);
  std::map<int, std::vector<double>> bins;
  for (const auto& x : s.samples)
    bins[baselines::weekly_bin(x.timestamp, minutes(0))].push_back(*x.speed_kmh);
  // two largest local maxima of a 5 km/h histogram
  bool found = false;
  for (const auto& [bin, speeds] : bins) {
    std::vector<int> h(40, 0);
    for (double v : speeds) ++h[std::clamp(static_cast<int>(v / 5), 0, 39)];
    std::vector<std::pair<int, int>> modes;
    for (int i = 0; i < 40; ++i) {
      const int l = i > 0 ? h[i - 1] : 0, r = i < 39 ? h[i + 1] : 0;
      if (h[i] > 0 && h[i] >= l && h[i] > r) modes.push_back({h[i], i});
    }
    if (modes.size() < 2) continue;
    std::sort(modes.rbegin(), modes.rend());
    if (std::abs(modes[0].second - modes[1].second) * 5 >= 30) found = true;
  }
  CHECK(found);
}
