// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "flowsentry/baselines.hpp"
#include "flowsentry/calibration.hpp"
#include "flowsentry/detector.hpp"
#include "flowsentry/evaluation.hpp"
#include "flowsentry/kde.hpp"
#include "flowsentry/levelset.hpp"
#include "flowsentry/simgen.hpp"

using namespace flowsentry;
using std::chrono::minutes;
using std::numbers::pi;

namespace {

// Library default. The CLI fits with plug-in instead; see README.
constexpr auto kBandwidth = kde::BandwidthMethod::normal_reference;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool near(double got, double want, double tol) { return std::abs(got - want) <= tol; }

// ---------------------------------------------------------------- fixture

std::vector<double> col(const std::vector<evaluation::Table1Row>& rows, double evaluation::Table1Row::*m) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.*m);
  return out;
}

using Member = double evaluation::Table1Row::*;
const Member kColumns[6] = {&evaluation::Table1Row::dr_snd,   &evaluation::Table1Row::dr_dftb,
                            &evaluation::Table1Row::far_snd,  &evaluation::Table1Row::far_dftb,
                            &evaluation::Table1Row::mttd_snd, &evaluation::Table1Row::mttd_dftb};

Outcome table_aggregates() {
  Outcome o;
  const double mean[6] = {74.755, 74.310, 2.626, 1.026, 10.410, 10.286};
  const double median[6] = {81.967, 80.645, 1.578, 0.736, 10.672, 11.604};
  const double sd[6] = {19.581, 17.429, 2.914, 0.730, 4.538, 4.141};
  const double iqr[6] = {24.844, 24.561, 1.465, 1.137, 6.850, 6.800};
  const auto rows = evaluation::embedded_table1();
  int ok = 0;
  for (int c = 0; c < 6; ++c) {
    const auto s = evaluation::summarize(col(rows, kColumns[c]));
    ok += near(s.mean, mean[c], 0.001) + near(s.median, median[c], 0.001) + near(s.std_dev, sd[c], 0.001) +
          near(s.iqr, iqr[c], 0.001);
  }
  o.require(ok == 24, std::to_string(ok) + "/24 footer values");
  o.note(std::to_string(ok) + "/24 footer values within 0.001");
  return o;
}

std::vector<evaluation::MetricComparison> table_comparisons() {
  const auto rep = evaluation::report_from_table1(evaluation::embedded_table1());
  return evaluation::compare_detectors(rep, 0, 1);
}

Outcome table_differences() {
  Outcome o;
  const auto cmp = table_comparisons();
  const double mean[3] = {-0.445, -1.600, -0.124}, median[3] = {-3.278, -0.361, 0.036};
  for (int i = 0; i < 3; ++i) {
    o.require(cmp[i].mean_diff && near(*cmp[i].mean_diff, mean[i], 0.001), cmp[i].metric + " mean");
    o.require(cmp[i].median_diff && near(*cmp[i].median_diff, median[i], 0.001), cmp[i].metric + " median");
    o.note(cmp[i].metric + fmt(" %.3f", cmp[i].mean_diff.value_or(NAN)) +
           fmt("/%.3f", cmp[i].median_diff.value_or(NAN)));
  }
  return o;
}

double binomial_two_sided(int n, int s) {
  // Exact enumeration with integer binomial coefficients.
  auto choose = [](int n, int k) {
    double c = 1;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
  };
  double lo = 0, hi = 0;
  for (int i = 0; i <= s; ++i) lo += choose(n, i);
  for (int i = s; i <= n; ++i) hi += choose(n, i);
  return std::min(1.0, 2 * std::min(lo, hi) / std::pow(2.0, n));
}

Outcome table_tests() {
  Outcome o;
  const auto cmp = table_comparisons();
  const double sign_want[2] = {0.077, 0.0127};
  for (int i = 0; i < 2; ++i) {
    const auto& s = cmp[i].sign;
    o.require(s.has_value(), cmp[i].metric + " sign missing");
    if (!s) continue;
    const double oracle = binomial_two_sided(static_cast<int>(s->n_effective), static_cast<int>(s->statistic));
    o.require(near(s->p_value, oracle, 1e-12), cmp[i].metric + " sign vs enumeration");
    o.require(near(s->p_value, sign_want[i], 0.0005), cmp[i].metric + " sign p");
    o.note(cmp[i].metric + " sign p " + fmt("%.4f", s->p_value) + " n=" + std::to_string(s->n_effective));
  }
  const double w_want[3] = {0.170, 0.004, 0.890}, w_tol[3] = {0.002, 0.002, 0.02};
  for (int i = 0; i < 3; ++i) {
    const auto& w = cmp[i].wilcoxon;
    o.require(w.has_value(), cmp[i].metric + " wilcoxon missing");
    if (!w) continue;
    o.require(near(w->p_value, w_want[i], w_tol[i]), cmp[i].metric + " wilcoxon p");
    o.note(cmp[i].metric + " wilcoxon p " + fmt("%.4f", w->p_value) + " (" + w->method + ")");
  }
  return o;
}

// ---------------------------------------------------------------- level set

Outcome gaussian_level_set() {
  Outcome o;
  std::mt19937_64 rng(20170403);
  std::normal_distribution<double> g;
  std::vector<Point> pts(100000);
  for (auto& p : pts) p = {g(rng), g(rng)};
  const auto model = kde::DensityModel::fit(pts, kde::select_bandwidth(pts, kBandwidth));
  const auto grid = kde::evaluate_grid(model, kde::default_bounds(model), {512, 512});
  const auto region = levelset::build_region(grid, {}, levelset::axis_scales_from_iqr(pts));
  const double want = 0.05 / (2 * pi);
  const double rel = std::abs(region.z_star() - want) / want;
  const double frac = levelset::contained_fraction(region, pts);
  o.require(rel <= 0.03, "z* off by " + fmt("%.2f%%", 100 * rel));
  o.require(near(frac, 0.95, 0.01), "fraction " + fmt("%.4f", frac));
  o.note("z* rel err " + fmt("%.2f%%", 100 * rel) + ", in-region " + fmt("%.4f", frac));
  return o;
}

int winding_number(const Polyline& ring, Point p) {
  int wn = 0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const Point a = ring[i], b = ring[i + 1];
    const double cross = (b.rho - a.rho) * (p.flow - a.flow) - (p.rho - a.rho) * (b.flow - a.flow);
    if (a.flow <= p.flow) {
      if (b.flow > p.flow && cross > 0) ++wn;
    } else if (b.flow <= p.flow && cross < 0) {
      --wn;
    }
  }
  return wn;
}

double segment_distance(const Polyline& ring, Point p) {
  double best = INFINITY;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const Point a = ring[i], b = ring[i + 1];
    const double dx = b.rho - a.rho, dy = b.flow - a.flow;
    const double t = std::clamp(((p.rho - a.rho) * dx + (p.flow - a.flow) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    best = std::min(best, std::hypot(a.rho + t * dx - p.rho, a.flow + t * dy - p.flow));
  }
  return best;
}

// Star-shaped simple polygon with n vertices and irregular radii.
Polyline random_polygon(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> ang(0, 2 * pi), rad(0.2, 1.0), centre(-3, 3);
  const Point c{centre(rng), centre(rng)};
  std::vector<double> a(n);
  for (auto& x : a) x = ang(rng);
  std::sort(a.begin(), a.end());
  Polyline ring;
  for (double t : a) {
    const double r = rad(rng);
    ring.push_back({c.rho + r * std::cos(t), c.flow + r * std::sin(t)});
  }
  ring.push_back(ring.front());
  return ring;
}

Outcome geometry_oracles() {
  Outcome o;
  std::mt19937_64 rng(5);
  int disagree = 0, far_off = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto ring = random_polygon(rng, 5 + k % 30);
    const levelset::TypicalRegion region(1.0, {ring}, 0.05, {});
    std::uniform_real_distribution<double> ux(ring[0].rho - 2, ring[0].rho + 2), uy(ring[0].flow - 2, ring[0].flow + 2);
    const Point p{ux(rng), uy(rng)};
    if (region.contains(p) != (winding_number(ring, p) != 0)) ++disagree;
    if (k < 100) {
      const double exact = segment_distance(ring, p), d = region.distance_to_boundary(p);
      if (d < exact - 1e-12 || d > exact + region.spacing()) ++far_off;
    }
  }
  o.require(disagree == 0, std::to_string(disagree) + " containment disagreements");
  o.require(far_off == 0, std::to_string(far_off) + " distance mismatches");
  o.note("1000 containment cases, 100 distance cases");
  return o;
}

Outcome kde_normalisation() {
  Outcome o;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  double worst_int = 0, worst_sym = 0, worst_tr = 0;
  for (int set = 0; set < 20; ++set) {
    const std::size_t n = 200 + static_cast<std::size_t>(u(rng) * 3000);
    const double sx = 1 + 50 * u(rng), sy = 1 + 2000 * u(rng), corr = 1.6 * u(rng) - 0.8;
    std::normal_distribution<double> g;
    std::vector<Point> pts(n);
    for (auto& p : pts) {
      const double a = g(rng), b = g(rng);
      const bool second = u(rng) < 0.3;
      p = {sx * a + (second ? 4 * sx : 0), sy * (corr * a + std::sqrt(1 - corr * corr) * b)};
    }
    const auto H = kde::select_bandwidth(pts, kBandwidth);
    const auto model = kde::DensityModel::fit(pts, H);
    const auto grid = kde::evaluate_grid(model, kde::default_bounds(model), {256, 256});
    worst_int = std::max(worst_int, std::abs(grid.integral() - 1));

    std::vector<Point> mirrored, shifted;
    const Point shift{3 * sx, -7 * sy};
    for (const auto& p : pts) {
      mirrored.push_back({-p.rho, -p.flow});
      shifted.push_back({p.rho + shift.rho, p.flow + shift.flow});
    }
    const auto mm = kde::DensityModel::fit(mirrored, H), ms = kde::DensityModel::fit(shifted, H);
    for (int q = 0; q < 20; ++q) {
      const Point x{sx * (4 * u(rng) - 2), sy * (4 * u(rng) - 2)};
      const double v = model.evaluate(x);
      const double scale = std::max(v, model.normalizer());
      worst_sym = std::max(worst_sym, std::abs(mm.evaluate({-x.rho, -x.flow}) - v) / scale);
      worst_tr = std::max(worst_tr, std::abs(ms.evaluate({x.rho + shift.rho, x.flow + shift.flow}) - v) / scale);
    }
  }
  o.require(worst_int <= 0.01, "integral off by " + fmt("%.4g", worst_int));
  o.require(worst_sym <= 1e-9, "symmetry error " + fmt("%.3g", worst_sym));
  o.require(worst_tr <= 1e-9, "translation error " + fmt("%.3g", worst_tr));
  o.note("max |integral-1| " + fmt("%.2e", worst_int) + ", symmetry " + fmt("%.1e", worst_sym) +
         ", translation " + fmt("%.1e", worst_tr));
  return o;
}

// ---------------------------------------------------------------- synthetic

std::vector<ingest::TrafficSample> window(const std::vector<ingest::TrafficSample>& s, Minute from, Minute to) {
  std::vector<ingest::TrafficSample> out;
  for (const auto& x : s)
    if (x.timestamp >= from && x.timestamp < to) out.push_back(x);
  return out;
}

std::vector<ingest::EventLabel> labels_in(const std::vector<ingest::EventLabel>& l, Minute from, Minute to) {
  std::vector<ingest::EventLabel> out;
  for (const auto& x : l)
    if (x.start >= from && x.start < to) out.push_back(x);
  return out;
}

Outcome stability() {
  Outcome o;
  simgen::ScenarioConfig cfg;
  cfg.weeks = 9;
  cfg.seed = 42;
  const auto sc = simgen::generate(cfg);
  std::vector<levelset::TypicalRegion> regions;
  for (int w = 0; w < 3; ++w) {
    const auto part = window(sc.samples, cfg.origin + minutes(w * 3 * 10080), cfg.origin + minutes((w + 1) * 3 * 10080));
    regions.push_back(cli::fit_region(part, 0.05, kBandwidth).region);
  }
  double r0 = INFINITY, r1 = -INFINITY, f0 = INFINITY, f1 = -INFINITY;
  for (const auto& r : regions)
    for (const auto& ring : r.rings())
      for (const auto& p : ring) {
        r0 = std::min(r0, p.rho), r1 = std::max(r1, p.rho);
        f0 = std::min(f0, p.flow), f1 = std::max(f1, p.flow);
      }
  constexpr int kN = 400;
  std::vector<std::vector<char>> in(3, std::vector<char>(kN * kN));
  for (int r = 0; r < 3; ++r)
    for (int j = 0; j < kN; ++j)
      for (int i = 0; i < kN; ++i)
        in[r][j * kN + i] = regions[r].contains({r0 + (i + 0.5) * (r1 - r0) / kN, f0 + (j + 0.5) * (f1 - f0) / kN});
  double worst = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      std::size_t uni = 0, sym = 0;
      for (int k = 0; k < kN * kN; ++k) {
        uni += in[a][k] || in[b][k];
        sym += in[a][k] != in[b][k];
      }
      worst = std::max(worst, static_cast<double>(sym) / static_cast<double>(uni));
    }
  o.require(worst <= 0.15, "symmetric difference ratio " + fmt("%.3f", worst));
  o.note("worst pairwise symmetric difference / union " + fmt("%.3f", worst));
  return o;
}

struct Comparison {
  evaluation::Metrics dftb, snd;
  double dftb_param = 0, snd_param = 0;
};

// Calibrate on weeks 1-3, score on weeks 4-6.
Comparison train_and_test(const simgen::ScenarioConfig& cfg) {
  const auto sc = simgen::generate(cfg);
  const Minute split = cfg.origin + minutes(3 * 10080), stop = cfg.origin + minutes(6 * 10080);
  const auto train = window(sc.samples, cfg.origin, split), test = window(sc.samples, split, stop);
  const auto train_l = labels_in(sc.labels, cfg.origin, split), test_l = labels_in(sc.labels, split, stop);

  Comparison c;
  const auto fitted = cli::fit_region(train, 0.05, kBandwidth);
  const auto cal = evaluation::calibrate_dftb(train, train_l, fitted.region);
  c.dftb_param = cal.best;
  const auto run = detector::track(test, fitted.region, detector::DetectorConfig::severity(cal.best));
  c.dftb = evaluation::score(detector::flag_intervals(run.flags), test_l, run.applications);

  const auto profile = baselines::snd_fit(train);
  const auto scal = evaluation::calibrate_snd(train, train_l, profile);
  c.snd_param = scal.best;
  const auto alarms = baselines::snd_detect(test, profile, scal.best);
  c.snd = evaluation::score(alarms.alarms, test_l, alarms.applications);
  return c;
}

std::string describe(const char* name, const evaluation::Metrics& m) {
  return std::string(name) + " DR " + fmt("%.1f", m.dr) + " FAR " + fmt("%.3f", m.far) + " MTTD " +
         fmt("%.2f", m.mttd.value_or(NAN)) + " PI " + fmt("%.3g", m.pi.value_or(NAN));
}

Outcome end_to_end() {
  Outcome o;
  simgen::ScenarioConfig cfg;
  cfg.weeks = 6;
  cfg.seed = 8;
  cfg.incident_plan = simgen::plan_incidents(cfg, 20, 8);
  const auto c = train_and_test(cfg);
  o.require(c.dftb.dr >= 90, "DFTB DR");
  o.require(c.dftb.far <= 2, "DFTB FAR");
  o.require(c.dftb.mttd && *c.dftb.mttd <= 10, "DFTB MTTD");
  if (c.dftb.pi && c.snd.pi) {
    const double a = *c.dftb.pi, b = *c.snd.pi;
    const bool bracket = (a == 0 && b == 0) || (a > 0 && b > 0 && b <= 5 * a && a <= 5 * b);
    o.require(bracket, "SND PI outside 5x of DFTB PI");
  } else {
    o.require(false, "PI undefined");
  }
  o.note(describe("DFTB", c.dftb) + fmt(" (severity %.2f)", c.dftb_param));
  o.note(describe("SND", c.snd) + fmt(" (c %.1f)", c.snd_param));
  return o;
}

Outcome bimodal() {
  Outcome o;
  simgen::ScenarioConfig cfg;
  cfg.weeks = 6;
  cfg.seed = 9;
  cfg.bimodal_bottleneck = simgen::BimodalBottleneck{};
  cfg.incident_plan = simgen::plan_incidents(cfg, 20, 9);
  const auto c = train_and_test(cfg);
  o.require(c.dftb.far <= 0.5 * c.snd.far, "DFTB FAR not at most half of SND FAR");
  o.note(describe("DFTB", c.dftb) + fmt(" (severity %.2f)", c.dftb_param));
  o.note(describe("SND", c.snd) + fmt(" (c %.1f)", c.snd_param));
  return o;
}

// ---------------------------------------------------------------- baselines

std::vector<FlagInterval> replay(const std::vector<Minute>& t, const std::vector<char>& low, int k) {
  std::vector<FlagInterval> out;
  std::size_t i = 0;
  while (i < t.size()) {
    if (!low[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < t.size() && low[j + 1] && t[j + 1] - t[j] == minutes(1)) ++j;
    if (j - i + 1 >= static_cast<std::size_t>(k)) out.push_back({t[i], t[j]});
    i = j + 1;
  }
  return out;
}

Outcome baseline_replay() {
  Outcome o;
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g;
  const Minute origin = parse_timestamp("2017-04-03T00:00:00Z");

  baselines::SndProfile profile;
  for (auto& b : profile.bins) {
    const double med = 50 + 50 * u(rng);
    b = {20, med, med, 3 + 10 * u(rng), 3 + 15 * u(rng), 2 + 5 * u(rng), u(rng) > 0.03};
  }
  const baselines::McMasterParams mp{300, 90, -0.4, 45, 2600};
  int snd_bad = 0, mc_bad = 0;
  for (int stream = 0; stream < 1000; ++stream) {
    std::vector<ingest::TrafficSample> s;
    std::vector<Minute> t;
    std::vector<char> low_snd, low_mc;
    const double c = 3 * u(rng);
    const int persistence = 1 + stream % 5;
    int m = static_cast<int>(u(rng) * 10080);
    double v = 80;
    for (int k = 0; k < 400; ++k) {
      m += u(rng) < 0.02 ? 2 + static_cast<int>(u(rng) * 3) : 1;
      v = std::clamp(v + 6 * g(rng), 3.0, 130.0);
      ingest::TrafficSample x;
      x.timestamp = origin + minutes(m);
      if (u(rng) > 0.02) {
        x.speed_kmh = v;
        x.flow_vph = std::clamp(3000 + 800 * g(rng), 50.0, 5000.0);
        x.density = *x.flow_vph / v;
      }
      const auto thr = baselines::snd_threshold(profile, baselines::weekly_bin(x.timestamp, minutes(0)), c);
      t.push_back(x.timestamp);
      low_snd.push_back(x.speed_kmh && thr && *x.speed_kmh < *thr);
      low_mc.push_back(x.has_density() &&
                       baselines::mcmaster_classify(x.point(), mp) == baselines::TrafficState::congested);
      s.push_back(std::move(x));
    }
    snd_bad += baselines::snd_detect(s, profile, c, baselines::SndVariant::median_iqr, persistence).alarms !=
               replay(t, low_snd, persistence);
    mc_bad += baselines::mcmaster_detect(s, mp, persistence).alarms != replay(t, low_mc, persistence);
  }
  o.require(snd_bad == 0, std::to_string(snd_bad) + " SND mismatches");
  o.require(mc_bad == 0, std::to_string(mc_bad) + " McMaster mismatches");
  const double pi_east = evaluation::performance_index(80.392, 0.937, 5.707);
  o.require(near(pi_east, 0.01220, 0.0001), "PI " + fmt("%.5f", pi_east));
  o.note("1000 streams each; PI " + fmt("%.5f", pi_east));
  return o;
}

} // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s; // 0 for none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "table aggregates", 1.0, table_aggregates},
      {2, "table mean/median differences", 0, table_differences},
      {3, "table paired tests", 0, table_tests},
      {4, "gaussian level set", 30.0, gaussian_level_set},
      {5, "geometry oracles", 0, geometry_oracles},
      {6, "kde normalisation", 0, kde_normalisation},
      {7, "region stability", 0, stability},
      {8, "end-to-end synthetic detection", 300.0, end_to_end},
      {9, "bimodal false alarms", 0, bimodal},
      {10, "baseline replay and PI", 0, baseline_replay},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs > c.limit_s) o.require(false, "runtime over " + fmt("%.0f s", c.limit_s));
    failed += !o.pass;
    std::printf("[%s] criterion %2d: %s (%.2f s) -- %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
