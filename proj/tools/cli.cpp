#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flowsentry/baselines.hpp"
#include "flowsentry/calibration.hpp"
#include "flowsentry/error.hpp"
#include "flowsentry/evaluation.hpp"
#include "flowsentry/simgen.hpp"
#include "plot.hpp"

namespace flowsentry::cli {

namespace {

using nlohmann::ordered_json;

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw Error(ErrorKind::io, std::string(what) + " not found: " + p.string());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_output(const RunConfig& config, const std::string& name, const std::string& content) {
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output directory " + config.out_dir.string());
  const auto path = config.out_dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
  return path;
}

std::vector<ingest::TrafficSample> load_series(const RunConfig& config) {
  if (config.inputs.empty()) throw Error(ErrorKind::invalid_argument, "no input series given");
  std::vector<ingest::TrafficSample> all;
  for (const auto& p : config.inputs) {
    require_file(p, "input series");
    ingest::Diagnostics diag;
    auto part = ingest::read_series(p, &diag);
    for (const auto& w : diag.warnings) std::cerr << "warning: " << p.string() << ": " << w << '\n';
    all.insert(all.end(), part.begin(), part.end());
  }
  if (config.link) {
    std::erase_if(all, [&](const auto& s) { return s.link_id != *config.link; });
    if (all.empty()) throw Error(ErrorKind::invalid_argument, "no samples for link " + *config.link);
  }
  return all;
}

// Every sample of one link, time-ordered.
std::vector<ingest::TrafficSample> single_link(std::vector<ingest::TrafficSample> samples) {
  auto by_link = ingest::split_by_link(samples);
  if (by_link.size() != 1)
    throw Error(ErrorKind::invalid_argument,
                "input holds " + std::to_string(by_link.size()) + " links; select one with --link");
  return std::move(by_link.begin()->second);
}

std::vector<ingest::EventLabel> load_labels(const RunConfig& config) {
  if (!config.events) throw Error(ErrorKind::invalid_argument, "--events is required");
  require_file(*config.events, "events file");
  return ingest::nonrecurrent_filter(ingest::read_events(*config.events));
}

ordered_json metrics_json(const evaluation::Metrics& m) {
  ordered_json j;
  j["dr"] = m.dr;
  j["far"] = m.far;
  j["mttd"] = m.mttd ? ordered_json(*m.mttd) : ordered_json(nullptr);
  j["pi"] = m.pi ? ordered_json(*m.pi) : ordered_json(nullptr);
  return j;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string fmt_opt(const std::optional<double>& v, int digits = 4) { return v ? fmt(*v, digits) : "undefined"; }

kde::DensityModel fit_model(std::span<const ingest::TrafficSample> training, kde::BandwidthMethod method) {
  auto pts = ingest::density_flow_points(training);
  const auto H = kde::select_bandwidth(pts, method);
  return kde::DensityModel::fit(std::move(pts), H);
}

} // namespace

void RunConfig::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::invalid_argument, msg); };
  if (!(alpha > 0.0 && alpha < 1.0)) bad("--alpha must lie in (0, 1), got " + std::to_string(alpha));
  if (threshold && !(*threshold >= 0.0)) bad("--threshold must be nonnegative");
  if (percentile && !(*percentile >= 0.0 && *percentile <= 100.0)) bad("--percentile must lie in [0, 100]");
  if (tz_offset_min < -14 * 60 || tz_offset_min > 14 * 60) bad("--tz-offset must lie within +-840 minutes");
  if (weeks < 1) bad("--weeks must be at least 1");
  if (!(noise >= 0.0)) bad("--noise must be nonnegative");
  if (grid.n_rho < kde::kMinGridResolution || grid.n_flow < kde::kMinGridResolution)
    bad("grid resolution must be at least 128 per axis");
  for (const auto& p : inputs) require_file(p, "input series");
  if (region) require_file(*region, "region file");
  if (events) require_file(*events, "events file");
}

std::optional<kde::GridResolution> grid_from_env() {
  const char* v = std::getenv("FLOWSENTRY_GRID");
  if (!v || !*v) return std::nullopt;
  const std::string s(v);
  try {
    std::size_t pos = 0;
    const auto a = std::stoul(s, &pos);
    if (pos == s.size()) return kde::GridResolution{a, a};
    if (s[pos] != 'x') throw std::invalid_argument(s);
    const auto rest = s.substr(pos + 1);
    const auto b = std::stoul(rest, &pos);
    if (pos != rest.size()) throw std::invalid_argument(s);
    return kde::GridResolution{a, b};
  } catch (const std::exception&) {
    throw Error(ErrorKind::invalid_argument, "FLOWSENTRY_GRID must look like 512 or 512x384, got " + s);
  }
}

FittedRegion fit_region(std::span<const ingest::TrafficSample> training, double alpha,
                        kde::BandwidthMethod method, kde::GridResolution grid) {
  levelset::RegionConfig rc;
  rc.alpha = alpha;
  rc.validate();
  const auto pts = ingest::density_flow_points(training);
  const auto model = fit_model(training, method);
  std::vector<std::string> warnings;
  const auto g = kde::evaluate_grid(model, kde::default_bounds(model), grid, &warnings);
  const auto region = levelset::build_region(g, rc, levelset::axis_scales_from_iqr(pts));
  FittedRegion out{detector::calibrate_normalizer(region, pts), model.bandwidth(), {}, pts.size(), 0.0,
                   std::move(warnings)};
  out.in_region_fraction = levelset::contained_fraction(out.region, pts);

  const auto tracked = detector::track(training, out.region,
                                       detector::DetectorConfig::severity(std::numeric_limits<double>::max()));
  for (const auto& e : tracked.excursions)
    if (e.exit_side == levelset::ExitSide::right) out.training_durations.push_back(e.duration_min);
  return out;
}

std::string region_file_json(const FittedRegion& fitted) {
  auto j = nlohmann::json::parse(fitted.region.to_json());
  j["training_durations"] = fitted.training_durations;
  return j.dump(1) + "\n";
}

RegionFile read_region_file(const fs::path& path) {
  require_file(path, "region file");
  const auto text = slurp(path);
  RegionFile rf{levelset::TypicalRegion::from_json(text), {}};
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.contains("training_durations")) rf.training_durations = j["training_durations"].get<std::vector<long long>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_input, std::string("bad region file: ") + e.what());
  }
  return rf;
}

detector::DetectorConfig detector_config(const RunConfig& config, std::span<const long long> training_durations) {
  detector::DetectorConfig dc;
  if (config.mode == detector::Mode::severity_threshold) {
    if (!config.threshold) throw Error(ErrorKind::invalid_argument, "severity mode needs --threshold");
    dc = detector::DetectorConfig::severity(*config.threshold);
  } else if (config.threshold) {
    dc = detector::DetectorConfig::duration(*config.threshold);
  } else if (config.percentile) {
    dc = detector::DetectorConfig::duration(
        detector::duration_threshold_from_percentile(training_durations, *config.percentile), *config.percentile);
  } else {
    throw Error(ErrorKind::invalid_argument, "duration mode needs --threshold or --percentile");
  }
  dc.validate();
  return dc;
}

int cmd_fit(const RunConfig& config, std::ostream& out) {
  const auto training = single_link(load_series(config));
  const auto fitted = fit_region(training, config.alpha, config.bandwidth, config.grid);
  for (const auto& w : fitted.warnings) std::cerr << "warning: " << w << '\n';
  const auto path = write_output(config, "region.json", region_file_json(fitted));
  const auto& H = fitted.bandwidth;
  out << "link: " << training.front().link_id << '\n'
      << "samples: " << fitted.samples << '\n'
      << "bandwidth: [[" << H.rho_rho << ", " << H.rho_flow << "], [" << H.rho_flow << ", " << H.flow_flow << "]]\n"
      << "z_star: " << fitted.region.z_star() << '\n'
      << "components: " << fitted.region.rings().size() << '\n'
      << "in_region_fraction: " << fmt(fitted.in_region_fraction) << '\n'
      << "severity_normalizer: " << *fitted.region.max_training_distance() << '\n'
      << "training_excursions: " << fitted.training_durations.size() << '\n'
      << "region: " << path.string() << '\n';
  return 0;
}

int cmd_detect(const RunConfig& config, std::ostream& out) {
  if (!config.region) throw Error(ErrorKind::invalid_argument, "--region is required");
  const auto rf = read_region_file(*config.region);
  const auto dc = detector_config(config, rf.training_durations);
  const auto samples = load_series(config);

  std::ostringstream flags, excursions;
  detector::write_flags_csv(flags, {});
  detector::write_excursions_csv(excursions, {});
  std::size_t n_flags = 0, n_exc = 0;
  for (const auto& [link, stream] : ingest::split_by_link(samples)) {
    const auto r = detector::track(stream, rf.region, dc);
    detector::write_flags_csv(flags, r.flags, false);
    std::ostringstream tmp;
    detector::write_excursions_csv(tmp, r.excursions);
    const auto body = tmp.str();
    excursions << body.substr(body.find('\n') + 1);
    n_flags += r.flags.size();
    n_exc += r.excursions.size();
  }
  const auto fpath = write_output(config, "flags.csv", flags.str());
  const auto epath = write_output(config, "excursions.csv", excursions.str());
  out << "mode: " << (dc.mode == detector::Mode::severity_threshold ? "severity" : "duration") << '\n'
      << "threshold: "
      << (dc.mode == detector::Mode::severity_threshold ? dc.severity_threshold : dc.duration_threshold_min) << '\n'
      << "excursions: " << n_exc << '\n'
      << "flags: " << n_flags << '\n'
      << "flags_file: " << fpath.string() << '\n'
      << "excursions_file: " << epath.string() << '\n';
  return 0;
}

int cmd_calibrate(const RunConfig& config, std::ostream& out) {
  const auto stream = single_link(load_series(config));
  const auto labels = ingest::labels_for_link(load_labels(config), stream.front().link_id);
  ordered_json j;
  j["detector"] = config.detector;
  j["link_id"] = stream.front().link_id;

  auto grid_json = [](const auto& result, auto&& param_json) {
    auto arr = ordered_json::array();
    for (const auto& p : result.points) {
      auto e = metrics_json(p.metrics);
      e["param"] = param_json(p.param);
      arr.push_back(std::move(e));
    }
    return arr;
  };

  if (config.detector == "dftb") {
    if (!config.region) throw Error(ErrorKind::invalid_argument, "--region is required for dftb");
    const auto rf = read_region_file(*config.region);
    const auto r = evaluation::calibrate_dftb(stream, labels, rf.region, config.mode);
    j["mode"] = config.mode == detector::Mode::severity_threshold ? "severity" : "duration";
    j["best"] = r.best;
    j["metrics"] = metrics_json(r.metrics);
    j["grid"] = grid_json(r, [](double v) { return ordered_json(v); });
    out << "best_threshold: " << r.best << '\n';
    out << "DR: " << fmt(r.metrics.dr) << "  FAR: " << fmt(r.metrics.far) << "  MTTD: " << fmt_opt(r.metrics.mttd)
        << "  PI: " << fmt_opt(r.metrics.pi, 8) << '\n';
  } else if (config.detector == "snd") {
    const auto profile = baselines::snd_fit(stream, std::chrono::minutes{config.tz_offset_min});
    write_output(config, "snd_profile.json", profile.to_json() + "\n");
    const auto r = evaluation::calibrate_snd(stream, labels, profile);
    j["variant"] = "median_iqr";
    j["best"] = r.best;
    j["metrics"] = metrics_json(r.metrics);
    j["grid"] = grid_json(r, [](double v) { return ordered_json(v); });
    out << "best_c: " << r.best << '\n';
    out << "DR: " << fmt(r.metrics.dr) << "  FAR: " << fmt(r.metrics.far) << "  MTTD: " << fmt_opt(r.metrics.mttd)
        << "  PI: " << fmt_opt(r.metrics.pi, 8) << '\n';
  } else if (config.detector == "mcmaster") {
    const auto r = evaluation::calibrate_mcmaster(stream, labels);
    auto pj = [](const baselines::McMasterParams& p) {
      return ordered_json{{"a", p.a}, {"b", p.b}, {"c", p.c}, {"rho_crit", p.rho_crit}, {"f_crit", p.f_crit}};
    };
    j["best"] = pj(r.best);
    j["metrics"] = metrics_json(r.metrics);
    j["grid"] = grid_json(r, pj);
    out << "best: a=" << r.best.a << " b=" << r.best.b << " c=" << r.best.c << " rho_crit=" << r.best.rho_crit
        << " f_crit=" << r.best.f_crit << '\n';
    out << "DR: " << fmt(r.metrics.dr) << "  FAR: " << fmt(r.metrics.far) << "  MTTD: " << fmt_opt(r.metrics.mttd)
        << "  PI: " << fmt_opt(r.metrics.pi, 8) << '\n';
  } else {
    throw Error(ErrorKind::invalid_argument, "unknown detector '" + config.detector + "' (dftb, snd, mcmaster)");
  }
  const auto path = write_output(config, "calibration_" + config.detector + ".json", j.dump(1) + "\n");
  out << "calibration: " << path.string() << '\n';
  return 0;
}

namespace {

void print_comparisons(std::ostream& out, std::span<const evaluation::MetricComparison> cmp) {
  out << "metric  n  mean_diff  median_diff  wilcoxon_p  sign_p\n";
  for (const auto& c : cmp) {
    out << c.metric << "  " << c.n << "  " << fmt_opt(c.mean_diff, 3) << "  " << fmt_opt(c.median_diff, 3) << "  "
        << (c.wilcoxon ? fmt(c.wilcoxon->p_value, 4) + " (" + c.wilcoxon->method + ")" : std::string("n/a")) << "  "
        << (c.sign ? fmt(c.sign->p_value, 4) : std::string("n/a")) << '\n';
  }
}

} // namespace

int cmd_evaluate(const RunConfig& config, std::ostream& out) {
  evaluation::EvalReport report;
  if (config.table1) {
    report = evaluation::report_from_table1(evaluation::embedded_table1());
  } else {
    const auto samples = load_series(config);
    const auto labels = load_labels(config);
    if (config.flag_files.empty()) throw Error(ErrorKind::invalid_argument, "--flags name=path is required");
    std::vector<std::map<std::string, std::vector<FlagInterval>>> flags;
    for (const auto& spec : config.flag_files) {
      const auto eq = spec.find('=');
      const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
      const fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
      require_file(path, "flag file");
      std::ifstream in(path);
      report.detectors.push_back(name);
      flags.push_back(detector::read_flags_csv(in));
    }
    for (const auto& [link, stream] : ingest::split_by_link(samples)) {
      const auto link_labels = ingest::labels_for_link(labels, link);
      if (link_labels.empty()) {
        std::cerr << "warning: link " << link << " has no labelled events; skipped\n";
        continue;
      }
      std::size_t applications = 0;
      for (const auto& s : stream) applications += s.has_density() ? 1 : 0;
      evaluation::EvalReport::Row row{link, {}};
      for (const auto& f : flags) {
        const auto it = f.find(link);
        const std::vector<FlagInterval> none;
        row.metrics.push_back(evaluation::score(it == f.end() ? none : it->second, link_labels, applications));
      }
      report.rows.push_back(std::move(row));
    }
    if (report.rows.empty())
      throw Error(ErrorKind::undefined_metric, "detection rate undefined: no labelled events on any input link");
  }

  std::ostringstream csv;
  report.write_csv(csv);
  const auto rpath = write_output(config, "report.csv", csv.str());
  std::vector<evaluation::MetricComparison> cmp;
  std::string baseline = report.detectors.front(), candidate = baseline;
  if (report.detectors.size() >= 2) {
    candidate = report.detectors[1];
    cmp = evaluation::compare_detectors(report, 0, 1);
  }
  const auto tpath =
      write_output(config, "tests.json", evaluation::comparisons_to_json(cmp, baseline, candidate) + "\n");
  out << "links: " << report.rows.size() << '\n';
  for (std::size_t d = 0; d < report.detectors.size(); ++d) {
    const auto dr = report.column(d, "dr"), far = report.column(d, "far"), mttd = report.column(d, "mttd");
    double sdr = 0, sfar = 0, smttd = 0;
    for (double v : dr) sdr += v;
    for (double v : far) sfar += v;
    for (double v : mttd) smttd += v;
    out << report.detectors[d] << ": mean DR " << fmt(sdr / dr.size(), 3) << "  mean FAR " << fmt(sfar / far.size(), 3)
        << "  mean MTTD " << (mttd.empty() ? std::string("undefined") : fmt(smttd / mttd.size(), 3)) << '\n';
  }
  if (!cmp.empty()) {
    out << "differences: " << candidate << " - " << baseline << '\n';
    print_comparisons(out, cmp);
  }
  out << "report: " << rpath.string() << '\n' << "tests: " << tpath.string() << '\n';
  return 0;
}

int cmd_simulate(const RunConfig& config, std::ostream& out) {
  simgen::ScenarioConfig sc;
  sc.seed = config.seed;
  sc.weeks = config.weeks;
  sc.noise_scale = config.noise;
  if (config.link) sc.link_id = *config.link;
  if (config.bimodal) sc.bimodal_bottleneck = simgen::BimodalBottleneck{};
  if (config.incidents > 0) sc.incident_plan = simgen::plan_incidents(sc, config.incidents, config.seed + 1);
  const auto scenario = simgen::generate(sc);
  std::ostringstream series, events;
  ingest::write_series(series, scenario.samples);
  ingest::write_events(events, scenario.labels);
  const auto spath = write_output(config, "series.csv", series.str());
  const auto epath = write_output(config, "events.csv", events.str());
  out << "samples: " << scenario.samples.size() << '\n'
      << "incidents: " << scenario.labels.size() << '\n'
      << "series: " << spath.string() << '\n'
      << "events: " << epath.string() << '\n';
  return 0;
}

int cmd_export(const RunConfig& config, std::ostream& out) {
  fs::path path;
  if (config.what == "table1") {
    path = write_output(config, "table1.csv", std::string(evaluation::table1_csv()));
  } else if (config.what == "grid") {
    const auto training = single_link(load_series(config));
    const auto model = fit_model(training, config.bandwidth);
    std::vector<std::string> warnings;
    const auto g = kde::evaluate_grid(model, kde::default_bounds(model), config.grid, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    path = write_output(config, "grid.json", g.to_json() + "\n");
  } else if (config.what == "snd-profile") {
    const auto training = single_link(load_series(config));
    const auto profile = baselines::snd_fit(training, std::chrono::minutes{config.tz_offset_min});
    path = write_output(config, "snd_profile.json", profile.to_json() + "\n");
  } else {
    throw Error(ErrorKind::invalid_argument, "unknown export '" + config.what + "' (grid, snd-profile, table1)");
  }
  out << "wrote: " << path.string() << '\n';
  return 0;
}

int cmd_plot(const RunConfig& config, std::ostream& out) {
  if (!config.region) throw Error(ErrorKind::invalid_argument, "--region is required");
  const auto rf = read_region_file(*config.region);
  const auto stream = single_link(load_series(config));
  const auto pts = ingest::density_flow_points(stream);

  std::vector<FlagInterval> flags;
  if (!config.flag_files.empty()) {
    const auto& spec = config.flag_files.front();
    const auto eq = spec.find('=');
    const fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
    require_file(path, "flag file");
    std::ifstream in(path);
    const auto all = detector::read_flags_csv(in);
    if (auto it = all.find(stream.front().link_id); it != all.end()) flags = it->second;
  }

  const auto tracked = detector::track(stream, rf.region,
                                       detector::DetectorConfig::severity(std::numeric_limits<double>::max()));
  std::vector<long long> durations;
  for (const auto& e : tracked.excursions)
    if (e.exit_side == levelset::ExitSide::right) durations.push_back(e.duration_min);
  const auto hist = plot::duration_histogram(durations);

  const auto p1 = write_output(config, "scatter.svg", plot::scatter_svg(pts, &rf.region));
  const auto p2 = write_output(config, "travel_time.svg", plot::travel_time_svg(stream, flags));
  const auto p3 = write_output(config, "durations.svg", plot::histogram_svg(hist, "Excursion durations"));
  out << "polygons: " << rf.region.rings().size() << '\n'
      << "flag_markers: " << flags.size() << '\n'
      << "excursions: " << durations.size() << '\n'
      << "scatter: " << p1.string() << '\n'
      << "travel_time: " << p2.string() << '\n'
      << "durations: " << p3.string() << '\n';
  return 0;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
    const auto& s = config.subcommand;
    if (s == "fit") return cmd_fit(config, out);
    if (s == "detect") return cmd_detect(config, out);
    if (s == "calibrate") return cmd_calibrate(config, out);
    if (s == "evaluate") return cmd_evaluate(config, out);
    if (s == "simulate") return cmd_simulate(config, out);
    if (s == "export") return cmd_export(config, out);
    if (s == "plot") return cmd_plot(config, out);
    throw Error(ErrorKind::invalid_argument, "unknown subcommand '" + s + "'");
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
    case ErrorKind::io:
    case ErrorKind::malformed_input:
    case ErrorKind::invalid_argument: return 2;
    default: return 1;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Typical-behaviour incident detection on link traffic data"};
  app.require_subcommand(1);
  RunConfig cfg;
  if (auto g = grid_from_env()) cfg.grid = *g;

  std::string mode = "severity", bandwidth = "plug-in";
  std::optional<std::size_t> grid_n;
  std::vector<std::string> inputs;

  auto common = [&](CLI::App* sub) {
    sub->add_option("inputs", inputs, "Input series CSV files");
    sub->add_option("--out", cfg.out_dir, "Output directory");
    sub->add_option("--link", cfg.link, "Restrict input to one link id");
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--tz-offset", cfg.tz_offset_min, "Local time offset from UTC in minutes (SND binning)");
  };
  auto region_opts = [&](CLI::App* sub) {
    sub->add_option("--region", cfg.region, "Region JSON written by fit");
  };
  auto detector_opts = [&](CLI::App* sub) {
    sub->add_option("--mode", mode, "Detector mode")->check(CLI::IsMember({"duration", "severity"}));
    sub->add_option("--threshold", cfg.threshold, "Severity threshold, or minutes in duration mode");
    sub->add_option("--percentile", cfg.percentile, "Duration threshold as a percentile of training excursions");
  };
  auto kde_opts = [&](CLI::App* sub) {
    sub->add_option("--alpha", cfg.alpha, "Probability mass outside the typical region");
    sub->add_option("--bandwidth", bandwidth, "Bandwidth selector")
        ->check(CLI::IsMember({"plug-in", "normal-reference"}))
        ->capture_default_str();
    sub->add_option("--grid", grid_n, "Grid points per axis (overrides FLOWSENTRY_GRID)");
  };

  auto* fit = app.add_subcommand("fit", "Fit the typical region of one link");
  common(fit);
  kde_opts(fit);
  auto* det = app.add_subcommand("detect", "Flag excursions from a fitted region");
  common(det);
  region_opts(det);
  detector_opts(det);
  auto* cal = app.add_subcommand("calibrate", "Choose detector parameters by minimising PI");
  common(cal);
  region_opts(cal);
  detector_opts(cal);
  cal->add_option("--events", cfg.events, "Event label CSV")->required();
  cal->add_option("--detector", cfg.detector, "dftb, snd or mcmaster")
      ->check(CLI::IsMember({"dftb", "snd", "mcmaster"}));
  auto* ev = app.add_subcommand("evaluate", "Score flags against labels and compare detectors");
  common(ev);
  ev->add_option("--events", cfg.events, "Event label CSV");
  ev->add_option("--flags", cfg.flag_files, "Flag files as name=path, baseline first");
  ev->add_flag("--table1", cfg.table1, "Use the embedded 17-link comparison fixture");
  auto* sim = app.add_subcommand("simulate", "Generate a labelled synthetic link");
  common(sim);
  sim->add_option("--weeks", cfg.weeks, "Weeks of data");
  sim->add_option("--incidents", cfg.incidents, "Number of injected incidents");
  sim->add_option("--noise", cfg.noise, "Lognormal speed noise sigma");
  sim->add_flag("--bimodal", cfg.bimodal, "Add a recurrent unlabelled slow regime");
  auto* exp = app.add_subcommand("export", "Write a density grid, SND profile or the fixture table");
  common(exp);
  kde_opts(exp);
  exp->add_option("--what", cfg.what, "grid, snd-profile or table1")
      ->check(CLI::IsMember({"grid", "snd-profile", "table1"}));
  auto* plt = app.add_subcommand("plot", "Write SVG figures");
  common(plt);
  region_opts(plt);
  plt->add_option("--flags", cfg.flag_files, "Flag file for travel-time markers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err); // --help
    err << "error: " << e.what() << '\n';
    return 2;
  }
  for (auto* sub : app.get_subcommands()) cfg.subcommand = sub->get_name();
  for (const auto& i : inputs) cfg.inputs.emplace_back(i);
  cfg.mode = mode == "duration" ? detector::Mode::duration_threshold : detector::Mode::severity_threshold;
  cfg.bandwidth = bandwidth == "plug-in" ? kde::BandwidthMethod::plug_in : kde::BandwidthMethod::normal_reference;
  if (grid_n) cfg.grid = {*grid_n, *grid_n};
  return run(cfg, out, err);
}

} // namespace flowsentry::cli
