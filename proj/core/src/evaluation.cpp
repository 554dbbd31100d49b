#include "flowsentry/evaluation.hpp"

#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "flowsentry/stats.hpp"
#include "text.hpp"

namespace flowsentry::evaluation {

namespace fixture {
extern const char* const kTable1Csv; // generated at configure time
}

namespace {

bool overlaps(const FlagInterval& f, const ingest::EventLabel& l, std::chrono::minutes grace) {
  return f.start <= l.end + grace && f.end >= l.start;
}

std::vector<FlagInterval> merged(std::vector<FlagInterval> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  std::vector<FlagInterval> out;
  for (const auto& f : v) {
    if (f.end < f.start) throw Error(ErrorKind::invalid_argument, "interval ends before it starts");
    if (!out.empty() && f.start <= out.back().end + std::chrono::minutes{1})
      out.back().end = std::max(out.back().end, f.end);
    else
      out.push_back(f);
  }
  return out;
}

void require_same_length(std::span<const double> x1, std::span<const double> x2) {
  if (x1.size() != x2.size()) throw Error(ErrorKind::invalid_argument, "paired samples differ in length");
}

std::vector<double> differences(std::span<const double> x1, std::span<const double> x2) {
  require_same_length(x1, x2);
  std::vector<double> d(x1.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x2[i] - x1[i];
  return d;
}

// Differences that are zero up to rounding of the inputs.
bool is_zero(double d, double a, double b) {
  return std::abs(d) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1.0});
}

bool same_magnitude(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}

} // namespace

double detection_rate(std::span<const FlagInterval> flags, std::span<const ingest::EventLabel> labels,
                      std::chrono::minutes grace) {
  if (labels.empty()) throw Error(ErrorKind::undefined_metric, "detection rate undefined: no labelled events");
  std::size_t detected = 0;
  for (const auto& l : labels)
    if (std::any_of(flags.begin(), flags.end(), [&](const auto& f) { return overlaps(f, l, grace); }))
      ++detected;
  return 100.0 * static_cast<double>(detected) / static_cast<double>(labels.size());
}

double false_alarm_rate(std::span<const FlagInterval> flags, std::span<const ingest::EventLabel> labels,
                        std::size_t n_applications) {
  if (n_applications == 0) throw Error(ErrorKind::undefined_metric, "false alarm rate undefined: zero applications");
  const auto f = merged({flags.begin(), flags.end()});
  std::vector<FlagInterval> lab;
  for (const auto& l : labels) lab.push_back({l.start, l.end});
  const auto L = merged(std::move(lab));

  long long flagged = 0, inside = 0;
  for (const auto& x : f) flagged += x.minutes();
  std::size_t j = 0;
  for (const auto& x : f) {
    while (j < L.size() && L[j].end < x.start) ++j;
    for (std::size_t k = j; k < L.size() && L[k].start <= x.end; ++k) {
      const auto s = std::max(x.start, L[k].start);
      const auto e = std::min(x.end, L[k].end);
      if (s <= e) inside += minutes_between(s, e) + 1;
    }
  }
  return 100.0 * static_cast<double>(flagged - inside) / static_cast<double>(n_applications);
}

double mean_time_to_detect(std::span<const FlagInterval> flags, std::span<const ingest::EventLabel> labels,
                           std::chrono::minutes grace) {
  double total = 0.0;
  std::size_t detected = 0;
  for (const auto& l : labels) {
    std::optional<Minute> first;
    for (const auto& f : flags)
      if (overlaps(f, l, grace) && (!first || f.start < *first)) first = f.start;
    if (!first) continue;
    total += static_cast<double>(std::max(0LL, minutes_between(l.start, *first)));
    ++detected;
  }
  if (detected == 0) throw Error(ErrorKind::undefined_metric, "mean time to detect undefined: nothing detected");
  return total / static_cast<double>(detected);
}

Metrics score(std::span<const FlagInterval> flags, std::span<const ingest::EventLabel> labels,
              std::size_t n_applications, std::chrono::minutes grace) {
  Metrics m;
  m.dr = detection_rate(flags, labels, grace);
  m.far = false_alarm_rate(flags, labels, n_applications);
  if (m.dr > 0.0) {
    m.mttd = mean_time_to_detect(flags, labels, grace);
    m.pi = performance_index(m.dr, m.far, *m.mttd);
  }
  return m;
}

std::vector<double> linear_grid(double start, double stop, double step) {
  if (!(step > 0.0) || stop < start) throw Error(ErrorKind::invalid_argument, "bad grid specification");
  std::vector<double> out;
  for (long long k = 0;; ++k) {
    const double v = start + static_cast<double>(k) * step;
    if (v > stop + step * 1e-3) break;
    out.push_back(v);
  }
  return out;
}

std::string_view to_string(PairedTest t) {
  switch (t) {
  case PairedTest::paired_t: return "paired_t";
  case PairedTest::wilcoxon_signed_rank: return "wilcoxon_signed_rank";
  case PairedTest::sign: return "sign";
  }
  return "?";
}

PairedTestResult paired_t_test(std::span<const double> x1, std::span<const double> x2, double mu0) {
  const auto d = differences(x1, x2);
  if (d.size() < 2) throw Error(ErrorKind::insufficient_data, "paired t-test needs at least 2 pairs");
  const double sd = stats::std_dev(d);
  if (!(sd > 0.0)) throw Error(ErrorKind::degenerate_data, "paired differences have zero variance");
  const double n = static_cast<double>(d.size());
  const double t = (stats::mean(d) - mu0) / (sd / std::sqrt(n));
  boost::math::students_t dist(n - 1.0);
  PairedTestResult r;
  r.test = PairedTest::paired_t;
  r.statistic = t;
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  r.n_effective = d.size();
  r.method = "t";
  return r;
}

PairedTestResult wilcoxon_signed_rank(std::span<const double> x1, std::span<const double> x2,
                                      WilcoxonMethod method) {
  require_same_length(x1, x2);
  std::vector<double> d;
  bool dropped_zero = false;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const double di = x2[i] - x1[i];
    if (is_zero(di, x1[i], x2[i]))
      dropped_zero = true;
    else
      d.push_back(di);
  }
  if (d.empty()) throw Error(ErrorKind::degenerate_data, "all paired differences are zero");
  const std::size_t n = d.size();
  if (n < kWilcoxonMinN) throw Error(ErrorKind::insufficient_data, "Wilcoxon test needs at least 6 nonzero differences");

  // Average ranks of |d|, kept doubled so they stay integral.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<long long> rank2(n);
  double tie_term = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && same_magnitude(std::abs(d[order[j]]), std::abs(d[order[i]]))) ++j;
    const long long r2 = static_cast<long long>(i + 1 + j); // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) rank2[order[k]] = r2;
    const double t = static_cast<double>(j - i);
    if (j - i > 1) ties = true;
    tie_term += t * t * t - t;
    i = j;
  }

  long long tplus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) tplus2 += rank2[i];
  }
  PairedTestResult r;
  r.test = PairedTest::wilcoxon_signed_rank;
  r.statistic = static_cast<double>(2 * tplus2 - total2) / 2.0;
  r.n_effective = n;

  const bool exact = method == WilcoxonMethod::exact ||
                     (method == WilcoxonMethod::automatic && n <= kWilcoxonExactMaxN && !ties && !dropped_zero);
  if (exact) {
    // Null distribution of the doubled positive-rank sum given these ranks.
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    long long reach = 0;
    for (const auto r2 : rank2) {
      reach += r2;
      for (long long s = reach; s >= r2; --s) count[s] += count[s - r2];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0.0, upper = 0.0;
    for (long long s = 0; s <= total2; ++s) {
      if (s <= tplus2) lower += count[s];
      if (s >= tplus2) upper += count[s];
    }
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    r.method = "exact";
  } else {
    const double nn = static_cast<double>(n);
    const double tplus = static_cast<double>(tplus2) / 2.0;
    const double z0 = tplus - nn * (nn + 1.0) / 4.0;
    const double sigma = std::sqrt(nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0);
    if (!(sigma > 0.0)) throw Error(ErrorKind::degenerate_data, "Wilcoxon variance is zero");
    const double correction = z0 > 0 ? 0.5 : (z0 < 0 ? -0.5 : 0.0);
    const double z = (z0 - correction) / sigma;
    boost::math::normal std_normal;
    r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(std_normal, std::abs(z))));
    r.method = "normal";
  }
  return r;
}

PairedTestResult sign_test(std::span<const double> x1, std::span<const double> x2) {
  require_same_length(x1, x2);
  std::size_t pos = 0, n = 0;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const double di = x2[i] - x1[i];
    if (is_zero(di, x1[i], x2[i])) continue;
    ++n;
    if (di > 0) ++pos;
  }
  if (n == 0) throw Error(ErrorKind::degenerate_data, "sign test: every pair is tied");
  boost::math::binomial dist(static_cast<double>(n), 0.5);
  const double s = static_cast<double>(pos);
  const double lower = boost::math::cdf(dist, s);
  const double upper = pos == 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, s - 1.0));
  PairedTestResult r;
  r.test = PairedTest::sign;
  r.statistic = s;
  r.p_value = std::min(1.0, 2.0 * std::min(lower, upper));
  r.n_effective = n;
  r.method = "exact";
  return r;
}

Summary summarize(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorKind::insufficient_data, "summary needs at least 2 values");
  return {stats::mean(values), stats::median(values), stats::std_dev(values), stats::iqr(values)};
}

std::vector<Table1Row> parse_table1(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::malformed_input, "table1: empty input");
  const auto header = detail::split_csv(detail::trim(line));
  const std::vector<std::string> expected{"location", "length_km", "dr_snd",   "dr_dftb",
                                          "far_snd",  "far_dftb",  "mttd_snd", "mttd_dftb"};
  if (!std::equal(header.begin(), header.end(), expected.begin(), expected.end())) throw Error(ErrorKind::malformed_input, "table1: unexpected header");
  std::vector<Table1Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto f = detail::split_csv(t);
    if (f.size() != expected.size())
      throw Error(ErrorKind::malformed_input, "table1 line " + std::to_string(lineno) + ": wrong field count");
    auto num = [&](std::size_t k) {
      const auto v = detail::parse_double(f[k]);
      if (!v) throw Error(ErrorKind::malformed_input, "table1 line " + std::to_string(lineno) + ": bad number");
      return *v;
    };
    rows.push_back({std::string(f[0]), num(1), num(2), num(3), num(4), num(5), num(6), num(7)});
  }
  return rows;
}

std::string_view table1_csv() { return fixture::kTable1Csv; }

std::vector<Table1Row> embedded_table1() {
  std::istringstream in{std::string(table1_csv())};
  return parse_table1(in);
}

std::vector<double> EvalReport::column(std::size_t detector, std::string_view metric) const {
  if (detector >= detectors.size()) throw Error(ErrorKind::invalid_argument, "detector index out of range");
  std::vector<double> out;
  for (const auto& r : rows) {
    const auto& m = r.metrics.at(detector);
    if (metric == "dr") out.push_back(m.dr);
    else if (metric == "far") out.push_back(m.far);
    else if (metric == "mttd") { if (m.mttd) out.push_back(*m.mttd); }
    else if (metric == "pi") { if (m.pi) out.push_back(*m.pi); }
    else throw Error(ErrorKind::invalid_argument, "unknown metric " + std::string(metric));
  }
  return out;
}

void EvalReport::write_csv(std::ostream& out) const {
  static const char* metrics[] = {"dr", "far", "mttd", "pi"};
  out << "link_id";
  for (const char* m : metrics)
    for (const auto& d : detectors) out << ',' << m << '_' << d;
  out << '\n';
  auto cell = [&](std::optional<double> v) {
    out << ',';
    if (v) out << detail::format_double(*v);
  };
  for (const auto& r : rows) {
    out << r.link_id;
    for (std::size_t d = 0; d < detectors.size(); ++d) cell(r.metrics.at(d).dr);
    for (std::size_t d = 0; d < detectors.size(); ++d) cell(r.metrics.at(d).far);
    for (std::size_t d = 0; d < detectors.size(); ++d) cell(r.metrics.at(d).mttd);
    for (std::size_t d = 0; d < detectors.size(); ++d) cell(r.metrics.at(d).pi);
    out << '\n';
  }
  static const char* agg[] = {"mean", "median", "std_dev", "iqr"};
  for (int a = 0; a < 4; ++a) {
    out << agg[a];
    for (const char* m : metrics)
      for (std::size_t d = 0; d < detectors.size(); ++d) {
        const auto col = column(d, m);
        std::optional<double> v;
        if (col.size() >= 2) {
          const auto s = summarize(col);
          v = a == 0 ? s.mean : a == 1 ? s.median : a == 2 ? s.std_dev : s.iqr;
        }
        cell(v);
      }
    out << '\n';
  }
}

EvalReport report_from_table1(std::span<const Table1Row> rows) {
  EvalReport rep;
  rep.detectors = {"snd", "dftb"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& t = rows[i];
    auto make = [](double dr, double far, double mttd) {
      return Metrics{dr, far, mttd, performance_index(dr, far, mttd)};
    };
    EvalReport::Row row;
    row.link_id = t.location + " " + detail::format_double(t.length_km) + "km #" + std::to_string(i + 1);
    row.metrics = {make(t.dr_snd, t.far_snd, t.mttd_snd), make(t.dr_dftb, t.far_dftb, t.mttd_dftb)};
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

MetricComparison compare(std::string metric, std::span<const double> x1, std::span<const double> x2,
                         WilcoxonMethod method) {
  MetricComparison c;
  c.metric = std::move(metric);
  const auto d = differences(x1, x2);
  c.n = d.size();
  if (!d.empty()) {
    c.mean_diff = stats::mean(d);
    c.median_diff = stats::median(d);
  }
  auto attempt = [&](const char* name, auto&& fn, std::optional<PairedTestResult>& slot) {
    try {
      slot = fn();
    } catch (const Error& e) {
      const char* why = e.kind() == ErrorKind::insufficient_data ? "insufficient_n" : "degenerate";
      c.notes.push_back(std::string(name) + ": " + why);
    }
  };
  attempt("paired_t", [&] { return paired_t_test(x1, x2); }, c.paired_t);
  attempt("wilcoxon", [&] { return wilcoxon_signed_rank(x1, x2, method); }, c.wilcoxon);
  attempt("sign", [&] { return sign_test(x1, x2); }, c.sign);
  return c;
}

std::vector<MetricComparison> compare_detectors(const EvalReport& report, std::size_t a, std::size_t b,
                                                WilcoxonMethod method) {
  std::vector<MetricComparison> out;
  for (const char* metric : {"dr", "far", "mttd"}) {
    std::vector<double> x1, x2;
    for (const auto& r : report.rows) {
      const auto& ma = r.metrics.at(a);
      const auto& mb = r.metrics.at(b);
      std::string_view m = metric;
      if (m == "dr") { x1.push_back(ma.dr); x2.push_back(mb.dr); }
      else if (m == "far") { x1.push_back(ma.far); x2.push_back(mb.far); }
      else if (ma.mttd && mb.mttd) { x1.push_back(*ma.mttd); x2.push_back(*mb.mttd); }
    }
    out.push_back(compare(metric, x1, x2, method));
  }
  return out;
}

std::string comparisons_to_json(std::span<const MetricComparison> comparisons, const std::string& baseline,
                                const std::string& candidate) {
  nlohmann::ordered_json j;
  j["baseline"] = baseline;
  j["candidate"] = candidate;
  j["difference"] = candidate + " - " + baseline;
  auto test_json = [](const std::optional<PairedTestResult>& t) -> nlohmann::ordered_json {
    if (!t) return {{"status", "unavailable"}};
    return {{"status", "ok"},
            {"statistic", t->statistic},
            {"p_value", t->p_value},
            {"n_effective", t->n_effective},
            {"method", t->method}};
  };
  auto tests = nlohmann::ordered_json::array();
  for (const auto& c : comparisons) {
    nlohmann::ordered_json e;
    e["metric"] = c.metric;
    e["n"] = c.n;
    e["mean_diff"] = c.mean_diff ? nlohmann::ordered_json(*c.mean_diff) : nlohmann::ordered_json(nullptr);
    e["median_diff"] = c.median_diff ? nlohmann::ordered_json(*c.median_diff) : nlohmann::ordered_json(nullptr);
    e["paired_t"] = test_json(c.paired_t);
    e["wilcoxon_signed_rank"] = test_json(c.wilcoxon);
    e["sign"] = test_json(c.sign);
    for (const auto& note : c.notes) {
      const auto colon = note.find(':');
      std::string key = note.substr(0, colon);
      if (key == "wilcoxon") key = "wilcoxon_signed_rank";
      e[key]["status"] = note.substr(colon + 2);
    }
    tests.push_back(std::move(e));
  }
  j["tests"] = std::move(tests);
  return j.dump(2);
}

} // namespace flowsentry::evaluation
