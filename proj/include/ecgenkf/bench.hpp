#pragma once

// Noise-stress benchmark: every (record, method, input SNR) cell mixes the
// clean record with calibrated noise, denoises it and scores the result.
// Cells are pure functions of their inputs and a per-cell seed, so results do
// not depend on plan order or on how many cells run in parallel.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "baselines.hpp"
#include "core.hpp"
#include "enkf.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "serialization.hpp"
#include "wfdb.hpp"

namespace ecgenkf::bench {

enum class Method { enkf, ekf, sg, wavelet, nlms, rls, tvd };
enum class NoiseKind { bw, ma, em, user };

inline constexpr std::array<Method, 7> kAllMethods = {Method::enkf, Method::ekf,  Method::sg, Method::wavelet,
                                                      Method::nlms, Method::rls, Method::tvd};

NLOHMANN_JSON_SERIALIZE_ENUM(Method, {{Method::enkf, "enkf"},
                                      {Method::ekf, "ekf"},
                                      {Method::sg, "sg"},
                                      {Method::wavelet, "wavelet"},
                                      {Method::nlms, "nlms"},
                                      {Method::rls, "rls"},
                                      {Method::tvd, "tvd"}})
NLOHMANN_JSON_SERIALIZE_ENUM(NoiseKind,
                             {{NoiseKind::bw, "bw"}, {NoiseKind::ma, "ma"}, {NoiseKind::em, "em"}, {NoiseKind::user, "user"}})

inline std::string to_string(Method m) { return nlohmann::json(m).get<std::string>(); }
inline std::string to_string(NoiseKind k) { return nlohmann::json(k).get<std::string>(); }

inline Method parse_method(const std::string& s) {
  for (Method m : kAllMethods) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method \"" + s + "\" (expected enkf, ekf, sg, wavelet, nlms, rls, tvd)");
}

inline NoiseKind parse_noise_kind(const std::string& s) {
  for (NoiseKind k : {NoiseKind::bw, NoiseKind::ma, NoiseKind::em, NoiseKind::user}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown noise kind \"" + s + "\" (expected bw, ma, em, user)");
}

/// Parameters for every method. EnKF settings live in `enkf`; the EKF shares
/// the FilterConfig noise fields through `baselines.ekf`.
struct MethodParams {
  enkf::FilterConfig enkf;
  baselines::BaselineParams baselines;
  std::size_t template_bins = 128;
};

inline void to_json(nlohmann::json& j, const MethodParams& p) {
  j = nlohmann::json{{"enkf", p.enkf}, {"baselines", p.baselines}, {"template_bins", p.template_bins}};
}

inline void from_json(const nlohmann::json& j, MethodParams& p) {
  p = MethodParams{};
  if (j.contains("enkf")) j.at("enkf").get_to(p.enkf);
  if (j.contains("baselines")) j.at("baselines").get_to(p.baselines);
  if (j.contains("template_bins")) j.at("template_bins").get_to(p.template_bins);
}

/// The parameter subset that determines one method's output, as JSON. The
/// per-cell seed is not included; it is reported separately.
inline nlohmann::json method_param_json(Method m, const MethodParams& p) {
  nlohmann::json j;
  j["method"] = m;
  switch (m) {
    case Method::enkf: {
      auto c = p.enkf;
      c.seed = 0;
      j["filter"] = c;
      j["template_bins"] = p.template_bins;
      break;
    }
    case Method::ekf: {
      auto c = p.baselines.ekf;
      c.seed = 0;
      j["filter"] = c;
      j["template_bins"] = p.template_bins;
      break;
    }
    case Method::sg:
      j["params"] = nlohmann::json(p.baselines)["sg"];
      break;
    case Method::wavelet:
      j["params"] = nlohmann::json(p.baselines)["wavelet"];
      break;
    case Method::nlms:
      j["params"] = nlohmann::json(p.baselines)["nlms"];
      break;
    case Method::rls:
      j["params"] = nlohmann::json(p.baselines)["rls"];
      break;
    case Method::tvd:
      j["params"] = nlohmann::json(p.baselines)["tvd"];
      break;
  }
  return j;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string params_digest(Method m, const MethodParams& p) {
  return hex64(hash_string(method_param_json(m, p).dump()));
}

inline std::string format_level(double db) {
  std::ostringstream os;
  os << std::setprecision(6) << db;
  return os.str();
}

/// Seed of one cell, derived only from the cell's identity.
inline std::uint64_t cell_seed(std::uint64_t master, const std::string& record, Method m, double level_db) {
  return hash_combine(mix64(master), hash_string(record + "|" + to_string(m) + "|" + format_level(level_db)));
}

// --- single-signal denoising ------------------------------------------------

struct ModelFit {
  GaussianWaveParams params;
  AffineMap map;
  double objective = 0.0;
};

/// Normalises the input, averages it into a phase-binned template and fits the
/// wave parameters starting from the default morphology.
inline ModelFit fit_model(const Signal& noisy, const RPeaks& peaks, std::size_t bins) {
  const auto norm = normalize(noisy);
  const auto phase = observed_phase(peaks, noisy.size(), noisy.fs());
  const auto templ = mean_beat(norm.signal, phase, bins);
  const auto fit = fit_params(templ, default_morphology());
  return {fit.params, norm.map, fit.objective};
}

/// Runs one method. `reference` is only consulted by the adaptive filters and
/// `peaks` only by the model-based ones.
inline Signal run_method(Method m, const Signal& noisy, const RPeaks& peaks, const Signal& reference,
                         const MethodParams& p, std::uint64_t seed) {
  const auto& b = p.baselines;
  switch (m) {
    case Method::enkf:
    case Method::ekf: {
      const auto fit = fit_model(noisy, peaks, p.template_bins);
      const Signal normalized = fit.map.apply(noisy);
      Signal out;
      if (m == Method::enkf) {
        auto cfg = p.enkf;
        cfg.seed = seed;
        out = enkf::denoise(normalized, peaks, fit.params, cfg);
      } else {
        out = baselines::ekf_denoise(normalized, peaks, fit.params, b.ekf);
      }
      return fit.map.invert(out);
    }
    case Method::sg:
      return baselines::sg_filter(noisy, b.sg.window, b.sg.polyorder);
    case Method::wavelet:
      return baselines::wavelet_denoise(noisy, b.wavelet.levels, b.wavelet.rule, b.wavelet.fixed_threshold);
    case Method::nlms:
      return baselines::nlms_denoise(noisy, reference, b.nlms.taps, b.nlms.mu);
    case Method::rls:
      return baselines::rls_denoise(noisy, reference, b.rls.taps, b.rls.forgetting, b.rls.delta);
    case Method::tvd: {
      const double lambda = b.tvd.lambda ? *b.tvd.lambda : b.tvd.lambda_scale * baselines::noise_sigma(noisy.values());
      return baselines::tvd_denoise(noisy, lambda);
    }
  }
  throw ConfigError("unhandled method");
}

// --- cells ------------------------------------------------------------------

struct BenchCell {
  std::string record_id;
  std::size_t channel = 0;
  Method method = Method::enkf;
  NoiseKind noise_kind = NoiseKind::em;
  double input_snr = 0.0;  // target level, dB
  metrics::MetricReport report;
  std::string params_digest;
  std::uint64_t seed = 0;
  std::string status = "ok";
  double wall_time = 0.0;  // seconds; never written to the results table

  [[nodiscard]] bool ok() const { return status == "ok"; }
};

struct RecordInput {
  std::string id;
  Signal clean;
  RPeaks peaks;
};

struct CellOptions {
  double warmup_s = 2.0;  // excluded from scoring
};

inline BenchCell run_cell(const RecordInput& rec, std::size_t channel, const Signal& noise, NoiseKind kind,
                          Method m, double level_db, const MethodParams& p, std::uint64_t master_seed,
                          const CellOptions& opt = {}) {
  BenchCell c;
  c.record_id = rec.id;
  c.channel = channel;
  c.method = m;
  c.noise_kind = kind;
  c.input_snr = level_db;
  c.params_digest = params_digest(m, p);
  c.seed = cell_seed(master_seed, rec.id, m, level_db);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto mixed = metrics::mix(rec.clean, noise, level_db);
    const Signal out = run_method(m, mixed.noisy, rec.peaks, mixed.scaled_noise, p, c.seed);
    const auto skip = static_cast<std::size_t>(std::llround(opt.warmup_s * rec.clean.fs()));
    if (skip >= rec.clean.size()) throw DegenerateInput("warm-up skip leaves nothing to score");
    const std::size_t len = rec.clean.size() - skip;
    c.report = metrics::evaluate(slice(rec.clean, skip, len), slice(mixed.noisy, skip, len), slice(out, skip, len));
  } catch (const std::exception& e) {
    c.status = std::string("failed: ") + e.what();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    c.report = {nan, nan, nan, nan, nan, nan};
  }
  c.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

// --- plan -------------------------------------------------------------------

struct BenchPlan {
  std::vector<std::string> records;
  std::size_t channel = 0;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  std::vector<double> snr_levels{-6.0, 0.0, 6.0, 12.0, 18.0, 24.0};
  std::string noise_record = "em";
  std::size_t noise_channel = 0;
  NoiseKind noise_kind = NoiseKind::em;
  std::uint64_t seed = 1;
  std::optional<double> duration_s;  // truncate records; full length when unset
  double warmup_s = 2.0;
  MethodParams params;
  std::size_t jobs = 1;
};

inline void validate(const BenchPlan& p) {
  if (p.records.empty()) throw ConfigError("plan: records must be non-empty");
  if (p.methods.empty()) throw ConfigError("plan: methods must be non-empty");
  if (p.snr_levels.empty()) throw ConfigError("plan: snr_levels must be non-empty");
  if (p.duration_s && !(*p.duration_s > p.warmup_s)) throw ConfigError("plan: duration_s must exceed warmup_s");
}

inline void to_json(nlohmann::json& j, const BenchPlan& p) {
  j = nlohmann::json{{"records", p.records},
                     {"channel", p.channel},
                     {"methods", p.methods},
                     {"snr_levels", p.snr_levels},
                     {"noise_record", p.noise_record},
                     {"noise_channel", p.noise_channel},
                     {"noise_kind", p.noise_kind},
                     {"seed", p.seed},
                     {"duration_s", p.duration_s ? nlohmann::json(*p.duration_s) : nlohmann::json(nullptr)},
                     {"warmup_s", p.warmup_s},
                     {"params", p.params},
                     {"jobs", p.jobs}};
}

inline void from_json(const nlohmann::json& j, BenchPlan& p) {
  p = BenchPlan{};
  if (j.contains("records")) j.at("records").get_to(p.records);
  if (j.contains("channel")) j.at("channel").get_to(p.channel);
  if (j.contains("methods")) {
    p.methods.clear();
    for (const auto& m : j.at("methods")) p.methods.push_back(parse_method(m.get<std::string>()));
  }
  if (j.contains("snr_levels")) j.at("snr_levels").get_to(p.snr_levels);
  if (j.contains("noise_record")) j.at("noise_record").get_to(p.noise_record);
  if (j.contains("noise_channel")) j.at("noise_channel").get_to(p.noise_channel);
  if (j.contains("noise_kind")) p.noise_kind = parse_noise_kind(j.at("noise_kind").get<std::string>());
  if (j.contains("seed")) j.at("seed").get_to(p.seed);
  if (j.contains("duration_s") && !j.at("duration_s").is_null()) p.duration_s = j.at("duration_s").get<double>();
  if (j.contains("warmup_s")) j.at("warmup_s").get_to(p.warmup_s);
  if (j.contains("params")) j.at("params").get_to(p.params);
  if (j.contains("jobs")) j.at("jobs").get_to(p.jobs);
  validate(p);
}

struct BenchResult {
  std::vector<BenchCell> cells;       // canonical order: record, method, level
  std::vector<BenchCell> aggregates;  // record_id "MEAN", per (method, level)

  [[nodiscard]] std::size_t failed() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.ok(); }));
  }
};

namespace detail {

inline bool cell_less(const BenchCell& a, const BenchCell& b) {
  if (a.record_id != b.record_id) return a.record_id < b.record_id;
  if (a.method != b.method) return a.method < b.method;
  return a.input_snr < b.input_snr;
}

}  // namespace detail

/// Mean of each metric across records per (method, level); failed cells are
/// left out of the mean.
inline std::vector<BenchCell> aggregate(const std::vector<BenchCell>& cells) {
  std::map<std::pair<Method, double>, std::vector<const BenchCell*>> groups;
  for (const auto& c : cells) groups[{c.method, c.input_snr}].push_back(&c);
  std::vector<BenchCell> out;
  for (const auto& [key, members] : groups) {
    BenchCell a;
    a.record_id = "MEAN";
    a.channel = members.front()->channel;
    a.method = key.first;
    a.input_snr = key.second;
    a.noise_kind = members.front()->noise_kind;
    a.params_digest = members.front()->params_digest;
    a.seed = 0;
    std::size_t n = 0;
    metrics::MetricReport sum;
    for (const auto* c : members) {
      if (!c->ok()) continue;
      ++n;
      sum.snr_in += c->report.snr_in;
      sum.snr_out += c->report.snr_out;
      sum.snr_improvement += c->report.snr_improvement;
      sum.rmse += c->report.rmse;
      sum.prd += c->report.prd;
      sum.corr += c->report.corr;
    }
    if (n == 0) {
      a.status = "failed: no successful cells";
      const double nan = std::numeric_limits<double>::quiet_NaN();
      a.report = {nan, nan, nan, nan, nan, nan};
    } else {
      const double d = static_cast<double>(n);
      a.report = {sum.snr_in / d, sum.snr_out / d, sum.snr_improvement / d, sum.rmse / d, sum.prd / d, sum.corr / d};
      if (n != members.size()) a.status = "partial: " + std::to_string(n) + "/" + std::to_string(members.size());
    }
    out.push_back(std::move(a));
  }
  return out;
}

/// Loads a record's clean channel and fiducials.
using RecordLoader = std::function<RecordInput(const std::string& id, std::size_t channel)>;
/// Loads the noise channel.
using NoiseLoader = std::function<Signal(const std::string& ref, std::size_t channel)>;

inline BenchResult run_plan(const BenchPlan& plan, const RecordLoader& load_record, const NoiseLoader& load_noise) {
  validate(plan);
  Signal noise = load_noise(plan.noise_record, plan.noise_channel);
  std::vector<RecordInput> inputs;
  for (const auto& id : plan.records) {
    auto rec = load_record(id, plan.channel);
    if (plan.duration_s) {
      const auto n = std::min(rec.clean.size(), static_cast<std::size_t>(std::llround(*plan.duration_s * rec.clean.fs())));
      rec.clean = slice(rec.clean, 0, n);
      std::vector<std::size_t> kept;
      for (auto idx : rec.peaks.indices()) {
        if (idx < n) kept.push_back(idx);
      }
      rec.peaks = RPeaks(std::move(kept), rec.clean.fs());
    }
    inputs.push_back(std::move(rec));
  }

  struct Job {
    std::size_t record;
    Method method;
    double level;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    for (Method m : plan.methods) {
      for (double level : plan.snr_levels) jobs.push_back({r, m, level});
    }
  }

  BenchResult result;
  result.cells.resize(jobs.size());
  const CellOptions opt{plan.warmup_s};
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& j = jobs[i];
      result.cells[i] = run_cell(inputs[j.record], plan.channel, noise, plan.noise_kind, j.method, j.level,
                                 plan.params, plan.seed, opt);
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(plan.jobs, jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  std::sort(result.cells.begin(), result.cells.end(), detail::cell_less);
  result.aggregates = aggregate(result.cells);
  return result;
}

// --- tables -----------------------------------------------------------------

inline const std::vector<std::string>& table_columns() {
  static const std::vector<std::string> cols = {
      "record",     "channel", "method",  "noise_kind",    "level_db", "snr_in_db", "snr_out_db", "snr_improvement_db",
      "rmse_mv",    "prd_pct", "corr",    "params_digest", "seed",     "status"};
  return cols;
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

inline std::vector<std::string> table_row(const BenchCell& c) {
  std::string status = c.status;
  std::replace(status.begin(), status.end(), ',', ';');
  std::replace(status.begin(), status.end(), '\n', ' ');
  return {c.record_id,
          std::to_string(c.channel),
          to_string(c.method),
          to_string(c.noise_kind),
          format_level(c.input_snr),
          format_number(c.report.snr_in),
          format_number(c.report.snr_out),
          format_number(c.report.snr_improvement),
          format_number(c.report.rmse),
          format_number(c.report.prd),
          format_number(c.report.corr),
          c.params_digest,
          std::to_string(c.seed),
          status};
}

/// Results table: every cell, then the aggregate rows.
inline std::string results_csv(const BenchResult& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : r.cells) rows.push_back(table_row(c));
  for (const auto& c : r.aggregates) rows.push_back(table_row(c));
  return wfdb::write_csv(table_columns(), rows);
}

/// Digest -> full parameter set, so every table row can be reproduced.
inline nlohmann::json params_manifest(const BenchPlan& plan) {
  nlohmann::json j = nlohmann::json::object();
  for (Method m : plan.methods) j[params_digest(m, plan.params)] = method_param_json(m, plan.params);
  return j;
}

inline std::string timings_csv(const BenchResult& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : r.cells) {
    rows.push_back({c.record_id, to_string(c.method), format_level(c.input_snr), format_number(c.wall_time)});
  }
  return wfdb::write_csv({"record", "method", "level_db", "wall_time_s"}, rows);
}

// --- plots ------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct AxesConfig {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 420;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace detail

/// Standalone SVG line chart, one polyline and legend entry per series.
inline std::string emit_plot(const std::vector<Series>& series, const AxesConfig& axes) {
  if (series.empty()) throw ConfigError("plot: no series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.points.size() < 2) throw ConfigError("plot: series \"" + s.name + "\" needs at least 2 points");
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!std::isfinite(xmin) || !std::isfinite(ymin)) throw ConfigError("plot: no finite points");
  if (xmax == xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  if (ymax == ymin) {
    const double pad = std::max(1.0, std::abs(ymin) * 0.1);
    ymin -= pad;
    ymax += pad;
  }
  static constexpr std::array<const char*, 8> palette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                         "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const double left = 70, right = 150, top = 40, bottom = 50;
  const double pw = axes.width - left - right, ph = axes.height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << axes.width << "\" height=\"" << axes.height
     << "\" viewBox=\"0 0 " << axes.width << ' ' << axes.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << detail::fmt2(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << detail::xml_escape(axes.title) << "</text>\n";
  os << "<rect x=\"" << detail::fmt2(left) << "\" y=\"" << detail::fmt2(top) << "\" width=\"" << detail::fmt2(pw)
     << "\" height=\"" << detail::fmt2(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 4.0, fy = ymin + (ymax - ymin) * t / 4.0;
    os << "<text x=\"" << detail::fmt2(px(fx)) << "\" y=\"" << detail::fmt2(top + ph + 18)
       << "\" text-anchor=\"middle\" font-size=\"11\">" << format_number(std::round(fx * 100) / 100) << "</text>\n";
    os << "<text x=\"" << detail::fmt2(left - 6) << "\" y=\"" << detail::fmt2(py(fy) + 4)
       << "\" text-anchor=\"end\" font-size=\"11\">" << format_number(std::round(fy * 1000) / 1000) << "</text>\n";
  }
  os << "<text x=\"" << detail::fmt2(left + pw / 2) << "\" y=\"" << detail::fmt2(axes.height - 10.0)
     << "\" text-anchor=\"middle\" font-size=\"13\">" << detail::xml_escape(axes.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << detail::fmt2(top + ph / 2) << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
     << detail::fmt2(top + ph / 2) << ")\">" << detail::xml_escape(axes.y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % palette.size()];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (const auto& [x, y] : series[i].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      os << (first ? "" : " ") << detail::fmt2(px(x)) << ',' << detail::fmt2(py(y));
      first = false;
    }
    os << "\"/>\n";
    const double ly = top + 14.0 + 18.0 * static_cast<double>(i);
    os << "<line x1=\"" << detail::fmt2(left + pw + 12) << "\" y1=\"" << detail::fmt2(ly) << "\" x2=\""
       << detail::fmt2(left + pw + 36) << "\" y2=\"" << detail::fmt2(ly) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << detail::fmt2(left + pw + 42) << "\" y=\"" << detail::fmt2(ly + 4) << "\" font-size=\"12\">"
       << detail::xml_escape(series[i].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

struct PlotFile {
  std::string file_name;
  std::string svg;
};

/// The four metric-versus-input-SNR charts from the aggregate rows.
inline std::vector<PlotFile> metric_plots(const BenchResult& r) {
  struct Spec {
    const char* file;
    const char* title;
    const char* y_label;
    double metrics::MetricReport::*field;
  };
  const std::array<Spec, 4> specs = {{
      {"snr_improvement.svg", "Mean SNR improvement", "SNR improvement (dB)", &metrics::MetricReport::snr_improvement},
      {"corr.svg", "Mean correlation", "Correlation", &metrics::MetricReport::corr},
      {"prd.svg", "Mean PRD", "PRD (%)", &metrics::MetricReport::prd},
      {"rmse.svg", "Mean RMSE", "RMSE (mV)", &metrics::MetricReport::rmse},
  }};
  std::vector<PlotFile> out;
  for (const auto& spec : specs) {
    std::map<Method, Series> by_method;
    for (const auto& a : r.aggregates) {
      auto& s = by_method[a.method];
      s.name = to_string(a.method);
      s.points.emplace_back(a.input_snr, a.report.*spec.field);
    }
    std::vector<Series> series;
    for (auto& [m, s] : by_method) {
      if (s.points.size() >= 2) series.push_back(std::move(s));
    }
    if (series.empty()) continue;
    out.push_back({spec.file, emit_plot(series, {spec.title, "Input SNR (dB)", spec.y_label})});
  }
  return out;
}

}  // namespace ecgenkf::bench
