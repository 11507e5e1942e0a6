// ecgenkf: synth | fit | mix | denoise | bench
//
// Exit codes: 0 success, 1 computational failure, 2 usage or I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ecgenkf/baselines.hpp"
#include "ecgenkf/bench.hpp"
#include "ecgenkf/core.hpp"
#include "ecgenkf/enkf.hpp"
#include "ecgenkf/io.hpp"
#include "ecgenkf/metrics.hpp"
#include "ecgenkf/model.hpp"
#include "ecgenkf/serialization.hpp"
#include "ecgenkf/wfdb.hpp"

namespace fs = std::filesystem;
using namespace ecgenkf;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCompute = 1;
constexpr int kExitUsage = 2;

struct UsageError : Error {
  using Error::Error;
};

json read_json_file(const std::string& path) {
  if (!fs::exists(path)) throw io::IoError("config file not found: " + path);
  const auto text = io::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

bool is_csv(const std::string& ref) { return fs::path(ref).extension() == ".csv"; }

struct LoadedInput {
  Signal signal;
  std::optional<RPeaks> annotated;
};

// A CSV file (fs from the flag) or a WFDB record reference.
LoadedInput load_input(const std::string& ref, std::size_t channel, double csv_fs) {
  if (is_csv(ref)) return {wfdb::read_csv(io::read_text(ref), csv_fs), std::nullopt};
  auto rec = io::load_record(io::resolve_record(ref));
  if (channel >= rec.channels.size()) {
    throw UsageError("channel " + std::to_string(channel) + " out of range (record has " +
                     std::to_string(rec.channels.size()) + ")");
  }
  std::optional<RPeaks> peaks;
  if (rec.r_peaks.size() >= 2) peaks = rec.r_peaks;
  return {rec.channels[channel], peaks};
}

Signal truncate_seconds(const Signal& s, std::optional<double> seconds) {
  if (!seconds) return s;
  const auto n = std::min(s.size(), static_cast<std::size_t>(std::llround(*seconds * s.fs())));
  return slice(s, 0, n);
}

RPeaks peaks_within(const RPeaks& p, std::size_t n, double fs) {
  std::vector<std::size_t> kept;
  for (auto i : p.indices()) {
    if (i < n) kept.push_back(i);
  }
  return RPeaks(std::move(kept), fs);
}

RPeaks fiducials(const LoadedInput& in, const Signal& s, bool force_detect) {
  if (in.annotated && !force_detect) return peaks_within(*in.annotated, s.size(), s.fs());
  return detect_r_peaks(s);
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void print_report(const metrics::MetricReport& r) {
  json j{{"snr_in_db", r.snr_in}, {"snr_out_db", r.snr_out}, {"snr_improvement_db", r.snr_improvement},
         {"rmse_mv", r.rmse},     {"prd_pct", r.prd},       {"corr", r.corr}};
  std::cout << j.dump(2) << '\n';
}

// --- synth -----------------------------------------------------------------

struct SynthConfig {
  double fs = 360.0;
  std::vector<double> rr{1.0};
  std::size_t beats = 10;
  double noise_std = 0.0;
  std::uint64_t seed = 1;
  GaussianWaveParams params = default_morphology();
};

SynthConfig parse_synth_config(const json& j, const std::string& path) {
  SynthConfig c;
  auto key = [&](const char* k, auto& dst) {
    if (!j.contains(k)) return;
    try {
      j.at(k).get_to(dst);
    } catch (const json::exception& e) {
      throw ConfigError(path + ": key \"" + k + "\": " + e.what());
    }
  };
  if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
  key("fs", c.fs);
  if (j.contains("rr")) {
    if (j.at("rr").is_number()) {
      c.rr = {j.at("rr").get<double>()};
    } else {
      key("rr", c.rr);
    }
  }
  key("beats", c.beats);
  key("noise_std", c.noise_std);
  key("seed", c.seed);
  if (j.contains("params")) {
    try {
      j.at("params").get_to(c.params);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": key \"params\": " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError(path + ": key \"params\": " + e.what());
    }
  }
  return c;
}

int cmd_synth(const std::string& config, std::optional<double> rr, std::optional<double> noise_std,
              std::optional<std::uint64_t> seed, std::optional<std::size_t> beats, const std::string& out_dir) {
  SynthConfig c = config.empty() ? SynthConfig{} : parse_synth_config(read_json_file(config), config);
  if (rr) c.rr = {*rr};
  if (noise_std) c.noise_std = *noise_std;
  if (seed) c.seed = *seed;
  if (beats) c.beats = *beats;
  if (c.rr.empty()) throw ConfigError("rr must be non-empty");
  std::vector<double> intervals(c.beats);
  for (std::size_t i = 0; i < c.beats; ++i) intervals[i] = c.rr[i % c.rr.size()];

  const auto syn = synthesize(c.params, intervals, c.fs, c.noise_std, c.seed);
  const fs::path dir(out_dir);
  io::write_text(dir / "signal.csv", wfdb::write_csv(syn.signal));
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < syn.phase.size(); ++i) {
    rows.push_back({std::to_string(i), bench::format_number(syn.phase[i])});
  }
  io::write_text(dir / "phase.csv", wfdb::write_csv({"sample", "phase"}, rows));
  rows.clear();
  for (auto i : syn.r_peaks.indices()) rows.push_back({std::to_string(i)});
  io::write_text(dir / "peaks.csv", wfdb::write_csv({"sample"}, rows));
  io::write_text(dir / "params.json", json(c.params).dump(2) + "\n");

  const auto& v = syn.signal.samples();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::cout << "samples " << v.size() << "\nfs " << c.fs << "\nbeats " << syn.r_peaks.size() << "\npeak_to_peak_mv "
            << (*hi - *lo) << "\nwrote " << (dir / "signal.csv").string() << ", phase.csv, peaks.csv, params.json\n";
  return kExitOk;
}

// --- fit -------------------------------------------------------------------

int cmd_fit(const std::string& input, std::size_t channel, double csv_fs, std::optional<double> seconds,
            std::size_t bins, bool detrend, bool detect, const std::string& out_path) {
  const auto in = load_input(input, channel, csv_fs);
  Signal s = truncate_seconds(in.signal, seconds);
  const RPeaks peaks = fiducials(in, s, detect);
  if (peaks.size() < 10) {
    throw DegenerateInput("insufficient fiducials: " + std::to_string(peaks.size()) + " beats, need at least 10");
  }
  double offset = 0.0;
  if (detrend) {
    offset = median(s.values());
    s = AffineMap{offset, 1.0}.apply(s);
  }
  const auto phase = observed_phase(peaks, s.size(), s.fs());
  const auto templ = mean_beat(s, phase, bins);
  FitResult fit;
  try {
    fit = fit_params(templ, default_morphology());
  } catch (const FitDivergence& e) {
    const fs::path trace = out_path.empty() ? fs::path("fit_trace.csv") : fs::path(out_path + ".trace.csv");
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < e.objective_trace.size(); ++i) {
      rows.push_back({std::to_string(i), bench::format_number(e.objective_trace[i])});
    }
    io::write_text(trace, wfdb::write_csv({"iteration", "objective"}, rows));
    std::cerr << "residual trace: " << trace.string() << '\n';
    throw;
  }
  double sse = 0.0, sig = 0.0;
  for (std::size_t b = 0; b < templ.mean.size(); ++b) {
    const double r = templ.mean[b] - gaussian_sum(templ.centers[b], fit.params);
    sse += r * r;
  }
  const double r_amp = fit.params.alpha[static_cast<std::size_t>(Wave::R)];
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = s[i] - gaussian_sum(phase[i], fit.params);
    sig += r * r;
  }
  const double bin_rms = std::sqrt(sse / static_cast<double>(templ.mean.size()));
  const double sample_rms = std::sqrt(sig / static_cast<double>(s.size()));
  if (!out_path.empty()) io::write_text(out_path, json(fit.params).dump(2) + "\n");
  json summary{{"params", fit.params},
               {"objective", fit.objective},
               {"iterations", fit.iterations},
               {"beats", peaks.size()},
               {"bins", bins},
               {"offset_mv", offset},
               {"template_residual_rms_mv", bin_rms},
               {"sample_residual_rms_mv", sample_rms},
               {"r_amplitude_mv", r_amp},
               {"template_residual_rel", r_amp != 0.0 ? bin_rms / std::abs(r_amp) : 0.0}};
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

// --- mix -------------------------------------------------------------------

int cmd_mix(const std::string& clean_ref, const std::string& noise_ref, double level, std::size_t channel,
            std::size_t noise_channel, double csv_fs, bool check, const std::string& out_dir) {
  const auto clean = load_input(clean_ref, channel, csv_fs).signal;
  const auto noise = load_input(noise_ref, noise_channel, csv_fs).signal;
  const auto m = metrics::mix(clean, noise, level);
  const fs::path dir(out_dir);
  io::write_text(dir / "noisy.csv", wfdb::write_csv(m.noisy));
  io::write_text(dir / "reference.csv", wfdb::write_csv(m.scaled_noise));
  const double measured = metrics::snr(clean, m.noisy);
  if (check) {
    std::cout << "measured SNR " << fmt6(measured) << '\n';
  } else {
    std::cout << "gain " << m.gain << "\nmeasured_snr_db " << measured << "\nwrote " << (dir / "noisy.csv").string()
              << ", reference.csv\n";
  }
  return kExitOk;
}

// --- denoise ---------------------------------------------------------------

struct DenoiseArgs {
  std::string input;
  std::string method;
  std::string params_path;
  std::string config_path;
  std::string reference;
  std::string clean;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::size_t channel = 0;
  double csv_fs = 360.0;
  bool detect = false;
  std::string out = "denoised.csv";
};

int cmd_denoise(const DenoiseArgs& a) {
  const bench::Method m = [&] {
    try {
      return bench::parse_method(a.method);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }();
  bench::MethodParams p;
  if (!a.config_path.empty()) p = read_json_file(a.config_path).get<bench::MethodParams>();
  if (a.lambda) {
    if (m != bench::Method::tvd) throw UsageError("--lambda only applies to --method tvd");
    if (*a.lambda < 0.0) throw UsageError("--lambda must be non-negative");
    p.baselines.tvd.lambda = *a.lambda;
  }
  const bool adaptive = m == bench::Method::nlms || m == bench::Method::rls;
  if (adaptive && a.reference.empty()) throw UsageError("--method " + a.method + " requires --reference");
  if (!adaptive && !a.reference.empty()) throw UsageError("--reference only applies to nlms and rls");
  const bool model_based = m == bench::Method::enkf || m == bench::Method::ekf;
  if (!model_based && !a.params_path.empty()) throw UsageError("--params only applies to enkf and ekf");

  const auto in = load_input(a.input, a.channel, a.csv_fs);
  const Signal& s = in.signal;
  const std::uint64_t seed = a.seed.value_or(p.enkf.seed);

  Signal out;
  if (model_based && !a.params_path.empty()) {
    const auto params = read_json_file(a.params_path);
    const GaussianWaveParams wp = (params.contains("params") ? params.at("params") : params).get<GaussianWaveParams>();
    const RPeaks peaks = fiducials(in, s, a.detect);
    if (m == bench::Method::enkf) {
      auto cfg = p.enkf;
      cfg.seed = seed;
      out = enkf::denoise(s, peaks, wp, cfg);
    } else {
      out = baselines::ekf_denoise(s, peaks, wp, p.baselines.ekf);
    }
  } else {
    Signal reference;
    if (adaptive) reference = load_input(a.reference, 0, s.fs()).signal;
    const RPeaks peaks = model_based ? fiducials(in, s, a.detect) : RPeaks();
    out = bench::run_method(m, s, peaks, reference, p, seed);
  }
  io::write_text(a.out, wfdb::write_csv(out));
  std::cerr << "wrote " << a.out << '\n';
  if (!a.clean.empty()) {
    const auto clean = load_input(a.clean, a.channel, a.csv_fs).signal;
    print_report(metrics::evaluate(clean, s, out));
  }
  return kExitOk;
}

// --- bench -----------------------------------------------------------------

bench::RecordInput load_bench_record(const std::string& id, std::size_t channel) {
  auto rec = io::load_record(io::resolve_record(id));
  if (channel >= rec.channels.size()) throw UsageError("record " + id + ": channel out of range");
  const Signal& s = rec.channels[channel];
  RPeaks peaks = rec.r_peaks.size() >= 2 ? rec.r_peaks : detect_r_peaks(s);
  return {id, s, std::move(peaks)};
}

Signal load_bench_noise(const std::string& ref, std::size_t channel) {
  auto rec = io::load_record(io::resolve_record(ref));
  if (channel >= rec.channels.size()) throw UsageError("noise record " + ref + ": channel out of range");
  return rec.channels[channel];
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct BenchArgs {
  std::string plan_path;
  std::string records;
  std::string methods;
  std::string levels;
  std::string noise;
  std::string noise_kind;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> channel;
  std::optional<double> duration;
  std::optional<std::size_t> jobs;
  std::string out = "bench_out";
};

int cmd_bench(const BenchArgs& a) {
  bench::BenchPlan plan;
  if (!a.plan_path.empty()) {
    try {
      plan = read_json_file(a.plan_path).get<bench::BenchPlan>();
    } catch (const json::exception& e) {
      throw ConfigError(a.plan_path + ": " + e.what());
    }
  }
  if (!a.records.empty()) plan.records = split_list(a.records);
  if (!a.methods.empty()) {
    plan.methods.clear();
    for (const auto& m : split_list(a.methods)) plan.methods.push_back(bench::parse_method(m));
  }
  if (!a.levels.empty()) {
    plan.snr_levels.clear();
    for (const auto& l : split_list(a.levels)) {
      try {
        std::size_t used = 0;
        plan.snr_levels.push_back(std::stod(l, &used));
        if (used != l.size()) throw std::invalid_argument(l);
      } catch (const std::exception&) {
        throw UsageError("--levels: not a number: " + l);
      }
    }
  }
  if (!a.noise.empty()) plan.noise_record = a.noise;
  if (!a.noise_kind.empty()) plan.noise_kind = bench::parse_noise_kind(a.noise_kind);
  if (a.seed) plan.seed = *a.seed;
  if (a.channel) plan.channel = *a.channel;
  if (a.duration) plan.duration_s = *a.duration;
  if (a.jobs) plan.jobs = *a.jobs;
  bench::validate(plan);

  const auto result = bench::run_plan(plan, load_bench_record, load_bench_noise);
  const fs::path dir(a.out);
  io::write_text(dir / "results.csv", bench::results_csv(result));
  io::write_text(dir / "timings.csv", bench::timings_csv(result));
  io::write_text(dir / "params.json", bench::params_manifest(plan).dump(2) + "\n");
  io::write_text(dir / "plan.json", json(plan).dump(2) + "\n");
  for (const auto& plot : bench::metric_plots(result)) io::write_text(dir / plot.file_name, plot.svg);

  std::cout << "cells " << result.cells.size() << "\nfailed " << result.failed() << "\nwrote "
            << (dir / "results.csv").string() << '\n';
  for (const auto& c : result.cells) {
    if (!c.ok()) {
      std::cerr << c.record_id << ' ' << bench::to_string(c.method) << ' ' << bench::format_level(c.input_snr) << ": "
                << c.status << " (params " << c.params_digest << ")\n";
    }
  }
  return result.failed() == 0 ? kExitOk : kExitCompute;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG denoising with an ensemble Kalman filter, plus baselines and a noise-stress benchmark"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic ECG from the wave model");
  std::string synth_config, synth_out = "synth_out";
  std::optional<double> synth_rr, synth_noise;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_beats;
  synth->add_option("--config", synth_config, "JSON config (fs, rr, beats, noise_std, seed, params)");
  synth->add_option("--rr", synth_rr, "Constant R-R interval in seconds");
  synth->add_option("--noise-std", synth_noise, "Process noise standard deviation in mV");
  synth->add_option("--beats", synth_beats, "Number of beats");
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("-o,--out", synth_out, "Output directory")->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit Gaussian wave parameters to a recording");
  std::string fit_input, fit_out;
  std::size_t fit_channel = 0, fit_bins = 128;
  double fit_fs = 360.0;
  std::optional<double> fit_seconds;
  bool fit_detrend = false, fit_detect = false;
  fit->add_option("input", fit_input, "Record reference or .csv file")->required();
  fit->add_option("--channel", fit_channel, "Signal channel")->capture_default_str();
  fit->add_option("--fs", fit_fs, "Sampling rate for CSV input")->capture_default_str();
  fit->add_option("--seconds", fit_seconds, "Use only the first N seconds");
  fit->add_option("--bins", fit_bins, "Template phase bins")->capture_default_str();
  fit->add_flag("--detrend", fit_detrend, "Subtract the median before fitting");
  fit->add_flag("--detect", fit_detect, "Detect R peaks even when annotations exist");
  fit->add_option("-o,--out", fit_out, "Write the parameters JSON here");

  // mix
  auto* mix = app.add_subcommand("mix", "Mix a clean recording with noise at a calibrated SNR");
  std::string mix_clean, mix_noise, mix_out = "mix_out";
  double mix_level = 0.0, mix_fs = 360.0;
  std::size_t mix_channel = 0, mix_noise_channel = 0;
  bool mix_check = false;
  mix->add_option("clean", mix_clean, "Clean record reference or .csv")->required();
  mix->add_option("noise", mix_noise, "Noise record reference or .csv")->required();
  mix->add_option("--level", mix_level, "Target SNR in dB")->required();
  mix->add_option("--channel", mix_channel, "Clean signal channel")->capture_default_str();
  mix->add_option("--noise-channel", mix_noise_channel, "Noise signal channel")->capture_default_str();
  mix->add_option("--fs", mix_fs, "Sampling rate for CSV input")->capture_default_str();
  mix->add_flag("--check", mix_check, "Print the measured SNR only");
  mix->add_option("-o,--out", mix_out, "Output directory")->capture_default_str();

  // denoise
  auto* den = app.add_subcommand("denoise", "Denoise one recording with one method");
  DenoiseArgs da;
  den->add_option("input", da.input, "Record reference or .csv file")->required();
  den->add_option("--method", da.method, "enkf, ekf, sg, wavelet, nlms, rls or tvd")->required();
  den->add_option("--params", da.params_path, "Wave parameters JSON (enkf, ekf); fitted when omitted");
  den->add_option("--config", da.config_path, "Method parameters JSON");
  den->add_option("--reference", da.reference, "Noise reference (.csv or record) for nlms and rls");
  den->add_option("--clean", da.clean, "Clean signal; prints metrics when given");
  den->add_option("--lambda", da.lambda, "TV regularisation weight (tvd)");
  den->add_option("--seed", da.seed, "Random seed (enkf)");
  den->add_option("--channel", da.channel, "Signal channel")->capture_default_str();
  den->add_option("--fs", da.csv_fs, "Sampling rate for CSV input")->capture_default_str();
  den->add_flag("--detect", da.detect, "Detect R peaks even when annotations exist");
  den->add_option("-o,--out", da.out, "Output CSV")->capture_default_str();

  // bench
  auto* bch = app.add_subcommand("bench", "Run the noise-stress benchmark");
  BenchArgs ba;
  bch->add_option("--plan", ba.plan_path, "Plan JSON");
  bch->add_option("--records", ba.records, "Comma-separated record references");
  bch->add_option("--methods", ba.methods, "Comma-separated methods");
  bch->add_option("--levels", ba.levels, "Comma-separated input SNR levels in dB");
  bch->add_option("--noise", ba.noise, "Noise record reference");
  bch->add_option("--noise-kind", ba.noise_kind, "bw, ma, em or user");
  bch->add_option("--seed", ba.seed, "Master seed");
  bch->add_option("--channel", ba.channel, "Signal channel");
  bch->add_option("--duration", ba.duration, "Use only the first N seconds of each record");
  bch->add_option("--jobs", ba.jobs, "Worker threads");
  bch->add_option("-o,--out", ba.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_config, synth_rr, synth_noise, synth_seed, synth_beats, synth_out);
    if (*fit) return cmd_fit(fit_input, fit_channel, fit_fs, fit_seconds, fit_bins, fit_detrend, fit_detect, fit_out);
    if (*mix) return cmd_mix(mix_clean, mix_noise, mix_level, mix_channel, mix_noise_channel, mix_fs, mix_check, mix_out);
    if (*den) return cmd_denoise(da);
    if (*bch) return cmd_bench(ba);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCompute;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCompute;
  }
  return kExitUsage;
}
