#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "core.hpp"

namespace ecgenkf::metrics {

namespace detail {

inline void same_length(const Signal& a, const Signal& b, const char* op) {
  if (a.size() != b.size()) {
    throw DegenerateInput(std::string(op) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  if (a.empty()) throw DegenerateInput(std::string(op) + ": empty input");
}

inline double energy(const Signal& x) {
  double e = 0.0;
  for (double v : x.samples()) e += v * v;
  return e;
}

inline double error_energy(const Signal& x, const Signal& y) {
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) e += (x[i] - y[i]) * (x[i] - y[i]);
  return e;
}

}  // namespace detail

/// 10 log10(sum x^2 / sum (x - y)^2). Returns +infinity when y == x.
inline double snr(const Signal& clean, const Signal& denoised) {
  detail::same_length(clean, denoised, "snr");
  const double ex = detail::energy(clean);
  if (ex == 0.0) throw DegenerateInput("snr: undefined for an all-zero clean signal");
  const double ee = detail::error_energy(clean, denoised);
  if (ee == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ex / ee);
}

inline double rmse(const Signal& clean, const Signal& denoised) {
  detail::same_length(clean, denoised, "rmse");
  return std::sqrt(detail::error_energy(clean, denoised) / static_cast<double>(clean.size()));
}

/// Percentage root difference, no mean removal.
inline double prd(const Signal& clean, const Signal& denoised) {
  detail::same_length(clean, denoised, "prd");
  const double ex = detail::energy(clean);
  if (ex == 0.0) throw DegenerateInput("prd: undefined for an all-zero clean signal");
  return 100.0 * std::sqrt(detail::error_energy(clean, denoised) / ex);
}

/// Pearson correlation in the raw-sums form, clamped to [-1, 1].
inline double corr(const Signal& clean, const Signal& denoised) {
  detail::same_length(clean, denoised, "corr");
  const double n = static_cast<double>(clean.size());
  // Sums are accumulated about the first sample; the formula is
  // shift-invariant and this avoids cancellation for large offsets.
  const double x0 = clean[0], y0 = denoised[0];
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double x = clean[i] - x0, y = denoised[i] - y0;
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double vx = n * sxx - sx * sx;
  const double vy = n * syy - sy * sy;
  if (!(vx > 0.0) || !(vy > 0.0)) throw DegenerateInput("corr: undefined for a constant input");
  return std::clamp((n * sxy - sx * sy) / std::sqrt(vx * vy), -1.0, 1.0);
}

struct MetricReport {
  double snr_in = 0.0;   // dB, noisy vs clean
  double snr_out = 0.0;  // dB, denoised vs clean
  double snr_improvement = 0.0;
  double rmse = 0.0;  // mV
  double prd = 0.0;   // percent
  double corr = 0.0;
};

inline MetricReport evaluate(const Signal& clean, const Signal& noisy, const Signal& denoised) {
  MetricReport r;
  r.snr_in = snr(clean, noisy);
  r.snr_out = snr(clean, denoised);
  r.snr_improvement = r.snr_out - r.snr_in;
  r.rmse = rmse(clean, denoised);
  r.prd = prd(clean, denoised);
  r.corr = corr(clean, denoised);
  return r;
}

// --- noise-stress mixing ----------------------------------------------------

/// Scale g such that snr(clean, clean + g * noise) == target_db.
inline double calibrate_gain(const Signal& clean, const Signal& noise, double target_db) {
  detail::same_length(clean, noise, "calibrate_gain");
  const double ex = detail::energy(clean);
  const double en = detail::energy(noise);
  if (ex == 0.0) throw DegenerateInput("calibrate_gain: clean signal has zero energy");
  if (en == 0.0) throw DegenerateInput("calibrate_gain: noise has zero energy");
  return std::sqrt(ex / (en * std::pow(10.0, target_db / 10.0)));
}

/// Repeats `noise` cyclically (or truncates it) to `length` samples.
inline Signal tile(const Signal& noise, std::size_t length) {
  require_valid(noise);
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = noise[i % noise.size()];
  return {std::move(out), noise.fs()};
}

struct NoisyMix {
  Signal noisy;
  Signal clean;
  Signal scaled_noise;  // the adaptive filters' reference channel
  double target_snr = 0.0;
  double gain = 0.0;
};

inline NoisyMix mix(const Signal& clean, const Signal& noise, double target_db) {
  require_valid(clean);
  const Signal tiled = tile(noise, clean.size());
  const double g = calibrate_gain(clean, tiled, target_db);
  std::vector<double> scaled(clean.size()), noisy(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    scaled[i] = g * tiled[i];
    noisy[i] = clean[i] + scaled[i];
  }
  return {Signal(std::move(noisy), clean.fs()), clean, Signal(std::move(scaled), clean.fs()), target_db, g};
}

}  // namespace ecgenkf::metrics
