#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ecgenkf {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Error hierarchy. Everything derives from std::runtime_error so callers that
// only care about "it failed" can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateInput : Error {
  using Error::Error;
};
struct BoundsError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};

/// Wraps an angle into [0, 2pi). Never returns 2pi, even when fmod rounds.
inline double wrap_2pi(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Wraps an angle into (-pi, pi]. All phase differences go through this.
inline double wrap_pi(double a) {
  double r = std::fmod(a + std::numbers::pi, kTwoPi);
  if (r <= 0.0) r += kTwoPi;
  return r - std::numbers::pi;
}

/// Uniformly sampled ECG trace in millivolts.
class Signal {
 public:
  Signal() = default;
  Signal(std::vector<double> samples, double fs) : samples_(std::move(samples)), fs_(fs) {}

  [[nodiscard]] std::span<const double> samples() const { return samples_; }
  [[nodiscard]] const std::vector<double>& values() const { return samples_; }
  [[nodiscard]] double fs() const { return fs_; }
  [[nodiscard]] std::size_t size() const { return samples_.size(); }
  [[nodiscard]] bool empty() const { return samples_.empty(); }
  double operator[](std::size_t i) const { return samples_[i]; }

  friend bool operator==(const Signal&, const Signal&) = default;

 private:
  std::vector<double> samples_;
  double fs_ = 0.0;
};

/// Returns a description of the first invariant violation, or nullopt.
inline std::optional<std::string> validate(const Signal& s) {
  if (!(s.fs() > 0.0) || !std::isfinite(s.fs())) return "non-positive fs";
  if (s.empty()) return "empty";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i])) return "non-finite at index " + std::to_string(i);
  }
  return std::nullopt;
}

inline void require_valid(const Signal& s) {
  if (auto d = validate(s)) throw DegenerateInput("invalid signal: " + *d);
}

inline Signal slice(const Signal& s, std::size_t start, std::size_t len) {
  if (start > s.size() || len > s.size() - start) {
    throw BoundsError("slice [" + std::to_string(start) + ", +" + std::to_string(len) +
                      ") exceeds length " + std::to_string(s.size()));
  }
  auto first = s.values().begin() + static_cast<std::ptrdiff_t>(start);
  return Signal(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len)), s.fs());
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw DegenerateInput("median of empty sequence");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

/// out = (in - offset) * scale
struct AffineMap {
  double offset = 0.0;
  double scale = 1.0;

  [[nodiscard]] double apply(double x) const { return (x - offset) * scale; }
  [[nodiscard]] double invert(double y) const { return y / scale + offset; }

  [[nodiscard]] Signal apply(const Signal& s) const {
    std::vector<double> out(s.size());
    std::transform(s.values().begin(), s.values().end(), out.begin(),
                   [this](double x) { return apply(x); });
    return {std::move(out), s.fs()};
  }
  [[nodiscard]] Signal invert(const Signal& s) const {
    std::vector<double> out(s.size());
    std::transform(s.values().begin(), s.values().end(), out.begin(),
                   [this](double y) { return invert(y); });
    return {std::move(out), s.fs()};
  }
};

struct Normalized {
  Signal signal;
  AffineMap map;
};

/// Zero median, unit peak-to-peak. The affine map is returned so results can be
/// taken back to millivolts.
inline Normalized normalize(const Signal& s) {
  require_valid(s);
  const auto [lo, hi] = std::minmax_element(s.values().begin(), s.values().end());
  const double p2p = *hi - *lo;
  if (!(p2p > 0.0)) throw DegenerateInput("constant signal has zero peak-to-peak amplitude");
  const AffineMap map{median(s.values()), 1.0 / p2p};
  return {map.apply(s), map};
}

/// R-wave fiducials: strictly increasing sample indices separated by at least
/// the 0.2 s refractory floor.
class RPeaks {
 public:
  static constexpr double kRefractorySeconds = 0.2;

  RPeaks() = default;
  RPeaks(std::vector<std::size_t> indices, double fs) : indices_(std::move(indices)) {
    if (!(fs > 0.0)) throw DegenerateInput("RPeaks: fs must be positive");
    const double floor = kRefractorySeconds * fs;
    for (std::size_t i = 1; i < indices_.size(); ++i) {
      if (indices_[i] <= indices_[i - 1]) {
        throw DegenerateInput("RPeaks: indices not strictly increasing at position " +
                              std::to_string(i));
      }
      if (static_cast<double>(indices_[i] - indices_[i - 1]) < floor) {
        throw DegenerateInput("RPeaks: refractory violation at position " + std::to_string(i));
      }
    }
  }

  /// Drops any fiducial closer than the refractory floor to the last kept one.
  static RPeaks thinned(std::vector<std::size_t> indices, double fs) {
    std::sort(indices.begin(), indices.end());
    std::vector<std::size_t> kept;
    const double floor = kRefractorySeconds * fs;
    for (std::size_t idx : indices) {
      if (kept.empty() || static_cast<double>(idx - kept.back()) >= floor) kept.push_back(idx);
    }
    return RPeaks(std::move(kept), fs);
  }

  [[nodiscard]] const std::vector<std::size_t>& indices() const { return indices_; }
  [[nodiscard]] std::size_t size() const { return indices_.size(); }
  [[nodiscard]] bool empty() const { return indices_.empty(); }
  std::size_t operator[](std::size_t i) const { return indices_[i]; }

  friend bool operator==(const RPeaks&, const RPeaks&) = default;

 private:
  std::vector<std::size_t> indices_;
};

/// Phase per sample in [0, 2pi), zero at every R peak.
class PhaseSeries {
 public:
  PhaseSeries() = default;
  explicit PhaseSeries(std::vector<double> phases) : phases_(std::move(phases)) {
    for (std::size_t i = 0; i < phases_.size(); ++i) {
      if (!(phases_[i] >= 0.0 && phases_[i] < kTwoPi)) {
        throw DegenerateInput("PhaseSeries: value out of [0, 2pi) at index " + std::to_string(i));
      }
    }
  }

  [[nodiscard]] const std::vector<double>& values() const { return phases_; }
  [[nodiscard]] std::size_t size() const { return phases_.size(); }
  double operator[](std::size_t i) const { return phases_[i]; }

 private:
  std::vector<double> phases_;
};

}  // namespace ecgenkf
