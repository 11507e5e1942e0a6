#pragma once

// Sum-of-Gaussians ECG dynamic model in polar form: the phase advances
// linearly around a limit cycle and the amplitude integrates the derivative of
// five Gaussian waves (P, Q, R, S, T) centred at fixed phases.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "core.hpp"
#include "rng.hpp"

namespace ecgenkf {

inline constexpr std::size_t kWaves = 5;
enum class Wave : std::size_t { P = 0, Q = 1, R = 2, S = 3, T = 4 };

struct GaussianWaveParams {
  std::array<double, kWaves> alpha{};  // mV
  std::array<double, kWaves> b{};      // rad
  std::array<double, kWaves> theta{};  // rad, R at 0

  friend bool operator==(const GaussianWaveParams&, const GaussianWaveParams&) = default;
};

/// Initializer morphology, amplitudes scaled so the R wave is 1.
inline GaussianWaveParams default_morphology(double r_amplitude = 1.0) {
  constexpr double pi = std::numbers::pi;
  GaussianWaveParams p;
  p.theta = {-pi / 3.0, -pi / 12.0, 0.0, pi / 12.0, pi / 2.0};
  const std::array<double, kWaves> raw = {1.2, -5.0, 30.0, -7.5, 0.75};
  for (std::size_t i = 0; i < kWaves; ++i) p.alpha[i] = raw[i] / 30.0 * r_amplitude;
  p.b = {0.25, 0.1, 0.1, 0.1, 0.4};
  return p;
}

inline std::optional<std::string> validate(const GaussianWaveParams& p) {
  for (std::size_t i = 0; i < kWaves; ++i) {
    if (!std::isfinite(p.alpha[i]) || !std::isfinite(p.b[i]) || !std::isfinite(p.theta[i])) {
      return "non-finite parameter for wave " + std::to_string(i);
    }
    if (!(p.b[i] > 0.0)) return "non-positive width for wave " + std::to_string(i);
    if (p.theta[i] <= -std::numbers::pi || p.theta[i] > std::numbers::pi) {
      return "centre out of (-pi, pi] for wave " + std::to_string(i);
    }
    if (i > 0 && !(p.theta[i - 1] < p.theta[i])) return "wave centres not ordered P<Q<R<S<T";
  }
  return std::nullopt;
}

struct ModelState {
  double theta = 0.0;  // [0, 2pi)
  double z = 0.0;      // mV
};

/// Angular velocity and sampling period for one transition.
struct BeatClock {
  double omega = kTwoPi;  // rad/s
  double delta = 1.0 / 360.0;

  [[nodiscard]] double step() const { return omega * delta; }
};

/// g(phi) = sum_i alpha_i exp(-dtheta_i^2 / (2 b_i^2)), the noise-free beat shape.
inline double gaussian_sum(double phi, const GaussianWaveParams& p) {
  double g = 0.0;
  for (std::size_t i = 0; i < kWaves; ++i) {
    const double d = wrap_pi(phi - p.theta[i]);
    g += p.alpha[i] * std::exp(-d * d / (2.0 * p.b[i] * p.b[i]));
  }
  return g;
}

/// Deterministic amplitude increment of one transition from phase theta.
inline double z_increment(double theta, const GaussianWaveParams& p, double omega_delta) {
  double dz = 0.0;
  for (std::size_t i = 0; i < kWaves; ++i) {
    const double d = wrap_pi(theta - p.theta[i]);
    const double b2 = p.b[i] * p.b[i];
    dz -= p.alpha[i] * d * (omega_delta / b2) * std::exp(-d * d / (2.0 * b2));
  }
  return dz;
}

/// d(z_increment)/d(theta), the only non-trivial Jacobian entry.
inline double z_increment_dtheta(double theta, const GaussianWaveParams& p, double omega_delta) {
  double j = 0.0;
  for (std::size_t i = 0; i < kWaves; ++i) {
    const double d = wrap_pi(theta - p.theta[i]);
    const double b2 = p.b[i] * p.b[i];
    j -= p.alpha[i] * (omega_delta / b2) * std::exp(-d * d / (2.0 * b2)) * (1.0 - d * d / b2);
  }
  return j;
}

inline ModelState transition(const ModelState& s, const GaussianWaveParams& p, const BeatClock& clock,
                             double eta) {
  const double step = clock.step();
  return {wrap_2pi(s.theta + step), s.z + z_increment(s.theta, p, step) + eta};
}

// --- synthesis & phase ------------------------------------------------------

struct SyntheticEcg {
  Signal signal;
  PhaseSeries phase;
  RPeaks r_peaks;
};

/// Generates z by iterating the transition. Each beat spans round(rr * fs)
/// samples and its phase step is 2pi over that count, so phase is exactly
/// zero at every beat start.
inline SyntheticEcg synthesize(const GaussianWaveParams& params, const std::vector<double>& rr_intervals,
                               double fs, double noise_std, std::uint64_t seed) {
  if (!(fs > 0.0)) throw DegenerateInput("synthesize: fs must be positive");
  if (auto d = validate(params)) throw DegenerateInput("synthesize: " + *d);
  std::vector<std::size_t> lengths;
  for (double rr : rr_intervals) {
    if (!(rr > RPeaks::kRefractorySeconds)) throw DegenerateInput("synthesize: rr interval must exceed 0.2 s");
    lengths.push_back(static_cast<std::size_t>(std::llround(rr * fs)));
  }
  std::vector<double> z;
  std::vector<double> phase;
  std::vector<std::size_t> peaks;
  NormalStream noise(substream(seed, 0, 0, hash_string("synthesize")));
  ModelState state{0.0, gaussian_sum(0.0, params)};
  for (std::size_t beat = 0; beat < lengths.size(); ++beat) {
    const std::size_t n = lengths[beat];
    const BeatClock clock{kTwoPi / (static_cast<double>(n) / fs), 1.0 / fs};
    peaks.push_back(z.size());
    for (std::size_t m = 0; m < n; ++m) {
      state.theta = kTwoPi * static_cast<double>(m) / static_cast<double>(n);
      z.push_back(state.z);
      phase.push_back(state.theta);
      state = transition(state, params, clock, noise(noise_std));
    }
  }
  return {Signal(std::move(z), fs), PhaseSeries(std::move(phase)), RPeaks(std::move(peaks), fs)};
}

/// Per-sample phase step (omega * delta) for the transition leaving sample k:
/// 2pi over the length of the R-R interval containing k, with the nearest
/// interval used outside the first/last fiducials.
inline std::vector<double> phase_steps(const RPeaks& peaks, std::size_t length) {
  if (peaks.size() < 2) throw DegenerateInput("insufficient fiducials: need at least 2 R peaks");
  std::vector<double> steps(length);
  std::size_t j = 0;
  for (std::size_t k = 0; k < length; ++k) {
    while (j + 2 < peaks.size() && k >= peaks[j + 1]) ++j;
    steps[k] = kTwoPi / static_cast<double>(peaks[j + 1] - peaks[j]);
  }
  return steps;
}

/// Linear time-wrapping of each R-R interval onto [0, 2pi).
inline PhaseSeries observed_phase(const RPeaks& peaks, std::size_t length, double fs) {
  if (peaks.size() < 2) throw DegenerateInput("insufficient fiducials: need at least 2 R peaks");
  if (!(fs > 0.0)) throw DegenerateInput("observed_phase: fs must be positive");
  std::vector<double> phi(length);
  std::size_t j = 0;
  for (std::size_t k = 0; k < length; ++k) {
    while (j + 2 < peaks.size() && k >= peaks[j + 1]) ++j;
    const double start = static_cast<double>(peaks[j]);
    const double len = static_cast<double>(peaks[j + 1] - peaks[j]);
    const double x = static_cast<double>(k);
    if (k == peaks[j] || k == peaks[j + 1]) {
      phi[k] = 0.0;
    } else {
      phi[k] = wrap_2pi(kTwoPi * (x - start) / len);
    }
  }
  return PhaseSeries(std::move(phi));
}

// --- beat template & fit ----------------------------------------------------

struct BeatTemplate {
  std::vector<double> centers;
  std::vector<double> mean;
  std::vector<double> stddev;

  [[nodiscard]] std::size_t size() const { return centers.size(); }
};

/// Phase-binned average beat. Bin b covers [2pi b/n, 2pi (b+1)/n).
inline BeatTemplate mean_beat(const Signal& s, const PhaseSeries& phase, std::size_t n_bins = 64) {
  if (n_bins < 16) throw DegenerateInput("mean_beat: need at least 16 bins");
  if (phase.size() != s.size()) throw DegenerateInput("mean_beat: phase/signal length mismatch");
  std::vector<double> sum(n_bins, 0.0), sum2(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  const double width = kTwoPi / static_cast<double>(n_bins);
  for (std::size_t k = 0; k < s.size(); ++k) {
    auto b = static_cast<std::size_t>(phase[k] / width);
    if (b >= n_bins) b = n_bins - 1;
    sum[b] += s[k];
    sum2[b] += s[k] * s[k];
    ++count[b];
  }
  BeatTemplate t;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) throw DegenerateInput("mean_beat: coverage error, bin " + std::to_string(b) + " is empty");
    const double n = static_cast<double>(count[b]);
    const double m = sum[b] / n;
    t.centers.push_back((static_cast<double>(b) + 0.5) * width);
    t.mean.push_back(m);
    t.stddev.push_back(std::sqrt(std::max(0.0, sum2[b] / n - m * m)));
  }
  return t;
}

struct FitResult {
  GaussianWaveParams params;
  double objective = 0.0;
  std::size_t iterations = 0;
  std::vector<double> objective_trace;  // accepted iterates, starting at init
};

/// Non-finite objective during fitting; carries the accepted objective values.
struct FitDivergence : NumericalError {
  FitDivergence(const std::string& what, std::vector<double> trace)
      : NumericalError(what), objective_trace(std::move(trace)) {}
  std::vector<double> objective_trace;
};

namespace detail {

// Nonlinear parameters: five widths and the four non-R centres. Amplitudes are
// eliminated by linear least squares at every evaluation (variable projection).
inline constexpr std::size_t kNonlinear = 9;
inline constexpr double kMinWidth = 0.01;
inline constexpr double kOrderPenalty = 1e3;

using NlVec = Eigen::Matrix<double, kNonlinear, 1>;

inline NlVec pack(const GaussianWaveParams& p) {
  NlVec v;
  for (std::size_t i = 0; i < kWaves; ++i) v[static_cast<Eigen::Index>(i)] = p.b[i];
  v[5] = p.theta[0];
  v[6] = p.theta[1];
  v[7] = p.theta[3];
  v[8] = p.theta[4];
  return v;
}

inline GaussianWaveParams unpack(const NlVec& v) {
  GaussianWaveParams p;
  for (std::size_t i = 0; i < kWaves; ++i) p.b[i] = v[static_cast<Eigen::Index>(i)];
  p.theta = {v[5], v[6], 0.0, v[7], v[8]};
  return p;
}

inline NlVec project(NlVec v) {
  for (Eigen::Index i = 0; i < 5; ++i) v[i] = std::max(std::abs(v[i]), kMinWidth);
  for (Eigen::Index i = 5; i < 9; ++i) v[i] = wrap_pi(v[i]);
  return v;
}

struct Evaluation {
  Eigen::VectorXd residual;
  std::array<double, kWaves> alpha{};
};

inline Evaluation evaluate(const NlVec& v, const BeatTemplate& t) {
  const auto n = static_cast<Eigen::Index>(t.size());
  GaussianWaveParams p = unpack(v);
  Eigen::MatrixXd g(n, static_cast<Eigen::Index>(kWaves));
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    y[r] = t.mean[static_cast<std::size_t>(r)];
    for (std::size_t i = 0; i < kWaves; ++i) {
      const double d = wrap_pi(t.centers[static_cast<std::size_t>(r)] - p.theta[i]);
      g(r, static_cast<Eigen::Index>(i)) = std::exp(-d * d / (2.0 * p.b[i] * p.b[i]));
    }
  }
  const Eigen::VectorXd a = g.completeOrthogonalDecomposition().solve(y);
  Evaluation e;
  e.residual.resize(n + 4);
  e.residual.head(n) = y - g * a;
  // Ordering P < Q < R(=0) < S < T as hinge penalties. Neighbours must sit at
  // least half their summed widths apart, otherwise two waves can cancel into
  // a large-amplitude dipole that fits noise rather than morphology.
  const std::array<double, 5> th = p.theta;
  for (std::size_t i = 0; i < 4; ++i) {
    const double gap = 0.5 * (p.b[i] + p.b[i + 1]);
    e.residual[n + static_cast<Eigen::Index>(i)] = kOrderPenalty * std::max(0.0, th[i] + gap - th[i + 1]);
  }
  for (std::size_t i = 0; i < kWaves; ++i) e.alpha[i] = a[static_cast<Eigen::Index>(i)];
  return e;
}

}  // namespace detail

inline double fit_objective(const GaussianWaveParams& p, const BeatTemplate& t) {
  double f = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double r = t.mean[k] - gaussian_sum(t.centers[k], p);
    f += r * r;
  }
  return f;
}

/// Least-squares fit of the Gaussian wave parameters to a binned template.
/// Levenberg-Marquardt over widths and centres with amplitudes solved in closed
/// form; only objective-decreasing steps are accepted.
inline FitResult fit_params(const BeatTemplate& t, const GaussianWaveParams& init,
                            std::size_t max_iterations = 200, double rel_tol = 1e-8) {
  using detail::NlVec;
  if (auto d = validate(init)) throw DegenerateInput("fit_params: invalid init: " + *d);
  if (t.size() < detail::kNonlinear + kWaves) throw DegenerateInput("fit_params: template too short");

  NlVec v = detail::project(detail::pack(init));
  auto ev = detail::evaluate(v, t);
  double f = ev.residual.squaredNorm();
  if (!std::isfinite(f)) throw FitDivergence("fit divergence: non-finite objective at init", {});

  FitResult out;
  out.objective_trace.push_back(f);
  const double energy = Eigen::Map<const Eigen::VectorXd>(t.mean.data(), static_cast<Eigen::Index>(t.size())).squaredNorm();
  double lambda = 1e-3;
  std::size_t it = 0;
  for (; it < max_iterations; ++it) {
    if (f <= 1e-28 * (1.0 + energy)) break;
    const auto m = ev.residual.size();
    Eigen::MatrixXd jac(m, static_cast<Eigen::Index>(detail::kNonlinear));
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(detail::kNonlinear); ++c) {
      const double h = 1e-6 * std::max(1.0, std::abs(v[c]));
      NlVec vp = v, vm = v;
      vp[c] += h;
      vm[c] -= h;
      jac.col(c) = (detail::evaluate(vp, t).residual - detail::evaluate(vm, t).residual) / (2.0 * h);
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const NlVec grad = jac.transpose() * ev.residual;
    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const NlVec step = a.ldlt().solve(-grad);
      const NlVec cand = detail::project(v + step);
      auto cand_ev = detail::evaluate(cand, t);
      const double fc = cand_ev.residual.squaredNorm();
      if (!std::isfinite(fc)) {
        throw FitDivergence("fit divergence: non-finite objective at iteration " + std::to_string(it),
                            out.objective_trace);
      }
      if (fc < f) {
        const double rel = (f - fc) / f;
        v = cand;
        ev = std::move(cand_ev);
        f = fc;
        out.objective_trace.push_back(f);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (rel < rel_tol) it = max_iterations;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) break;
  }
  out.iterations = std::min(it, max_iterations);
  out.params = detail::unpack(v);
  out.params.alpha = ev.alpha;
  out.objective = fit_objective(out.params, t);
  return out;
}

// --- R-peak detection -------------------------------------------------------

namespace detail {

// Linear-phase windowed-sinc band-pass, applied with its delay removed.
inline std::vector<double> bandpass_fir(const std::vector<double>& x, double fs, double lo_hz, double hi_hz) {
  const auto half = static_cast<std::ptrdiff_t>(std::llround(0.125 * fs));
  const std::ptrdiff_t len = 2 * half + 1;
  std::vector<double> h(static_cast<std::size_t>(len));
  const double f1 = lo_hz / fs, f2 = hi_hz / fs;
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    const double m = static_cast<double>(i - half);
    const double ideal = (m == 0.0) ? 2.0 * (f2 - f1)
                                    : (std::sin(kTwoPi * f2 * m) - std::sin(kTwoPi * f1 * m)) / (std::numbers::pi * m);
    const double w = 0.54 - 0.46 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(len - 1));
    h[static_cast<std::size_t>(i)] = ideal * w;
  }
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::ptrdiff_t i = 0; i < len; ++i) {
      const std::ptrdiff_t src = k + half - i;
      if (src >= 0 && src < n) acc += h[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(src)];
    }
    y[static_cast<std::size_t>(k)] = acc;
  }
  return y;
}

}  // namespace detail

/// Pan-Tompkins style QRS detector: band-pass, derivative, square, 150 ms
/// moving integration, adaptive thresholds with search-back, then the R peak
/// is placed at the raw-signal maximum within +-50 ms of each envelope peak.
inline RPeaks detect_r_peaks(const Signal& s) {
  require_valid(s);
  const double fs = s.fs();
  if (static_cast<double>(s.size()) < 2.0 * fs) throw DegenerateInput("detect_r_peaks: need at least 2 s of signal");
  const auto n = s.size();

  // Remove the median first: the filter is zero-padded, so an offset would
  // otherwise ring at both ends.
  const double offset = median(s.values());
  std::vector<double> centred(s.values());
  for (double& v : centred) v -= offset;
  const auto bp = detail::bandpass_fir(centred, fs, 5.0, 15.0);
  std::vector<double> sq(n, 0.0);
  for (std::size_t k = 2; k + 2 < n; ++k) {
    const double d = (2.0 * bp[k + 2] + bp[k + 1] - bp[k - 1] - 2.0 * bp[k - 2]) / 8.0;
    sq[k] = d * d;
  }
  const auto win = static_cast<std::size_t>(std::max<long long>(1, std::llround(0.150 * fs)));
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + sq[k];
  std::vector<double> mwi(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t lo = k >= win / 2 ? k - win / 2 : 0;
    const std::size_t hi = std::min(n, lo + win);
    mwi[k] = (prefix[hi] - prefix[lo]) / static_cast<double>(win);
  }

  const auto refractory = static_cast<std::size_t>(std::ceil(RPeaks::kRefractorySeconds * fs));
  // Candidates: envelope samples that dominate a +-refractory neighbourhood.
  std::vector<std::size_t> candidates;
  {
    std::size_t k = 0;
    while (k < n) {
      const std::size_t lo = k >= refractory ? k - refractory : 0;
      const std::size_t hi = std::min(n - 1, k + refractory);
      bool is_max = mwi[k] > 0.0;
      for (std::size_t j = lo; j <= hi && is_max; ++j) {
        if (mwi[j] > mwi[k] || (mwi[j] == mwi[k] && j < k)) is_max = false;
      }
      if (is_max) {
        candidates.push_back(k);
        k += refractory;
      } else {
        ++k;
      }
    }
  }
  if (candidates.empty()) throw DegenerateInput("detect_r_peaks: detection failure, no QRS energy");

  const auto learn = static_cast<std::size_t>(2.0 * fs);
  double spk = 0.0, npk = 0.0;
  {
    double mx = 0.0, mean = 0.0;
    for (std::size_t k = 0; k < std::min(n, learn); ++k) {
      mx = std::max(mx, mwi[k]);
      mean += mwi[k];
    }
    mean /= static_cast<double>(std::min(n, learn));
    spk = 0.25 * mx;
    npk = 0.5 * mean;
  }
  if (!(spk > 0.0)) throw DegenerateInput("detect_r_peaks: detection failure, flat envelope");

  std::vector<std::size_t> qrs;
  std::vector<bool> taken(candidates.size(), false);
  double rr_avg = 0.0;
  std::size_t ci_last = 0;
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    const std::size_t k = candidates[ci];
    const double thr1 = npk + 0.25 * (spk - npk);
    const double thr2 = 0.5 * thr1;
    // Search back over skipped candidates when a beat seems missing.
    if (!qrs.empty() && rr_avg > 0.0 && static_cast<double>(k - qrs.back()) > 1.66 * rr_avg) {
      std::size_t best = candidates.size();
      for (std::size_t cj = ci_last + 1; cj < ci; ++cj) {
        if (!taken[cj] && mwi[candidates[cj]] > thr2 &&
            candidates[cj] - qrs.back() >= refractory &&
            (best == candidates.size() || mwi[candidates[cj]] > mwi[candidates[best]])) {
          best = cj;
        }
      }
      if (best != candidates.size()) {
        const std::size_t kb = candidates[best];
        taken[best] = true;
        rr_avg = 0.875 * rr_avg + 0.125 * static_cast<double>(kb - qrs.back());
        qrs.push_back(kb);
        spk = 0.25 * mwi[kb] + 0.75 * spk;
        ci_last = best;
      }
    }
    if (mwi[k] > thr1 && (qrs.empty() || k - qrs.back() >= refractory)) {
      if (!qrs.empty()) {
        const double rr = static_cast<double>(k - qrs.back());
        rr_avg = rr_avg == 0.0 ? rr : 0.875 * rr_avg + 0.125 * rr;
      }
      qrs.push_back(k);
      taken[ci] = true;
      ci_last = ci;
      spk = 0.125 * mwi[k] + 0.875 * spk;
    } else {
      npk = 0.125 * mwi[k] + 0.875 * npk;
    }
  }
  if (qrs.empty()) throw DegenerateInput("detect_r_peaks: detection failure, no peak crossed threshold");

  const auto reach = static_cast<std::size_t>(std::llround(0.050 * fs));
  std::vector<std::size_t> located;
  located.reserve(qrs.size());
  for (std::size_t k : qrs) {
    const std::size_t lo = k >= reach ? k - reach : 0;
    const std::size_t hi = std::min(n - 1, k + reach);
    std::size_t best = lo;
    for (std::size_t j = lo; j <= hi; ++j) {
      if (s[j] > s[best]) best = j;
    }
    located.push_back(best);
  }
  return RPeaks::thinned(std::move(located), fs);
}

}  // namespace ecgenkf
