#pragma once

// Comparison filters: model-based EKF, Savitzky-Golay smoothing, Daubechies-4
// wavelet shrinkage, NLMS / RLS adaptive noise cancellation and exact 1-D
// total-variation denoising.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "core.hpp"
#include "enkf.hpp"
#include "model.hpp"

namespace ecgenkf::baselines {

enum class ThresholdRule { universal, fixed };

struct SgParams {
  std::size_t window = 15;
  std::size_t polyorder = 3;
  friend bool operator==(const SgParams&, const SgParams&) = default;
};
struct WaveletParams {
  std::size_t levels = 4;
  ThresholdRule rule = ThresholdRule::universal;
  double fixed_threshold = 0.0;  // used when rule == fixed
  friend bool operator==(const WaveletParams&, const WaveletParams&) = default;
};
struct NlmsParams {
  std::size_t taps = 16;
  double mu = 0.5;
  friend bool operator==(const NlmsParams&, const NlmsParams&) = default;
};
struct RlsParams {
  std::size_t taps = 16;
  double forgetting = 0.999;
  double delta = 100.0;
  friend bool operator==(const RlsParams&, const RlsParams&) = default;
};
struct TvdParams {
  // lambda = lambda_scale * sigma, sigma from the universal-threshold noise
  // estimate, unless an absolute lambda is given.
  double lambda_scale = 0.2;
  std::optional<double> lambda;
  friend bool operator==(const TvdParams&, const TvdParams&) = default;
};

struct BaselineParams {
  SgParams sg;
  WaveletParams wavelet;
  NlmsParams nlms;
  RlsParams rls;
  TvdParams tvd;
  enkf::FilterConfig ekf;
  friend bool operator==(const BaselineParams&, const BaselineParams&) = default;
};

inline void validate(const BaselineParams& p) {
  if (p.sg.window % 2 == 0) throw ConfigError("sg.window must be odd");
  if (p.sg.polyorder >= p.sg.window) throw ConfigError("sg.polyorder must be < sg.window");
  if (p.wavelet.levels < 1) throw ConfigError("wavelet.levels must be >= 1");
  if (!(p.nlms.mu > 0.0 && p.nlms.mu < 2.0)) throw ConfigError("nlms.mu must be in (0, 2)");
  if (p.nlms.taps < 1 || p.rls.taps < 1) throw ConfigError("adaptive filter taps must be >= 1");
  if (!(p.rls.forgetting > 0.0 && p.rls.forgetting <= 1.0)) throw ConfigError("rls.forgetting must be in (0, 1]");
  if (!(p.rls.delta > 0.0)) throw ConfigError("rls.delta must be > 0");
  if (p.tvd.lambda && !(*p.tvd.lambda >= 0.0)) throw ConfigError("tvd.lambda must be >= 0");
  if (!(p.tvd.lambda_scale >= 0.0)) throw ConfigError("tvd.lambda_scale must be >= 0");
}

// --- EKF --------------------------------------------------------------------

struct EkfState {
  Eigen::Vector2d x;
  Eigen::Matrix2d p;
};

/// Jacobian of the transition at theta: [[1, 0], [d dz / d theta, 1]].
inline Eigen::Matrix2d ekf_jacobian(double theta, const GaussianWaveParams& params, double omega_delta) {
  Eigen::Matrix2d f;
  f << 1.0, 0.0, z_increment_dtheta(theta, params, omega_delta), 1.0;
  return f;
}

namespace detail {

inline Eigen::Matrix2d ensure_psd(Eigen::Matrix2d p) {
  p = 0.5 * (p + p.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(p);
  const auto ev = eig.eigenvalues();
  if (ev.minCoeff() >= 0.0) return p;
  // rounding can leave a tiny negative eigenvalue; anything larger is a bug
  if (ev.minCoeff() < -1e-9 * std::max(1.0, ev.cwiseAbs().maxCoeff())) {
    throw NumericalError("EKF covariance lost positive semi-definiteness");
  }
  return eig.eigenvectors() * ev.cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// One EKF predict + update cycle moving from sample k-1 to k.
inline EkfState ekf_step(const enkf::EcgModel& model, const EkfState& s, const Eigen::Vector2d& y, std::size_t k) {
  const double omega_delta = model.step_at(k == 0 ? 0 : k - 1);
  const Eigen::Matrix2d f = ekf_jacobian(s.x[0], model.params(), omega_delta);
  Eigen::Vector2d xp{wrap_2pi(s.x[0] + omega_delta), s.x[1] + z_increment(s.x[0], model.params(), omega_delta)};
  Eigen::Matrix2d pp = f * s.p * f.transpose() + model.process_cov();
  pp = 0.5 * (pp + pp.transpose()).eval();
  const Eigen::Matrix2d sm = pp + model.observation_cov();
  const double det = sm.determinant();
  if (!(std::abs(det) > 1e-300)) throw NumericalError("EKF innovation covariance is singular");
  const Eigen::Matrix2d gain = pp * sm.inverse();
  const Eigen::Vector2d innov{wrap_pi(y[0] - xp[0]), y[1] - xp[1]};
  EkfState out;
  out.x = xp + gain * innov;
  out.x[0] = wrap_2pi(out.x[0]);
  // Joseph form keeps the update symmetric positive semi-definite.
  const Eigen::Matrix2d ikh = Eigen::Matrix2d::Identity() - gain;
  out.p = detail::ensure_psd(ikh * pp * ikh.transpose() + gain * model.observation_cov() * gain.transpose());
  return out;
}

inline Signal ekf_denoise(const Signal& s, const RPeaks& peaks, const GaussianWaveParams& params,
                          const enkf::FilterConfig& cfg_in) {
  require_valid(s);
  if (auto d = validate(params)) throw DegenerateInput("ekf_denoise: " + *d);
  const PhaseSeries phase = observed_phase(peaks, s.size(), s.fs());
  std::vector<double> steps = phase_steps(peaks, s.size());
  const auto cfg = enkf::resolve_defaults(cfg_in, s, phase, steps, params);
  const enkf::EcgModel model(params, std::move(steps), cfg.q_theta, *cfg.q_z, *cfg.r_phi, *cfg.r_s);
  EkfState st{{phase[0], s[0]}, model.observation_cov()};
  std::vector<double> out(s.size());
  out[0] = st.x[1];
  for (std::size_t k = 1; k < s.size(); ++k) {
    st = ekf_step(model, st, {phase[k], s[k]}, k);
    out[k] = st.x[1];
  }
  return {std::move(out), s.fs()};
}

// --- Savitzky-Golay ---------------------------------------------------------

/// Least-squares weights that evaluate a degree-`order` polynomial fit over a
/// window of `window` samples at position `at` within that window.
inline std::vector<double> sg_weights(std::size_t window, std::size_t order, std::size_t at) {
  const auto w = static_cast<Eigen::Index>(window);
  const auto cols = static_cast<Eigen::Index>(order + 1);
  const double half = std::max(1.0, static_cast<double>(window - 1) / 2.0);
  auto coord = [&](double j) { return (j - static_cast<double>(window - 1) / 2.0) / half; };
  Eigen::MatrixXd a(w, cols);
  for (Eigen::Index r = 0; r < w; ++r) {
    double v = 1.0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      a(r, c) = v;
      v *= coord(static_cast<double>(r));
    }
  }
  Eigen::RowVectorXd e(cols);
  double v = 1.0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    e[c] = v;
    v *= coord(static_cast<double>(at));
  }
  // w^T = e (A^T A)^-1 A^T, via QR for conditioning.
  const Eigen::MatrixXd pinv = a.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(w, w));
  const Eigen::RowVectorXd weights = e * pinv;
  return {weights.data(), weights.data() + weights.size()};
}

/// Savitzky-Golay smoothing. Near the ends the full-length window is shifted
/// inside the signal and the polynomial evaluated off-centre.
inline Signal sg_filter(const Signal& s, std::size_t window, std::size_t polyorder) {
  require_valid(s);
  if (window % 2 == 0) throw ConfigError("sg_filter: window must be odd");
  if (polyorder >= window) throw ConfigError("sg_filter: polyorder must be < window");
  if (window > s.size()) throw ConfigError("sg_filter: window longer than signal");
  const std::size_t n = s.size();
  const std::size_t half = window / 2;
  std::vector<std::vector<double>> weights(window);
  for (std::size_t at = 0; at < window; ++at) weights[at] = sg_weights(window, polyorder, at);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t start = 0, at = 0;
    if (k < half) {
      start = 0;
      at = k;
    } else if (k + half >= n) {
      start = n - window;
      at = k - start;
    } else {
      start = k - half;
      at = half;
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < window; ++j) acc += weights[at][j] * s[start + j];
    out[k] = acc;
  }
  return {std::move(out), s.fs()};
}

// --- Wavelet ----------------------------------------------------------------

namespace db4 {
inline constexpr std::array<double, 8> dec_lo = {-0.010597401785069032, 0.0328830116668852,  0.030841381835560764,
                                                 -0.18703481171909309,  -0.027983769416859854, 0.6308807679298589,
                                                 0.7148465705529157,    0.2303778133088965};
inline constexpr std::array<double, 8> dec_hi = {-0.2303778133088965,  0.7148465705529157,  -0.6308807679298589,
                                                 -0.027983769416859854, 0.18703481171909309, 0.030841381835560764,
                                                 -0.0328830116668852,  -0.010597401785069032};
inline constexpr std::array<double, 8> rec_lo = {0.2303778133088965,   0.7148465705529157,  0.6308807679298589,
                                                 -0.027983769416859854, -0.18703481171909309, 0.030841381835560764,
                                                 0.0328830116668852,   -0.010597401785069032};
inline constexpr std::array<double, 8> rec_hi = {-0.010597401785069032, -0.0328830116668852, 0.030841381835560764,
                                                 0.18703481171909309,   -0.027983769416859854, -0.6308807679298589,
                                                 0.7148465705529157,    -0.2303778133088965};
}  // namespace db4

namespace detail {

// Half-sample symmetric extension: x[-1-m] = x[m], x[n+m] = x[n-1-m].
inline double sym_at(const std::vector<double>& x, std::ptrdiff_t i) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  while (i < 0 || i >= n) {
    if (i < 0) i = -1 - i;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return x[static_cast<std::size_t>(i)];
}

}  // namespace detail

struct DwtLevel {
  std::vector<double> approx;
  std::vector<double> detail;
};

/// Single-level analysis with symmetric extension; output length
/// floor((n + 7) / 2).
inline DwtLevel dwt(const std::vector<double>& x) {
  constexpr auto f = static_cast<std::ptrdiff_t>(db4::dec_lo.size());
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t len = (n + f - 1) / 2;
  DwtLevel out{std::vector<double>(static_cast<std::size_t>(len)), std::vector<double>(static_cast<std::size_t>(len))};
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    double a = 0.0, d = 0.0;
    for (std::ptrdiff_t j = 0; j < f; ++j) {
      const double v = detail::sym_at(x, 2 * i + 1 - j);
      a += db4::dec_lo[static_cast<std::size_t>(j)] * v;
      d += db4::dec_hi[static_cast<std::size_t>(j)] * v;
    }
    out.approx[static_cast<std::size_t>(i)] = a;
    out.detail[static_cast<std::size_t>(i)] = d;
  }
  return out;
}

/// Single-level synthesis; output length 2 * len - 6.
inline std::vector<double> idwt(const std::vector<double>& approx, const std::vector<double>& detail_coeffs) {
  if (approx.size() != detail_coeffs.size()) throw DegenerateInput("idwt: coefficient length mismatch");
  constexpr auto f = static_cast<std::ptrdiff_t>(db4::rec_lo.size());
  const auto len = static_cast<std::ptrdiff_t>(approx.size());
  const std::ptrdiff_t out_len = 2 * len - f + 2;
  if (out_len <= 0) throw DegenerateInput("idwt: too few coefficients");
  std::vector<double> y(static_cast<std::size_t>(out_len), 0.0);
  for (std::ptrdiff_t t = 0; t < out_len; ++t) {
    const std::ptrdiff_t full = t + f - 2;
    double acc = 0.0;
    for (std::ptrdiff_t j = full % 2; j < f; j += 2) {
      const std::ptrdiff_t i = (full - j) / 2;
      if (i < 0 || i >= len) continue;
      acc += db4::rec_lo[static_cast<std::size_t>(j)] * approx[static_cast<std::size_t>(i)] +
             db4::rec_hi[static_cast<std::size_t>(j)] * detail_coeffs[static_cast<std::size_t>(i)];
    }
    y[static_cast<std::size_t>(t)] = acc;
  }
  return y;
}

struct WaveletDecomposition {
  std::vector<double> approx;               // coarsest approximation
  std::vector<std::vector<double>> details;  // details[0] is the finest level
};

inline WaveletDecomposition wavedec(const std::vector<double>& x, std::size_t levels) {
  WaveletDecomposition out;
  std::vector<double> a = x;
  for (std::size_t l = 0; l < levels; ++l) {
    auto lv = dwt(a);
    out.details.push_back(std::move(lv.detail));
    a = std::move(lv.approx);
  }
  out.approx = std::move(a);
  return out;
}

inline std::vector<double> waverec(const WaveletDecomposition& dec, std::size_t n) {
  std::vector<double> a = dec.approx;
  for (std::size_t l = dec.details.size(); l-- > 0;) {
    const auto& d = dec.details[l];
    if (a.size() == d.size() + 1) a.pop_back();
    a = idwt(a, d);
  }
  if (a.size() > n) a.resize(n);
  return a;
}

inline double soft_threshold(double v, double t) {
  const double m = std::abs(v) - t;
  return m > 0.0 ? std::copysign(m, v) : 0.0;
}

/// sigma = median(|finest details|) / 0.6745.
inline double noise_sigma(const std::vector<double>& x) {
  const auto lv = dwt(x);
  std::vector<double> mag(lv.detail.size());
  std::transform(lv.detail.begin(), lv.detail.end(), mag.begin(), [](double v) { return std::abs(v); });
  return median(std::move(mag)) / 0.6745;
}

inline Signal wavelet_denoise(const Signal& s, std::size_t levels, ThresholdRule rule, double fixed_threshold = 0.0) {
  require_valid(s);
  if (levels < 1) throw ConfigError("wavelet_denoise: levels must be >= 1");
  if (levels >= 63 || s.size() < (std::size_t{1} << levels)) {
    throw DegenerateInput("wavelet_denoise: signal too short for " + std::to_string(levels) + " levels");
  }
  auto dec = wavedec(s.values(), levels);
  double thr = fixed_threshold;
  if (rule == ThresholdRule::universal) {
    std::vector<double> mag(dec.details.front().size());
    std::transform(dec.details.front().begin(), dec.details.front().end(), mag.begin(),
                   [](double v) { return std::abs(v); });
    const double sigma = median(std::move(mag)) / 0.6745;
    thr = sigma * std::sqrt(2.0 * std::log(static_cast<double>(s.size())));
  }
  if (thr > 0.0) {
    for (auto& d : dec.details) {
      for (double& v : d) v = soft_threshold(v, thr);
    }
  }
  return {waverec(dec, s.size()), s.fs()};
}

// --- Adaptive noise cancellation --------------------------------------------

namespace detail {

inline void check_anc_inputs(const Signal& primary, const Signal& reference, std::size_t taps) {
  require_valid(primary);
  if (reference.empty()) throw ConfigError("adaptive filter needs a noise reference channel");
  require_valid(reference);
  if (primary.size() != reference.size()) throw ConfigError("primary and reference lengths differ");
  if (taps < 1) throw ConfigError("taps must be >= 1");
}

}  // namespace detail

/// Output e_k = primary_k - w^T u_k, u_k the most recent `taps` reference samples.
inline Signal nlms_denoise(const Signal& primary, const Signal& reference, std::size_t taps, double mu) {
  detail::check_anc_inputs(primary, reference, taps);
  if (!(mu > 0.0 && mu < 2.0)) throw ConfigError("nlms: mu must be in (0, 2)");
  constexpr double eps = 1e-8;
  const std::size_t n = primary.size();
  std::vector<double> w(taps, 0.0), u(taps, 0.0), out(n);
  double energy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    energy -= u.back() * u.back();
    std::rotate(u.rbegin(), u.rbegin() + 1, u.rend());
    u[0] = reference[k];
    energy += u[0] * u[0];
    energy = std::max(energy, 0.0);
    const double e = primary[k] - std::inner_product(w.begin(), w.end(), u.begin(), 0.0);
    const double g = mu / (eps + energy) * e;
    for (std::size_t j = 0; j < taps; ++j) w[j] += g * u[j];
    out[k] = e;
  }
  return {std::move(out), primary.fs()};
}

inline Signal rls_denoise(const Signal& primary, const Signal& reference, std::size_t taps, double forgetting,
                          double delta) {
  detail::check_anc_inputs(primary, reference, taps);
  if (!(forgetting > 0.0 && forgetting <= 1.0)) throw ConfigError("rls: forgetting must be in (0, 1]");
  if (!(delta > 0.0)) throw ConfigError("rls: delta must be > 0");
  const auto m = static_cast<Eigen::Index>(taps);
  Eigen::MatrixXd p = delta * Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(m), u = Eigen::VectorXd::Zero(m);
  const std::size_t n = primary.size();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (Eigen::Index j = m - 1; j > 0; --j) u[j] = u[j - 1];
    u[0] = reference[k];
    const Eigen::VectorXd pu = p * u;
    const double denom = forgetting + u.dot(pu);
    const Eigen::VectorXd gain = pu / denom;
    const double e = primary[k] - w.dot(u);
    w += gain * e;
    p = (p - gain * pu.transpose()) / forgetting;
    p = 0.5 * (p + p.transpose()).eval();
    out[k] = e;
  }
  return {std::move(out), primary.fs()};
}

// --- Total variation --------------------------------------------------------

/// Exact minimiser of 0.5 ||y - x||^2 + lambda sum |x_{k+1} - x_k|.
///
/// Dynamic programming over the piecewise-quadratic value function: the
/// derivative of each stage is piecewise linear, stored as (slope, intercept)
/// increments at sorted knots. The forward pass records where the derivative
/// crosses -lambda and +lambda; the backward pass clamps.
inline std::vector<double> tvd(const std::vector<double>& y, double lambda) {
  const std::size_t n = y.size();
  if (n <= 1 || lambda == 0.0) return y;
  if (!(lambda > 0.0)) throw ConfigError("tvd: lambda must be >= 0");

  std::vector<double> knot(2 * n), da(2 * n), db(2 * n);
  std::vector<double> lo_knot(n - 1), hi_knot(n - 1);

  lo_knot[0] = y[0] - lambda;
  hi_knot[0] = y[0] + lambda;
  std::size_t left = n - 1, right = n;
  knot[left] = lo_knot[0];
  knot[right] = hi_knot[0];
  da[left] = 1.0;
  db[left] = -y[0] + lambda;
  da[right] = -1.0;
  db[right] = y[0] + lambda;
  double a_first = 1.0, b_first = -y[1] - lambda;
  double a_last = -1.0, b_last = y[1] - lambda;

  for (std::size_t k = 1; k + 1 < n; ++k) {
    double a_lo = a_first, b_lo = b_first;
    std::size_t lo = left;
    for (; lo <= right; ++lo) {
      if (a_lo * knot[lo] + b_lo > -lambda) break;
      a_lo += da[lo];
      b_lo += db[lo];
    }
    // lo >= 1 throughout (left only moves down by one per stage), so hi
    // stops at lo - 1 >= 0 at worst.
    double a_hi = a_last, b_hi = b_last;
    std::size_t hi = right;
    for (; hi >= lo; --hi) {
      if (-a_hi * knot[hi] - b_hi < lambda) break;
      a_hi += da[hi];
      b_hi += db[hi];
    }
    lo_knot[k] = (-lambda - b_lo) / a_lo;
    left = lo - 1;
    knot[left] = lo_knot[k];
    hi_knot[k] = (lambda + b_hi) / (-a_hi);
    right = hi + 1;
    knot[right] = hi_knot[k];

    da[left] = a_lo;
    db[left] = b_lo + lambda;
    da[right] = a_hi;
    db[right] = b_hi + lambda;
    a_first = 1.0;
    b_first = -y[k + 1] - lambda;
    a_last = -1.0;
    b_last = y[k + 1] - lambda;
  }

  double a_lo = a_first, b_lo = b_first;
  for (std::size_t lo = left; lo <= right; ++lo) {
    if (a_lo * knot[lo] + b_lo > 0.0) break;
    a_lo += da[lo];
    b_lo += db[lo];
  }
  std::vector<double> x(n);
  x[n - 1] = -b_lo / a_lo;
  for (std::size_t k = n - 1; k-- > 0;) {
    x[k] = std::clamp(x[k + 1], lo_knot[k], hi_knot[k]);
  }
  return x;
}

inline Signal tvd_denoise(const Signal& s, double lambda) {
  require_valid(s);
  if (!(lambda >= 0.0)) throw ConfigError("tvd: lambda must be >= 0");
  return {tvd(s.values(), lambda), s.fs()};
}

inline double tv_objective(const std::vector<double>& y, const std::vector<double>& x, double lambda) {
  double f = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) f += 0.5 * (y[k] - x[k]) * (y[k] - x[k]);
  for (std::size_t k = 0; k + 1 < x.size(); ++k) f += lambda * std::abs(x[k + 1] - x[k]);
  return f;
}

}  // namespace ecgenkf::baselines
