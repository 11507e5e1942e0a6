#pragma once

// Ensemble Kalman filter with perturbed observations.
//
// The filter core is generic over a state-space model (see StateSpaceModel);
// EcgModel plugs the sum-of-Gaussians ECG dynamics into it. A model owns every
// rule that depends on the geometry of its state: residuals (phase differences
// are wrapped to (-pi, pi]), means (phase uses the circular mean) and
// canonicalisation (phase back into [0, 2pi)).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace ecgenkf::enkf {

// Stream tags so predict/update/init draws never share a substream.
inline constexpr std::uint64_t kTagInit = 0x494e4954;
inline constexpr std::uint64_t kTagPredict = 0x50524544;
inline constexpr std::uint64_t kTagUpdate = 0x55504454;

template <class M>
concept StateSpaceModel = requires(const M& m, const typename M::State& x, const typename M::Observation& y,
                                   std::span<const typename M::State> xs,
                                   std::span<const typename M::Observation> ys, std::size_t k,
                                   NormalStream& noise) {
  { m.propagate(x, k, noise) } -> std::same_as<typename M::State>;
  { m.observe(x) } -> std::same_as<typename M::Observation>;
  { m.state_residual(x, x) } -> std::same_as<typename M::State>;
  { m.obs_residual(y, y) } -> std::same_as<typename M::Observation>;
  { m.state_mean(xs) } -> std::same_as<typename M::State>;
  { m.obs_mean(ys) } -> std::same_as<typename M::Observation>;
  { m.canonical(x) } -> std::same_as<typename M::State>;
  { m.observation_noise(noise) } -> std::same_as<typename M::Observation>;
  { m.observation_cov() };
};

template <class M>
using StateOf = typename M::State;
template <class M>
using ObsOf = typename M::Observation;

template <int Dx, int Dy>
struct GainMatrices {
  Eigen::Matrix<double, Dx, Dy> p_xy = Eigen::Matrix<double, Dx, Dy>::Zero();
  Eigen::Matrix<double, Dy, Dy> p_yy = Eigen::Matrix<double, Dy, Dy>::Zero();
  Eigen::Matrix<double, Dx, Dy> k = Eigen::Matrix<double, Dx, Dy>::Zero();
};

template <class M>
using GainOf = GainMatrices<StateOf<M>::RowsAtCompileTime, ObsOf<M>::RowsAtCompileTime>;

template <class State>
using Ensemble = std::vector<State>;

/// Pushes every member through the model dynamics. Member i at step k draws
/// from its own substream, so results do not depend on iteration order.
template <StateSpaceModel M>
Ensemble<StateOf<M>> predict(const M& model, const Ensemble<StateOf<M>>& ens, std::size_t k,
                             std::uint64_t seed) {
  Ensemble<StateOf<M>> out(ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    NormalStream noise(substream(seed, k, i, kTagPredict));
    out[i] = model.canonical(model.propagate(ens[i], k, noise));
  }
  return out;
}

/// Sample cross- and innovation covariances with the 1/N normaliser.
template <StateSpaceModel M>
GainOf<M> sample_covariances(const M& model, const Ensemble<StateOf<M>>& pred,
                             const std::vector<ObsOf<M>>& predicted_obs) {
  const std::size_t n = pred.size();
  if (n < 2) throw DegenerateInput("degenerate ensemble: need at least 2 members");
  if (predicted_obs.size() != n) throw DegenerateInput("sample_covariances: observation count mismatch");
  const StateOf<M> x_mean = model.state_mean(std::span<const StateOf<M>>(pred));
  const ObsOf<M> y_mean = model.obs_mean(std::span<const ObsOf<M>>(predicted_obs));
  GainOf<M> g;
  for (std::size_t i = 0; i < n; ++i) {
    const StateOf<M> dx = model.state_residual(pred[i], x_mean);
    const ObsOf<M> dy = model.obs_residual(predicted_obs[i], y_mean);
    g.p_xy.noalias() += dx * dy.transpose();
    g.p_yy.noalias() += dy * dy.transpose();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  g.p_xy *= inv_n;
  g.p_yy *= inv_n;
  g.p_yy = 0.5 * (g.p_yy + g.p_yy.transpose()).eval();
  return g;
}

/// K = P_xy (P_yy + R)^-1.
template <class Gain, class Cov>
Gain kalman_gain(Gain g, const Cov& r) {
  const auto s = (g.p_yy + r).eval();
  const double det = s.determinant();
  if (!(std::abs(det) > 1e-300) || !std::isfinite(det)) {
    throw NumericalError("singular innovation covariance (check observation noise configuration)");
  }
  g.k = g.p_xy * s.inverse();
  return g;
}

/// Perturbed-observation analysis step: x_i += K ((y + v_i) - h(x_i)), v_i ~ N(0, R).
template <StateSpaceModel M>
Ensemble<StateOf<M>> update(const M& model, const Ensemble<StateOf<M>>& ens, const ObsOf<M>& y,
                            const GainOf<M>& g, std::size_t k, std::uint64_t seed) {
  Ensemble<StateOf<M>> out(ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    NormalStream noise(substream(seed, k, i, kTagUpdate));
    const ObsOf<M> perturbed = y + model.observation_noise(noise);
    const ObsOf<M> innovation = model.obs_residual(perturbed, model.observe(ens[i]));
    out[i] = model.canonical(ens[i] + g.k * innovation);
  }
  return out;
}

template <StateSpaceModel M>
StateOf<M> estimate(const M& model, const Ensemble<StateOf<M>>& ens) {
  return model.state_mean(std::span<const StateOf<M>>(ens));
}

/// One full forecast/analysis cycle at step k.
template <StateSpaceModel M>
Ensemble<StateOf<M>> step(const M& model, const Ensemble<StateOf<M>>& ens, const ObsOf<M>& y, std::size_t k,
                          std::uint64_t seed) {
  auto pred = predict(model, ens, k, seed);
  std::vector<ObsOf<M>> hx(pred.size());
  std::transform(pred.begin(), pred.end(), hx.begin(), [&](const auto& x) { return model.observe(x); });
  const auto gain = kalman_gain(sample_covariances(model, pred, hx), model.observation_cov());
  return update(model, pred, y, gain, k, seed);
}

/// Runs the filter over observations 1..n-1 starting from an ensemble that
/// already represents step 0. Returns the per-step mean estimates.
template <StateSpaceModel M>
std::vector<StateOf<M>> run(const M& model, Ensemble<StateOf<M>> ens, std::span<const ObsOf<M>> ys,
                            std::uint64_t seed) {
  std::vector<StateOf<M>> out;
  out.reserve(ys.size());
  if (ys.empty()) return out;
  out.push_back(estimate(model, ens));
  for (std::size_t k = 1; k < ys.size(); ++k) {
    ens = step(model, ens, ys[k], k, seed);
    out.push_back(estimate(model, ens));
  }
  return out;
}

// --- ECG specialisation -----------------------------------------------------

struct FilterConfig {
  std::size_t n_ensemble = 100;
  double q_theta = 0.01;              // rad
  std::optional<double> q_z;          // mV; nullopt = estimate from template
  std::optional<double> r_phi;        // rad; nullopt = estimate from fiducials
  std::optional<double> r_s;          // mV; nullopt = estimate from first 2 s
  std::uint64_t seed = 0;

  friend bool operator==(const FilterConfig&, const FilterConfig&) = default;
};

inline void validate(const FilterConfig& c) {
  if (c.n_ensemble < 2) throw ConfigError("n_ensemble must be at least 2");
  auto nonneg = [](const std::optional<double>& v, const char* name) {
    if (v && !(*v >= 0.0 && std::isfinite(*v))) throw ConfigError(std::string(name) + " must be a finite value >= 0");
  };
  if (!(c.q_theta >= 0.0 && std::isfinite(c.q_theta))) throw ConfigError("q_theta must be a finite value >= 0");
  nonneg(c.q_z, "q_z");
  nonneg(c.r_phi, "r_phi");
  nonneg(c.r_s, "r_s");
  if (c.r_phi && c.r_s && *c.r_phi == 0.0 && *c.r_s == 0.0) throw ConfigError("r_phi and r_s cannot both be zero");
}

/// State (theta, z), observation (phi, s) = identity measurement of the state.
class EcgModel {
 public:
  using State = Eigen::Vector2d;
  using Observation = Eigen::Vector2d;

  EcgModel(GaussianWaveParams params, std::vector<double> steps, double q_theta, double q_z, double r_phi,
           double r_s)
      : params_(params), steps_(std::move(steps)), q_theta_(q_theta), q_z_(q_z), r_phi_(r_phi), r_s_(r_s) {}

  /// Advances from sample k-1 to sample k.
  [[nodiscard]] State propagate(const State& x, std::size_t k, NormalStream& noise) const {
    const double omega_delta = steps_[k == 0 ? 0 : k - 1];
    const double eta = noise(q_z_);
    const double dtheta = noise(q_theta_);
    return {x[0] + omega_delta + dtheta, x[1] + z_increment(x[0], params_, omega_delta) + eta};
  }
  [[nodiscard]] Observation observe(const State& x) const { return x; }
  [[nodiscard]] State state_residual(const State& a, const State& b) const { return {wrap_pi(a[0] - b[0]), a[1] - b[1]}; }
  [[nodiscard]] Observation obs_residual(const Observation& a, const Observation& b) const {
    return {wrap_pi(a[0] - b[0]), a[1] - b[1]};
  }
  [[nodiscard]] State state_mean(std::span<const State> xs) const { return circular_mean(xs); }
  [[nodiscard]] Observation obs_mean(std::span<const Observation> ys) const { return circular_mean(ys); }
  [[nodiscard]] State canonical(const State& x) const { return {wrap_2pi(x[0]), x[1]}; }
  [[nodiscard]] Observation observation_noise(NormalStream& noise) const {
    const double vphi = noise(r_phi_);
    const double vs = noise(r_s_);
    return {vphi, vs};
  }
  [[nodiscard]] Eigen::Matrix2d observation_cov() const {
    return Eigen::Vector2d(r_phi_ * r_phi_, r_s_ * r_s_).asDiagonal();
  }
  [[nodiscard]] Eigen::Matrix2d process_cov() const {
    return Eigen::Vector2d(q_theta_ * q_theta_, q_z_ * q_z_).asDiagonal();
  }
  [[nodiscard]] const GaussianWaveParams& params() const { return params_; }
  [[nodiscard]] double step_at(std::size_t k) const { return steps_[k]; }

  /// Component 0 is a phase: circular mean; component 1 arithmetic mean.
  static Eigen::Vector2d circular_mean(std::span<const Eigen::Vector2d> xs) {
    if (xs.empty()) throw DegenerateInput("mean of empty ensemble");
    double sn = 0.0, cs = 0.0, z = 0.0;
    for (const auto& x : xs) {
      sn += std::sin(x[0]);
      cs += std::cos(x[0]);
      z += x[1];
    }
    const double n = static_cast<double>(xs.size());
    if (std::hypot(sn, cs) / n < 1e-12) throw NumericalError("ambiguous phase: circular mean undefined");
    return {wrap_2pi(std::atan2(sn, cs)), z / n};
  }

 private:
  GaussianWaveParams params_;
  std::vector<double> steps_;
  double q_theta_, q_z_, r_phi_, r_s_;
};

static_assert(StateSpaceModel<EcgModel>);

inline ModelState to_state(const Eigen::Vector2d& v) { return {v[0], v[1]}; }

/// Fills the data-dependent defaults: q_z is 10% of the mean absolute model
/// increment over one beat; r_phi is one sample of fiducial jitter expressed
/// in phase; r_s is the residual spread of the first 2 s against the beat
/// shape g(phi).
inline FilterConfig resolve_defaults(FilterConfig cfg, const Signal& s, const PhaseSeries& phase,
                                     const std::vector<double>& steps, const GaussianWaveParams& params) {
  const std::size_t head = std::min<std::size_t>(s.size(), static_cast<std::size_t>(std::llround(2.0 * s.fs())));
  double mean_step = 0.0;
  for (std::size_t k = 0; k < head; ++k) mean_step += steps[k];
  mean_step /= static_cast<double>(std::max<std::size_t>(1, head));
  if (!cfg.q_z) {
    constexpr std::size_t kGrid = 720;
    double acc = 0.0;
    for (std::size_t i = 0; i < kGrid; ++i) {
      acc += std::abs(z_increment(kTwoPi * static_cast<double>(i) / kGrid, params, mean_step));
    }
    cfg.q_z = 0.1 * acc / kGrid;
  }
  if (!cfg.r_phi) cfg.r_phi = mean_step;
  if (!cfg.r_s) {
    std::vector<double> resid(head);
    for (std::size_t k = 0; k < head; ++k) resid[k] = s[k] - gaussian_sum(phase[k], params);
    double mean = 0.0;
    for (double r : resid) mean += r;
    mean /= static_cast<double>(std::max<std::size_t>(1, head));
    double var = 0.0;
    for (double r : resid) var += (r - mean) * (r - mean);
    var /= static_cast<double>(std::max<std::size_t>(1, head));
    cfg.r_s = std::max(std::sqrt(var), 1e-6);
  }
  validate(cfg);
  return cfg;
}

struct DenoiseResult {
  Signal signal;
  FilterConfig resolved;
};

/// Full EnKF pass over an ECG: observed phase from the fiducials, then one
/// forecast/analysis cycle per sample; the output is the estimated amplitude.
inline DenoiseResult denoise_with_config(const Signal& s, const RPeaks& peaks, const GaussianWaveParams& params,
                                         FilterConfig cfg) {
  require_valid(s);
  if (auto d = validate(params)) throw DegenerateInput("denoise: " + *d);
  if (!peaks.empty() && peaks.indices().back() >= s.size()) throw BoundsError("denoise: R peak beyond signal end");
  validate(cfg);
  const PhaseSeries phase = observed_phase(peaks, s.size(), s.fs());
  std::vector<double> steps = phase_steps(peaks, s.size());
  cfg = resolve_defaults(cfg, s, phase, steps, params);
  const EcgModel model(params, std::move(steps), cfg.q_theta, *cfg.q_z, *cfg.r_phi, *cfg.r_s);

  std::vector<Eigen::Vector2d> ys(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) ys[k] = {phase[k], s[k]};

  Ensemble<Eigen::Vector2d> ens(cfg.n_ensemble);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    NormalStream noise(substream(cfg.seed, 0, i, kTagInit));
    const double th = noise(*cfg.r_phi);
    const double z = noise(*cfg.r_s);
    ens[i] = model.canonical({ys[0][0] + th, ys[0][1] + z});
  }
  const auto states = run(model, std::move(ens), std::span<const Eigen::Vector2d>(ys), cfg.seed);
  std::vector<double> out(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) out[k] = states[k][1];
  return {Signal(std::move(out), s.fs()), cfg};
}

inline Signal denoise(const Signal& s, const RPeaks& peaks, const GaussianWaveParams& params, const FilterConfig& cfg) {
  return denoise_with_config(s, peaks, params, cfg).signal;
}

}  // namespace ecgenkf::enkf
