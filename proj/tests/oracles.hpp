#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ecgenkf/enkf.hpp"
#include "ecgenkf/rng.hpp"

namespace oracles {

/// x_k = a x_{k-1} + w, y_k = x_k + v; w ~ N(0, q^2), v ~ N(0, r^2).
struct ScalarLinearModel {
  using State = Eigen::Matrix<double, 1, 1>;
  using Observation = Eigen::Matrix<double, 1, 1>;

  double a = 0.9;
  double q = 1.0;
  double r = 1.0;

  [[nodiscard]] State propagate(const State& x, std::size_t, ecgenkf::NormalStream& noise) const {
    return State(a * x[0] + noise(q));
  }
  [[nodiscard]] Observation observe(const State& x) const { return x; }
  [[nodiscard]] State state_residual(const State& u, const State& v) const { return u - v; }
  [[nodiscard]] Observation obs_residual(const Observation& u, const Observation& v) const { return u - v; }
  [[nodiscard]] State state_mean(std::span<const State> xs) const {
    double s = 0.0;
    for (const auto& x : xs) s += x[0];
    return State(s / static_cast<double>(xs.size()));
  }
  [[nodiscard]] Observation obs_mean(std::span<const Observation> ys) const { return state_mean(ys); }
  [[nodiscard]] State canonical(const State& x) const { return x; }
  [[nodiscard]] Observation observation_noise(ecgenkf::NormalStream& noise) const { return Observation(noise(r)); }
  [[nodiscard]] Eigen::Matrix<double, 1, 1> observation_cov() const { return Eigen::Matrix<double, 1, 1>(r * r); }
};

struct KfTrack {
  std::vector<double> mean;
  std::vector<double> var;
};

/// Closed-form Kalman recursion matching enkf::run: no analysis at step 0.
inline KfTrack kalman(const ScalarLinearModel& m, double m0, double p0, const std::vector<double>& ys) {
  KfTrack t;
  double mu = m0, p = p0;
  t.mean.push_back(mu);
  t.var.push_back(p);
  for (std::size_t k = 1; k < ys.size(); ++k) {
    mu = m.a * mu;
    p = m.a * m.a * p + m.q * m.q;
    const double gain = p / (p + m.r * m.r);
    mu += gain * (ys[k] - mu);
    p = (1.0 - gain) * p;
    t.mean.push_back(mu);
    t.var.push_back(p);
  }
  return t;
}

struct LinearTrial {
  std::size_t worst_step = 0;
  double worst_ratio = 0.0;  // max_k |enkf_k - kf_k| / sqrt(P_k)
};

/// One seed of the EnKF-vs-KF comparison.
inline LinearTrial linear_gaussian_trial(std::uint64_t seed, std::size_t n_members, std::size_t steps) {
  const ScalarLinearModel m;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double m0 = 0.0, p0 = 1.0;
  std::vector<double> ys(steps);
  double x = m0 + std::sqrt(p0) * nd(rng);
  for (std::size_t k = 0; k < steps; ++k) {
    if (k > 0) x = m.a * x + m.q * nd(rng);
    ys[k] = x + m.r * nd(rng);
  }
  const auto kf = kalman(m, m0, p0, ys);

  ecgenkf::enkf::Ensemble<ScalarLinearModel::State> ens(n_members);
  ecgenkf::NormalStream init(ecgenkf::substream(seed, 0, 0, ecgenkf::enkf::kTagInit));
  for (auto& e : ens) e = ScalarLinearModel::State(m0 + std::sqrt(p0) * init());
  std::vector<ScalarLinearModel::Observation> obs(steps);
  for (std::size_t k = 0; k < steps; ++k) obs[k] = ScalarLinearModel::Observation(ys[k]);
  const auto est = ecgenkf::enkf::run(m, std::move(ens), std::span<const ScalarLinearModel::Observation>(obs), seed);

  LinearTrial t;
  for (std::size_t k = 0; k < steps; ++k) {
    const double ratio = std::abs(est[k][0] - kf.mean[k]) / std::sqrt(kf.var[k]);
    if (ratio > t.worst_ratio) {
      t.worst_ratio = ratio;
      t.worst_step = k;
    }
  }
  return t;
}

/// Brute-force two-pass covariance of 2-D members with wrapped first component.
inline void two_pass_covariance(const std::vector<Eigen::Vector2d>& xs, const std::vector<Eigen::Vector2d>& ys,
                                Eigen::Matrix2d& p_xy, Eigen::Matrix2d& p_yy) {
  auto circ = [](const std::vector<Eigen::Vector2d>& v) {
    long double s = 0, c = 0, z = 0;
    for (const auto& e : v) {
      s += std::sin(e[0]);
      c += std::cos(e[0]);
      z += e[1];
    }
    return Eigen::Vector2d(std::atan2(static_cast<double>(s), static_cast<double>(c)),
                           static_cast<double>(z / static_cast<long double>(v.size())));
  };
  const Eigen::Vector2d mx = circ(xs), my = circ(ys);
  long double a[2][2] = {{0, 0}, {0, 0}}, b[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const long double dx[2] = {ecgenkf::wrap_pi(xs[i][0] - mx[0]), xs[i][1] - mx[1]};
    const long double dy[2] = {ecgenkf::wrap_pi(ys[i][0] - my[0]), ys[i][1] - my[1]};
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        a[r][c] += dx[r] * dy[c];
        b[r][c] += dy[r] * dy[c];
      }
    }
  }
  const auto n = static_cast<long double>(xs.size());
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      p_xy(r, c) = static_cast<double>(a[r][c] / n);
      p_yy(r, c) = static_cast<double>(b[r][c] / n);
    }
  }
}

/// Projected gradient on the dual of 1-D TV denoising:
///   min_x 0.5||y - x||^2 + lambda sum |x_{k+1} - x_k|
///   x = y - D^T u,  |u_k| <= lambda.
/// The dual is a box-constrained QP with Lipschitz constant <= 4; the primal
/// objective of the recovered x is returned.
inline std::vector<double> tv_dual_oracle(const std::vector<double>& y, double lambda, std::size_t iterations) {
  const std::size_t n = y.size();
  if (n < 2) return y;
  std::vector<double> u(n - 1, 0.0), x(y), u_prev(n - 1, 0.0), v(n - 1, 0.0);
  auto primal = [&](const std::vector<double>& dual) {
    std::vector<double> out(y);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      out[k] += dual[k];
      out[k + 1] -= dual[k];
    }
    return out;
  };
  // FISTA on the dual
  double t = 1.0;
  v = u;
  for (std::size_t it = 0; it < iterations; ++it) {
    const auto xv = primal(v);
    u_prev = u;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double grad = xv[k + 1] - xv[k];  // d/du of 0.5||y - D^T u||^2 with sign folded
      u[k] = std::clamp(v[k] + grad / 4.0, -lambda, lambda);
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t k = 0; k + 1 < n; ++k) v[k] = u[k] + ((t - 1.0) / t_next) * (u[k] - u_prev[k]);
    t = t_next;
  }
  return primal(u);
}

}  // namespace oracles
