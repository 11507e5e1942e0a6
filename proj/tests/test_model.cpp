#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ecgenkf/io.hpp"
#include "ecgenkf/model.hpp"

using namespace ecgenkf;

namespace {

constexpr double pi = std::numbers::pi;

GaussianWaveParams zero_amplitudes() {
  auto p = default_morphology();
  p.alpha.fill(0.0);
  return p;
}

BeatTemplate template_from(const GaussianWaveParams& p, std::size_t bins) {
  BeatTemplate t;
  const double w = kTwoPi / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double c = (static_cast<double>(b) + 0.5) * w;
    t.centers.push_back(c);
    t.mean.push_back(gaussian_sum(c, p));
    t.stddev.push_back(0.0);
  }
  return t;
}

// A morphology away from the initializer, used as ground truth.
GaussianWaveParams truth() {
  GaussianWaveParams p;
  p.theta = {-1.2, -0.2, 0.0, 0.22, 1.7};
  p.alpha = {0.12, -0.2, 1.1, -0.3, 0.28};
  p.b = {0.2, 0.08, 0.09, 0.09, 0.35};
  return p;
}

}  // namespace

TEST(Transition, ZeroAmplitudeAdvancesPhaseOnly) {
  const auto s = transition({0.1, 0.7}, zero_amplitudes(), {0.05 * 360.0, 1.0 / 360.0}, 0.0);
  EXPECT_NEAR(s.theta, 0.15, 1e-15);
  EXPECT_EQ(s.z, 0.7);
}

TEST(Transition, RWaveTermVanishesAtItsCentre) {
  GaussianWaveParams p = zero_amplitudes();
  p.alpha[2] = 5.0;
  EXPECT_EQ(z_increment(0.0, p, 0.05), 0.0);
}

TEST(Transition, WrapsPhase) {
  const auto s = transition({kTwoPi - 0.01, 0.0}, zero_amplitudes(), {0.05, 1.0}, 0.0);
  EXPECT_NEAR(s.theta, 0.04, 1e-12);
}

TEST(Transition, PhaseStaysInRange) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> th(0.0, kTwoPi), step(0.0, 3.0), z(-5, 5);
  const auto p = default_morphology();
  for (int i = 0; i < 100000; ++i) {
    const auto s = transition({wrap_2pi(th(rng)), z(rng)}, p, {step(rng), 1.0}, z(rng));
    ASSERT_GE(s.theta, 0.0);
    ASSERT_LT(s.theta, kTwoPi);
    ASSERT_TRUE(std::isfinite(s.z));
  }
}

TEST(Transition, OneRevolutionShowsFiveAlternatingExtrema) {
  const auto p = default_morphology();
  const std::size_t steps = 4000;
  const BeatClock clock{kTwoPi / static_cast<double>(steps), 1.0};
  ModelState s{pi, gaussian_sum(pi, p)};  // start mid-diastole so waves appear in P..T order
  std::vector<double> z{s.z};
  for (std::size_t k = 0; k < steps; ++k) {
    s = transition(s, p, clock, 0.0);
    z.push_back(s.z);
  }
  std::vector<double> extrema;
  std::vector<int> kinds;
  for (std::size_t k = 1; k + 1 < z.size(); ++k) {
    const double a = z[k] - z[k - 1], b = z[k + 1] - z[k];
    // ignore the shallow diastolic trough where the T and P tails meet
    if (std::abs(z[k] - z[0]) < 0.005) continue;
    if (a > 0 && b <= 0) {
      extrema.push_back(z[k]);
      kinds.push_back(+1);
    } else if (a < 0 && b >= 0) {
      extrema.push_back(z[k]);
      kinds.push_back(-1);
    }
  }
  ASSERT_EQ(kinds, (std::vector<int>{+1, -1, +1, -1, +1}));
  EXPECT_GT(extrema[0], 0.0);
  EXPECT_LT(extrema[1], 0.0);
  EXPECT_GT(extrema[2], 0.0);
  EXPECT_LT(extrema[3], 0.0);
  EXPECT_GT(extrema[4], 0.0);
}

TEST(Transition, NoiseFreeTraceIsPeriodic) {
  const auto p = default_morphology();
  const std::size_t period = 300;
  const BeatClock clock{kTwoPi / period, 1.0};
  ModelState s{0.0, 0.3};
  std::vector<double> z;
  for (std::size_t k = 0; k < 3 * period; ++k) {
    z.push_back(s.z);
    s = transition(s, p, clock, 0.0);
    s.theta = kTwoPi * static_cast<double>((k + 1) % period) / period;  // realign phase exactly
  }
  for (std::size_t k = period; k < 3 * period; ++k) EXPECT_NEAR(z[k], z[k - period], 1e-9);
}

TEST(Synthesize, FlatWhenNoAmplitudesAndNoNoise) {
  const auto syn = synthesize(zero_amplitudes(), {1.0, 1.0, 1.0}, 360.0, 0.0, 1);
  for (double v : syn.signal.samples()) EXPECT_EQ(v, 0.0);
}

TEST(Synthesize, PeaksSpacedByRr) {
  const auto syn = synthesize(default_morphology(), std::vector<double>(8, 1.0), 360.0, 0.0, 1);
  ASSERT_EQ(syn.r_peaks.size(), 8u);
  for (std::size_t i = 1; i < syn.r_peaks.size(); ++i) EXPECT_EQ(syn.r_peaks[i] - syn.r_peaks[i - 1], 360u);
  for (auto i : syn.r_peaks.indices()) EXPECT_EQ(syn.phase[i], 0.0);
  EXPECT_EQ(syn.signal.size(), 8u * 360u);
}

TEST(Synthesize, DeterministicPerSeed) {
  const std::vector<double> rr{0.8, 0.9, 1.1};
  const auto a = synthesize(default_morphology(), rr, 360.0, 0.01, 42);
  const auto b = synthesize(default_morphology(), rr, 360.0, 0.01, 42);
  const auto c = synthesize(default_morphology(), rr, 360.0, 0.01, 43);
  EXPECT_EQ(a.signal, b.signal);
  EXPECT_NE(a.signal, c.signal);
}

TEST(Synthesize, RejectsShortRr) {
  EXPECT_THROW(synthesize(default_morphology(), {0.2}, 360.0, 0.0, 1), DegenerateInput);
}

TEST(ObservedPhase, Examples) {
  const RPeaks p0({0, 100}, 360.0);
  const auto ph = observed_phase(p0, 101, 360.0);
  EXPECT_NEAR(ph[50], pi, 1e-15);
  EXPECT_EQ(ph[100], 0.0);
  EXPECT_EQ(ph[0], 0.0);
  const auto back = observed_phase(RPeaks({100, 200}, 360.0), 300, 360.0);
  EXPECT_NEAR(back[50], pi, 1e-15);
  EXPECT_NEAR(back[250], pi, 1e-15);
  EXPECT_THROW(observed_phase(RPeaks({100}, 360.0), 300, 360.0), DegenerateInput);
}

TEST(ObservedPhase, PiecewiseLinearBetweenFiducials) {
  const RPeaks p({30, 310, 620, 880, 1200}, 360.0);
  const auto ph = observed_phase(p, 1300, 360.0);
  for (std::size_t j = 0; j + 1 < p.size(); ++j) {
    for (std::size_t k = p[j] + 1; k + 1 < p[j + 1]; ++k) {
      const double d2 = ph[k + 1] - 2.0 * ph[k] + ph[k - 1];
      if (k - 1 == p[j]) continue;
      EXPECT_NEAR(d2, 0.0, 1e-12) << k;
    }
  }
  for (auto i : p.indices()) EXPECT_EQ(ph[i], 0.0);
}

TEST(MeanBeat, ConstantSignal) {
  const RPeaks p({0, 200, 400, 600}, 360.0);
  const Signal s(std::vector<double>(601, 2.5), 360.0);
  const auto t = mean_beat(s, observed_phase(p, s.size(), 360.0), 32);
  for (double m : t.mean) EXPECT_NEAR(m, 2.5, 1e-12);
}

TEST(MeanBeat, SineMatchesBinCentres) {
  const std::size_t len = 64 * 200;
  const RPeaks p({0, len / 2, len - 1}, 360.0);
  const auto ph = observed_phase(p, len, 360.0);
  std::vector<double> v(len);
  for (std::size_t k = 0; k < len; ++k) v[k] = std::sin(ph[k]);
  const auto t = mean_beat(Signal(v, 360.0), ph, 64);
  ASSERT_EQ(t.size(), 64u);
  for (std::size_t b = 0; b < 64; ++b) EXPECT_NEAR(t.mean[b], std::sin(t.centers[b]), 0.01);
}

TEST(MeanBeat, CoverageError) {
  const RPeaks p({0, 100}, 360.0);
  const Signal s(std::vector<double>(101, 1.0), 360.0);
  try {
    mean_beat(s, observed_phase(p, 101, 360.0), 256);
    FAIL();
  } catch (const DegenerateInput& e) {
    EXPECT_NE(std::string(e.what()).find("coverage error, bin"), std::string::npos);
  }
  EXPECT_THROW(mean_beat(s, observed_phase(p, 101, 360.0), 8), DegenerateInput);
}

TEST(Fit, ExactTemplateAtInitIsAFixedPoint) {
  const auto p = truth();
  const auto r = fit_params(template_from(p, 64), p);
  for (std::size_t i = 0; i < kWaves; ++i) {
    EXPECT_NEAR(r.params.alpha[i], p.alpha[i], 1e-9);
    EXPECT_NEAR(r.params.b[i], p.b[i], 1e-9);
    EXPECT_NEAR(r.params.theta[i], p.theta[i], 1e-9);
  }
  EXPECT_LT(r.objective, 1e-20);
}

TEST(Fit, RecoversFromPerturbedInit) {
  const auto p = truth();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int trial = 0; trial < 20; ++trial) {
    GaussianWaveParams init = p;
    for (std::size_t i = 0; i < kWaves; ++i) {
      init.alpha[i] *= 1.0 + u(rng);
      init.b[i] *= 1.0 + u(rng);
      if (i != 2) init.theta[i] *= 1.0 + u(rng);
    }
    const auto r = fit_params(template_from(p, 64), init);
    for (std::size_t i = 0; i < kWaves; ++i) {
      EXPECT_NEAR(r.params.alpha[i], p.alpha[i], 0.02 * std::abs(p.alpha[i])) << trial << " alpha " << i;
      EXPECT_NEAR(r.params.b[i], p.b[i], 0.02 * p.b[i]) << trial << " b " << i;
      EXPECT_NEAR(r.params.theta[i], p.theta[i], 0.02 * std::abs(p.theta[i]) + 1e-12) << trial << " theta " << i;
    }
  }
}

TEST(Fit, ZeroTemplateGivesZeroAmplitudes) {
  BeatTemplate t = template_from(truth(), 64);
  std::fill(t.mean.begin(), t.mean.end(), 0.0);
  const auto init = default_morphology();
  const auto r = fit_params(t, init);
  for (std::size_t i = 0; i < kWaves; ++i) {
    EXPECT_NEAR(r.params.alpha[i], 0.0, 1e-6);
    EXPECT_DOUBLE_EQ(r.params.b[i], init.b[i]);
    EXPECT_DOUBLE_EQ(r.params.theta[i], init.theta[i]);
  }
}

TEST(Fit, ObjectiveNeverIncreasesAndOutputIsValid) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (int trial = 0; trial < 10; ++trial) {
    BeatTemplate t = template_from(truth(), 64);
    for (double& m : t.mean) m += nd(rng);
    const auto r = fit_params(t, default_morphology());
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
      EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1]);
    }
    EXPECT_FALSE(validate(r.params).has_value());
    for (double b : r.params.b) EXPECT_GE(b, 0.01);
  }
}

TEST(Fit, RoundTripThroughSynthesis) {
  const auto p = truth();
  std::vector<double> rr;
  for (int i = 0; i < 40; ++i) rr.push_back(0.8 + 0.05 * std::sin(i));
  const auto syn = synthesize(p, rr, 360.0, 0.0, 3);
  // one bin per sample so the narrow QRS is not smeared by binning
  const auto t = mean_beat(syn.signal, observed_phase(syn.r_peaks, syn.signal.size(), 360.0), 256);
  const auto r = fit_params(t, default_morphology());
  // Euler-integrated beats track g(phase) closely but not exactly.
  EXPECT_NEAR(r.params.alpha[2], p.alpha[2], 0.05 * p.alpha[2]);
  EXPECT_LT(std::sqrt(r.objective / 256.0), 0.05 * p.alpha[2]);
}

TEST(DetectPeaks, SyntheticGroundTruth) {
  const auto syn = synthesize(default_morphology(), std::vector<double>(12, 1.0), 360.0, 0.0, 1);
  const auto found = detect_r_peaks(syn.signal);
  std::size_t matched = 0;
  for (auto t : syn.r_peaks.indices()) {
    for (auto f : found.indices()) {
      if (std::abs(static_cast<long>(f) - static_cast<long>(t)) <= 2) {
        ++matched;
        break;
      }
    }
  }
  // the first beat starts at sample 0 and may have no preceding context
  EXPECT_GE(matched, syn.r_peaks.size() - 1);
  EXPECT_LE(found.size(), syn.r_peaks.size());
}

TEST(DetectPeaks, ConstantSignalFails) {
  EXPECT_THROW(detect_r_peaks(Signal(std::vector<double>(3600, 0.4), 360.0)), DegenerateInput);
  EXPECT_THROW(detect_r_peaks(Signal(std::vector<double>(100, 0.4), 360.0)), DegenerateInput);
}

TEST(DetectPeaks, MatchesAnnotatedFixture) {
  const auto rec = io::load_record(std::string(ECGENKF_TEST_DATA) + "/ecg60");
  const auto found = detect_r_peaks(rec.channels[0]);
  const auto tol = static_cast<long>(std::lround(0.05 * rec.header.fs));
  std::size_t matched = 0;
  for (auto t : rec.r_peaks.indices()) {
    for (auto f : found.indices()) {
      if (std::abs(static_cast<long>(f) - static_cast<long>(t)) <= tol) {
        ++matched;
        break;
      }
    }
  }
  EXPECT_GE(static_cast<double>(matched), 0.95 * static_cast<double>(rec.r_peaks.size()));
}
