#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "adam_audit/noise.hpp"
#include "adam_audit/stats.hpp"

using namespace adam_audit;

namespace {

constexpr double kE = std::numbers::e;

}  // namespace

TEST(Noise, BallRadiusBound) {
  const auto m = NoiseModel::bounded(0.7);
  Rng rng = make_stream(1, 0);
  const Vec gb = {3.0, -1.0, 2.0};
  GradientSample s;
  for (int k = 0; k < 100000; ++k) {
    sample_into(m, gb, rng, s);
    ASSERT_LE(norm(s.xi), 0.7);
    for (std::size_t i = 0; i < gb.size(); ++i) ASSERT_EQ(s.g[i], s.g_bar[i] + s.xi[i]);
  }
  // sigma1 = 0 with any p behaves the same
  const auto g = NoiseModel::generalized(0.7, 0.0, 3.0);
  for (int k = 0; k < 10000; ++k) ASSERT_LE(norm(sample(g, gb, rng).xi), 0.7);
}

TEST(Noise, OrliczMeanIsEMinusOne) {
  // E exp(U) = e - 1 for U uniform on [0, 1]; ||xi||^2 / r^2 is uniform under the ball law
  Rng rng = make_stream(2, 0);
  const auto m = NoiseModel::generalized(1.0, 0.5, 2.0);
  const auto rep = verify_a3(m, Vec{1.0, 2.0, -0.5, 0.0}, 100000, rng);
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(std::abs(rep.orlicz_mean - (kE - 1.0)), 3.0 * rep.std_error);
}

TEST(Noise, Unbiased) {
  const Vec gb = {0.5, -2.0, 1.0};
  for (const auto& m : {NoiseModel::generalized(1.0, 0.5, 2.0), NoiseModel::affine_variance(2.0, 1.0)}) {
    for (NoiseLaw law : {NoiseLaw::ball, NoiseLaw::gaussian}) {
      NoiseModel mm = m;
      mm.law = law;
      Rng rng = make_stream(3, static_cast<std::uint64_t>(law));
      const int N = 100000;
      std::vector<double> mean(3, 0.0), m2(3, 0.0);
      for (int k = 0; k < N; ++k) {
        const auto s = sample(mm, gb, rng);
        for (int i = 0; i < 3; ++i) {
          const double d = s.xi[i] - mean[i];
          mean[i] += d / (k + 1);
          m2[i] += d * (s.xi[i] - mean[i]);
        }
      }
      for (int i = 0; i < 3; ++i) {
        const double se = std::sqrt(m2[i] / (N - 1) / N);
        EXPECT_LE(std::abs(mean[i]), 4.0 * se) << mm.id() << " i=" << i;
      }
    }
  }
}

TEST(Noise, ViolatorFails) {
  Rng rng = make_stream(4, 0);
  const auto rep = verify_a3(NoiseModel::violator(1.0, 0.5, 2.0), Vec{1.0, 1.0}, 2000, rng);
  EXPECT_FALSE(rep.pass);
  EXPECT_NEAR(rep.orlicz_mean, kE * kE, 1e-9);
}

TEST(Noise, ExponentZeroIgnoresGradient) {
  const auto m = NoiseModel::generalized(1.0, 2.0, 0.0);
  Rng a = make_stream(5, 0), b = make_stream(5, 0);
  const auto ra = verify_a3(m, Vec{0.0, 0.0}, 5000, a);
  const auto rb = verify_a3(m, Vec{100.0, -50.0}, 5000, b);
  EXPECT_EQ(ra.orlicz_mean, rb.orlicz_mean);
  EXPECT_EQ(m.scale_sq(0.0), 5.0);
  EXPECT_EQ(m.scale_sq(123.0), 5.0);
}

TEST(Noise, GaussianLawOrliczBound) {
  for (std::size_t d : {1u, 2u, 10u, 50u}) {
    const double k = gaussian_law_divisor(d);
    // closed form E exp(||Z||^2 / k) = (1 - 2/k)^(-d/2)
    const double closed = std::pow(1.0 - 2.0 / k, -static_cast<double>(d) / 2.0);
    EXPECT_LE(closed, kE - 1.0 + 1e-12) << d;
    NoiseModel m = NoiseModel::generalized(1.0, 0.5, 2.0);
    m.law = NoiseLaw::gaussian;
    Rng rng = make_stream(6, d);
    const auto rep = verify_a3(m, Vec(d, 0.3), 100000, rng);
    EXPECT_TRUE(rep.pass) << d;
    EXPECT_LE(std::abs(rep.orlicz_mean - closed), 4.0 * rep.std_error) << d;
  }
}

TEST(Noise, A3GridPasses) {
  Rng rng = make_stream(7, 0);
  for (double p : {0.0, 1.0, 2.0, 3.0, 3.9}) {
    for (double gn : {0.0, 0.5, 5.0}) {
      for (bool coord : {false, true}) {
        NoiseModel m = NoiseModel::generalized(1.0, 0.5, p);
        m.coordinatewise = coord;
        const auto rep = verify_a3(m, Vec{gn, -gn, 0.5 * gn}, 20000, rng);
        EXPECT_TRUE(rep.pass) << m.id() << " |g|=" << gn << " mean=" << rep.orlicz_mean;
      }
    }
  }
}

TEST(Noise, Reproducible) {
  const auto m = NoiseModel::generalized(1.0, 0.5, 2.0);
  Rng a = make_stream(8, 3), b = make_stream(8, 3);
  for (int k = 0; k < 1000; ++k) ASSERT_EQ(sample(m, Vec{1.0, 2.0}, a).xi, sample(m, Vec{1.0, 2.0}, b).xi);
}

TEST(Noise, Errors) {
  Rng rng(1);
  try {
    sample(NoiseModel::bounded(1.0), Vec{std::numeric_limits<double>::infinity()}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::propagation);
  }
  EXPECT_THROW(NoiseModel::generalized(1.0, 0.5, 4.0).validate(), Error);
  EXPECT_THROW(NoiseModel::generalized(0.0, 0.5, 2.0).validate(), Error);
  EXPECT_THROW(NoiseModel::generalized(1.0, -0.5, 2.0).validate(), Error);
  EXPECT_THROW(verify_a3(NoiseModel::bounded(1.0), Vec{1.0}, 999, rng), Error);
}

TEST(NoiseEvent, BallAlwaysHolds) {
  const auto m = NoiseModel::generalized(1.0, 0.5, 2.0);
  Rng rng = make_stream(9, 0);
  std::vector<GradientSample> samples;
  for (int s = 0; s < 500; ++s) samples.push_back(sample(m, Vec{0.1 * s, 1.0}, rng));
  const auto ev = noise_event_indicator(samples, m, 500, 0.1);
  EXPECT_TRUE(ev.all_hold);
  EXPECT_EQ(ev.flags.size(), 500u);
  EXPECT_THROW(noise_event_indicator(samples, m, 499, 0.1), Error);
  EXPECT_THROW(noise_event_indicator(samples, m, 500, 1.0), Error);
}

TEST(NoiseEvent, LevelFormula) {
  EXPECT_NEAR(noise_level_sq(1, std::exp(-2.0)), 3.0, 1e-15);
  EXPECT_NEAR(noise_level_sq(100, 0.1), 1.0 + std::log(1000.0), 1e-14);
}

TEST(NoiseEvent, GaussianFailureRateBelowDelta) {
  NoiseModel m = NoiseModel::generalized(1.0, 0.5, 2.0);
  m.law = NoiseLaw::gaussian;
  const std::int64_t T = 100;
  const double delta = 0.1;
  const double MT_sq = noise_level_sq(T, delta);
  std::size_t fails = 0;
  const std::size_t seeds = 1000;
  GradientSample s;
  for (std::size_t k = 0; k < seeds; ++k) {
    Rng rng = make_stream(10, k);
    bool ok = true;
    for (std::int64_t t = 0; t < T; ++t) {
      sample_into(m, Vec(10, 0.5), rng, s);
      ok = ok && noise_event_at(m, s.g_bar, s.xi, MT_sq);
    }
    if (!ok) ++fails;
  }
  EXPECT_LE(stats::clopper_pearson_upper(fails, seeds, 0.99), delta) << fails;
}

TEST(NoiseRegistry, Parses) {
  const auto a = parse_noise("a3:sigma0=1,sigma1=0.5,p=2");
  EXPECT_EQ(a.kind, NoiseKind::generalized);
  EXPECT_EQ(a.sigma1, 0.5);
  EXPECT_EQ(parse_noise(a.id()).id(), a.id());
  EXPECT_EQ(parse_noise("ball:sigma0=1,sigma1=0.5,p=0,law=gaussian").law, NoiseLaw::gaussian);
  EXPECT_TRUE(parse_noise("none").is_none());
  EXPECT_EQ(parse_noise("affine:sigma0=2,sigma1=1").p, 2.0);
  EXPECT_THROW(parse_noise("bounded:sigma0=1,sigma1=1"), Error);
  EXPECT_THROW(parse_noise("cauchy:sigma0=1"), Error);
  EXPECT_THROW(parse_noise("a3:sigma0=1,p=4"), Error);
}
