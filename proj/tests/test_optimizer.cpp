#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "adam_audit/optimizer.hpp"
#include "adam_audit/rng.hpp"

using namespace adam_audit;

namespace {

// Scalar reference written straight from the algorithm box, with pow() for the
// corrective terms instead of the cached powers.
struct RefAdam {
  double b1, b2, eta, eps;
  std::vector<double> x, m, v;
  int s = 0;

  void step(const std::vector<double>& g) {
    ++s;
    const double eta_s = eta * std::sqrt(1.0 - std::pow(b2, s)) / (1.0 - std::pow(b1, s));
    const double eps_s = eps * std::sqrt(1.0 - std::pow(b2, s));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= eta_s * m[i] / (std::sqrt(v[i]) + eps_s);
    }
  }
};

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST(HyperParams, ScaledParameterization) {
  const auto h = HyperParams::from_scaled(0.9, 0.999, 1.0, 1e-8);
  EXPECT_DOUBLE_EQ(h.eta, std::sqrt(0.001));
  EXPECT_DOUBLE_EQ(h.eps, 1e-8 * std::sqrt(0.001));
  EXPECT_DOUBLE_EQ(h.C0(), 1.0);
  EXPECT_DOUBLE_EQ(h.eps0(), 1e-8);
}

TEST(HyperParams, RejectsBadBetas) {
  EXPECT_THROW(HyperParams::from_scaled(0.9, 0.9, 1.0, 1e-8), Error);
  EXPECT_THROW(HyperParams::from_scaled(0.95, 0.9, 1.0, 1e-8), Error);
  EXPECT_THROW(HyperParams::from_scaled(-0.1, 0.9, 1.0, 1e-8), Error);
  EXPECT_THROW(HyperParams::from_scaled(0.0, 1.0, 1.0, 1e-8), Error);
  HyperParams h = HyperParams::from_scaled(0.0, 0.99, 1.0, 1e-8);
  h.eta *= 1.001;  // no longer C0 sqrt(1 - beta2)
  EXPECT_THROW(h.validate(), Error);
}

TEST(Step, ZeroGradientIsFixedPoint) {
  const auto p = HyperParams::from_scaled(0.9, 0.999, 1.0, 1e-8);
  const auto s1 = step(AdamState::initial({1.0}), p, std::vector<double>{0.0});
  EXPECT_EQ(s1.x[0], 1.0);
  EXPECT_EQ(s1.m[0], 0.0);
  EXPECT_EQ(s1.v[0], 0.0);
  EXPECT_EQ(s1.s, 1);
}

TEST(Step, FirstStepHandValues) {
  const auto p = HyperParams::from_scaled(0.9, 0.999, 1.0, 1e-8);
  const auto s1 = step(AdamState::initial({1.0}), p, std::vector<double>{2.0});
  EXPECT_NEAR(s1.m[0], 0.2, 1e-15);
  EXPECT_NEAR(s1.v[0], 0.004, 1e-15);
  EXPECT_NEAR(s1.last_eta_s, 0.01, 1e-15);
  EXPECT_NEAR(s1.x[0], 0.9683772, 1e-7);
  // first step moves by eta * sign(g), up to eps
  EXPECT_NEAR(s1.x[0], 1.0 - std::sqrt(0.001), 1e-7);
}

TEST(Step, Beta1ZeroGivesRawGradient) {
  const auto p = HyperParams::from_scaled(0.0, 0.99, 0.5, 1e-8);
  auto st = AdamState::initial({0.3, -2.0});
  st = step(st, p, std::vector<double>{1.5, -0.25});
  st = step(st, p, std::vector<double>{-0.7, 4.0});
  EXPECT_EQ(st.m[0], -0.7);
  EXPECT_EQ(st.m[1], 4.0);
}

TEST(Step, MatchesScalarReference) {
  const auto p = HyperParams::from_scaled(0.9, 0.99, 0.3, 1e-3);
  RefAdam ref{p.beta1, p.beta2, p.eta, p.eps, {1.0, -2.0, 0.5}, {0, 0, 0}, {0, 0, 0}};
  auto st = AdamState::initial(ref.x);
  Rng rng = make_stream(7, 0);
  for (int s = 0; s < 200; ++s) {
    std::vector<double> g(3);
    for (double& gi : g) gi = standard_normal(rng);
    st = step(st, p, g);
    ref.step(g);
    for (int i = 0; i < 3; ++i) {
      ASSERT_LT(rel(st.x[i], ref.x[i]), 1e-12) << "s=" << s << " i=" << i;
      ASSERT_LT(rel(st.v[i], ref.v[i]), 1e-12);
    }
  }
}

TEST(Step, Errors) {
  const auto p = HyperParams::from_scaled(0.9, 0.999, 1.0, 1e-8);
  EXPECT_THROW(step(AdamState::initial({1.0, 2.0}), p, std::vector<double>{1.0}), Error);
  HyperParams z = p;
  z.scaled.reset();
  z.eps = 0.0;
  try {
    step(AdamState::initial({1.0, 2.0}), z, std::vector<double>{1.0, 0.0});
    FAIL() << "expected a division guard";
  } catch (const DivisionGuardError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::division_guard);
    EXPECT_EQ(e.coordinate(), 1u);
  }
}

TEST(Step, Deterministic) {
  const auto p = HyperParams::from_scaled(0.5, 0.9, 1.0, 1e-8);
  auto run = [&] {
    auto st = AdamState::initial({1.0, 1.0});
    Rng rng = make_stream(3, 1);
    for (int s = 0; s < 100; ++s) st = step(st, p, std::vector<double>{standard_normal(rng), standard_normal(rng)});
    return st;
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.m, b.m);
  EXPECT_EQ(a.v, b.v);
}

TEST(Denominator, Examples) {
  auto p = HyperParams::from_scaled(0.9, 0.999, 1.0, 1.0);
  p.scaled.reset();
  p.eps = 1e-8;
  const auto s1 = step(AdamState::initial({1.0, 2.0}), p, std::vector<double>{0.0, 0.0});
  for (double b : derive_denominator(s1)) EXPECT_DOUBLE_EQ(b, 1e-8 * std::sqrt(0.001));

  AdamState st = AdamState::initial({0.0});
  st.s = 1;
  st.v = {0.004};
  st.last_eps_s = 0.0;
  EXPECT_NEAR(derive_denominator(st)[0], 0.0632456, 1e-7);

  EXPECT_THROW(derive_denominator(AdamState::initial({1.0})), Error);
}

TEST(Denominator, TwoStepUnroll) {
  auto p = HyperParams::from_scaled(0.0, 0.9, 1.0, 1e-8);
  auto st = step(AdamState::initial({5.0}), p, std::vector<double>{1.0});
  st = step(st, p, std::vector<double>{1.0});
  EXPECT_NEAR(st.v[0], 0.19, 1e-15);
  EXPECT_DOUBLE_EQ(derive_denominator(st)[0], std::sqrt(st.v[0]) + st.last_eps_s);
  EXPECT_DOUBLE_EQ(st.last_eps_s, 1e-8 * std::sqrt(1 - 0.9) * std::sqrt(1 - 0.81));
}

TEST(Schedule, Values) {
  const auto p = HyperParams::from_scaled(0.9, 0.999, 1.0, 1e-8);
  EXPECT_NEAR(rate_schedule(1, p).eta_s, 0.01, 1e-15);
  EXPECT_THROW(rate_schedule(0, p), Error);
  const auto far = rate_schedule(100000, p);
  EXPECT_NEAR(far.eta_s, p.eta, 1e-12);
  EXPECT_NEAR(far.eps_s, p.eps, 1e-20);
  for (int s = 1; s < 500; ++s) EXPECT_LE(rate_schedule(s, p).eta_s, p.eta / (1 - p.beta1));

  const auto q = HyperParams::from_scaled(0.0, 0.99, 1.0, 1e-8);
  double prev = 0.0;
  for (int s = 1; s < 300; ++s) {
    const auto sc = rate_schedule(s, q);
    EXPECT_GT(sc.eta_s, prev);
    prev = sc.eta_s;
    // eta_s / sqrt(1 - beta2^s) and eps_s / sqrt(1 - beta2^s) are constant
    const double r = std::sqrt(1 - std::pow(q.beta2, s));
    EXPECT_NEAR(sc.eta_s / r, q.eta, 1e-12);
    EXPECT_NEAR(sc.eps_s / r, q.eps, 1e-20);
  }
}

TEST(Schedule, MatchesState) {
  const auto p = HyperParams::from_scaled(0.9, 0.99, 1.0, 1e-8);
  auto st = AdamState::initial({1.0});
  for (int s = 1; s <= 50; ++s) {
    st = step(st, p, std::vector<double>{0.1 * s});
    EXPECT_EQ(st.last_eta_s, rate_schedule(s, p).eta_s);
    EXPECT_EQ(st.last_eps_s, rate_schedule(s, p).eps_s);
  }
}

TEST(MomentumForm, AgreesWithStep) {
  for (double b1 : {0.0, 0.5, 0.9}) {
    const auto p = HyperParams::from_scaled(b1, 0.99, 0.7, 1e-4);
    Rng rng = make_stream(11, static_cast<std::uint64_t>(b1 * 10));
    AdamState prev = AdamState::initial({0.4, -1.0, 2.0});
    std::vector<double> x_prev = prev.x;
    for (int s = 1; s <= 10; ++s) {
      std::vector<double> g(3);
      for (double& gi : g) gi = 2.0 * standard_normal(rng);
      const AdamState curr = step(prev, p, g);
      // x_s is prev.x; x_{s-1} is x_prev (x_0 = x_1)
      const auto hb = momentum_form_step(x_prev, prev.x, prev, curr, p);
      for (int i = 0; i < 3; ++i) EXPECT_LT(rel(hb[i], curr.x[i]), 1e-10) << "beta1=" << b1 << " s=" << s;
      x_prev = prev.x;
      prev = curr;
    }
  }
}

TEST(MomentumForm, RejectsNonConsecutive) {
  const auto p = HyperParams::from_scaled(0.9, 0.99, 1.0, 1e-8);
  const auto s0 = AdamState::initial({1.0});
  const auto s1 = step(s0, p, std::vector<double>{1.0});
  const auto s2 = step(s1, p, std::vector<double>{1.0});
  EXPECT_THROW(momentum_form_step(s0.x, s1.x, s0, s2, p), Error);
}
