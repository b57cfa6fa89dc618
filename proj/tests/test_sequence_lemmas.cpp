#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "adam_audit/sequence_lemmas.hpp"

using namespace adam_audit;

TEST(SequenceLemmas, HandExample) {
  // beta2 = 1, eps = 1, alpha = (1, 1, 1): 1/2 + 1/3 + 1/4 against log 4
  const SequenceInstance in{{1.0, 1.0, 1.0}, 0.0, 1.0, 1.0};
  const auto c = check_sequence_instance(in);
  const double expect = (std::log(4.0) - 13.0 / 12.0) / std::log(4.0);
  EXPECT_NEAR(c.worst, expect, 1e-15);
  EXPECT_EQ(c.t, 3u);
}

TEST(SequenceLemmas, ZeroSequence) {
  for (double b2 : {1.0, 0.9}) {
    const SequenceInstance in{std::vector<double>(50, 0.0), 0.5 * b2, b2, 1e-3};
    const auto c = check_sequence_instance(in);
    EXPECT_GE(c.worst, 0.0) << b2;
  }
}

TEST(SequenceLemmas, MomentumForms) {
  // beta1 = 0.5, beta2 = 1, eps = 1, alpha = (2): zeta_1 = 2, gamma_1 = 4, theta_1 = 4 on alpha^2
  const SequenceInstance in{{2.0}, 0.5, 1.0, 1.0};
  const auto c = check_sequence_instance(in);
  const double base = std::log(5.0);
  const double kz = 1.0 / (0.5 * 0.5);
  const double z = (kz * base - 4.0 / 5.0) / (kz * base);
  const double g = (2.0 * kz * base - 16.0 / 5.0) / (2.0 * kz * base);
  const double first = (std::log(3.0) - 2.0 / 3.0) / std::log(3.0);
  EXPECT_NEAR(c.worst, std::min({z, g, first}), 1e-15);
}

TEST(SequenceLemmas, RandomizedInstances) {
  const auto rep = check_sequence_lemmas(10000);
  EXPECT_EQ(rep.instances, 10000u);
  EXPECT_TRUE(rep.ok()) << rep.first_failure;
  EXPECT_GE(rep.worst, -1e-10);
}

TEST(SequenceLemmas, SignedSequencesSkipFirstLemma) {
  const SequenceInstance in{{1.0, -3.0, 2.0}, 0.3, 0.9, 0.5};
  const auto c = check_sequence_instance(in);
  EXPECT_NE(c.which, 0);
  EXPECT_GE(c.worst, 0.0);
}

TEST(SequenceLemmas, SerializesInstance) {
  const SequenceInstance in{{1.5, 0.0}, 0.25, 0.5, 2.0};
  EXPECT_EQ(in.serialize(), "{\"beta1\":0.25,\"beta2\":0.5,\"eps\":2,\"alpha\":[1.5,0]}");
}
