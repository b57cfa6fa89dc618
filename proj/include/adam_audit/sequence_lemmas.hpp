#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "adam_audit/rng.hpp"

namespace adam_audit {

struct SequenceInstance {
  std::vector<double> alpha;
  double beta1 = 0.0;
  double beta2 = 1.0;
  double eps = 1.0;

  std::string serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"beta1\":" << beta1 << ",\"beta2\":" << beta2 << ",\"eps\":" << eps << ",\"alpha\":[";
    for (std::size_t i = 0; i < alpha.size(); ++i) os << (i ? "," : "") << alpha[i];
    os << "]}";
    return os.str();
  }
};

// Worst relative slack of the three inequalities over t = 1..n. `which` reports the
// inequality (0: first lemma, 1: zeta form, 2: gamma form) and t where it was attained.
struct SequenceCheck {
  double worst = std::numeric_limits<double>::infinity();
  int which = -1;
  std::size_t t = 0;
};

inline double relative_slack(double lhs, double rhs) {
  const double scale = std::max(std::abs(lhs), std::abs(rhs));
  return scale > 0.0 ? (rhs - lhs) / scale : 0.0;
}

inline SequenceCheck check_sequence_instance(const SequenceInstance& in) {
  SequenceCheck out;
  auto note = [&](double v, int which, std::size_t t) {
    if (v < out.worst) out.worst = v, out.which = which, out.t = t;
  };
  const double b1 = in.beta1, b2 = in.beta2, eps = in.eps;
  // the first lemma is stated for nonnegative sequences only
  const bool nonneg = std::all_of(in.alpha.begin(), in.alpha.end(), [](double a) { return a >= 0.0; });
  const double log_b2 = std::log(b2);
  // first lemma: alpha >= 0, theta_s = sum beta2^(s-j) alpha_j
  double theta1 = 0.0, lhs1 = 0.0;
  // second lemma: theta on alpha^2, zeta and gamma on alpha
  double theta2 = 0.0, zeta = 0.0, lhs_z = 0.0, lhs_g = 0.0, b1pow = 1.0;
  const double kz = 1.0 / ((1.0 - b1) * (1.0 - b1 / b2));
  const double kg = kz / (1.0 - b1);
  for (std::size_t s = 1; s <= in.alpha.size(); ++s) {
    const double a = in.alpha[s - 1];
    const double t = static_cast<double>(s);
    if (nonneg) {
      theta1 = b2 * theta1 + a;
      lhs1 += a / (eps + theta1);
      note(relative_slack(lhs1, std::log1p(theta1 / eps) - t * log_b2), 0, s);
    }
    theta2 = b2 * theta2 + a * a;
    zeta = b1 * zeta + a;
    b1pow *= b1;
    const double gamma = zeta / (1.0 - b1pow);
    lhs_z += zeta * zeta / (eps + theta2);
    lhs_g += gamma * gamma / (eps + theta2);
    const double base = std::log1p(theta2 / eps) - t * log_b2;
    note(relative_slack(lhs_z, kz * base), 1, s);
    note(relative_slack(lhs_g, kg * base), 2, s);
  }
  return out;
}

// Mixed generators so the property test hits sparse, bursty, tiny and huge inputs.
inline SequenceInstance random_sequence_instance(Rng& rng, bool signed_values) {
  SequenceInstance in;
  const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 200.0);
  const int law = static_cast<int>(uniform01(rng) * 6.0);
  in.alpha.resize(n);
  for (double& a : in.alpha) {
    double v = 0.0;
    switch (law) {
      case 0: v = uniform01(rng); break;
      case 1: v = -std::log(1.0 - uniform01(rng)); break;
      case 2: v = uniform01(rng) < 0.8 ? 0.0 : std::exp(10.0 * standard_normal(rng)); break;
      case 3: v = std::pow(10.0, -12.0 + 24.0 * uniform01(rng)); break;
      case 4: v = 1.0 / std::pow(1.0 - uniform01(rng), 2.0); break;  // Pareto-ish tail
      default: v = std::abs(standard_normal(rng)); break;
    }
    if (signed_values && uniform01(rng) < 0.5) v = -v;
    a = v;
  }
  const double r = uniform01(rng);
  if (r < 0.1) in.beta2 = 1.0;
  else if (r < 0.2) in.beta2 = 1.0 - std::pow(10.0, -1.0 - 5.0 * uniform01(rng));
  else in.beta2 = 1e-3 + (1.0 - 1e-3) * uniform01(rng);
  const double r1 = uniform01(rng);
  in.beta1 = r1 < 0.15 ? 0.0 : in.beta2 * uniform01(rng) * 0.999;
  in.eps = std::pow(10.0, -8.0 + 10.0 * uniform01(rng));
  return in;
}

struct SequenceLemmaReport {
  std::size_t instances = 0;
  std::size_t violations = 0;
  double worst = std::numeric_limits<double>::infinity();
  std::string first_failure;  // serialized offending instance

  bool ok() const { return violations == 0; }
};

inline SequenceLemmaReport check_sequence_lemmas(std::size_t seeds, std::uint64_t root = 20240601,
                                                 double tol = 1e-10) {
  SequenceLemmaReport rep;
  for (std::size_t k = 0; k < seeds; ++k) {
    Rng rng = make_stream(root, k);
    // odd seeds draw signed sequences, which only the second lemma covers
    const bool signed_values = k % 2 == 1;
    const SequenceInstance in = random_sequence_instance(rng, signed_values);
    const SequenceCheck c = check_sequence_instance(in);
    ++rep.instances;
    rep.worst = std::min(rep.worst, c.worst);
    if (c.worst < -tol) {
      ++rep.violations;
      if (rep.first_failure.empty()) {
        rep.first_failure = "inequality " + std::to_string(c.which) + " at t=" + std::to_string(c.t) + ": " +
                            in.serialize();
      }
    }
  }
  return rep;
}

}  // namespace adam_audit
