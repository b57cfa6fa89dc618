#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "adam_audit/audit.hpp"
#include "adam_audit/rng.hpp"
#include "adam_audit/stats.hpp"

namespace adam_audit {

// What check_probabilistic needs from one seeded ledger.
struct SeedOutcome {
  bool noise_event = true;
  bool martingale = true;
  bool martingale_evaluated = false;  // needs theory constants
  std::size_t sum2_violations = 0;
  std::size_t conditional_violations = 0;  // proxy gaps, sum_2, deep, conclusions
  bool diverged = false;
};

inline SeedOutcome outcome_of(const AuditLedger& l, bool diverged = false) {
  SeedOutcome o;
  o.noise_event = l.noise_event_all();
  o.martingale = l.martingale_all();
  o.martingale_evaluated = l.context().constants.has_value();
  o.sum2_violations = check_sum_2(l).violated;
  o.conditional_violations = check_proxy_gaps(l).violated + o.sum2_violations + check_deep(l).violated +
                             check_conclusions(l).violated;
  o.diverged = diverged;
  return o;
}

struct EventRate {
  std::size_t failures = 0;
  std::size_t trials = 0;
  double frequency = 0.0;
  double upper99 = 0.0;  // Clopper-Pearson
  bool pass = false;
};

inline EventRate event_rate(std::size_t failures, std::size_t trials, double delta) {
  EventRate r;
  r.failures = failures;
  r.trials = trials;
  if (trials == 0) return r;
  r.frequency = static_cast<double>(failures) / static_cast<double>(trials);
  r.upper99 = stats::clopper_pearson_upper(failures, trials, 0.99);
  r.pass = r.upper99 <= delta;
  return r;
}

struct ProbabilisticReport {
  std::size_t seeds = 0;
  std::size_t diverged = 0;
  EventRate noise_event;
  EventRate martingale;
  std::size_t event_satisfied = 0;  // both events held
  std::size_t sum2_violations = 0;  // on event-satisfied seeds, hard gate
  std::size_t conditional_violations = 0;
  bool statistical_ok = false;
  bool deterministic_ok = false;
};

inline ProbabilisticReport check_probabilistic(const std::vector<SeedOutcome>& batch, double delta) {
  if (batch.size() < 500) throw Error(ErrorKind::validation, "check_probabilistic needs >= 500 seeds");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::validation, "delta must lie in (0, 1)");
  ProbabilisticReport r;
  r.seeds = batch.size();
  std::size_t ev_fail = 0, mart_fail = 0, mart_trials = 0;
  for (const auto& o : batch) {
    if (o.diverged) ++r.diverged;
    if (!o.noise_event) ++ev_fail;
    if (o.martingale_evaluated) {
      ++mart_trials;
      if (!o.martingale) ++mart_fail;
    }
    if (o.noise_event && o.martingale && !o.diverged) {
      ++r.event_satisfied;
      r.sum2_violations += o.sum2_violations;
      r.conditional_violations += o.conditional_violations;
    }
  }
  r.noise_event = event_rate(ev_fail, batch.size(), delta);
  r.martingale = event_rate(mart_fail, mart_trials, delta);
  r.statistical_ok = r.noise_event.pass && r.martingale.pass;
  r.deterministic_ok = r.sum2_violations == 0 && r.conditional_violations == 0;
  return r;
}

// Monte Carlo for the martingale concentration bound
//   P(sum Z_s > log(1/delta)/lambda + 3/4 lambda sum sigma_s^2) <= delta.
enum class MartingaleLaw { coin, gaussian };

inline const char* to_string(MartingaleLaw l) { return l == MartingaleLaw::coin ? "coin" : "gaussian"; }

struct AzumaCell {
  double lambda = 0.0;
  EventRate rate;
};

struct AzumaReport {
  MartingaleLaw law = MartingaleLaw::coin;
  std::vector<AzumaCell> cells;
  bool pass = true;
};

// coin: Z = +-1 with sigma = 1, E exp(Z^2) = e exactly.
// gaussian: sigma_s predictable (1 or 2 depending on the sign of the running sum),
// Z ~ N(0, sigma_s^2 / 3), so E exp(Z^2/sigma_s^2) = sqrt(3) < e.
inline AzumaReport azuma_monte_carlo(MartingaleLaw law, const std::vector<double>& lambdas, std::size_t trials,
                                     std::int64_t T, double delta, std::uint64_t root) {
  AzumaReport rep;
  rep.law = law;
  const double log_inv = std::log(1.0 / delta);
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    const double lam = lambdas[li];
    std::size_t fails = 0;
    for (std::size_t k = 0; k < trials; ++k) {
      Rng rng = make_stream(root, li * trials + k);
      double sum = 0.0, var = 0.0;
      for (std::int64_t s = 0; s < T; ++s) {
        if (law == MartingaleLaw::coin) {
          sum += random_sign(rng);
          var += 1.0;
        } else {
          const double sig = sum > 0.0 ? 2.0 : 1.0;
          sum += sig / std::sqrt(3.0) * standard_normal(rng);
          var += sig * sig;
        }
      }
      if (sum > log_inv / lam + 0.75 * lam * var) ++fails;
    }
    AzumaCell c{lam, event_rate(fails, trials, delta)};
    rep.pass = rep.pass && c.rate.pass;
    rep.cells.push_back(c);
  }
  return rep;
}

inline std::vector<double> default_lambda_grid() { return {0.01, 0.03, 0.1, 0.2, 0.3, 1.0, 3.0}; }

}  // namespace adam_audit
