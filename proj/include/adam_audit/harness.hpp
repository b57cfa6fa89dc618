#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adam_audit/audit.hpp"
#include "adam_audit/config.hpp"
#include "adam_audit/constants.hpp"
#include "adam_audit/noise.hpp"
#include "adam_audit/optimizer.hpp"
#include "adam_audit/parallel.hpp"
#include "adam_audit/probabilistic.hpp"
#include "adam_audit/problems.hpp"
#include "adam_audit/rng.hpp"
#include "adam_audit/stats.hpp"

namespace adam_audit {

// A RunConfig bound to one horizon: parsed objective/noise, final hyper-parameters and,
// when they are defined for this run, the theory constants.
struct ResolvedRun {
  RunConfig cfg;
  std::int64_t T = 0;
  Objective obj;
  NoiseModel noise;
  HyperParams params;
  Vec x1;
  std::optional<TheoryConstants> constants;
  std::string constants_note;  // why constants are missing
  double C0_requested = 0.0;
  bool C0_capped = false;
};

inline ResolvedRun resolve(const RunConfig& cfg, std::int64_t T) {
  if (T < 1) throw Error(ErrorKind::config, "T must be >= 1");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw Error(ErrorKind::config, "delta must lie in (0, 1)");
  ResolvedRun r;
  r.cfg = cfg;
  r.T = T;
  r.obj = parse_objective(cfg.objective);
  r.noise = parse_noise(cfg.noise);
  r.x1 = cfg.x1.empty() ? r.obj.x1 : Vec(cfg.x1.begin(), cfg.x1.end());
  if (r.x1.size() != r.obj.dim)
    throw Error(ErrorKind::config, "x1 has " + std::to_string(r.x1.size()) + " entries, objective needs " +
                                       std::to_string(r.obj.dim));
  if (!r.obj.domain.contains(r.x1)) throw Error(ErrorKind::config, "x1 lies outside the objective's domain");

  const double Td = static_cast<double>(T);
  double beta2 = 0.0;
  if (cfg.beta2) {
    beta2 = *cfg.beta2;
  } else {
    if (!(cfg.c > 0.0 && cfg.c < Td)) throw Error(ErrorKind::config, "c must lie in (0, T)");
    beta2 = 1.0 - cfg.c / Td;
  }
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw Error(ErrorKind::config, "beta2 must lie in (0, 1)");
  double C0 = cfg.C0;
  if (cfg.eta_c1) {
    if (cfg.eta_logpow != 0.0 && T < 2) throw Error(ErrorKind::config, "eta_logpow needs T >= 2");
    const double eta = *cfg.eta_c1 / (std::sqrt(Td) * std::pow(std::log(Td), cfg.eta_logpow));
    C0 = eta / std::sqrt(1.0 - beta2);
  }
  r.C0_requested = C0;
  try {
    r.params = HyperParams::from_scaled(cfg.beta1, beta2, C0, cfg.eps0);
  } catch (const Error& e) {
    throw Error(ErrorKind::config, e.what());
  }

  const Regime regime = cfg.regime_value();
  if (regime.is_generalized()) {
    if (!r.obj.cert.is_generalized())
      throw Error(ErrorKind::config, "regime generalized needs an objective with a generalized certificate");
    TheoryConstants c = compute_theory_constants(r.params, r.obj, r.noise, T, cfg.delta, regime, r.x1);
    const double cap = c.generalized->C_tilde_cap;
    if (!(cap > 0.0)) throw Error(ErrorKind::config, "C0 cap is not positive");
    if (C0 > cap) {
      r.params = HyperParams::from_scaled(cfg.beta1, beta2, cap, cfg.eps0);
      r.C0_capped = true;
      c = compute_theory_constants(r.params, r.obj, r.noise, T, cfg.delta, regime, r.x1);
    }
    r.constants = c;
  } else if (r.obj.cert.is_lsmooth()) {
    try {
      r.constants = compute_theory_constants(r.params, r.obj, r.noise, T, cfg.delta, regime, r.x1);
    } catch (const OverflowError& e) {
      r.constants_note = e.what();
    }
  } else {
    r.constants_note = "objective has a generalized certificate; run with regime = generalized for constants";
  }
  return r;
}

struct TrajectoryRow {
  std::int64_t step = 0;
  double f = 0.0;
  double grad_sq = 0.0;
  double noise_sq = 0.0;
  double eta_s = 0.0;
  double eps_s = 0.0;
  double b_min = 0.0;
  double b_max = 0.0;
  bool event = true;
};

struct TrajectoryOptions {
  bool keep_rows = true;
  bool keep_records = false;  // per-step StepRecords inside the ledger
  MarginDetail margins = MarginDetail::none;
};

struct TrajectoryResult {
  std::size_t seed_index = 0;
  std::vector<TrajectoryRow> rows;
  std::vector<MarginRecord> margins;
  std::shared_ptr<AuditLedger> ledger;
  std::int64_t steps = 0;  // gradients taken
  bool diverged = false;
  std::int64_t diverged_step = -1;
  std::string diverged_reason;
  bool left_domain = false;
  std::int64_t left_domain_step = -1;
  double initial_grad_sq = 0.0;
  double min_grad_sq = std::numeric_limits<double>::infinity();
  double mean_grad_sq = 0.0;  // (1/T) sum ||grad f(x_s)||^2
  double max_grad_sq = 0.0;
  double final_f_gap = 0.0;
  Vec x_final;

  bool completed() const { return !diverged && !left_domain; }
  bool events_hold() const { return ledger && ledger->noise_event_all() && ledger->martingale_all(); }
};

// Streams: trajectory k of a run uses make_stream(seed, k).
inline TrajectoryResult run_trajectory(const ResolvedRun& run, std::size_t seed_index,
                                       const TrajectoryOptions& opt, std::uint64_t root) {
  const Objective& obj = run.obj;
  const std::size_t d = obj.dim;
  TrajectoryResult out;
  out.seed_index = seed_index;

  AuditContext ctx;
  ctx.params = run.params;
  ctx.T = run.T;
  ctx.delta = run.cfg.delta;
  ctx.noise = run.noise;
  ctx.obj = obj;
  ctx.mode = run.cfg.audit_mode;
  ctx.constants = run.constants;
  ctx.x1 = run.x1;
  ctx.keep_records = opt.keep_records;
  out.ledger = std::make_shared<AuditLedger>(std::move(ctx));
  AuditLedger& ledger = *out.ledger;
  if (opt.margins != MarginDetail::none && run.cfg.audit_mode != AuditMode::off) {
    const bool all = opt.margins == MarginDetail::all;
    ledger.set_sink([&out, all](const MarginRecord& m) {
      if (all || m.status != MarginStatus::hold) out.margins.push_back(m);
    });
  }
  if (opt.keep_rows) out.rows.reserve(static_cast<std::size_t>(run.T));

  const double MT_sq = noise_level_sq(run.T, run.cfg.delta);
  Rng rng = make_stream(root, seed_index);
  AdamState st = AdamState::initial(run.x1);
  Vec x(d), x_prev = run.x1, gbar(d);
  GradientSample gs;
  double sum_gsq = 0.0;
  for (std::int64_t s = 1; s <= run.T; ++s) {
    x = st.x;
    const double f = obj.value_and_grad(x, gbar);
    if (!std::isfinite(f) || !all_finite(gbar)) {
      out.diverged = true;
      out.diverged_step = s;
      out.diverged_reason = "non-finite objective or gradient";
      break;
    }
    const double gsq = sq_norm(gbar);
    if (s == 1) out.initial_grad_sq = gsq;
    out.min_grad_sq = std::min(out.min_grad_sq, gsq);
    out.max_grad_sq = std::max(out.max_grad_sq, gsq);
    sum_gsq += gsq;
    ++out.steps;
    sample_into(run.noise, gbar, rng, gs);
    try {
      step_inplace(st, run.params, gs.g);
    } catch (const DivisionGuardError& e) {
      out.diverged = true;
      out.diverged_step = s;
      out.diverged_reason = e.what();
      break;
    }
    if (opt.keep_rows) {
      TrajectoryRow row;
      row.step = s;
      row.f = f;
      row.grad_sq = gsq;
      row.noise_sq = sq_norm(gs.xi);
      row.eta_s = st.last_eta_s;
      row.eps_s = st.last_eps_s;
      row.b_min = std::numeric_limits<double>::infinity();
      row.b_max = 0.0;
      for (double vi : st.v) {
        const double b = std::sqrt(vi) + st.last_eps_s;
        row.b_min = std::min(row.b_min, b);
        row.b_max = std::max(row.b_max, b);
      }
      row.event = run.noise.is_none() || noise_event_at(run.noise, gbar, gs.xi, MT_sq);
      out.rows.push_back(row);
    }
    if (!all_finite(st.x)) {
      out.diverged = true;
      out.diverged_step = s;
      out.diverged_reason = "non-finite iterate";
      break;
    }
    if (!obj.domain.contains(st.x)) {
      out.left_domain = true;
      out.left_domain_step = s;
      break;
    }
    StepData sd = make_step_data(x, x_prev, gs, st);
    sd.f_x = f;
    ledger.extend(sd);
    x_prev = x;
  }
  ledger.set_sink({});
  out.mean_grad_sq = out.steps > 0 ? sum_gsq / static_cast<double>(out.steps) : 0.0;
  out.x_final = st.x;
  if (out.completed()) out.final_f_gap = obj.value(st.x) - obj.f_star;
  else out.final_f_gap = std::numeric_limits<double>::quiet_NaN();
  return out;
}

inline TrajectoryResult run_trajectory(const ResolvedRun& run, std::size_t seed_index = 0,
                                       const TrajectoryOptions& opt = {}) {
  return run_trajectory(run, seed_index, opt, run.cfg.seed);
}

inline TrajectoryResult run_trajectory(const RunConfig& cfg, const TrajectoryOptions& opt = {}) {
  return run_trajectory(resolve(cfg, cfg.T), 0, opt);
}

// ---------------------------------------------------------------------------
// Theorem bound

struct DominationReport {
  std::size_t checked = 0;  // event-satisfied seeds
  std::size_t breaches = 0;
  double rhs = 0.0;
  double max_ratio = 0.0;  // observed / rhs, worst seed
  bool ok() const { return breaches == 0; }
};

inline double theorem_rhs(const TheoryConstants& c) {
  return c.smooth ? c.smooth->theorem_rhs : c.generalized->theorem_rhs;
}

inline void add_domination(DominationReport& r, double metric, bool events) {
  if (!events) return;
  ++r.checked;
  r.max_ratio = std::max(r.max_ratio, metric / r.rhs);
  if (!(metric <= r.rhs)) ++r.breaches;
}

// ---------------------------------------------------------------------------
// Batches of seeds at one horizon

struct SeedResult {
  std::size_t seed_index = 0;
  SeedOutcome outcome;
  double metric = 0.0;
  double final_f_gap = 0.0;
  double min_grad_sq = 0.0;
  double initial_grad_sq = 0.0;
  bool completed = true;
  std::size_t violations = 0;  // all VIOLATED margins
  std::map<Check, std::size_t> family_violations;
  std::map<Check, std::size_t> family_holds;
  std::string first_failure;
};

inline SeedResult summarize_seed(const TrajectoryResult& t) {
  SeedResult r;
  r.seed_index = t.seed_index;
  r.outcome = outcome_of(*t.ledger, !t.completed());
  r.metric = t.mean_grad_sq;
  r.final_f_gap = t.final_f_gap;
  r.min_grad_sq = t.min_grad_sq;
  r.initial_grad_sq = t.initial_grad_sq;
  r.completed = t.completed();
  r.violations = t.ledger->total_violations();
  for (const auto& [name, m] : t.ledger->summaries()) {
    r.family_violations[m.family] += m.violated;
    r.family_holds[m.family] += m.hold;
    if (m.violated && r.first_failure.empty())
      r.first_failure = name + " at s=" + std::to_string(m.first_violation_step);
  }
  return r;
}

inline std::vector<SeedResult> run_batch(const ResolvedRun& run, std::size_t seeds, unsigned threads,
                                         std::uint64_t root) {
  return parallel_map<SeedResult>(seeds, threads == 0 ? default_threads() : threads, [&](std::size_t k) {
    return summarize_seed(run_trajectory(run, k, TrajectoryOptions{false, false, MarginDetail::none}, root));
  });
}

inline DominationReport verify_theorem_bound(const std::vector<SeedResult>& batch, const TheoryConstants& c) {
  DominationReport r;
  r.rhs = theorem_rhs(c);
  for (const auto& s : batch)
    if (s.completed) add_domination(r, s.metric, s.outcome.noise_event && s.outcome.martingale);
  return r;
}

inline DominationReport verify_theorem_bound(const TrajectoryResult& t, const TheoryConstants& c) {
  DominationReport r;
  r.rhs = theorem_rhs(c);
  if (t.completed()) add_domination(r, t.mean_grad_sq, t.events_hold());
  return r;
}

// ---------------------------------------------------------------------------
// Rate sweep

struct RateRecord {
  std::int64_t T = 0;
  double beta2 = 0.0;
  double eta = 0.0;
  std::vector<double> metrics;  // per seed, NaN if excluded
  std::size_t used = 0;
  std::size_t diverged = 0;
  double median = std::numeric_limits<double>::quiet_NaN();
  double q10 = std::numeric_limits<double>::quiet_NaN();
  double q90 = std::numeric_limits<double>::quiet_NaN();
  double median_f_gap = std::numeric_limits<double>::quiet_NaN();
  double event_hold_fraction = 0.0;
  std::optional<double> theory_rhs;
  DominationReport domination;
  std::size_t audit_violations = 0;
};

struct RateReport {
  static constexpr int kVersion = 1;
  int version = kVersion;
  std::string objective;
  std::string noise;
  double beta1 = 0.0;
  double c = 0.0;
  double C0 = 0.0;
  double eps0 = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::size_t seeds = 0;
  std::vector<RateRecord> records;
  std::optional<stats::SlopeFit> fit;
  double diverged_fraction = 0.0;
  bool usable = false;
  std::string note;
};

inline void validate_T_grid(const std::vector<std::int64_t>& grid) {
  if (grid.size() < 4) throw Error(ErrorKind::config, "sweep needs at least 4 T values");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto t = grid[i];
    if (t < 2 || (t & (t - 1)) != 0) throw Error(ErrorKind::config, "T_grid entries must be powers of two");
    if (i > 0 && t <= grid[i - 1]) throw Error(ErrorKind::config, "T_grid must be strictly increasing");
  }
}

// Cell (T, k) draws from make_stream(derive_seed(seed, T), k).
inline RateReport sweep_rate(const RunConfig& base) {
  validate_T_grid(base.T_grid);
  if (base.seeds < 10) throw Error(ErrorKind::config, "sweep needs at least 10 seeds");
  RunConfig cfg = base;
  cfg.beta2.reset();  // the sweep always sets beta2 = 1 - c/T

  std::vector<ResolvedRun> runs;
  for (auto T : cfg.T_grid) runs.push_back(resolve(cfg, T));

  const std::size_t nT = runs.size(), S = cfg.seeds;
  const unsigned threads = cfg.threads == 0 ? default_threads() : cfg.threads;
  auto cells = parallel_map<SeedResult>(nT * S, threads, [&](std::size_t idx) {
    const ResolvedRun& run = runs[idx / S];
    const auto root = derive_seed(cfg.seed, static_cast<std::uint64_t>(run.T));
    return summarize_seed(run_trajectory(run, idx % S, TrajectoryOptions{false, false, MarginDetail::none}, root));
  });

  RateReport rep;
  rep.objective = cfg.objective;
  rep.noise = cfg.noise;
  rep.beta1 = cfg.beta1;
  rep.c = cfg.c;
  rep.C0 = cfg.C0;
  rep.eps0 = cfg.eps0;
  rep.delta = cfg.delta;
  rep.seed = cfg.seed;
  rep.seeds = S;
  rep.usable = true;
  std::size_t total_div = 0;
  std::vector<double> xs, ys;
  for (std::size_t ti = 0; ti < nT; ++ti) {
    RateRecord r;
    r.T = runs[ti].T;
    r.beta2 = runs[ti].params.beta2;
    r.eta = runs[ti].params.eta;
    if (runs[ti].constants) {
      r.theory_rhs = theorem_rhs(*runs[ti].constants);
      r.domination.rhs = *r.theory_rhs;
    }
    std::vector<double> ok, gaps;
    std::size_t events = 0;
    for (std::size_t k = 0; k < S; ++k) {
      const SeedResult& s = cells[ti * S + k];
      r.audit_violations += s.violations;
      if (!s.completed) {
        ++r.diverged;
        r.metrics.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const bool ev = s.outcome.noise_event && s.outcome.martingale;
      if (ev) ++events;
      r.metrics.push_back(s.metric);
      ok.push_back(s.metric);
      gaps.push_back(s.final_f_gap);
      if (r.theory_rhs) add_domination(r.domination, s.metric, ev);
    }
    r.used = ok.size();
    r.event_hold_fraction = static_cast<double>(events) / static_cast<double>(S);
    total_div += r.diverged;
    if (static_cast<double>(r.diverged) > 0.2 * static_cast<double>(S)) rep.usable = false;
    if (!ok.empty()) {
      r.median = stats::median(ok);
      r.q10 = stats::quantile(ok, 0.1);
      r.q90 = stats::quantile(ok, 0.9);
      r.median_f_gap = stats::median(gaps);
      if (r.median > 0.0) {
        xs.push_back(std::log(static_cast<double>(r.T)));
        ys.push_back(std::log(r.median));
      }
    }
    rep.records.push_back(std::move(r));
  }
  rep.diverged_fraction = static_cast<double>(total_div) / static_cast<double>(nT * S);
  if (xs.size() >= 3) rep.fit = stats::ols_slope(xs, ys);
  if (xs.size() != nT) {
    rep.usable = false;
    rep.note = "some horizons have no positive median";
  }
  if (!rep.usable && rep.note.empty()) rep.note = "more than 20% of the seeds diverged at some horizon";
  return rep;
}

// ---------------------------------------------------------------------------
// Generalized regime

struct GeneralizedRun {
  ResolvedRun run;
  TrajectoryResult trajectory;
  double eta_F = 0.0;
  double inv_Lq = 0.0;
  bool eta_F_ok = false;
  double grad_ratio = 0.0;  // initial / min ||grad f||^2
};

inline GeneralizedRun run_generalized(const RunConfig& cfg, const TrajectoryOptions& opt = {}) {
  if (cfg.regime != RegimeKind::generalized) throw Error(ErrorKind::config, "run_generalized needs regime = generalized");
  GeneralizedRun g;
  g.run = resolve(cfg, cfg.T);
  const auto& k = *g.run.constants->generalized;
  g.eta_F = k.eta_F;
  g.inv_Lq = 1.0 / k.Lq;
  g.eta_F_ok = k.eta_F <= g.inv_Lq;
  g.trajectory = run_trajectory(g.run, 0, opt);
  g.grad_ratio = g.trajectory.min_grad_sq > 0.0 ? g.trajectory.initial_grad_sq / g.trajectory.min_grad_sq
                                                : std::numeric_limits<double>::infinity();
  return g;
}

}  // namespace adam_audit
