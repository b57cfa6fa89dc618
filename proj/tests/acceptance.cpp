// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance                 all ten
//   acceptance --criterion 8   just one
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adam_audit.hpp"

using namespace adam_audit;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned g_threads = 0;

// ---------------------------------------------------------------------------
// criteria 1 and 2 share the grid

struct GridCell {
  std::string objective, noise;
  double beta1, beta2;
};

struct GridResult {
  std::string label;
  bool lsmooth = false;
  bool left_domain = false;
  std::size_t det_violations = 0;  // stepsize, momentum, sums, smooth relations, y identity
  double y_worst = 0.0;            // worst y-identity margin (-relative residual)
  std::size_t decomp_violations = 0;
  double identity_worst = 0.0;  // identity_A / identity_B
  std::string first_failure;
};

std::vector<GridCell> grid_cells(std::size_t& skipped) {
  std::vector<GridCell> cells;
  skipped = 0;
  for (double b1 : {0.0, 0.5, 0.9})
    for (double b2 : {0.9, 0.99, 0.999}) {
      if (b1 >= b2) {
        skipped += 2 * 2 * 4;
        continue;
      }
      for (int d : {1, 10})
        for (const std::string obj : {"quadspan:1,10,", "quartic:"})
          for (const std::string noise :
               {"none", "a3:sigma0=1,sigma1=0.5,p=0", "a3:sigma0=1,sigma1=0.5,p=2", "a3:sigma0=1,sigma1=0.5,p=3"}) {
            const std::string id = obj == "quartic:" ? "quartic:" + std::to_string(d) : obj + std::to_string(d);
            cells.push_back({id, noise, b1, b2});
          }
    }
  return cells;
}

const std::vector<GridResult>& grid_results() {
  static std::vector<GridResult> cache;
  static bool done = false;
  if (done) return cache;
  std::size_t skipped = 0;
  const auto cells = grid_cells(skipped);
  cache = parallel_map<GridResult>(cells.size(), g_threads == 0 ? default_threads() : g_threads, [&](std::size_t i) {
    const auto& c = cells[i];
    RunConfig cfg;
    cfg.objective = c.objective;
    cfg.noise = c.noise;
    cfg.beta1 = c.beta1;
    cfg.beta2 = c.beta2;
    cfg.T = 10000;
    cfg.seed = 101;
    const auto run = resolve(cfg, cfg.T);
    const auto t = run_trajectory(run, i, TrajectoryOptions{false, false, MarginDetail::none});
    const auto& l = *t.ledger;
    GridResult r;
    r.label = c.objective + " " + c.noise + fmt(" b1=%g b2=%g", c.beta1, c.beta2);
    r.lsmooth = run.obj.cert.is_lsmooth();
    r.left_domain = t.left_domain;
    std::vector<CheckReport> det = {check_momentum_ratio(l), check_sum_bounds(l), check_smooth_relations(l, run.obj),
                                    check_y_identity(l)};
    if (l.steps() >= 2) det.push_back(check_stepsize_ratio(l));
    for (const auto& rep : det) {
      r.det_violations += rep.violated;
      if (!rep.ok() && r.first_failure.empty()) r.first_failure = rep.first_failure;
    }
    r.y_worst = l.summaries().at("y_iteration").worst;
    if (r.lsmooth) {
      const auto dec = check_descent_decomposition(l, run.obj);
      r.decomp_violations = dec.violated;
      if (!dec.ok() && r.first_failure.empty()) r.first_failure = dec.first_failure;
      r.identity_worst = std::min(l.summaries().at("identity_A").worst, l.summaries().at("identity_B").worst);
    }
    return r;
  });
  done = true;
  return cache;
}

Outcome criterion1() {
  std::size_t skipped = 0;
  grid_cells(skipped);
  const auto& res = grid_results();
  std::size_t viol = 0, left = 0;
  double y_worst = 0.0;
  std::string first;
  for (const auto& r : res) {
    viol += r.det_violations;
    left += r.left_domain;
    y_worst = std::min(y_worst, r.y_worst);
    if (r.det_violations && first.empty()) first = r.label + ": " + r.first_failure;
  }
  Outcome o;
  o.pass = viol == 0 && y_worst >= -1e-9;
  o.detail = fmt("%zu runs (%zu beta1>=beta2 configs skipped), %zu violated, worst y residual %.2e, %zu left domain",
                 res.size(), skipped, viol, -y_worst, left);
  if (!first.empty()) o.detail += "; first: " + first;
  return o;
}

Outcome criterion2() {
  const auto& res = grid_results();
  std::size_t runs = 0, viol = 0;
  double worst = 0.0;
  std::string first;
  for (const auto& r : res) {
    if (!r.lsmooth) continue;
    ++runs;
    viol += r.decomp_violations;
    worst = std::min(worst, r.identity_worst);
    if (r.decomp_violations && first.empty()) first = r.label + ": " + r.first_failure;
  }
  Outcome o;
  o.pass = viol == 0 && worst >= -1e-9;
  o.detail = fmt("%zu L-smooth runs, %zu violated, worst A/B identity residual %.2e", runs, viol, -worst);
  if (!first.empty()) o.detail += "; first: " + first;
  return o;
}

Outcome criterion3() {
  const auto rep = check_sequence_lemmas(10000);
  Outcome o;
  o.pass = rep.ok() && rep.instances == 10000;
  o.detail = fmt("%zu instances, %zu violations, worst slack %.3e", rep.instances, rep.violations, rep.worst);
  if (!rep.ok()) o.detail += "; first: " + rep.first_failure;
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion4() {
  const Vec gb = {0.5, -2.0, 1.0};
  const std::size_t N = 100000;
  std::ostringstream notes;
  bool ok = true;
  // unbiasedness, every coordinate within 4 SE
  std::vector<NoiseModel> models = {NoiseModel::bounded(1.0), NoiseModel::sub_gaussian(1.0),
                                    NoiseModel::affine_variance(1.0, 0.5)};
  for (double p : {0.0, 2.0, 3.0}) models.push_back(NoiseModel::generalized(1.0, 0.5, p));
  {
    NoiseModel g = NoiseModel::generalized(1.0, 0.5, 2.0);
    g.law = NoiseLaw::gaussian;
    models.push_back(g);
  }
  double worst_z = 0.0;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    Rng rng = make_stream(404, mi);
    std::vector<double> mean(3, 0.0), m2(3, 0.0);
    GradientSample s;
    for (std::size_t k = 0; k < N; ++k) {
      sample_into(models[mi], gb, rng, s);
      for (int i = 0; i < 3; ++i) {
        const double dlt = s.xi[i] - mean[i];
        mean[i] += dlt / static_cast<double>(k + 1);
        m2[i] += dlt * (s.xi[i] - mean[i]);
      }
    }
    for (int i = 0; i < 3; ++i) {
      const double se = std::sqrt(m2[i] / static_cast<double>(N - 1) / static_cast<double>(N));
      worst_z = std::max(worst_z, std::abs(mean[i]) / se);
    }
  }
  ok = ok && worst_z <= 4.0;
  notes << fmt("unbiased: %zu models, max |z| %.2f", models.size(), worst_z);

  Rng rng = make_stream(405, 0);
  const auto a3 = verify_a3(NoiseModel::generalized(1.0, 0.5, 2.0), gb, N, rng);
  const double z = std::abs(a3.orlicz_mean - (std::numbers::e - 1.0)) / a3.std_error;
  ok = ok && a3.pass && z <= 3.0;
  notes << fmt("; ball Orlicz %.5f (%.2f SE from e-1)", a3.orlicz_mean, z);

  double max_norm = 0.0;
  {
    Rng r2 = make_stream(406, 0);
    GradientSample s;
    const auto b = NoiseModel::bounded(1.0);
    for (std::size_t k = 0; k < 1000000; ++k) {
      sample_into(b, gb, r2, s);
      max_norm = std::max(max_norm, norm(s.xi));
    }
  }
  ok = ok && max_norm <= 1.0;
  notes << fmt("; bounded max |xi| %.6f over 1e6", max_norm);

  Rng r3 = make_stream(407, 0);
  const auto vio = verify_a3(NoiseModel::violator(1.0, 0.5, 2.0), gb, N, r3);
  ok = ok && !vio.pass;
  notes << fmt("; violator %s (%.3f)", vio.pass ? "passed" : "rejected", vio.orlicz_mean);
  return {ok, notes.str()};
}

// ---------------------------------------------------------------------------
// criteria 5, 6 and 7 share the 1000-seed batches

struct EventBatch {
  std::string law;
  ResolvedRun run;
  std::vector<SeedResult> seeds;
  ProbabilisticReport prob;
};

const std::vector<EventBatch>& event_batches() {
  static std::vector<EventBatch> cache;
  if (!cache.empty()) return cache;
  for (const std::string law : {"ball", "gaussian"}) {
    RunConfig cfg;
    cfg.objective = "quadspan:1,10,10";
    cfg.noise = std::string("a3:sigma0=1,sigma1=0.5,p=2") + (law == "gaussian" ? ",law=gaussian" : "");
    cfg.beta1 = 0.9;
    cfg.c = 1.0;
    cfg.T = 100;
    cfg.delta = 0.1;
    cfg.seed = 5;
    cfg.audit_mode = AuditMode::deep;
    EventBatch b;
    b.law = law;
    b.run = resolve(cfg, cfg.T);
    b.seeds = run_batch(b.run, 1000, g_threads, cfg.seed);
    std::vector<SeedOutcome> outs;
    for (const auto& s : b.seeds) outs.push_back(s.outcome);
    b.prob = check_probabilistic(outs, cfg.delta);
    cache.push_back(std::move(b));
  }
  return cache;
}

Outcome criterion5() {
  std::ostringstream notes;
  bool ok = true;
  for (const auto& b : event_batches()) {
    const auto& p = b.prob;
    ok = ok && p.statistical_ok;
    notes << fmt("%s: noise event fails %zu/%zu (CP99 %.4f), martingale fails %zu/%zu (CP99 %.4f); ", b.law.c_str(),
                 p.noise_event.failures, p.noise_event.trials, p.noise_event.upper99, p.martingale.failures,
                 p.martingale.trials, p.martingale.upper99);
  }
  for (auto law : {MartingaleLaw::coin, MartingaleLaw::gaussian}) {
    const auto rep = azuma_monte_carlo(law, default_lambda_grid(), 2000, 100, 0.1, derive_seed(5, 0xa2a));
    double worst = 0.0;
    for (const auto& c : rep.cells) worst = std::max(worst, c.rate.upper99);
    ok = ok && rep.pass;
    notes << fmt("azuma %s worst CP99 %.4f; ", to_string(law), worst);
  }
  return {ok, notes.str()};
}

Outcome criterion6() {
  std::ostringstream notes;
  bool ok = true;
  for (const auto& b : event_batches()) {
    std::size_t runs = 0, viol = 0, holds = 0;
    std::string first;
    for (const auto& s : b.seeds) {
      if (!(s.completed && s.outcome.noise_event && s.outcome.martingale)) continue;
      ++runs;
      for (Check c : {Check::proxy_gaps, Check::sum_2, Check::deep}) {
        const auto it = s.family_violations.find(c);
        if (it != s.family_violations.end()) viol += it->second;
        const auto h = s.family_holds.find(c);
        if (h != s.family_holds.end()) holds += h->second;
      }
      if (s.violations && first.empty()) first = s.first_failure;
    }
    ok = ok && viol == 0 && runs > 0 && holds > 0;
    notes << fmt("%s: %zu event-satisfied runs, %zu HOLD, %zu VIOLATED; ", b.law.c_str(), runs, holds, viol);
    if (!first.empty()) notes << "first: " << first << "; ";
  }
  return {ok, notes.str()};
}

Outcome criterion7() {
  std::ostringstream notes;
  bool ok = true;
  for (const auto& b : event_batches()) {
    const auto dom = verify_theorem_bound(b.seeds, *b.run.constants);
    std::size_t concl = 0, concl_hold = 0;
    for (const auto& s : b.seeds) {
      if (!(s.completed && s.outcome.noise_event && s.outcome.martingale)) continue;
      const auto it = s.family_violations.find(Check::conclusions);
      if (it != s.family_violations.end()) concl += it->second;
      const auto h = s.family_holds.find(Check::conclusions);
      if (h != s.family_holds.end()) concl_hold += h->second;
    }
    ok = ok && dom.ok() && dom.checked > 0 && concl == 0 && concl_hold > 0;
    notes << fmt("%s: %zu runs, %zu breaches, max observed/RHS %.3e (RHS %.3e), grad<=G margins %zu HOLD %zu VIOLATED; ",
                 b.law.c_str(), dom.checked, dom.breaches, dom.max_ratio, dom.rhs, concl_hold, concl);
  }
  return {ok, notes.str()};
}

// ---------------------------------------------------------------------------

RunConfig sweep_config() {
  RunConfig cfg;
  cfg.objective = "quadspan:1,10,10";
  cfg.noise = "a3:sigma0=1,sigma1=0.5,p=2";
  cfg.C0 = 1.0;
  cfg.eps0 = 1e-8;
  cfg.beta1 = 0.9;
  cfg.c = 1.0;
  for (int k = 10; k <= 16; ++k) cfg.T_grid.push_back(std::int64_t{1} << k);
  cfg.seeds = 20;
  cfg.seed = 8;
  cfg.threads = g_threads;
  return cfg;
}

Outcome criterion8() {
  const auto rep = sweep_rate(sweep_config());
  Outcome o;
  if (!rep.fit) return {false, "no slope fit: " + rep.note};
  o.pass = rep.usable && rep.fit->slope >= -0.75 && rep.fit->slope <= -0.30;
  o.detail = fmt("slope %.4f (95%% CI %.4f .. %.4f), diverged fraction %.3f", rep.fit->slope, rep.fit->ci_lo,
                 rep.fit->ci_hi, rep.diverged_fraction);
  for (const auto& r : rep.records) o.detail += fmt("; T=%lld median %.4g", static_cast<long long>(r.T), r.median);
  if (!rep.usable) o.detail += "; " + rep.note;
  return o;
}

RunConfig generalized_config() {
  RunConfig cfg;
  cfg.objective = "quartic:1";
  cfg.noise = "a3:sigma0=1e-9,sigma1=0.5,p=2";
  cfg.regime = RegimeKind::generalized;
  cfg.E0 = 1.0;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.999;
  cfg.x1 = {0.005};
  cfg.T = 100000;
  cfg.seed = 9;
  cfg.audit_mode = AuditMode::deep;
  return cfg;
}

Outcome criterion9() {
  const auto g = run_generalized(generalized_config());
  const auto& k = *g.run.constants->generalized;
  const auto& l = *g.trajectory.ledger;
  std::size_t viol = 0, holds = 0;
  std::string first;
  for (Check c : {Check::smooth_relations, Check::decomposition, Check::sum_2, Check::conclusions}) {
    const auto r = l.report(c);
    viol += r.violated;
    holds += r.hold;
    if (!r.ok() && first.empty()) first = r.first_failure;
  }
  const bool reached = g.trajectory.min_grad_sq <= g.trajectory.initial_grad_sq / 10.0;
  Outcome o;
  o.pass = k.C_tilde_cap > 0.0 && g.eta_F_ok && viol == 0 && reached && g.trajectory.completed();
  o.detail = fmt("cap %.4e, eta*F %.4e vs 1/Lq %.4e, %zu HOLD %zu VIOLATED, min/initial grad^2 %.3e, completed %s",
                 k.C_tilde_cap, g.eta_F, g.inv_Lq, holds, viol, 1.0 / g.grad_ratio,
                 g.trajectory.completed() ? "yes" : "no");
  if (!first.empty()) o.detail += "; first: " + first;
  return o;
}

// Artifacts rebuilt twice from the same seed, plus serial vs parallel.
Outcome criterion10() {
  auto artifacts = [](unsigned threads) {
    std::string out;
    {
      RunConfig cfg;
      cfg.T = 2000;
      cfg.seed = 10;
      cfg.audit_mode = AuditMode::deep;
      cfg.margins = MarginDetail::all;
      const auto run = resolve(cfg, cfg.T);
      const auto t = run_trajectory(run, 0, TrajectoryOptions{true, false, MarginDetail::all});
      std::ostringstream a, b;
      write_trajectory_csv(a, t.rows);
      write_margins_csv(b, t.margins);
      out += a.str() + b.str() + dump(run_summary_json(run, t));
    }
    {
      auto cfg = sweep_config();
      cfg.T_grid = {256, 512, 1024, 2048};
      cfg.seeds = 12;
      cfg.threads = threads;
      const auto rep = sweep_rate(cfg);
      std::ostringstream p;
      write_plot_csv(p, rep);
      out += dump(to_json(rep)) + p.str();
    }
    {
      const auto run = resolve(generalized_config(), 5000);
      const auto t = run_trajectory(run, 0, TrajectoryOptions{true, false, MarginDetail::nonhold});
      std::ostringstream a;
      write_trajectory_csv(a, t.rows);
      out += a.str() + dump(run_summary_json(run, t));
    }
    return out;
  };
  const std::string a = artifacts(1), b = artifacts(1), c = artifacts(g_threads == 0 ? default_threads() : g_threads);
  Outcome o;
  o.pass = a == b && a == c;
  o.detail = fmt("%zu bytes; rerun %s, serial vs parallel %s", a.size(), a == b ? "identical" : "DIFFERENT",
                 a == c ? "identical" : "DIFFERENT");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  app.add_option("--threads", g_threads, "worker threads, 0 = all cores");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> all = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                      criterion6, criterion7, criterion8, criterion9, criterion10};
  int failed = 0;
  for (int i = 1; i <= 10; ++i) {
    if (only && i != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[i - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    while (!o.detail.empty() && (o.detail.back() == ' ' || o.detail.back() == ';')) o.detail.pop_back();
    std::printf("criterion %2d: %s  [%.1fs] %s\n", i, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
