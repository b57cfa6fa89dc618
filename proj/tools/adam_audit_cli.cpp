#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "adam_audit.hpp"

using namespace adam_audit;

namespace {

// Every config key doubles as a --flag; flags are applied after the config file.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value config file");
    for (const auto& k : config_keys()) app->add_option("--" + k, values[k], "config key " + k);
  }

  RunConfig build(CLI::App* app) const {
    RunConfig cfg = file.empty() ? RunConfig{} : load_config_file(file);
    for (const auto& k : config_keys())
      if (app->count("--" + k) > 0) set_config_value(cfg, k, values.at(k));
    return cfg;
  }
};

void print_checks(std::ostream& os, const AuditLedger& l) {
  char line[200];
  std::snprintf(line, sizeof line, "%-18s %10s %10s %10s\n", "family", "HOLD", "SKIP", "VIOLATED");
  os << line;
  for (Check c : all_checks()) {
    const auto r = l.report(c);
    if (r.hold + r.skip + r.violated == 0) continue;
    std::snprintf(line, sizeof line, "%-18s %10zu %10zu %10zu\n", to_string(c), r.hold, r.skip, r.violated);
    os << line;
    if (!r.ok()) os << "  first failure: " << r.first_failure << "\n";
  }
}

int cmd_run(const RunConfig& cfg, const std::string& out, std::size_t seed_index, bool quiet) {
  const ResolvedRun run = resolve(cfg, cfg.T);
  const auto t = run_trajectory(run, seed_index, TrajectoryOptions{true, false, cfg.margins});
  std::ostringstream traj, marg;
  write_trajectory_csv(traj, t.rows);
  write_text_file(out + ".trajectory.csv", traj.str());
  if (cfg.audit_mode != AuditMode::off && cfg.margins != MarginDetail::none) {
    write_margins_csv(marg, t.margins);
    write_text_file(out + ".margins.csv", marg.str());
  }
  write_text_file(out + ".summary.json", dump(run_summary_json(run, t)));
  if (!quiet) {
    std::cout << "objective " << run.obj.id << ", noise " << run.noise.id() << ", T " << run.T << ", beta2 "
              << run.params.beta2 << ", eta " << run.params.eta << (run.C0_capped ? " (capped)" : "") << "\n";
    std::cout << "steps " << t.steps << (t.diverged ? ", DIVERGED" : "") << (t.left_domain ? ", LEFT DOMAIN" : "")
              << ", mean grad^2 " << t.mean_grad_sq << ", min grad^2 " << t.min_grad_sq << ", initial grad^2 "
              << t.initial_grad_sq << "\n";
    std::cout << "noise event " << (t.ledger->noise_event_all() ? "held" : "FAILED") << ", martingale event "
              << (t.ledger->martingale_all() ? "held" : "FAILED") << "\n";
    if (cfg.audit_mode != AuditMode::off) print_checks(std::cout, *t.ledger);
    if (run.constants) {
      const auto dom = verify_theorem_bound(t, *run.constants);
      std::cout << "theorem bound rhs " << dom.rhs << ", observed/rhs " << dom.max_ratio
                << (dom.checked == 0 ? " (events failed, not checked)" : "") << (dom.ok() ? "" : "  BREACH") << "\n";
    } else {
      std::cout << "no theory constants: " << run.constants_note << "\n";
    }
    std::cout << "wrote " << out << ".{trajectory.csv,summary.json"
              << (cfg.audit_mode != AuditMode::off && cfg.margins != MarginDetail::none ? ",margins.csv" : "")
              << "}\n";
  }
  return t.ledger->total_violations() == 0 && !t.diverged ? 0 : 1;
}

int cmd_audit_batch(const RunConfig& cfg, const std::string& out, std::size_t azuma_trials) {
  const ResolvedRun run = resolve(cfg, cfg.T);
  const auto batch = run_batch(run, cfg.seeds, cfg.threads, cfg.seed);
  std::vector<SeedOutcome> outcomes;
  for (const auto& s : batch) outcomes.push_back(s.outcome);
  const auto pr = check_probabilistic(outcomes, cfg.delta);

  json j;
  j["version"] = 1;
  j["objective"] = run.obj.id;
  j["noise"] = run.noise.id();
  j["T"] = run.T;
  j["delta"] = cfg.delta;
  j["seeds"] = cfg.seeds;
  j["seed"] = cfg.seed;
  j["beta1"] = run.params.beta1;
  j["beta2"] = run.params.beta2;
  j["audit_mode"] = to_string(cfg.audit_mode);
  auto rate = [](const EventRate& r) {
    return json{{"failures", r.failures}, {"trials", r.trials}, {"frequency", r.frequency},
                {"upper99", r.upper99},   {"pass", r.pass}};
  };
  j["noise_event"] = rate(pr.noise_event);
  j["martingale_event"] = rate(pr.martingale);
  j["event_satisfied"] = pr.event_satisfied;
  j["diverged"] = pr.diverged;

  std::map<Check, std::size_t> viol_sat, hold_sat;
  std::size_t all_viol = 0;
  for (const auto& s : batch) {
    all_viol += s.violations;
    if (!(s.outcome.noise_event && s.outcome.martingale)) continue;
    for (const auto& [c, n] : s.family_violations) viol_sat[c] += n;
    for (const auto& [c, n] : s.family_holds) hold_sat[c] += n;
  }
  json fam;
  for (Check c : all_checks()) fam[to_string(c)] = {{"hold", hold_sat[c]}, {"violated", viol_sat[c]}};
  j["event_satisfied_checks"] = fam;
  j["violations_all_seeds"] = all_viol;

  bool ok = pr.statistical_ok && pr.deterministic_ok;
  std::optional<DominationReport> dom;
  if (run.constants) {
    dom = verify_theorem_bound(batch, *run.constants);
    j["domination"] = {{"checked", dom->checked}, {"breaches", dom->breaches}, {"rhs", dom->rhs},
                       {"max_ratio", num(dom->max_ratio)}};
    ok = ok && dom->ok();
  }
  std::vector<AzumaReport> az;
  if (azuma_trials > 0) {
    json a = json::array();
    for (auto law : {MartingaleLaw::coin, MartingaleLaw::gaussian}) {
      az.push_back(azuma_monte_carlo(law, default_lambda_grid(), azuma_trials, run.T, cfg.delta,
                                     derive_seed(cfg.seed, 0xa2a)));
      json cells = json::array();
      for (const auto& c : az.back().cells)
        cells.push_back({{"lambda", c.lambda}, {"failures", c.rate.failures}, {"upper99", c.rate.upper99}});
      a.push_back({{"law", to_string(law)}, {"pass", az.back().pass}, {"cells", cells}});
      ok = ok && az.back().pass;
    }
    j["azuma"] = a;
  }
  j["pass"] = ok;
  if (!out.empty()) write_text_file(out + ".batch.json", dump(j));

  std::cout << "objective " << run.obj.id << ", noise " << run.noise.id() << ", T " << run.T << ", " << cfg.seeds
            << " seeds, delta " << cfg.delta << "\n";
  std::printf("noise event failures %zu/%zu, CP99 upper %.4f %s\n", pr.noise_event.failures, pr.noise_event.trials,
              pr.noise_event.upper99, pr.noise_event.pass ? "PASS" : "FAIL");
  if (pr.martingale.trials > 0)
    std::printf("martingale event failures %zu/%zu, CP99 upper %.4f %s\n", pr.martingale.failures,
                pr.martingale.trials, pr.martingale.upper99, pr.martingale.pass ? "PASS" : "FAIL");
  else
    std::printf("martingale event not evaluated (no theory constants)\n");
  std::printf("event-satisfied seeds %zu, conditional violations %zu, sum_2 violations %zu\n", pr.event_satisfied,
              pr.conditional_violations, pr.sum2_violations);
  for (Check c : all_checks())
    if (hold_sat[c] + viol_sat[c] > 0) std::printf("  %-18s HOLD %zu VIOLATED %zu\n", to_string(c), hold_sat[c], viol_sat[c]);
  if (dom)
    std::printf("theorem bound: %zu seeds checked, %zu breaches, worst observed/rhs %.3g\n", dom->checked,
                dom->breaches, dom->max_ratio);
  for (const auto& a : az) std::printf("azuma %s: %s\n", to_string(a.law), a.pass ? "PASS" : "FAIL");
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

int cmd_sweep(const RunConfig& cfg, const std::string& out) {
  const RateReport rep = sweep_rate(cfg);
  write_text_file(out + ".json", dump(to_json(rep)));
  std::ostringstream plot;
  write_plot_csv(plot, rep);
  write_text_file(out + ".plot.csv", plot.str());
  render_table(std::cout, rep);
  std::cout << "wrote " << out << ".json and " << out << ".plot.csv\n";
  bool dominated = true;
  for (const auto& r : rep.records) dominated = dominated && r.domination.ok();
  return rep.usable && dominated ? 0 : 1;
}

int cmd_certify(const RunConfig& cfg, double q, std::size_t budget) {
  const Objective obj = parse_objective(cfg.objective);
  json j;
  j["objective"] = obj.id;
  if (obj.cert.is_lsmooth()) j["declared"] = {{"kind", "lsmooth"}, {"L", obj.cert.L()}};
  else
    j["declared"] = {{"kind", "generalized"}, {"L0", obj.cert.gen().L0}, {"Lq", obj.cert.gen().Lq}, {"q", obj.cert.gen().q}};
  const Certification c = certify_generalized(obj, q, budget, cfg.seed);
  j["fitted"] = {{"ok", c.ok},
                 {"L0", c.L0},
                 {"Lq", c.Lq},
                 {"q", c.q},
                 {"max_violation_ratio", c.max_violation_ratio},
                 {"domain_radius", c.domain_radius},
                 {"pairs_used", c.pairs_used},
                 {"rounds", c.rounds}};
  if (!c.reason.empty()) j["fitted"]["reason"] = c.reason;
  std::cout << dump(j);
  return c.ok ? 0 : 1;
}

int cmd_constants(const RunConfig& cfg) {
  const ResolvedRun run = resolve(cfg, cfg.T);
  if (!run.constants) {
    std::cerr << "no theory constants: " << run.constants_note << "\n";
    return 1;
  }
  json j = to_json(*run.constants);
  j["C0_requested"] = run.C0_requested;
  j["C0_capped"] = run.C0_capped;
  std::cout << dump(j);
  return 0;
}

int cmd_report(const std::string& in, const std::string& plot) {
  const RateReport rep = rate_report_from_json(json::parse(read_text_file(in)));
  render_table(std::cout, rep);
  if (!plot.empty()) {
    std::ostringstream os;
    write_plot_csv(os, rep);
    write_text_file(plot, os.str());
    std::cout << "wrote " << plot << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adam trajectory auditor"};
  app.require_subcommand(1);

  ConfigFlags run_flags, audit_flags, sweep_flags, cert_flags, const_flags;
  std::string run_out = "run", audit_out = "audit", sweep_out = "sweep", report_in, report_plot;
  std::size_t seed_index = 0, azuma_trials = 0, budget = 8192;
  double q = 2.0 / 3.0;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "single trajectory: trajectory CSV, margins CSV, summary JSON");
  run_flags.attach(run);
  run->add_option("--out", run_out, "output prefix");
  run->add_option("--seed-index", seed_index, "trajectory index within the seed stream");
  run->add_flag("--quiet", quiet);

  auto* audit = app.add_subcommand("audit", "run with deep audit; --seeds N > 1 runs a batch with event statistics");
  audit_flags.attach(audit);
  audit->add_option("--out", audit_out, "output prefix");
  audit->add_option("--seed-index", seed_index, "trajectory index (single-seed mode)");
  audit->add_option("--azuma", azuma_trials, "Monte Carlo trials per lambda for the martingale bound (batch mode)");

  auto* sweep = app.add_subcommand("sweep", "rate sweep over T_grid with beta2 = 1 - c/T");
  sweep_flags.attach(sweep);
  sweep->add_option("--out", sweep_out, "output prefix");

  auto* cert = app.add_subcommand("certify", "fit (L0, Lq) for an objective by pair sampling");
  cert_flags.attach(cert);
  cert->add_option("--q", q, "exponent q in [0, 2)");
  cert->add_option("--budget", budget, "pair budget");

  auto* cons = app.add_subcommand("constants", "print the theory constants for a config");
  const_flags.attach(cons);

  auto* report = app.add_subcommand("report", "render a sweep JSON as a table and plot CSV");
  report->add_option("input", report_in, "sweep JSON")->required();
  report->add_option("--plot", report_plot, "plot-data CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_flags.build(run), run_out, seed_index, quiet);
    if (audit->parsed()) {
      RunConfig cfg = audit_flags.build(audit);
      if (audit->count("--audit_mode") == 0) cfg.audit_mode = AuditMode::deep;
      if (cfg.seeds > 1) return cmd_audit_batch(cfg, audit_out, azuma_trials);
      return cmd_run(cfg, audit_out, seed_index, false);
    }
    if (sweep->parsed()) return cmd_sweep(sweep_flags.build(sweep), sweep_out);
    if (cert->parsed()) return cmd_certify(cert_flags.build(cert), q, budget);
    if (cons->parsed()) return cmd_constants(const_flags.build(cons));
    if (report->parsed()) return cmd_report(report_in, report_plot);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
