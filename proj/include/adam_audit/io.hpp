#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adam_audit/audit.hpp"
#include "adam_audit/constants.hpp"
#include "adam_audit/harness.hpp"

namespace adam_audit {

using json = nlohmann::ordered_json;

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* trajectory_csv_header() {
  return "step,f,grad_sq,noise_sq,eta_s,eps_s,b_min,b_max,event_flag";
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& rows) {
  os << trajectory_csv_header() << "\n";
  for (const auto& r : rows) {
    os << r.step << ',' << fmt17(r.f) << ',' << fmt17(r.grad_sq) << ',' << fmt17(r.noise_sq) << ','
       << fmt17(r.eta_s) << ',' << fmt17(r.eps_s) << ',' << fmt17(r.b_min) << ',' << fmt17(r.b_max) << ','
       << (r.event ? 1 : 0) << "\n";
  }
}

inline void write_margins_csv(std::ostream& os, const std::vector<MarginRecord>& margins) {
  os << "step,margin_name,value,status\n";
  for (const auto& m : margins)
    os << m.step << ',' << m.name << ',' << fmt17(m.value) << ',' << to_string(m.status) << "\n";
}

// Non-finite doubles become null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const TheoryConstants& c) {
  json j;
  j["T"] = c.T;
  j["delta"] = c.delta;
  j["d"] = c.d;
  j["regime"] = to_string(c.regime.kind);
  if (c.regime.is_generalized()) j["E0"] = c.regime.E0;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eta"] = c.eta;
  j["eps"] = c.eps;
  j["C0"] = c.C0;
  j["eps0"] = c.eps0;
  j["sigma0"] = c.sigma0;
  j["sigma1"] = c.sigma1;
  j["p"] = c.p;
  j["grad1_norm"] = c.grad1_norm;
  j["f_gap"] = c.f_gap;
  j["rho"] = c.rho;
  j["Sigma_max"] = c.Sigma_max;
  j["MT_sq"] = c.MT_sq;
  j["D1"] = c.D1;
  j["D2"] = c.D2;
  j["D3"] = c.D3;
  j["D4"] = c.D4;
  j["D5"] = c.D5;
  if (c.smooth) {
    const auto& k = *c.smooth;
    json s;
    s["L"] = k.L;
    s["M"] = k.M;
    s["D6"] = k.D6;
    s["D7"] = k.D7;
    s["F_T"] = k.F_cal_T;
    s["log_F_over_beta2_T"] = k.log_F_over_beta_T;
    s["G_sq"] = k.G_sq;
    s["G_T"] = k.script_G_T;
    s["G_sq_required"] = k.G_sq_required;
    s["G_sq_dominates"] = k.G_sq_dominates;
    s["G_sq_order_form"] = num(k.G_sq_order);
    s["theorem_rhs"] = k.theorem_rhs;
    j["smooth"] = s;
  }
  if (c.generalized) {
    const auto& k = *c.generalized;
    json g;
    g["L0"] = k.L0;
    g["Lq"] = k.Lq;
    g["q"] = k.q;
    g["F"] = k.F;
    g["M_tilde"] = k.M_tilde;
    g["J_tilde_T"] = k.J_tilde_T;
    g["H_hat"] = k.H_hat;
    g["H"] = k.H;
    g["script_H"] = k.script_H;
    g["script_L"] = k.script_L;
    g["C0_cap"] = k.C_tilde_cap;
    g["cap_terms"] = json::array({k.cap_terms[0], k.cap_terms[1], k.cap_terms[2], k.cap_terms[3]});
    g["eta_F"] = k.eta_F;
    g["eta_F_le_inv_Lq"] = k.eta_F <= 1.0 / k.Lq;
    g["theorem_rhs"] = k.theorem_rhs;
    j["generalized"] = g;
  }
  return j;
}

inline json to_json(const CheckReport& r) {
  json j;
  j["hold"] = r.hold;
  j["skip"] = r.skip;
  j["violated"] = r.violated;
  if (!r.first_failure.empty()) j["first_failure"] = r.first_failure;
  json m = json::object();
  for (const auto& [name, s] : r.margins) {
    m[name] = {{"hold", s.hold}, {"skip", s.skip}, {"violated", s.violated}, {"worst", num(s.worst)},
               {"worst_step", s.worst_step}};
  }
  j["margins"] = m;
  return j;
}

inline const std::vector<Check>& all_checks() {
  static const std::vector<Check> v = {Check::y_identity,     Check::stepsize_ratio, Check::momentum_ratio,
                                       Check::sum_bounds,     Check::smooth_relations, Check::decomposition,
                                       Check::proxy_gaps,     Check::sum_2,          Check::deep,
                                       Check::conclusions};
  return v;
}

inline json run_summary_json(const ResolvedRun& run, const TrajectoryResult& t) {
  json j;
  j["version"] = 1;
  j["objective"] = run.obj.id;
  j["noise"] = run.noise.id();
  j["T"] = run.T;
  j["seed"] = run.cfg.seed;
  j["beta1"] = run.params.beta1;
  j["beta2"] = run.params.beta2;
  j["eta"] = run.params.eta;
  j["eps"] = run.params.eps;
  j["C0"] = run.params.C0();
  j["C0_capped"] = run.C0_capped;
  j["audit_mode"] = to_string(run.cfg.audit_mode);
  j["regime"] = to_string(run.cfg.regime);
  j["steps"] = t.steps;
  j["diverged"] = t.diverged;
  if (t.diverged) j["diverged_step"] = t.diverged_step;
  j["left_domain"] = t.left_domain;
  if (t.left_domain) j["left_domain_step"] = t.left_domain_step;
  j["mean_grad_sq"] = num(t.mean_grad_sq);
  j["initial_grad_sq"] = num(t.initial_grad_sq);
  j["min_grad_sq"] = num(t.min_grad_sq);
  j["final_f_gap"] = num(t.final_f_gap);
  j["noise_event"] = t.ledger->noise_event_all();
  j["martingale_event"] = t.ledger->martingale_all();
  j["audit_violations"] = t.ledger->total_violations();
  j["max_identity_residual"] = t.ledger->max_identity_residual();
  if (run.constants) {
    j["constants"] = to_json(*run.constants);
    const auto dom = verify_theorem_bound(t, *run.constants);
    j["domination"] = {{"checked", dom.checked}, {"breaches", dom.breaches}, {"rhs", dom.rhs},
                       {"ratio", num(dom.max_ratio)}};
  } else {
    j["constants"] = nullptr;
    j["constants_note"] = run.constants_note;
  }
  json checks;
  for (Check c : all_checks()) checks[to_string(c)] = to_json(t.ledger->report(c));
  j["checks"] = checks;
  return j;
}

// ---------------------------------------------------------------------------
// RateReport persistence

inline json to_json(const RateReport& r) {
  json j;
  j["schema"] = "adam_audit.rate_report";
  j["version"] = r.version;
  j["objective"] = r.objective;
  j["noise"] = r.noise;
  j["beta1"] = r.beta1;
  j["c"] = r.c;
  j["C0"] = r.C0;
  j["eps0"] = r.eps0;
  j["delta"] = r.delta;
  j["seed"] = r.seed;
  j["seeds"] = r.seeds;
  json recs = json::array();
  for (const auto& x : r.records) {
    json e;
    e["T"] = x.T;
    e["beta2"] = x.beta2;
    e["eta"] = x.eta;
    e["used"] = x.used;
    e["diverged"] = x.diverged;
    e["median_mean_grad_sq"] = num(x.median);
    e["q10"] = num(x.q10);
    e["q90"] = num(x.q90);
    e["median_final_f_gap"] = num(x.median_f_gap);
    e["event_hold_fraction"] = x.event_hold_fraction;
    e["theory_rhs"] = x.theory_rhs ? json(*x.theory_rhs) : json(nullptr);
    e["domination_checked"] = x.domination.checked;
    e["domination_breaches"] = x.domination.breaches;
    e["domination_max_ratio"] = num(x.domination.max_ratio);
    e["audit_violations"] = x.audit_violations;
    json m = json::array();
    for (double v : x.metrics) m.push_back(num(v));
    e["per_seed_mean_grad_sq"] = m;
    recs.push_back(e);
  }
  j["records"] = recs;
  if (r.fit) {
    j["fit"] = {{"slope", r.fit->slope},       {"intercept", r.fit->intercept}, {"std_error", r.fit->std_error},
                {"ci95_lo", r.fit->ci_lo},     {"ci95_hi", r.fit->ci_hi},       {"points", r.fit->n}};
  } else {
    j["fit"] = nullptr;
  }
  j["diverged_fraction"] = r.diverged_fraction;
  j["usable"] = r.usable;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline double num_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline RateReport rate_report_from_json(const json& j) {
  if (j.value("schema", "") != "adam_audit.rate_report")
    throw Error(ErrorKind::io, "not a rate report (schema field missing or wrong)");
  RateReport r;
  r.version = j.at("version").get<int>();
  if (r.version != RateReport::kVersion)
    throw Error(ErrorKind::io, "unsupported rate report version " + std::to_string(r.version));
  r.objective = j.at("objective").get<std::string>();
  r.noise = j.at("noise").get<std::string>();
  r.beta1 = j.at("beta1").get<double>();
  r.c = j.at("c").get<double>();
  r.C0 = j.at("C0").get<double>();
  r.eps0 = j.at("eps0").get<double>();
  r.delta = j.at("delta").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.seeds = j.at("seeds").get<std::size_t>();
  for (const auto& e : j.at("records")) {
    RateRecord x;
    x.T = e.at("T").get<std::int64_t>();
    x.beta2 = e.at("beta2").get<double>();
    x.eta = e.at("eta").get<double>();
    x.used = e.at("used").get<std::size_t>();
    x.diverged = e.at("diverged").get<std::size_t>();
    x.median = num_or_nan(e.at("median_mean_grad_sq"));
    x.q10 = num_or_nan(e.at("q10"));
    x.q90 = num_or_nan(e.at("q90"));
    x.median_f_gap = num_or_nan(e.at("median_final_f_gap"));
    x.event_hold_fraction = e.at("event_hold_fraction").get<double>();
    if (!e.at("theory_rhs").is_null()) x.theory_rhs = e.at("theory_rhs").get<double>();
    x.domination.checked = e.at("domination_checked").get<std::size_t>();
    x.domination.breaches = e.at("domination_breaches").get<std::size_t>();
    x.domination.max_ratio = num_or_nan(e.at("domination_max_ratio"));
    x.audit_violations = e.at("audit_violations").get<std::size_t>();
    for (const auto& v : e.at("per_seed_mean_grad_sq")) x.metrics.push_back(num_or_nan(v));
    r.records.push_back(std::move(x));
  }
  if (!j.at("fit").is_null()) {
    const auto& f = j.at("fit");
    stats::SlopeFit s;
    s.slope = f.at("slope").get<double>();
    s.intercept = f.at("intercept").get<double>();
    s.std_error = f.at("std_error").get<double>();
    s.ci_lo = f.at("ci95_lo").get<double>();
    s.ci_hi = f.at("ci95_hi").get<double>();
    s.n = f.at("points").get<std::size_t>();
    r.fit = s;
  }
  r.diverged_fraction = j.at("diverged_fraction").get<double>();
  r.usable = j.at("usable").get<bool>();
  r.note = j.value("note", "");
  return r;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void write_plot_csv(std::ostream& os, const RateReport& r) {
  os << "log2_T,median_metric,q10,q90,theory_rhs\n";
  for (const auto& x : r.records) {
    os << fmt17(std::log2(static_cast<double>(x.T))) << ',' << fmt17(x.median) << ',' << fmt17(x.q10) << ','
       << fmt17(x.q90) << ',' << (x.theory_rhs ? fmt17(*x.theory_rhs) : std::string("nan")) << "\n";
  }
}

inline void render_table(std::ostream& os, const RateReport& r) {
  char line[256];
  os << "objective " << r.objective << ", noise " << r.noise << ", beta1 " << r.beta1 << ", c " << r.c << ", "
     << r.seeds << " seeds\n";
  std::snprintf(line, sizeof line, "%8s %10s %6s %5s %13s %13s %13s %8s %13s\n", "T", "beta2", "used", "div",
                "median", "q10", "q90", "events", "theory_rhs");
  os << line;
  for (const auto& x : r.records) {
    std::snprintf(line, sizeof line, "%8lld %10.6g %6zu %5zu %13.6g %13.6g %13.6g %8.3f %13.6g\n",
                  static_cast<long long>(x.T), x.beta2, x.used, x.diverged, x.median, x.q10, x.q90,
                  x.event_hold_fraction, x.theory_rhs ? *x.theory_rhs : std::numeric_limits<double>::quiet_NaN());
    os << line;
  }
  if (r.fit) {
    std::snprintf(line, sizeof line, "slope %.4f  (95%% CI %.4f .. %.4f, se %.4f)\n", r.fit->slope, r.fit->ci_lo,
                  r.fit->ci_hi, r.fit->std_error);
    os << line;
  } else {
    os << "slope: not fitted\n";
  }
  os << "diverged fraction " << r.diverged_fraction << (r.usable ? "" : "  [UNUSABLE]") << "\n";
  if (!r.note.empty()) os << "note: " << r.note << "\n";
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot write " + path);
  f << content;
  if (!f) throw Error(ErrorKind::io, "write failed for " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace adam_audit
