#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "adam_audit/constants.hpp"
#include "adam_audit/errors.hpp"
#include "adam_audit/linalg.hpp"
#include "adam_audit/noise.hpp"
#include "adam_audit/optimizer.hpp"
#include "adam_audit/problems.hpp"

namespace adam_audit {

enum class AuditMode { off, standard, deep };
enum class MarginStatus { hold, skip, violated };

enum class Check {
  y_identity,
  stepsize_ratio,
  momentum_ratio,
  sum_bounds,
  smooth_relations,
  decomposition,
  proxy_gaps,
  sum_2,
  deep,
  conclusions,
};

inline const char* to_string(AuditMode m) {
  switch (m) {
    case AuditMode::off: return "off";
    case AuditMode::standard: return "standard";
    case AuditMode::deep: return "deep";
  }
  return "?";
}

inline AuditMode parse_audit_mode(const std::string& s) {
  if (s == "off") return AuditMode::off;
  if (s == "standard") return AuditMode::standard;
  if (s == "deep") return AuditMode::deep;
  throw Error(ErrorKind::config, "unknown audit mode '" + s + "'");
}

inline const char* to_string(MarginStatus s) {
  switch (s) {
    case MarginStatus::hold: return "HOLD";
    case MarginStatus::skip: return "SKIP";
    case MarginStatus::violated: return "VIOLATED";
  }
  return "?";
}

inline const char* to_string(Check c) {
  switch (c) {
    case Check::y_identity: return "y_identity";
    case Check::stepsize_ratio: return "stepsize_ratio";
    case Check::momentum_ratio: return "momentum_ratio";
    case Check::sum_bounds: return "sum_bounds";
    case Check::smooth_relations: return "smooth_relations";
    case Check::decomposition: return "decomposition";
    case Check::proxy_gaps: return "proxy_gaps";
    case Check::sum_2: return "sum_2";
    case Check::deep: return "deep";
    case Check::conclusions: return "conclusions";
  }
  return "?";
}

// Every margin name the ledger can emit, with its family.
inline Check family_of(std::string_view name) {
  static const std::map<std::string, Check, std::less<>> table = {
      {"y_iteration", Check::y_identity},
      {"stepsize_ratio", Check::stepsize_ratio},
      {"momentum_ratio", Check::momentum_ratio},
      {"sum_g_over_b", Check::sum_bounds},
      {"sum_m_over_b", Check::sum_bounds},
      {"sum_m_over_b_next", Check::sum_bounds},
      {"sum_mhat_over_b_sq", Check::sum_bounds},
      {"gradient_xs_ys", Check::smooth_relations},
      {"eta_F", Check::smooth_relations},
      {"gap_x_step", Check::smooth_relations},
      {"gap_y_x", Check::smooth_relations},
      {"gap_y_step", Check::smooth_relations},
      {"local_smooth_y", Check::smooth_relations},
      {"local_smooth_x", Check::smooth_relations},
      {"lipschitz_x", Check::smooth_relations},
      {"lipschitz_y", Check::smooth_relations},
      {"descent_local", Check::smooth_relations},
      {"monotone_Lx", Check::smooth_relations},
      {"monotone_Ly", Check::smooth_relations},
      {"gradient_value", Check::smooth_relations},
      {"identity_A", Check::decomposition},
      {"identity_B", Check::decomposition},
      {"identity_A1", Check::decomposition},
      {"descent_ABC", Check::decomposition},
      {"determine", Check::decomposition},
      {"descent_ABC_gen", Check::decomposition},
      {"determine_gen", Check::decomposition},
      {"gap_a_b", Check::proxy_gaps},
      {"gap_a_b_prev", Check::proxy_gaps},
      {"bound_xi", Check::proxy_gaps},
      {"bound_g", Check::proxy_gaps},
      {"bound_v", Check::proxy_gaps},
      {"a_upper_local", Check::proxy_gaps},
      {"a_upper_global", Check::proxy_gaps},
      {"F_i_le_F_T", Check::sum_2},
      {"F_i_le_J_t", Check::sum_2},
      {"J_t_le_J_tilde", Check::sum_2},
      {"A12_bound", Check::deep},
      {"A1_bound", Check::deep},
      {"sigma1_bound", Check::deep},
      {"sigma2_bound", Check::deep},
      {"sigma3_cumulative", Check::deep},
      {"identity_B1_split", Check::deep},
      {"B1_bound", Check::deep},
      {"grad_le_G", Check::conclusions},
      {"grad_next_le_G_minus_sum", Check::conclusions},
      {"G_T_s_le_G_T", Check::conclusions},
      {"grad_le_H", Check::conclusions},
      {"G_T_s_le_script_H", Check::conclusions},
      {"Ly_le_script_L", Check::conclusions},
      {"general_delta_s", Check::conclusions},
  };
  const auto it = table.find(name);
  if (it == table.end()) throw Error(ErrorKind::audit, "unregistered margin '" + std::string(name) + "'");
  return it->second;
}

struct MarginRecord {
  std::int64_t step;
  std::string_view name;
  double value;  // relative slack; identities report -residual
  MarginStatus status;
  std::int64_t coord;  // worst coordinate, -1 for vector-level margins
};

using MarginSink = std::function<void(const MarginRecord&)>;

struct MarginSummary {
  Check family = Check::y_identity;
  std::size_t hold = 0;
  std::size_t skip = 0;
  std::size_t violated = 0;
  double worst = std::numeric_limits<double>::infinity();
  std::int64_t worst_step = 0;
  std::int64_t first_violation_step = -1;
  std::int64_t first_violation_coord = -1;
  double first_violation_value = 0.0;
};

struct CheckReport {
  Check family = Check::y_identity;
  std::size_t hold = 0;
  std::size_t skip = 0;
  std::size_t violated = 0;
  std::vector<std::pair<std::string, MarginSummary>> margins;
  std::string first_failure;

  bool ok() const { return violated == 0; }
  void require_ok() const {
    if (!ok()) throw Error(ErrorKind::audit, std::string(to_string(family)) + ": " + first_failure);
  }
};

struct StepRecord {
  std::int64_t s = 0;
  double f_x = 0.0;
  double grad_sq = 0.0;
  double noise_sq = 0.0;
  double p_norm = 0.0;  // ||y_s - x_s||
  double a_min = 0.0, a_max = 0.0;
  double b_min = 0.0, b_max = 0.0;
  double G = 0.0;         // running max of ||g_bar||
  double script_G = 0.0;  // G_T(s)
  double A = 0.0, A1 = 0.0, A2 = 0.0, A11 = 0.0, A12 = 0.0;
  double B = 0.0, B1 = 0.0, B2 = 0.0;
  double C = 0.0;
  double desc = 0.0;  // eta_s ||g_bar / sqrt(a)||^2
  double Lx = 0.0, Ly = 0.0;
  bool event = true;
  bool martingale = true;
};

struct AuditContext {
  HyperParams params;
  std::int64_t T = 1;
  double delta = 0.1;
  NoiseModel noise;
  Objective obj;
  AuditMode mode = AuditMode::standard;
  std::optional<TheoryConstants> constants;  // gates the global-bound margins
  Vec x1;
  bool keep_records = true;
  double tol = 1e-9;
};

// One optimizer step as seen by the auditor: x_s, x_{s-1} (x_0 = x_1), x_{s+1} and the
// state right after step s.
struct StepData {
  std::int64_t s = 0;
  std::span<const double> x;
  std::span<const double> x_prev;
  std::span<const double> x_next;
  std::span<const double> g;
  std::span<const double> g_bar;
  std::span<const double> xi;
  std::span<const double> m;
  std::span<const double> v;
  double eta_s = 0.0;
  double eps_s = 0.0;
  double beta1_pow = 0.0;  // beta1^s
  double beta2_pow = 0.0;
  double f_x = std::numeric_limits<double>::quiet_NaN();  // computed if NaN
};

inline StepData make_step_data(std::span<const double> x, std::span<const double> x_prev, const GradientSample& gs,
                               const AdamState& after) {
  StepData d;
  d.s = after.s;
  d.x = x;
  d.x_prev = x_prev;
  d.x_next = after.x;
  d.g = gs.g;
  d.g_bar = gs.g_bar;
  d.xi = gs.xi;
  d.m = after.m;
  d.v = after.v;
  d.eta_s = after.last_eta_s;
  d.eps_s = after.last_eps_s;
  d.beta1_pow = after.beta1_pow;
  d.beta2_pow = after.beta2_pow;
  return d;
}

class AuditLedger {
 public:
  explicit AuditLedger(AuditContext ctx) : ctx_(std::move(ctx)) {
    ctx_.params.validate();
    if (ctx_.x1.empty()) ctx_.x1 = ctx_.obj.x1;
    require_same_dim(ctx_.x1.size(), ctx_.obj.dim, "x1");
    d_ = ctx_.obj.dim;
    const auto& p = ctx_.params;
    kappa_ = p.beta1 / (1.0 - p.beta1);
    rho_ = 1.0 - p.beta1 / p.beta2;
    sigma_max_ = sigma_max(p.beta2);
    MT_sq_ = noise_level_sq(ctx_.T, ctx_.delta);
    MT_ = std::sqrt(MT_sq_);
    generalized_ = ctx_.obj.cert.is_generalized();
    f_x1_ = ctx_.obj.value(ctx_.x1);
    const double d = static_cast<double>(d_);
    const double omb1 = 1.0 - p.beta1;
    D6_unit_ = p.eta * p.eta * (1.0 + 4.0 * sigma_max_ * sigma_max_) / (2.0 * omb1 * omb1);
    D7_unit_ = 3.0 * p.eta * p.eta / (2.0 * omb1 * omb1);
    if (generalized_) {
      F_gap_ = std::sqrt(4.0 * d / (p.beta2 * omb1 * omb1 * (1.0 - p.beta2) * rho_));
    } else {
      L_ = ctx_.obj.cert.L();
      M_ = L_ * p.C0() * std::sqrt(d) / (omb1 * std::sqrt(rho_));
    }
    if (ctx_.constants) {
      const auto& c = *ctx_.constants;
      if (c.d != d_ || c.T != ctx_.T) throw Error(ErrorKind::config, "theory constants were computed for another run");
      global_G_ = c.global_gradient_bound();
      D1_ = c.D1;
      D2_ = c.D2;
      D3_ = c.D3;
      D4_ = c.D4;
      D5_ = c.D5;
      if (c.generalized) within_cap_ = p.C0() <= c.generalized->C_tilde_cap * (1.0 + 1e-12);
    } else {
      const double omb2 = 1.0 - p.beta2;
      D2_ = p.eta * std::sqrt(omb2) / omb1;
      D3_ = 2.0 * p.eta * std::sqrt(omb2) / (omb1 * omb1 * omb1);
      D4_ = p.eps * D3_;
      D5_ = 2.0 * p.eta * std::sqrt(d) / std::sqrt(omb1 * omb1 * omb1 * omb2 * rho_);
    }
    Fsum_.assign(d_, 0.0);
  }

  void set_sink(MarginSink sink) { sink_ = std::move(sink); }

  const AuditContext& context() const { return ctx_; }
  std::int64_t steps() const { return s_; }
  const std::vector<StepRecord>& records() const { return records_; }
  const StepRecord& last() const { return last_; }
  const std::map<std::string, MarginSummary, std::less<>>& summaries() const { return summaries_; }

  bool noise_event_all() const { return event_prefix_; }
  bool martingale_all() const { return mart_prefix_; }
  bool premise_all() const { return premise_prefix_; }
  bool within_cap() const { return within_cap_; }
  bool left_domain() const { return left_domain_step_ >= 0; }
  std::int64_t left_domain_step() const { return left_domain_step_; }
  double max_identity_residual() const { return max_identity_residual_; }
  std::size_t total_violations() const {
    std::size_t n = 0;
    for (const auto& [k, v] : summaries_) n += v.violated;
    return n;
  }

  double sum_desc() const { return desc_; }
  double sum_grad_sq() const { return sum_grad_sq_; }

  CheckReport report(Check family) const {
    CheckReport r;
    r.family = family;
    for (const auto& [name, m] : summaries_) {
      if (m.family != family) continue;
      r.hold += m.hold;
      r.skip += m.skip;
      r.violated += m.violated;
      r.margins.emplace_back(name, m);
      if (m.violated && r.first_failure.empty()) {
        std::ostringstream os;
        os << name << " violated at s=" << m.first_violation_step;
        if (m.first_violation_coord >= 0) os << ", i=" << m.first_violation_coord;
        os << ", margin=" << m.first_violation_value;
        r.first_failure = os.str();
      }
    }
    return r;
  }

  void extend(const StepData& in);

 private:
  void emit(std::string_view name, double value, MarginStatus st, std::int64_t coord = -1) {
    auto it = summaries_.find(name);
    if (it == summaries_.end()) {
      MarginSummary m;
      m.family = family_of(name);
      it = summaries_.emplace(std::string(name), m).first;
    }
    MarginSummary& m = it->second;
    if (st == MarginStatus::skip) {
      ++m.skip;
    } else {
      if (st == MarginStatus::hold) ++m.hold;
      else {
        ++m.violated;
        if (m.first_violation_step < 0) {
          m.first_violation_step = s_;
          m.first_violation_coord = coord;
          m.first_violation_value = value;
        }
      }
      if (value < m.worst) {
        m.worst = value;
        m.worst_step = s_;
      }
    }
    if (sink_) sink_(MarginRecord{s_, it->first, value, st, coord});
  }

  void status_of(std::string_view name, double value, bool gate, std::int64_t coord = -1) {
    if (!gate) {
      emit(name, 0.0, MarginStatus::skip, coord);
      return;
    }
    emit(name, value, value < -ctx_.tol ? MarginStatus::violated : MarginStatus::hold, coord);
  }

  // lhs <= rhs, slack relative to `scale` (defaults to max(|lhs|, |rhs|)).
  void ineq(std::string_view name, double lhs, double rhs, bool gate = true, double scale = -1.0) {
    if (scale < 0.0) scale = std::max(std::abs(lhs), std::abs(rhs));
    double v = rhs - lhs;
    if (scale > 0.0) v /= scale;
    else if (v >= 0.0) v = 0.0;
    else v = -std::numeric_limits<double>::infinity();
    if (std::isnan(lhs) || std::isnan(rhs)) v = -std::numeric_limits<double>::infinity();
    status_of(name, v, gate);
  }

  // Subnormal operands carry absolute, not relative, rounding error: floor the scale at the smallest normal.
  void identity(std::string_view name, double residual, double scale) {
    const double r = std::abs(residual) / std::max(scale, std::numeric_limits<double>::min());
    max_identity_residual_ = std::max(max_identity_residual_, r);
    status_of(name, -r, true);
  }

  bool in_domain(std::span<const double> x) const { return ctx_.obj.domain.contains(x); }

  AuditContext ctx_;
  MarginSink sink_;
  std::size_t d_ = 0;
  std::int64_t s_ = 0;
  double kappa_ = 0.0, rho_ = 0.0, sigma_max_ = 1.0, MT_sq_ = 1.0, MT_ = 1.0;
  bool generalized_ = false;
  double L_ = 0.0, M_ = 0.0, F_gap_ = 0.0;
  double f_x1_ = 0.0;
  double D1_ = 0.0, D2_ = 0.0, D3_ = 0.0, D4_ = 0.0, D5_ = 0.0, D6_unit_ = 0.0, D7_unit_ = 0.0;
  std::optional<double> global_G_;
  bool within_cap_ = false;

  // previous step
  Vec x_cur_, b_prev_, m_prev_, v_prev_;
  double eta_prev_ = 0.0;
  double mhat_b_sq_prev_ = 0.0;  // ||m_hat_{s-1} / b_{s-1}||^2
  double logsum_prev_ = 0.0;     // sum_i log(F_i(s-1) / beta2^(s-1))
  double Lx_prev_ = 0.0, Ly_prev_ = 0.0;
  Vec y_cur_, grad_y_cur_;
  double f_y_cur_ = 0.0;

  // running quantities
  double G_ = 0.0;
  double max_xi_ = 0.0, max_g_ = 0.0, max_v_ = 0.0;
  bool event_prefix_ = true, mart_prefix_ = true, premise_prefix_ = true;
  std::int64_t left_domain_step_ = -1;
  double A_ = 0, A1_ = 0, A2_ = 0, A11_ = 0, A12_ = 0, B_ = 0, B1_ = 0, B2_ = 0, C_ = 0, Cgen_ = 0, desc_ = 0;
  double absA_ = 0, absA1_ = 0, absA2_ = 0, absA11_ = 0, absA12_ = 0, absB_ = 0, absB1_ = 0, absB2_ = 0;
  double S1_ = 0, S2_ = 0, S3_ = 0, S4_ = 0, Smm_ = 0;
  double mhat_sum_lag_ = 0;  // sum_{s <= t-1} ||m_hat_s / b_s||^2
  double gen_D6_sum_ = 0, gen_D7_sum_ = 0;
  double sig3_sum_ = 0;
  double split_abs_ = 0, split_resid_ = 0;
  double sum_grad_sq_ = 0;
  Vec Fsum_;
  double max_identity_residual_ = 0.0;

  StepRecord last_;
  std::vector<StepRecord> records_;
  std::map<std::string, MarginSummary, std::less<>> summaries_;

  // scratch
  Vec b_, a_, u_, w_, y_next_, y_iter_, grad_y_next_, grad_x_next_;
};

inline void AuditLedger::extend(const StepData& in) {
  const auto& p = ctx_.params;
  const std::size_t d = d_;
  if (in.s != s_ + 1) {
    throw Error(ErrorKind::sequencing,
                "ledger expected step " + std::to_string(s_ + 1) + ", got " + std::to_string(in.s));
  }
  require_same_dim(in.x.size(), d, "x_s");
  require_same_dim(in.x_prev.size(), d, "x_{s-1}");
  require_same_dim(in.x_next.size(), d, "x_{s+1}");
  require_same_dim(in.g.size(), d, "g");
  require_same_dim(in.g_bar.size(), d, "g_bar");
  require_same_dim(in.xi.size(), d, "xi");
  require_same_dim(in.m.size(), d, "m");
  require_same_dim(in.v.size(), d, "v");
  if (s_ > 0 && !std::equal(in.x.begin(), in.x.end(), x_cur_.begin()))
    throw Error(ErrorKind::sequencing, "x_s does not match the previous step's x_{s+1}");
  if (s_ == 0 && !std::equal(in.x_prev.begin(), in.x_prev.end(), in.x.begin()))
    throw Error(ErrorKind::sequencing, "step 1 needs x_0 = x_1");
  s_ = in.s;
  const std::int64_t s = s_;
  const double eta_s = in.eta_s, eps_s = in.eps_s;
  const double omb2 = 1.0 - p.beta2;
  const bool first = s == 1;
  const bool run_audit = ctx_.mode != AuditMode::off;
  const bool deep = ctx_.mode == AuditMode::deep;

  b_.resize(d);
  a_.resize(d);
  u_.resize(d);
  w_.resize(d);
  y_next_.resize(d);
  y_iter_.resize(d);
  grad_y_next_.resize(d);
  grad_x_next_.resize(d);

  StepRecord rec;
  rec.s = s;

  if (first) {
    y_cur_.assign(in.x.begin(), in.x.end());
    grad_y_cur_.resize(d);
    f_y_cur_ = ctx_.obj.value_and_grad(y_cur_, grad_y_cur_);
    b_prev_.assign(d, 0.0);
    m_prev_.assign(d, 0.0);
    v_prev_.assign(d, 0.0);
    eta_prev_ = p.eta;
  }
  rec.f_x = std::isnan(in.f_x) ? ctx_.obj.value(in.x) : in.f_x;

  const double gbar_norm = norm(in.g_bar);
  rec.grad_sq = gbar_norm * gbar_norm;
  rec.noise_sq = sq_norm(in.xi);
  sum_grad_sq_ += rec.grad_sq;
  G_ = std::max(G_, gbar_norm);
  const auto& nz = ctx_.noise;
  const double sG = MT_ * std::sqrt(2.0 * nz.sigma0 * nz.sigma0 + 2.0 * nz.sigma1 * nz.sigma1 * pow0(G_, nz.p) + 2.0 * G_ * G_);
  rec.G = G_;
  rec.script_G = sG;

  rec.b_min = rec.a_min = std::numeric_limits<double>::infinity();
  rec.b_max = rec.a_max = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    b_[i] = std::sqrt(in.v[i]) + eps_s;
    a_[i] = std::sqrt(p.beta2 * v_prev_[i] + omb2 * sG * sG) + eps_s;
    rec.b_min = std::min(rec.b_min, b_[i]);
    rec.b_max = std::max(rec.b_max, b_[i]);
    rec.a_min = std::min(rec.a_min, a_[i]);
    rec.a_max = std::max(rec.a_max, a_[i]);
  }

  const bool ev = ctx_.noise.is_none() || noise_event_at(ctx_.noise, in.g_bar, in.xi, MT_sq_);
  rec.event = ev;
  event_prefix_ = event_prefix_ && ev;
  const bool E = event_prefix_;

  // heavy-ball drift w and stochastic step u
  double ratio_dev_max = 0.0;
  std::int64_t ratio_coord = -1;
  for (std::size_t i = 0; i < d; ++i) {
    u_[i] = eta_s * in.g[i] / b_[i];
    if (first) {
      w_[i] = 0.0;
    } else {
      const double ratio = eta_s * b_prev_[i] / (eta_prev_ * b_[i]);
      const double dev = std::abs(ratio - 1.0);
      if (ratio_coord < 0 || dev > ratio_dev_max) {
        ratio_dev_max = dev;
        ratio_coord = static_cast<std::int64_t>(i);
      }
      w_[i] = kappa_ * (ratio - 1.0) * (in.x[i] - in.x_prev[i]);
    }
  }

  // y_{s+1} two ways
  double resid = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    y_next_[i] = in.x_next[i] + kappa_ * (in.x_next[i] - in.x[i]);
    y_iter_[i] = y_cur_[i] - u_[i] + w_[i];
    resid = std::max(resid, std::abs(y_next_[i] - y_iter_[i]));
  }
  const double y_scale = norm_inf(y_cur_) + norm_inf(u_) + norm_inf(w_) + norm_inf(y_next_);
  rec.p_norm = dist(y_cur_, in.x);

  const double f_y_next = ctx_.obj.value_and_grad(y_next_, grad_y_next_);
  const double f_x_next = ctx_.obj.value_and_grad(in.x_next, grad_x_next_);
  (void)f_x_next;
  const double gbar_next_norm = norm(grad_x_next_);

  // per-step decomposition terms
  double At = 0, A1t = 0, A2t = 0, Bt = 0, B1t = 0, B2t = 0, Ct = 0, desct = 0, A11t = 0, A12t = 0;
  double g_b_sq = 0, m_b_sq = 0, mprev_b_sq = 0, mprev_bprev_sq = 0, m_b_inf = 0;
  double dy_sq = 0;
  const double b1pow = in.beta1_pow;
  for (std::size_t i = 0; i < d; ++i) {
    const double gy = grad_y_cur_[i], gb = in.g_bar[i];
    At -= gy * u_[i];
    A1t -= gb * u_[i];
    A2t += (gb - gy) * u_[i];
    Bt += w_[i] * gy;
    B1t += w_[i] * gb;
    B2t += w_[i] * (gy - gb);
    const double dyi = w_[i] - u_[i];
    dy_sq += dyi * dyi;
    desct += eta_s * gb * gb / a_[i];
    A11t -= eta_s * gb * in.xi[i] / a_[i];
    A12t += eta_s * gb * (1.0 / a_[i] - 1.0 / b_[i]) * in.g[i];
    const double gbi = in.g[i] / b_[i];
    g_b_sq += gbi * gbi;
    const double mbi = in.m[i] / b_[i];
    m_b_sq += mbi * mbi;
    m_b_inf = std::max(m_b_inf, std::abs(mbi));
    if (!first) {
      const double x1 = m_prev_[i] / b_[i], x2 = m_prev_[i] / b_prev_[i];
      mprev_b_sq += x1 * x1;
      mprev_bprev_sq += x2 * x2;
    }
  }
  Ct = 0.5 * L_ * dy_sq;
  const double mhat_b_sq = m_b_sq / ((1.0 - b1pow) * (1.0 - b1pow));

  A_ += At, A1_ += A1t, A2_ += A2t, B_ += Bt, B1_ += B1t, B2_ += B2t, C_ += Ct, desc_ += desct;
  A11_ += A11t, A12_ += A12t;
  absA_ += std::abs(At), absA1_ += std::abs(A1t), absA2_ += std::abs(A2t);
  absB_ += std::abs(Bt), absB1_ += std::abs(B1t), absB2_ += std::abs(B2t);
  absA11_ += std::abs(A11t), absA12_ += std::abs(A12t);
  rec.A = At, rec.A1 = A1t, rec.A2 = A2t, rec.A11 = A11t, rec.A12 = A12t;
  rec.B = Bt, rec.B1 = B1t, rec.B2 = B2t, rec.C = Ct, rec.desc = desct;

  // martingale event (1_bounded, or its generalized twin with script H)
  if (global_G_) {
    const bool mart = A11_ <= sG / (4.0 * *global_G_) * desc_ + D1_ * *global_G_;
    rec.martingale = mart;
    mart_prefix_ = mart_prefix_ && mart;
  }
  const bool EM = E && mart_prefix_ && global_G_.has_value();

  // generalized-smoothness bookkeeping
  double Lx = 0, Ly = 0;
  bool premise_x = true, premise_y = true;
  const double gap_x_step = dist(in.x_next, in.x);
  const double gap_y_x = rec.p_norm;
  const double gap_y_step = std::sqrt(dy_sq);
  if (generalized_) {
    const auto& c = ctx_.obj.cert.gen();
    Lx = c.L0 + c.Lq * std::pow(G_, c.q);
    Ly = c.L0 + c.Lq * std::pow(G_ + std::pow(G_, c.q) + c.L0 / c.Lq, c.q);
    const double r = 1.0 / c.Lq;
    const bool dom_x = in_domain(in.x), dom_y = in_domain(y_cur_), dom_yn = in_domain(y_next_);
    const bool dom_xn = in_domain(in.x_next);
    if ((!dom_x || !dom_xn) && left_domain_step_ < 0) left_domain_step_ = s;
    premise_x = gap_y_x <= r && dom_x && dom_y;
    premise_y = premise_x && gap_y_step <= r && dom_yn;
    premise_prefix_ = premise_prefix_ && premise_y && gap_x_step <= r && dom_xn;
    Cgen_ += 0.5 * Ly * dy_sq;
    gen_D7_sum_ += D7_unit_ * Ly * g_b_sq;
    gen_D6_sum_ += D6_unit_ * Ly * mhat_b_sq_prev_;
  }
  rec.Lx = Lx;
  rec.Ly = Ly;

  // sums for sum_1
  double logsum = 0.0;
  const bool eps_pos = p.eps > 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    Fsum_[i] += in.g[i] * in.g[i];
    if (eps_pos) logsum += std::log1p(Fsum_[i] / (p.eps * p.eps));
  }
  logsum -= static_cast<double>(s) * static_cast<double>(d) * std::log(p.beta2);
  S1_ += g_b_sq;
  S2_ += m_b_sq;
  S4_ += mhat_b_sq;
  if (!first) {
    S3_ += mprev_b_sq;
    Smm_ += mprev_b_sq + mprev_bprev_sq;
  }

  if (run_audit) {
    identity("y_iteration", resid, y_scale);

    if (!first) {
      status_of("stepsize_ratio", (sigma_max_ - ratio_dev_max) / sigma_max_, true, ratio_coord);
    }
    {
      const double bound = std::sqrt((1.0 - p.beta1) * (1.0 - b1pow) / (omb2 * rho_));
      ineq("momentum_ratio", m_b_inf, bound);
    }
    if (eps_pos) {
      ineq("sum_g_over_b", S1_, logsum / omb2);
      ineq("sum_m_over_b", S2_, (1.0 - p.beta1) / (omb2 * rho_) * logsum);
      if (!first) ineq("sum_m_over_b_next", S3_, (1.0 - p.beta1) / (p.beta2 * omb2 * rho_) * logsum_prev_);
      ineq("sum_mhat_over_b_sq", S4_, logsum / (omb2 * rho_));
    }

    // smoothness relations
    const double gy_norm = norm(grad_y_cur_);
    if (!generalized_) {
      ineq("gradient_xs_ys", gbar_norm, gy_norm + M_);
    } else {
      const auto& c = ctx_.obj.cert.gen();
      const double bound = p.eta * F_gap_;
      if (first) ineq("eta_F", bound, 1.0 / c.Lq, within_cap_);
      ineq("gap_x_step", gap_x_step, bound);
      ineq("gap_y_x", gap_y_x, bound);
      ineq("gap_y_step", gap_y_step, bound);
      ineq("local_smooth_y", gy_norm, c.L0 / c.Lq + std::pow(gbar_norm, c.q) + gbar_norm, premise_x);
      ineq("local_smooth_x", gbar_norm, c.L0 / c.Lq + std::pow(gy_norm, c.q) + gy_norm, premise_x);
      ineq("lipschitz_x", dist(grad_y_cur_, in.g_bar), Lx * gap_y_x, premise_x);
      ineq("lipschitz_y", dist(grad_y_next_, grad_y_cur_), Ly * gap_y_step, premise_y);
      {
        double inner = 0.0;
        for (std::size_t i = 0; i < d; ++i) inner += grad_y_cur_[i] * (y_next_[i] - y_cur_[i]);
        const double lhs = f_y_next - f_y_cur_ - inner;
        const double rhs = 0.5 * Ly * dy_sq;
        ineq("descent_local", lhs, rhs, premise_y,
             std::abs(f_y_next) + std::abs(f_y_cur_) + std::abs(inner) + rhs);
      }
      if (!first) {
        ineq("monotone_Lx", Lx_prev_, Lx);
        ineq("monotone_Ly", Ly_prev_, Ly);
      }
      {
        const double gap = std::max(0.0, rec.f_x - ctx_.obj.f_star);
        const double rhs = std::max({4.0 * c.Lq * gap, std::pow(4.0 * c.Lq * gap, 1.0 / (2.0 - c.q)),
                                     std::sqrt(4.0 * c.L0 * gap)});
        ineq("gradient_value", gbar_norm, rhs, in_domain(in.x));
      }
    }

    // decomposition
    identity("identity_A", A_ - (A1_ + A2_), absA_ + absA1_ + absA2_);
    identity("identity_B", B_ - (B1_ + B2_), absB_ + absB1_ + absB2_);
    identity("identity_A1", A1_ - (-desc_ + A11_ + A12_), absA1_ + desc_ + absA11_ + absA12_);
    if (!generalized_) {
      const double rhs = f_x1_ + A_ + B_ + C_;
      ineq("descent_ABC", f_y_next, rhs, true, std::abs(f_y_next) + std::abs(f_x1_) + absA_ + absB_ + C_);
      const double D6 = L_ * D6_unit_, D7 = L_ * D7_unit_;
      const double rhs2 = f_x1_ + A1_ + B1_ + D6 * mhat_sum_lag_ + D7 * S1_;
      ineq("determine", f_y_next, rhs2, true,
           std::abs(f_y_next) + std::abs(f_x1_) + absA1_ + absB1_ + D6 * mhat_sum_lag_ + D7 * S1_);
    } else {
      const double rhs = f_x1_ + A_ + B_ + Cgen_;
      ineq("descent_ABC_gen", f_y_next, rhs, premise_prefix_,
           std::abs(f_y_next) + std::abs(f_x1_) + absA_ + absB_ + Cgen_);
      const double rhs2 = f_x1_ + A1_ + B1_ + gen_D6_sum_ + gen_D7_sum_;
      ineq("determine_gen", f_y_next, rhs2, premise_prefix_,
           std::abs(f_y_next) + std::abs(f_x1_) + absA1_ + absB1_ + gen_D6_sum_ + gen_D7_sum_);
    }

    // proxy step-size gaps, conditional on the noise event so far
    {
      double worst = std::numeric_limits<double>::infinity(), worst_prev = worst;
      std::int64_t wc = -1, wcp = -1;
      for (std::size_t i = 0; i < d; ++i) {
        const double rhs = sG * std::sqrt(omb2) / (a_[i] * b_[i]);
        const double lhs = std::abs(1.0 / a_[i] - 1.0 / b_[i]);
        const double v = rhs > 0.0 ? (rhs - lhs) / rhs : (lhs == 0.0 ? 0.0 : -1.0);
        if (v < worst) worst = v, wc = static_cast<std::int64_t>(i);
        if (!first) {
          const double rp = (sG + p.eps) * std::sqrt(omb2) / (a_[i] * b_prev_[i]);
          const double lp = std::abs(1.0 / a_[i] - 1.0 / b_prev_[i]);
          const double vp = rp > 0.0 ? (rp - lp) / rp : (lp == 0.0 ? 0.0 : -1.0);
          if (vp < worst_prev) worst_prev = vp, wcp = static_cast<std::int64_t>(i);
        }
      }
      status_of("gap_a_b", worst, E, wc);
      if (!first) status_of("gap_a_b_prev", worst_prev, E, wcp);
      max_xi_ = std::max(max_xi_, std::sqrt(rec.noise_sq));
      max_g_ = std::max(max_g_, norm(in.g));
      max_v_ = std::max(max_v_, norm_inf(in.v));
      ineq("bound_xi", max_xi_, sG, E);
      ineq("bound_g", max_g_, sG, E);
      ineq("bound_v", max_v_, sG * sG, E);
      const double sq = std::sqrt(1.0 - in.beta2_pow);
      ineq("a_upper_local", rec.a_max, sG * sq + eps_s, E);
      if (global_G_) ineq("a_upper_global", rec.a_max, *global_G_ * sq + eps_s, EM);
    }

    // sum_2 / log_H_t
    if (eps_pos && ctx_.constants) {
      const auto& c = *ctx_.constants;
      const double Fmax = 1.0 + *std::max_element(Fsum_.begin(), Fsum_.end()) / (p.eps * p.eps);
      if (!generalized_) {
        ineq("F_i_le_F_T", Fmax, c.smooth->F_cal_T, E);
      } else {
        const double t = static_cast<double>(s);
        const double Mt = p.C0() * Lx * std::sqrt(static_cast<double>(d) / rho_);
        const double J = detail::poly_F(MT_sq_, p.eps, c.sigma0, c.sigma1, c.p, t, c.grad1_norm, Mt);
        ineq("F_i_le_J_t", Fmax, J, E && premise_prefix_);
        ineq("J_t_le_J_tilde", J, c.generalized->J_tilde_T, EM && within_cap_);
      }
    }

    if (deep) {
      ineq("A12_bound", A12_, 0.25 * desc_ + D2_ * sG * S1_, E, absA12_ + 0.25 * desc_ + D2_ * sG * S1_);
      if (global_G_) {
        const double rhs = (sG / (4.0 * *global_G_) - 0.75) * desc_ + D1_ * *global_G_ + D2_ * sG * S1_;
        ineq("A1_bound", A1_, rhs, EM, absA1_ + desc_ + D1_ * *global_G_ + D2_ * sG * S1_);
      }
      if (!first) {
        double sig1 = 0, sig2 = 0, sig3_inner = 0, p1 = 0, p2 = 0;
        for (std::size_t i = 0; i < d; ++i) {
          const double gm = m_prev_[i] * in.g_bar[i];
          const double d1 = eta_s / b_[i] - eta_s / a_[i];
          const double d2 = eta_s / a_[i] - eta_s / b_prev_[i];
          sig1 += std::abs(d1 * gm);
          sig2 += std::abs(d2 * gm);
          p1 += d1 * gm;
          p2 += d2 * gm;
          sig3_inner += m_prev_[i] / b_prev_[i] * in.g_bar[i];
        }
        sig1 *= kappa_;
        sig2 *= kappa_;
        const double p3 = (eta_s - eta_prev_) * sig3_inner;
        const double sig3 = kappa_ * std::abs(p3);
        const double half_desc = desct / 8.0;
        const double coef = 2.0 * p.eta * std::sqrt(omb2) / std::pow(1.0 - p.beta1, 3);
        ineq("sigma1_bound", sig1, half_desc + coef * (sG + p.eps) * mprev_b_sq, E);
        ineq("sigma2_bound", sig2, half_desc + coef * (sG + p.eps) * mprev_bprev_sq, E);
        sig3_sum_ += sig3;
        // B1_s = -kappa <(eta_s/b_s - eta_{s-1}/b_{s-1}) m_{s-1}, g_bar>
        const double split = -kappa_ * (p1 + p2 + p3);
        split_resid_ += B1t - split;
        split_abs_ += std::abs(B1t) + kappa_ * (std::abs(p1) + std::abs(p2) + std::abs(p3));
      }
      ineq("sigma3_cumulative", sig3_sum_, D5_ * G_);
      identity("identity_B1_split", split_resid_, split_abs_);
      const double rhs = 0.25 * desc_ + (D3_ * sG + D4_) * Smm_ + D5_ * G_;
      ineq("B1_bound", B1_, rhs, E, absB1_ + rhs);
    }

    // conclusions of the gradient-bound propositions
    if (ctx_.constants) {
      const auto& c = *ctx_.constants;
      if (!generalized_) {
        const double G2 = c.smooth->G_sq;
        ineq("grad_le_G", std::max(rec.grad_sq, gbar_next_norm * gbar_next_norm), G2, EM);
        ineq("grad_next_le_G_minus_sum", gbar_next_norm * gbar_next_norm, G2 - L_ * desc_, EM, G2);
        ineq("G_T_s_le_G_T", sG, c.smooth->script_G_T, EM);
      } else {
        const auto& k = *c.generalized;
        const bool gate = EM && within_cap_;
        ineq("grad_le_H", std::max(gbar_norm, gbar_next_norm), k.H, gate);
        ineq("G_T_s_le_script_H", sG, k.script_H, gate);
        ineq("Ly_le_script_L", Ly, k.script_L, gate);
        const double lhs = f_y_next - ctx_.obj.f_star;
        ineq("general_delta_s", lhs, -0.25 * desc_ + k.H_hat, gate, std::abs(lhs) + 0.25 * desc_ + k.H_hat);
      }
    }
  }

  // roll state forward
  mhat_sum_lag_ += mhat_b_sq;
  mhat_b_sq_prev_ = mhat_b_sq;
  logsum_prev_ = logsum;
  b_prev_.assign(b_.begin(), b_.end());
  m_prev_.assign(in.m.begin(), in.m.end());
  v_prev_.assign(in.v.begin(), in.v.end());
  eta_prev_ = eta_s;
  Lx_prev_ = Lx;
  Ly_prev_ = Ly;
  x_cur_.assign(in.x_next.begin(), in.x_next.end());
  y_cur_.swap(y_next_);
  grad_y_cur_.swap(grad_y_next_);
  f_y_cur_ = f_y_next;
  last_ = rec;
  if (ctx_.keep_records) records_.push_back(rec);
}

inline void extend_ledger(AuditLedger& ledger, const StepData& step) { ledger.extend(step); }

inline CheckReport check_stepsize_ratio(const AuditLedger& l) {
  if (l.steps() < 2) throw Error(ErrorKind::validation, "stepsize ratio audit needs >= 2 steps");
  return l.report(Check::stepsize_ratio);
}

inline CheckReport check_momentum_ratio(const AuditLedger& l) { return l.report(Check::momentum_ratio); }

inline CheckReport check_y_identity(const AuditLedger& l) { return l.report(Check::y_identity); }

inline CheckReport check_sum_bounds(const AuditLedger& l) {
  if (!(l.context().params.eps > 0.0)) throw Error(ErrorKind::validation, "sum bounds need eps > 0");
  return l.report(Check::sum_bounds);
}

inline CheckReport check_proxy_gaps(const AuditLedger& l) { return l.report(Check::proxy_gaps); }

inline CheckReport check_sum_2(const AuditLedger& l) { return l.report(Check::sum_2); }

inline CheckReport check_deep(const AuditLedger& l) { return l.report(Check::deep); }

inline CheckReport check_conclusions(const AuditLedger& l) { return l.report(Check::conclusions); }

inline CheckReport check_descent_decomposition(const AuditLedger& l, const Objective& obj) {
  if (!obj.cert.is_lsmooth()) throw Error(ErrorKind::config, "descent decomposition needs an L-smooth objective");
  if (obj.id != l.context().obj.id) throw Error(ErrorKind::config, "objective differs from the audited one");
  return l.report(Check::decomposition);
}

inline CheckReport check_smooth_relations(const AuditLedger& l, const Objective& obj) {
  if (obj.id != l.context().obj.id) throw Error(ErrorKind::config, "objective differs from the audited one");
  return l.report(Check::smooth_relations);
}

}  // namespace adam_audit
