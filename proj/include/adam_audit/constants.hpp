#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "adam_audit/errors.hpp"
#include "adam_audit/linalg.hpp"
#include "adam_audit/noise.hpp"
#include "adam_audit/optimizer.hpp"
#include "adam_audit/problems.hpp"

namespace adam_audit {

enum class RegimeKind { smooth, generalized };

struct Regime {
  RegimeKind kind = RegimeKind::smooth;
  double E0 = 1.0;  // generalized only

  static Regime smooth() { return {}; }
  static Regime generalized(double E0) { return {RegimeKind::generalized, E0}; }
  bool is_generalized() const { return kind == RegimeKind::generalized; }
};

inline const char* to_string(RegimeKind k) { return k == RegimeKind::smooth ? "smooth" : "generalized"; }

inline double sigma_max(double beta2) {
  return std::max(1.0, std::sqrt((1.0 + beta2) / beta2) - 1.0);
}

// x^(p/(4-p)) style Young coefficient (4-p)/2 * p^(p/(4-p)), with 0^0 = 1.
inline double young_coefficient(double p) { return (4.0 - p) / 2.0 * pow0(p, p / (4.0 - p)); }

struct SmoothConstants {
  double L = 0.0;
  double M = 0.0;       // L C0 sqrt(d) / ((1-beta1) sqrt(rho))
  double M_hat = 0.0;   // M (1 - beta1)
  double D6 = 0.0;
  double D7 = 0.0;
  double F_cal_T = 0.0;  // script F(T)
  double log_F_over_beta_T = 0.0;  // log(F(T) / beta2^T)
  double G_sq = 0.0;
  double G = 0.0;
  double script_G_T = 0.0;
  double theorem_rhs = 0.0;
  // order form, informational only
  double Delta = 0.0;
  double G_sq_order = 0.0;
  // right-hand side that G^2 has to dominate in the induction step
  double G_sq_required = 0.0;
  bool G_sq_dominates = false;
};

struct GeneralizedConstants {
  double L0 = 0.0;
  double Lq = 0.0;
  double q = 0.0;
  double E0 = 0.0;
  double F = 0.0;
  double M_tilde = 0.0;
  double J_tilde_T = 0.0;
  double log_J_over_beta_T = 0.0;
  double H_hat = 0.0;
  double H = 0.0;
  double script_H = 0.0;
  double script_L = 0.0;
  double C_tilde_cap = 0.0;
  double cap_terms[4] = {0.0, 0.0, 0.0, 0.0};
  double eta_F = 0.0;  // eta * F, must stay <= 1/Lq
  double theorem_rhs = 0.0;
};

struct TheoryConstants {
  std::int64_t T = 0;
  double delta = 0.0;
  std::size_t d = 0;
  Regime regime;
  double beta1 = 0.0, beta2 = 0.0, eta = 0.0, eps = 0.0, C0 = 0.0, eps0 = 0.0;
  double sigma0 = 0.0, sigma1 = 0.0, p = 0.0;
  double grad1_norm = 0.0;
  double f_gap = 0.0;  // f(x1) - f*
  double rho = 0.0;    // 1 - beta1/beta2
  double Sigma_max = 0.0;
  double MT_sq = 0.0;
  double MT = 0.0;
  double D1 = 0.0, D2 = 0.0, D3 = 0.0, D4 = 0.0, D5 = 0.0;
  double D6_unit = 0.0;  // D6 = L * D6_unit; D6(s) = L^y_s * D6_unit
  double D7_unit = 0.0;
  std::optional<SmoothConstants> smooth;
  std::optional<GeneralizedConstants> generalized;

  // G_T in the smooth regime, script H in the generalized one.
  double global_gradient_bound() const { return smooth ? smooth->script_G_T : generalized->script_H; }
};

namespace detail {

inline double checked(double v, const char* term) {
  if (!std::isfinite(v)) throw OverflowError(term);
  return v;
}

// 1 + 2 M_T^2/eps^2 [sigma0^2 t + sigma1^2 t u^p + t u^2], u = ||g1|| + t * rate.
inline double poly_F(double MT_sq, double eps, double s0, double s1, double p, double t, double g1, double rate) {
  const double u = g1 + t * rate;
  return 1.0 + 2.0 * MT_sq / (eps * eps) * (s0 * s0 * t + s1 * s1 * t * pow0(u, p) + t * u * u);
}

}  // namespace detail

// Computation order: ||g1|| -> F(T) -> G^2 -> G_T, or E0 -> H_hat -> H -> (script H, script L) -> cap.
inline TheoryConstants compute_theory_constants(const HyperParams& params, const Objective& obj,
                                                const NoiseModel& noise, std::int64_t T, double delta,
                                                const Regime& regime, std::span<const double> x1) {
  using detail::checked;
  params.validate();
  if (T < 1) throw Error(ErrorKind::validation, "T must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::validation, "delta must lie in (0, 1)");
  if (!(params.eps > 0.0)) throw Error(ErrorKind::validation, "theory constants need eps > 0");
  require_same_dim(x1.size(), obj.dim, "x1");
  if (regime.is_generalized() != obj.cert.is_generalized())
    throw Error(ErrorKind::config, std::string("regime ") + to_string(regime.kind) +
                                       " does not match the objective's certificate");

  TheoryConstants c;
  c.T = T;
  c.delta = delta;
  c.d = obj.dim;
  c.regime = regime;
  c.beta1 = params.beta1;
  c.beta2 = params.beta2;
  c.eta = params.eta;
  c.eps = params.eps;
  c.C0 = params.C0();
  c.eps0 = params.eps0();
  c.sigma0 = noise.is_none() ? 0.0 : noise.sigma0;
  c.sigma1 = noise.is_none() ? 0.0 : noise.sigma1;
  c.p = noise.is_none() ? 0.0 : noise.p;

  const Evaluation e1 = obj.eval(x1);
  c.grad1_norm = norm(e1.grad);
  c.f_gap = e1.f - obj.f_star;

  const double b1 = c.beta1, b2 = c.beta2, eta = c.eta, eps = c.eps;
  const double d = static_cast<double>(c.d);
  const double Td = static_cast<double>(T);
  const double s0 = c.sigma0, s1 = c.sigma1, p = c.p;
  c.rho = 1.0 - b1 / b2;
  const double rho = c.rho;
  const double omb1 = 1.0 - b1, omb2 = 1.0 - b2;
  const double T_log_b2 = Td * std::log(b2);  // log beta2^T, negative

  c.Sigma_max = sigma_max(b2);
  c.MT_sq = noise_level_sq(T, delta);
  c.MT = std::sqrt(c.MT_sq);
  const double MT = c.MT;
  const double log_dT = std::log(d * Td / delta);

  c.D1 = checked(3.0 * eta * d / (omb1 * std::sqrt(omb2)) * log_dT, "D1");
  c.D2 = checked(eta * std::sqrt(omb2) / omb1, "D2");
  c.D3 = checked(2.0 * eta * std::sqrt(omb2) / (omb1 * omb1 * omb1), "D3");
  c.D4 = eps * c.D3;
  c.D5 = checked(2.0 * eta * std::sqrt(d) / std::sqrt(omb1 * omb1 * omb1 * omb2 * rho), "D5");
  c.D6_unit = eta * eta * (1.0 + 4.0 * c.Sigma_max * c.Sigma_max) / (2.0 * omb1 * omb1);
  c.D7_unit = 3.0 * eta * eta / (2.0 * omb1 * omb1);

  if (!regime.is_generalized()) {
    SmoothConstants k;
    const double L = obj.cert.L();
    const double C0 = c.C0, eps0 = c.eps0;
    k.L = L;
    k.M = checked(L * C0 * std::sqrt(d) / (omb1 * std::sqrt(rho)), "M");
    k.M_hat = k.M * omb1;
    k.D6 = L * c.D6_unit;
    k.D7 = L * c.D7_unit;
    k.F_cal_T = checked(detail::poly_F(c.MT_sq, eps, s0, s1, p, Td, c.grad1_norm, k.M_hat), "F(T)");
    k.log_F_over_beta_T = checked(std::log(k.F_cal_T) - T_log_b2, "log(F(T)/beta2^T)");
    const double logFb = k.log_F_over_beta_T;
    const double log_mix = checked(std::log(d * Td + k.F_cal_T) - std::log(delta) - T_log_b2, "log((dT+F(T))/(delta beta2^T))");
    const double K = L * C0 * d / (omb1 * omb1 * rho);
    const double t1 = 8.0 * L * c.f_gap;
    const double t2 = 48.0 * MT * L * C0 * s0 * d / omb1 * log_dT;
    const double t3 = 16.0 * MT * L * C0 * s0 * d / omb1 * logFb;
    const double t4 = 8.0 * (3.0 * L * C0 + 8.0 * (MT * s0 + eps0)) / b2 * K * logFb;
    const double t5 = checked(young_coefficient(p) * std::pow(72.0 * MT * L * s1 * C0 * d / (b2 * omb1 * omb1 * rho) * log_mix,
                                                             4.0 / (4.0 - p)),
                              "G^2 Young term");
    const double inner6 = 18.0 * MT * L * C0 * d / (b2 * omb1 * omb1 * rho) * log_mix;
    const double t6 = 32.0 * inner6 * inner6;
    const double t7 = 4.0 * L * L * C0 * C0 * d / (omb1 * omb1 * rho);
    k.G_sq = checked(t1 + t2 + t3 + t4 + t5 + t6 + t7, "G^2");
    k.G = std::sqrt(k.G_sq);
    const double inner = 2.0 * s0 * s0 + 2.0 * s1 * s1 * pow0(k.G, p) + 2.0 * k.G_sq;
    k.script_G_T = checked(MT * std::sqrt(inner), "G_T");
    k.theorem_rhs = checked(k.G_sq / (Td * L * C0) * (std::sqrt(inner) / std::sqrt(omb2) + eps0) * MT, "theorem RHS");

    const double lg = std::log(d * Td / delta) - T_log_b2;
    k.Delta = checked(L * C0 * d / (b2 * omb1 * omb1 * rho) * lg * lg, "Delta");
    k.G_sq_order = checked(L * c.f_gap + k.Delta * (L * C0 + eps0 + s0) + k.Delta * k.Delta +
                               (4.0 - p) * std::pow(pow0(p, p) * std::pow(s1, 4.0) * std::pow(k.Delta, 4.0), 1.0 / (4.0 - p)),
                           "G^2 order form");

    // What the induction step needs G^2 to cover.
    const double Dt1 = c.f_gap + 2.0 * MT * s0 * c.D1;
    const double Dt2 = ((2.0 * MT * s0 * c.D2 + k.D7) / omb2 + 4.0 * (MT * s0 * c.D3 + c.D4) * omb1 / (b2 * omb2 * rho) +
                        k.D6 / (omb2 * rho)) *
                       d * logFb;
    const double Dt3 = 2.0 * MT * (c.D1 + (c.D2 * d / omb2 + 2.0 * c.D3 * omb1 * d / (b2 * omb2 * rho)) * logFb) + c.D5;
    k.G_sq_required = checked(8.0 * L * (Dt1 + Dt2) + 32.0 * L * L * Dt3 * Dt3 +
                                  young_coefficient(p) * std::pow(4.0 * L * s1 * Dt3, 4.0 / (4.0 - p)) + 4.0 * k.M * k.M,
                              "G^2 requirement");
    k.G_sq_dominates = k.G_sq >= k.G_sq_required;
    c.smooth = k;
  } else {
    if (!(regime.E0 > 0.0) || !std::isfinite(regime.E0)) throw Error(ErrorKind::validation, "E0 must be > 0");
    const Generalized& cert = obj.cert.gen();
    GeneralizedConstants k;
    k.L0 = cert.L0;
    k.Lq = cert.Lq;
    k.q = cert.q;
    k.E0 = regime.E0;
    const double L0 = k.L0, Lq = k.Lq, q = k.q, E0 = k.E0;
    k.F = checked(std::sqrt(4.0 * d / (b2 * omb1 * omb1 * omb2 * rho)), "F");
    k.M_tilde = checked(E0 * std::sqrt(d / rho), "M_tilde");
    k.J_tilde_T = checked(detail::poly_F(c.MT_sq, eps, s0, s1, p, Td, c.grad1_norm, k.M_tilde), "J_tilde(T)");
    k.log_J_over_beta_T = checked(std::log(k.J_tilde_T) - T_log_b2, "log(J_tilde(T)/beta2^T)");
    const double lJ = k.log_J_over_beta_T;
    const double den = b2 * omb1 * omb1 * rho;
    k.H_hat = checked(c.f_gap + 3.0 * E0 * MT * d / omb1 * log_dT + E0 * MT * d / omb1 * lJ +
                          4.0 * E0 * (MT + eps) * d / den * lJ + 2.0 * E0 * d / std::sqrt(omb1 * omb1 * omb1 * rho) +
                          3.0 * E0 * E0 * d / (2.0 * omb1 * omb1) * lJ + 5.0 * E0 * E0 * d / (2.0 * den) * lJ,
                      "H_hat");
    const double u = 4.0 * Lq * k.H_hat, w = 4.0 * L0 * k.H_hat;
    k.H = checked(L0 / Lq + std::pow(u, q) + std::pow(u, q / (2.0 - q)) + std::pow(w, q / 2.0) + u +
                      std::pow(u, 1.0 / (2.0 - q)) + std::sqrt(w),
                  "H");
    k.script_H = checked(std::sqrt(2.0 * (s0 * s0 + s1 * s1 * pow0(k.H, p) + k.H * k.H) * c.MT_sq), "script H");
    k.script_L = checked(L0 + Lq * std::pow(std::pow(k.H, q) + k.H + L0 / Lq, q), "script L");
    k.cap_terms[0] = E0;
    k.cap_terms[1] = E0 / k.script_H;
    k.cap_terms[2] = E0 / k.script_L;
    k.cap_terms[3] = std::sqrt(den / (4.0 * Lq * Lq * d));
    k.C_tilde_cap = *std::min_element(std::begin(k.cap_terms), std::end(k.cap_terms));
    k.eta_F = eta * k.F;
    k.theorem_rhs = checked(4.0 * k.H_hat / (Td * c.C0) *
                                (std::sqrt(2.0 * (s0 * s0 + s1 * s1 * pow0(k.H, p) + k.H * k.H)) / std::sqrt(omb2) + c.eps0) *
                                MT,
                            "theorem RHS");
    c.generalized = k;
  }
  return c;
}

inline TheoryConstants compute_theory_constants(const HyperParams& params, const Objective& obj,
                                                const NoiseModel& noise, std::int64_t T, double delta,
                                                const Regime& regime) {
  return compute_theory_constants(params, obj, noise, T, delta, regime, obj.x1);
}

}  // namespace adam_audit
