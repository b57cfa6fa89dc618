#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "adam_audit/errors.hpp"
#include "adam_audit/linalg.hpp"

namespace adam_audit {

// eta = C0 * sqrt(1 - beta2), eps = eps0 * sqrt(1 - beta2).
struct Parameterization {
  double C0 = 1.0;
  double eps0 = 1e-8;
};

struct HyperParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eta = 1e-3;
  double eps = 1e-8;
  std::optional<Parameterization> scaled;

  static HyperParams from_scaled(double beta1, double beta2, double C0, double eps0) {
    HyperParams h;
    h.beta1 = beta1;
    h.beta2 = beta2;
    const double r = std::sqrt(1.0 - beta2);
    h.eta = C0 * r;
    h.eps = eps0 * r;
    h.scaled = Parameterization{C0, eps0};
    h.validate();
    return h;
  }

  // C0 and eps0 are always recoverable, whether or not the params were built scaled.
  double C0() const { return scaled ? scaled->C0 : eta / std::sqrt(1.0 - beta2); }
  double eps0() const { return scaled ? scaled->eps0 : eps / std::sqrt(1.0 - beta2); }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::validation, m); };
    if (!std::isfinite(beta1) || !std::isfinite(beta2) || !std::isfinite(eta) || !std::isfinite(eps))
      fail("hyper-parameters must be finite");
    if (!(beta1 >= 0.0 && beta1 < beta2 && beta2 < 1.0))
      fail("need 0 <= beta1 < beta2 < 1, got beta1=" + std::to_string(beta1) +
           " beta2=" + std::to_string(beta2));
    if (!(eta > 0.0)) fail("eta must be > 0");
    if (!(eps >= 0.0)) fail("eps must be >= 0");
    if (scaled) {
      if (!(scaled->C0 > 0.0) || !(scaled->eps0 > 0.0)) fail("C0 and eps0 must be > 0");
      const double r = std::sqrt(1.0 - beta2);
      auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::abs(b); };
      if (!close(eta, scaled->C0 * r) || !close(eps, scaled->eps0 * r))
        fail("eta/eps disagree with (C0, eps0) parameterization");
    }
  }
};

struct AdamState {
  Vec x;  // current iterate: the point where the next gradient is taken
  Vec m;
  Vec v;
  std::int64_t s = 0;
  double last_eta_s = 0.0;
  double last_eps_s = 0.0;
  double beta1_pow = 1.0;  // beta1^s, by repeated multiplication
  double beta2_pow = 1.0;  // beta2^s

  static AdamState initial(Vec x1) {
    AdamState st;
    st.m.assign(x1.size(), 0.0);
    st.v.assign(x1.size(), 0.0);
    st.x = std::move(x1);
    return st;
  }

  std::size_t dim() const { return x.size(); }
};

struct Schedule {
  double eta_s;
  double eps_s;
};

inline Schedule schedule_from_powers(double b1pow, double b2pow, const HyperParams& p) {
  const double r = std::sqrt(1.0 - b2pow);
  return {p.eta * r / (1.0 - b1pow), p.eps * r};
}

// Same multiplication order as step(), so the values match the state bit for bit.
inline Schedule rate_schedule(std::int64_t s, const HyperParams& p) {
  if (s < 1) throw Error(ErrorKind::domain, "rate_schedule needs s >= 1");
  double b1 = 1.0, b2 = 1.0;
  for (std::int64_t k = 0; k < s; ++k) {
    b1 *= p.beta1;
    b2 *= p.beta2;
  }
  return schedule_from_powers(b1, b2, p);
}

// In-place form of step(); the harness uses it to avoid a copy per iteration.
inline void step_inplace(AdamState& st, const HyperParams& p, std::span<const double> g) {
  require_same_dim(g.size(), st.dim(), "gradient vs state dimension");
  const std::size_t d = st.dim();
  const double b1pow = st.beta1_pow * p.beta1;
  const double b2pow = st.beta2_pow * p.beta2;
  const Schedule sch = schedule_from_powers(b1pow, b2pow, p);
  for (std::size_t i = 0; i < d; ++i) {
    const double mi = p.beta1 * st.m[i] + (1.0 - p.beta1) * g[i];
    const double vi = p.beta2 * st.v[i] + (1.0 - p.beta2) * g[i] * g[i];
    const double bi = std::sqrt(vi) + sch.eps_s;
    if (bi == 0.0) throw DivisionGuardError(i);
    st.m[i] = mi;
    st.v[i] = vi;
  }
  for (std::size_t i = 0; i < d; ++i) {
    const double bi = std::sqrt(st.v[i]) + sch.eps_s;
    st.x[i] -= sch.eta_s * st.m[i] / bi;
  }
  st.s += 1;
  st.beta1_pow = b1pow;
  st.beta2_pow = b2pow;
  st.last_eta_s = sch.eta_s;
  st.last_eps_s = sch.eps_s;
}

inline AdamState step(const AdamState& state, const HyperParams& p, std::span<const double> g) {
  AdamState next = state;
  step_inplace(next, p, g);
  return next;
}

// b_s = sqrt(v_s) + eps_s; epsilon sits outside the square root.
inline Vec derive_denominator(const AdamState& st) {
  if (st.s < 1) throw Error(ErrorKind::not_yet_stepped, "denominator undefined before the first step");
  Vec b(st.dim());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::sqrt(st.v[i]) + st.last_eps_s;
  return b;
}

// Heavy-ball form:
//   x_{s+1} = x_s - eta_s (1-beta1) g_s / b_s
//             + beta1 * eta_s b_{s-1} / (eta_{s-1} b_s) * (x_s - x_{s-1}).
// `prev` and `curr` are the states after steps s-1 and s. g_s is recovered from the
// two first moments. For s = 1 the caller passes x_prev == x_curr and eta_0 = eta.
inline Vec momentum_form_step(std::span<const double> x_prev, std::span<const double> x_curr,
                              const AdamState& prev, const AdamState& curr, const HyperParams& p) {
  if (curr.s != prev.s + 1 || curr.s < 1)
    throw Error(ErrorKind::sequencing, "states must be at consecutive steps s-1, s with s >= 1");
  const std::size_t d = curr.dim();
  require_same_dim(prev.dim(), d, "state pair");
  require_same_dim(x_prev.size(), d, "x_prev");
  require_same_dim(x_curr.size(), d, "x_curr");
  const double eta_prev = prev.s == 0 ? p.eta : prev.last_eta_s;
  const double eta_s = curr.last_eta_s;
  Vec out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double g = (curr.m[i] - p.beta1 * prev.m[i]) / (1.0 - p.beta1);
    const double b = std::sqrt(curr.v[i]) + curr.last_eps_s;
    const double b_prev = std::sqrt(prev.v[i]) + prev.last_eps_s;
    const double dx = x_curr[i] - x_prev[i];
    const double drift = dx == 0.0 ? 0.0 : p.beta1 * eta_s * b_prev / (eta_prev * b) * dx;
    out[i] = x_curr[i] - eta_s * (1.0 - p.beta1) * g / b + drift;
  }
  return out;
}

}  // namespace adam_audit
