#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "adam_audit/errors.hpp"
#include "adam_audit/linalg.hpp"
#include "adam_audit/rng.hpp"

namespace adam_audit {

struct Lsmooth {
  double L;
};

struct Generalized {
  double L0;
  double Lq;
  double q;
};

struct SmoothnessCert {
  std::variant<Lsmooth, Generalized> kind;
  double domain_radius = std::numeric_limits<double>::infinity();

  bool is_lsmooth() const { return std::holds_alternative<Lsmooth>(kind); }
  bool is_generalized() const { return std::holds_alternative<Generalized>(kind); }
  double L() const { return std::get<Lsmooth>(kind).L; }
  const Generalized& gen() const { return std::get<Generalized>(kind); }
};

// Coordinatewise box [lo, hi]^d.
struct Box {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
  bool contains(std::span<const double> x) const {
    return std::all_of(x.begin(), x.end(), [&](double v) { return v >= lo && v <= hi; });
  }
};

struct Evaluation {
  double f;
  Vec grad;
};

struct Objective {
  using Fn = std::function<double(std::span<const double>, std::span<double>)>;

  std::string id;
  std::size_t dim = 1;
  Fn fn;  // returns f(x), writes the gradient
  double f_star = 0.0;
  bool f_star_empirical = false;
  SmoothnessCert cert{Lsmooth{1.0}};
  Box domain;
  Vec x1;  // default starting point

  double value_and_grad(std::span<const double> x, std::span<double> g) const { return fn(x, g); }

  Evaluation eval(std::span<const double> x) const {
    require_same_dim(x.size(), dim, "objective input");
    Evaluation e{0.0, Vec(dim)};
    e.f = fn(x, e.grad);
    return e;
  }

  Vec grad(std::span<const double> x) const { return eval(x).grad; }
  double value(std::span<const double> x) const { return eval(x).f; }
};

namespace detail {

inline double poly_eval(const std::vector<double>& c, double x) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
  return acc;
}

inline std::vector<double> poly_deriv(const std::vector<double>& c) {
  std::vector<double> d;
  for (std::size_t k = 1; k < c.size(); ++k) d.push_back(static_cast<double>(k) * c[k]);
  if (d.empty()) d.push_back(0.0);
  return d;
}

inline std::vector<double> parse_list(const std::string& s, char sep = ',') {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, "not a number: '" + tok + "'");
    }
    if (used != tok.size()) throw Error(ErrorKind::config, "not a number: '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  const auto e = s.find_last_not_of(ws);
  s.erase(e == std::string::npos ? 0 : e + 1);
  return s;
}

}  // namespace detail

// f(x) = 1/2 sum_i lambda_i x_i^2.
inline Objective make_quadratic(const std::vector<double>& spectrum) {
  if (spectrum.empty()) throw Error(ErrorKind::validation, "empty spectrum");
  for (double l : spectrum)
    if (!(l > 0.0) || !std::isfinite(l)) throw Error(ErrorKind::validation, "eigenvalues must be positive");
  auto lam = std::make_shared<const std::vector<double>>(spectrum);
  Objective o;
  std::ostringstream id;
  id << "quadratic:";
  for (std::size_t i = 0; i < spectrum.size(); ++i) id << (i ? "," : "") << spectrum[i];
  o.id = id.str();
  o.dim = spectrum.size();
  o.fn = [lam](std::span<const double> x, std::span<double> g) {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      g[i] = (*lam)[i] * x[i];
      f += 0.5 * (*lam)[i] * x[i] * x[i];
    }
    return f;
  };
  o.f_star = 0.0;
  o.cert = SmoothnessCert{Lsmooth{*std::max_element(spectrum.begin(), spectrum.end())}};
  o.x1.assign(o.dim, 1.0);
  return o;
}

// d eigenvalues evenly spaced on [lo, hi]; d = 1 gives {hi} so L stays hi.
inline Objective make_quadratic_span(double lo, double hi, std::size_t d) {
  if (d == 0) throw Error(ErrorKind::validation, "dimension must be >= 1");
  std::vector<double> lam(d);
  for (std::size_t i = 0; i < d; ++i)
    lam[i] = d == 1 ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(d - 1);
  Objective o = make_quadratic(lam);
  std::ostringstream id;
  id << "quadspan:" << lo << "," << hi << "," << d;
  o.id = id.str();
  return o;
}

// f(x) = sum_i x_i^4, certified (1, 7, 2/3)-smooth on ||x||_inf <= 10.
inline Objective make_quartic(std::size_t d) {
  if (d == 0) throw Error(ErrorKind::validation, "dimension must be >= 1");
  Objective o;
  o.id = "quartic:" + std::to_string(d);
  o.dim = d;
  o.fn = [](std::span<const double> x, std::span<double> g) {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x2 = x[i] * x[i];
      g[i] = 4.0 * x2 * x[i];
      f += x2 * x2;
    }
    return f;
  };
  o.f_star = 0.0;
  o.cert = SmoothnessCert{Generalized{1.0, 7.0, 2.0 / 3.0}, 10.0};
  o.domain = Box{-10.0, 10.0};
  o.x1.assign(d, 1.0);
  return o;
}

// ---------------------------------------------------------------------------
// Sampling-based certification of (L0, Lq)-smoothness.

struct CertifyOptions {
  double L0_start = 1.0;
  double Lq_start = 1.0;
  int max_doublings = 10;  // grid is start * 2^k, k = 0..max_doublings
  std::size_t batch = 512;
  double default_radius = 10.0;  // used when the objective's domain is unbounded
};

struct Certification {
  bool ok = false;
  double L0 = 0.0;
  double Lq = 0.0;
  double q = 0.0;
  double max_violation_ratio = 0.0;  // worst ||dgrad|| / ((L0 + Lq ||g||^q) ||dx||) seen last round
  double domain_radius = 0.0;
  std::size_t pairs_used = 0;
  int rounds = 0;
  std::string reason;
};

namespace detail {

struct PairSample {
  double dist;
  double ratio;  // ||grad f(y) - grad f(x)|| / ||y - x||
  double gq;     // ||grad f(x)||^q
};

inline Box certify_box(const Objective& obj, double default_radius) {
  if (obj.domain.bounded()) return obj.domain;
  return Box{-default_radius, default_radius};
}

inline PairSample sample_pair(const Objective& obj, const Box& box, double max_dist, double q, Rng& rng,
                              Vec& x, Vec& y, Vec& gx, Vec& gy, Vec& dir) {
  for (;;) {
    for (double& xi : x) xi = box.lo + (box.hi - box.lo) * uniform01(rng);
    unit_sphere(rng, dir);
    const double r = max_dist * (1.0 - uniform01(rng));  // (0, max_dist]
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + r * dir[i];
    if (!box.contains(y)) continue;
    obj.value_and_grad(x, gx);
    obj.value_and_grad(y, gy);
    const double dx = dist(x, y);
    if (dx == 0.0) continue;
    return {dx, dist(gx, gy) / dx, pow0(norm(gx), q)};
  }
}

}  // namespace detail

inline Certification certify_generalized(const Objective& obj, double q, std::size_t pair_budget,
                                         std::uint64_t rng_seed, const CertifyOptions& opt = {}) {
  if (!(q >= 0.0 && q < 2.0)) throw Error(ErrorKind::validation, "q must lie in [0, 2)");
  if (pair_budget < 1) throw Error(ErrorKind::validation, "pair_budget must be >= 1");

  Rng rng(rng_seed);
  const Box box = detail::certify_box(obj, opt.default_radius);
  const double L0_max = opt.L0_start * std::ldexp(1.0, opt.max_doublings);
  const double Lq_max = opt.Lq_start * std::ldexp(1.0, opt.max_doublings);
  auto grid_ceil = [&](double need, double start) {
    double v = start;
    while (v < need) v *= 2.0;
    return v;
  };

  Certification out;
  out.q = q;
  out.L0 = opt.L0_start;
  out.Lq = opt.Lq_start;
  out.domain_radius = std::max(std::abs(box.lo), std::abs(box.hi));

  Vec x(obj.dim), y(obj.dim), gx(obj.dim), gy(obj.dim), dir(obj.dim);
  std::vector<detail::PairSample> pairs;
  while (out.pairs_used < pair_budget) {
    const std::size_t n = std::min(opt.batch, pair_budget - out.pairs_used);
    ++out.rounds;
    pairs.clear();
    double worst = 0.0;
    bool violated = false;
    for (std::size_t k = 0; k < n; ++k) {
      pairs.push_back(detail::sample_pair(obj, box, 1.0 / out.Lq, q, rng, x, y, gx, gy, dir));
      const auto& ps = pairs.back();
      const double allowed = out.L0 + out.Lq * ps.gq;
      worst = std::max(worst, ps.ratio / allowed);
      if (ps.ratio > allowed) violated = true;
    }
    out.pairs_used += n;
    out.max_violation_ratio = worst;
    if (!violated) {
      if (n == opt.batch || out.pairs_used == pair_budget) {
        out.ok = true;
        return out;
      }
      continue;
    }

    // Refit: for each Lq' on the grid, keep the pairs that are still close enough and
    // find the smallest grid L0 covering them. Pick the cheapest L0' + Lq'. With q = 0 the
    // gradient factor is 1, so Lq only sets the locality radius and stays put.
    double best_cost = std::numeric_limits<double>::infinity();
    double best_L0 = 0.0, best_Lq = 0.0;
    for (double Lq = out.Lq; Lq <= Lq_max; Lq *= 2.0) {
      double need = out.L0;
      for (const auto& ps : pairs)
        if (ps.dist <= 1.0 / Lq) need = std::max(need, ps.ratio - Lq * ps.gq);
      const double L0 = grid_ceil(need, out.L0);
      if (L0 <= L0_max && L0 + Lq < best_cost) {
        best_cost = L0 + Lq;
        best_L0 = L0;
        best_Lq = Lq;
      }
      if (q == 0.0) break;
    }
    if (!std::isfinite(best_cost)) {
      out.reason = "required constants exceed the doubling grid (L0, Lq <= " + std::to_string(L0_max) + ")";
      return out;
    }
    out.L0 = best_L0;
    out.Lq = best_Lq;
  }
  out.reason = "pair budget exhausted before a violation-free round";
  return out;
}

// Scans outward for a pair whose gradient-difference ratio exceeds L.
struct LsmoothWitness {
  Vec x;
  Vec y;
  double ratio;
};

inline std::optional<LsmoothWitness> find_lsmooth_violation(const Objective& obj, double L,
                                                            double max_radius = 1e6) {
  Vec x(obj.dim), y(obj.dim), gx(obj.dim), gy(obj.dim);
  for (double r = 1.0; r <= max_radius; r *= 2.0) {
    std::fill(x.begin(), x.end(), 0.0);
    x[0] = r;
    y = x;
    y[0] = r + 1e-3 * r;
    obj.value_and_grad(x, gx);
    obj.value_and_grad(y, gy);
    const double ratio = dist(gx, gy) / dist(x, y);
    if (ratio > L) return LsmoothWitness{x, y, ratio};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

// f(x) = P(x) / Q(x) on [lo, hi]; coefficients are in ascending powers.
inline Objective make_rational_1d(const std::vector<double>& P, const std::vector<double>& Q, double lo,
                                  double hi, double q = 1.5, std::size_t pair_budget = 8192,
                                  std::uint64_t seed = 1) {
  if (P.empty() || Q.empty()) throw Error(ErrorKind::validation, "empty polynomial");
  if (!(lo < hi)) throw Error(ErrorKind::validation, "domain needs lo < hi");
  // Reject poles on the domain widened by 1% on each side.
  const double margin = 0.01 * (hi - lo);
  const int grid = 20000;
  double qscale = 0.0;
  for (double c : Q) qscale = std::max(qscale, std::abs(c));
  double prev = detail::poly_eval(Q, lo - margin);
  for (int k = 0; k <= grid; ++k) {
    const double t = lo - margin + (hi - lo + 2 * margin) * k / grid;
    const double qv = detail::poly_eval(Q, t);
    if (std::abs(qv) <= 1e-12 * qscale || (qv > 0) != (prev > 0))
      throw Error(ErrorKind::validation, "denominator has a root in or near the domain");
    prev = qv;
  }
  auto Pc = std::make_shared<const std::vector<double>>(P);
  auto Qc = std::make_shared<const std::vector<double>>(Q);
  auto dP = std::make_shared<const std::vector<double>>(detail::poly_deriv(P));
  auto dQ = std::make_shared<const std::vector<double>>(detail::poly_deriv(Q));
  Objective o;
  std::ostringstream id;
  id << "rational:P=";
  for (std::size_t i = 0; i < P.size(); ++i) id << (i ? "," : "") << P[i];
  id << ";Q=";
  for (std::size_t i = 0; i < Q.size(); ++i) id << (i ? "," : "") << Q[i];
  id << ";lo=" << lo << ";hi=" << hi;
  o.id = id.str();
  o.dim = 1;
  o.fn = [Pc, Qc, dP, dQ](std::span<const double> x, std::span<double> g) {
    const double p = detail::poly_eval(*Pc, x[0]);
    const double qv = detail::poly_eval(*Qc, x[0]);
    g[0] = (detail::poly_eval(*dP, x[0]) * qv - p * detail::poly_eval(*dQ, x[0])) / (qv * qv);
    return p / qv;
  };
  o.domain = Box{lo, hi};
  o.x1 = {lo + 0.75 * (hi - lo)};

  // Empirical f*: grid minimum less a slope-times-spacing allowance.
  double fmin = std::numeric_limits<double>::infinity(), gmax = 0.0;
  Vec g(1), pt(1);
  for (int k = 0; k <= grid; ++k) {
    pt[0] = lo + (hi - lo) * k / grid;
    fmin = std::min(fmin, o.fn(pt, g));
    gmax = std::max(gmax, std::abs(g[0]));
  }
  o.f_star = fmin - gmax * (hi - lo) / grid - 1e-9 * (1.0 + std::abs(fmin));
  o.f_star_empirical = true;

  const Certification c = certify_generalized(o, q, pair_budget, seed);
  if (!c.ok) throw Error(ErrorKind::validation, "could not certify rational objective: " + c.reason);
  o.cert = SmoothnessCert{Generalized{c.L0, c.Lq, q}, c.domain_radius};
  return o;
}

// f(x) = a^(b^x), a, b > 1; infimum 1 approached as x -> -inf.
inline Objective make_double_exponential(double a, double b, double lo, double hi, double q = 1.5,
                                         std::size_t pair_budget = 8192, std::uint64_t seed = 1) {
  if (!(a > 1.0 && b > 1.0)) throw Error(ErrorKind::validation, "need a, b > 1");
  if (!(lo < hi)) throw Error(ErrorKind::validation, "domain needs lo < hi");
  const double la = std::log(a), lb = std::log(b);
  Objective o;
  std::ostringstream id;
  id << "dexp:a=" << a << ",b=" << b << ",lo=" << lo << ",hi=" << hi;
  o.id = id.str();
  o.dim = 1;
  o.fn = [a, b, la, lb](std::span<const double> x, std::span<double> g) {
    const double bx = std::pow(b, x[0]);
    const double f = std::pow(a, bx);
    g[0] = f * la * bx * lb;
    return f;
  };
  o.f_star = 1.0;
  o.domain = Box{lo, hi};
  o.x1 = {lo + 0.75 * (hi - lo)};
  const Certification c = certify_generalized(o, q, pair_budget, seed);
  if (!c.ok) throw Error(ErrorKind::validation, "could not certify double exponential: " + c.reason);
  o.cert = SmoothnessCert{Generalized{c.L0, c.Lq, q}, c.domain_radius};
  return o;
}

// ---------------------------------------------------------------------------
// Registry.
//   quadratic:1,10            explicit spectrum
//   quadspan:1,10,5           5 evenly spaced eigenvalues on [1, 10]
//   quartic:10                sum x_i^4 in 10 dimensions
//   rational:P=1;Q=1,0,1;lo=-5;hi=5[;q=1.5]
//   dexp:a=2,b=2,lo=-4,hi=2[,q=1.5]

namespace detail {

inline std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& s, char sep) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    tok = trim(tok);
    if (tok.empty()) continue;
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::config, "expected key=value, got '" + tok + "'");
    out.emplace_back(trim(tok.substr(0, eq)), trim(tok.substr(eq + 1)));
  }
  return out;
}

inline double parse_double(const std::string& s) {
  const auto v = parse_list(s);
  if (v.size() != 1) throw Error(ErrorKind::config, "expected one number, got '" + s + "'");
  return v[0];
}

}  // namespace detail

inline Objective parse_objective(const std::string& spec_id) {
  const auto colon = spec_id.find(':');
  const std::string head = detail::trim(spec_id.substr(0, colon));
  const std::string body = colon == std::string::npos ? "" : spec_id.substr(colon + 1);
  if (head == "quadratic") return make_quadratic(detail::parse_list(body));
  if (head == "quadspan") {
    const auto v = detail::parse_list(body);
    if (v.size() != 3 || v[2] < 1) throw Error(ErrorKind::config, "quadspan needs lo,hi,d");
    return make_quadratic_span(v[0], v[1], static_cast<std::size_t>(v[2]));
  }
  if (head == "quartic") {
    const auto v = detail::parse_list(body.empty() ? "1" : body);
    if (v.size() != 1 || v[0] < 1) throw Error(ErrorKind::config, "quartic needs a dimension");
    return make_quartic(static_cast<std::size_t>(v[0]));
  }
  if (head == "rational") {
    std::vector<double> P, Q;
    double lo = -5.0, hi = 5.0, q = 1.5;
    for (const auto& [k, v] : detail::parse_kv(body, ';')) {
      if (k == "P") P = detail::parse_list(v);
      else if (k == "Q") Q = detail::parse_list(v);
      else if (k == "lo") lo = detail::parse_double(v);
      else if (k == "hi") hi = detail::parse_double(v);
      else if (k == "q") q = detail::parse_double(v);
      else throw Error(ErrorKind::config, "unknown rational key '" + k + "'");
    }
    return make_rational_1d(P, Q, lo, hi, q);
  }
  if (head == "dexp") {
    double a = 2.0, b = 2.0, lo = -4.0, hi = 2.0, q = 1.5;
    for (const auto& [k, v] : detail::parse_kv(body, ',')) {
      if (k == "a") a = detail::parse_double(v);
      else if (k == "b") b = detail::parse_double(v);
      else if (k == "lo") lo = detail::parse_double(v);
      else if (k == "hi") hi = detail::parse_double(v);
      else if (k == "q") q = detail::parse_double(v);
      else throw Error(ErrorKind::config, "unknown dexp key '" + k + "'");
    }
    return make_double_exponential(a, b, lo, hi, q);
  }
  throw Error(ErrorKind::config, "unknown objective '" + spec_id + "'");
}

// Largest relative gap between the analytic gradient and central differences at x.
inline double finite_difference_error(const Objective& obj, std::span<const double> x) {
  const double h = 1e-5 * (1.0 + norm(x));
  Vec xp(x.begin(), x.end()), xm(x.begin(), x.end()), g(obj.dim), scratch(obj.dim);
  obj.value_and_grad(x, g);
  Vec fd(obj.dim);
  for (std::size_t i = 0; i < obj.dim; ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    fd[i] = (obj.value_and_grad(xp, scratch) - obj.value_and_grad(xm, scratch)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return dist(g, fd) / std::max(norm(g), 1e-3 * (1.0 + std::abs(obj.value_and_grad(x, scratch))));
}

}  // namespace adam_audit
