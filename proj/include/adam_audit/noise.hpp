#pragma once

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "adam_audit/errors.hpp"
#include "adam_audit/linalg.hpp"
#include "adam_audit/problems.hpp"
#include "adam_audit/rng.hpp"

namespace adam_audit {

enum class NoiseKind { none, bounded, sub_gaussian, affine_variance, generalized, violator };

// ball: xi = r * sqrt(U) * theta; gaussian: xi = r * Z / sqrt(k(d)).
enum class NoiseLaw { ball, gaussian };

struct NoiseModel {
  NoiseKind kind = NoiseKind::generalized;
  double sigma0 = 1.0;
  double sigma1 = 0.0;
  double p = 0.0;
  NoiseLaw law = NoiseLaw::ball;
  bool coordinatewise = false;  // experimental, per-coordinate scales

  static NoiseModel none() { return {NoiseKind::none, 0.0, 0.0, 0.0}; }
  static NoiseModel bounded(double s0) { return {NoiseKind::bounded, s0, 0.0, 0.0}; }
  static NoiseModel sub_gaussian(double s0) { return {NoiseKind::sub_gaussian, s0, 0.0, 0.0}; }
  static NoiseModel affine_variance(double s0, double s1) { return {NoiseKind::affine_variance, s0, s1, 2.0}; }
  static NoiseModel generalized(double s0, double s1, double p) { return {NoiseKind::generalized, s0, s1, p}; }
  // Negative control: ||xi||^2 = 2 (sigma0^2 + sigma1^2 ||g_bar||^p) on every draw.
  static NoiseModel violator(double s0, double s1, double p) { return {NoiseKind::violator, s0, s1, p}; }

  bool is_none() const { return kind == NoiseKind::none; }

  void validate() const {
    if (kind == NoiseKind::none) return;
    if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw Error(ErrorKind::validation, "sigma0 must be > 0");
    if (!(sigma1 >= 0.0) || !std::isfinite(sigma1)) throw Error(ErrorKind::validation, "sigma1 must be >= 0");
    if (!(p >= 0.0 && p < 4.0)) throw Error(ErrorKind::validation, "p must lie in [0, 4)");
  }

  // sigma0^2 + sigma1^2 ||g_bar||^p
  double scale_sq(double gbar_norm) const {
    return sigma0 * sigma0 + sigma1 * sigma1 * pow0(gbar_norm, p);
  }

  std::string id() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
      case NoiseKind::none: return "none";
      case NoiseKind::bounded: os << "bounded:sigma0=" << sigma0; break;
      case NoiseKind::sub_gaussian: os << "subgauss:sigma0=" << sigma0; break;
      case NoiseKind::affine_variance: os << "affine:sigma0=" << sigma0 << ",sigma1=" << sigma1; break;
      case NoiseKind::generalized: os << "a3:sigma0=" << sigma0 << ",sigma1=" << sigma1 << ",p=" << p; break;
      case NoiseKind::violator: os << "violator:sigma0=" << sigma0 << ",sigma1=" << sigma1 << ",p=" << p; break;
    }
    if (law == NoiseLaw::gaussian) os << ",law=gaussian";
    if (coordinatewise) os << ",coord=1";
    return os.str();
  }
};

// Variance divisor for the Gaussian law. E exp(||Z||^2 / k) = (1 - 2/k)^(-d/2), which this
// choice keeps at or below e - 1; k >= 8 also keeps the Orlicz estimator's variance finite.
inline double gaussian_law_divisor(std::size_t d) {
  const double dd = static_cast<double>(d);
  const double k = 2.0 / (1.0 - std::pow(std::numbers::e - 1.0, -2.0 / dd));
  return std::max(8.0, k);
}

struct GradientSample {
  Vec g;
  Vec g_bar;
  Vec xi;
};

// Fills `out` in place; the harness reuses one buffer per trajectory.
inline void sample_into(const NoiseModel& model, std::span<const double> g_bar, Rng& rng, GradientSample& out) {
  if (!all_finite(g_bar)) throw Error(ErrorKind::propagation, "non-finite true gradient");
  const std::size_t d = g_bar.size();
  out.g_bar.assign(g_bar.begin(), g_bar.end());
  out.xi.assign(d, 0.0);
  out.g.resize(d);
  if (model.kind != NoiseKind::none) {
    const double gn = norm(g_bar);
    if (model.kind == NoiseKind::violator) {
      const double r = std::sqrt(2.0 * model.scale_sq(gn));
      unit_sphere(rng, out.xi);
      for (double& z : out.xi) z *= r;
    } else if (model.coordinatewise) {
      // Per-coordinate radii sqrt((sigma0^2 + sigma1^2 |g_i|^p) / d); the 1/d keeps the
      // vector Orlicz bound intact.
      for (std::size_t i = 0; i < d; ++i) {
        const double ri = std::sqrt(model.scale_sq(std::abs(g_bar[i])) / static_cast<double>(d));
        if (model.law == NoiseLaw::ball) {
          out.xi[i] = ri * std::sqrt(uniform01(rng)) * random_sign(rng);
        } else {
          out.xi[i] = ri * standard_normal(rng) / std::sqrt(gaussian_law_divisor(1));
        }
      }
    } else if (model.law == NoiseLaw::ball) {
      const double r = std::sqrt(model.scale_sq(gn));
      const double rad = r * std::sqrt(uniform01(rng));
      unit_sphere(rng, out.xi);
      for (double& z : out.xi) z *= rad;
    } else {
      const double r = std::sqrt(model.scale_sq(gn) / gaussian_law_divisor(d));
      for (double& z : out.xi) z = r * standard_normal(rng);
    }
  }
  for (std::size_t i = 0; i < d; ++i) out.g[i] = out.g_bar[i] + out.xi[i];
}

inline GradientSample sample(const NoiseModel& model, std::span<const double> g_bar, Rng& rng) {
  GradientSample s;
  sample_into(model, g_bar, rng, s);
  return s;
}

struct A3Report {
  double orlicz_mean = 0.0;
  double std_error = 0.0;
  double ci_lo = 0.0;  // two-sided 98% interval, so ci_hi is the one-sided 99% upper bound
  double ci_hi = 0.0;
  bool pass = false;
  std::size_t draws = 0;
};

inline constexpr double z99 = 2.3263478740408408;  // one-sided 99% normal quantile

// Estimates E exp(||xi||^2 / (sigma0^2 + sigma1^2 ||g_bar||^p)).
inline A3Report verify_a3(const NoiseModel& model, std::span<const double> g_bar, std::size_t draws, Rng& rng) {
  if (draws < 1000) throw Error(ErrorKind::validation, "verify_a3 needs at least 1000 draws");
  A3Report r;
  r.draws = draws;
  if (model.is_none()) {
    r.orlicz_mean = 1.0;
    r.ci_lo = r.ci_hi = 1.0;
    r.pass = true;
    return r;
  }
  const double scale = model.scale_sq(norm(g_bar));
  GradientSample s;
  // Welford accumulation
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    sample_into(model, g_bar, rng, s);
    const double y = std::exp(sq_norm(s.xi) / scale);
    const double delta = y - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (y - mean);
  }
  const double var = draws > 1 ? m2 / static_cast<double>(draws - 1) : 0.0;
  r.orlicz_mean = mean;
  r.std_error = std::sqrt(var / static_cast<double>(draws));
  r.ci_lo = mean - z99 * r.std_error;
  r.ci_hi = mean + z99 * r.std_error;
  r.pass = r.ci_hi <= std::numbers::e;
  return r;
}

// log(eT/delta) = M_T^2
inline double noise_level_sq(std::int64_t T, double delta) {
  return 1.0 + std::log(static_cast<double>(T) / delta);
}

inline bool noise_event_at(const NoiseModel& model, std::span<const double> g_bar, std::span<const double> xi,
                           double MT_sq) {
  return sq_norm(xi) <= MT_sq * model.scale_sq(norm(g_bar));
}

struct EventIndicator {
  std::vector<bool> flags;
  bool all_hold = true;
};

inline EventIndicator noise_event_indicator(const std::vector<GradientSample>& samples, const NoiseModel& model,
                                            std::int64_t T, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::validation, "delta must lie in (0, 1)");
  if (static_cast<std::int64_t>(samples.size()) != T)
    throw Error(ErrorKind::validation, "expected exactly T samples");
  const double MT_sq = noise_level_sq(T, delta);
  EventIndicator ev;
  ev.flags.reserve(samples.size());
  for (const auto& s : samples) {
    const bool ok = noise_event_at(model, s.g_bar, s.xi, MT_sq);
    ev.flags.push_back(ok);
    ev.all_hold = ev.all_hold && ok;
  }
  return ev;
}

// Registry.
//   none | noiseless
//   a3:sigma0=1,sigma1=0.5,p=2      (alias: ball:...)
//   bounded:sigma0=1  subgauss:sigma0=1  affine:sigma0=1,sigma1=0.5
//   violator:sigma0=1,sigma1=0,p=0
// Optional trailing keys: law=ball|gaussian, coord=0|1.
inline NoiseModel parse_noise(const std::string& id) {
  const auto colon = id.find(':');
  const std::string head = detail::trim(id.substr(0, colon));
  const std::string body = colon == std::string::npos ? "" : id.substr(colon + 1);
  NoiseModel m;
  if (head == "none" || head == "noiseless") return NoiseModel::none();
  if (head == "a3" || head == "ball") m.kind = NoiseKind::generalized;
  else if (head == "bounded") m.kind = NoiseKind::bounded;
  else if (head == "subgauss") m.kind = NoiseKind::sub_gaussian;
  else if (head == "affine") m.kind = NoiseKind::affine_variance, m.p = 2.0;
  else if (head == "violator") m.kind = NoiseKind::violator;
  else throw Error(ErrorKind::config, "unknown noise model '" + id + "'");
  for (const auto& [k, v] : detail::parse_kv(body, ',')) {
    if (k == "sigma0") m.sigma0 = detail::parse_double(v);
    else if (k == "sigma1") m.sigma1 = detail::parse_double(v);
    else if (k == "p") m.p = detail::parse_double(v);
    else if (k == "law") {
      if (v == "ball") m.law = NoiseLaw::ball;
      else if (v == "gaussian") m.law = NoiseLaw::gaussian;
      else throw Error(ErrorKind::config, "unknown noise law '" + v + "'");
    } else if (k == "coord") m.coordinatewise = detail::parse_double(v) != 0.0;
    else throw Error(ErrorKind::config, "unknown noise key '" + k + "'");
  }
  if ((m.kind == NoiseKind::bounded || m.kind == NoiseKind::sub_gaussian) && m.sigma1 != 0.0)
    throw Error(ErrorKind::config, "bounded/subgauss models take sigma0 only");
  if (m.kind == NoiseKind::affine_variance && m.p != 2.0)
    throw Error(ErrorKind::config, "affine model has p = 2");
  m.validate();
  return m;
}

}  // namespace adam_audit
