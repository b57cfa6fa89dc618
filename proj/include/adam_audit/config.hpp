#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adam_audit/audit.hpp"
#include "adam_audit/constants.hpp"
#include "adam_audit/errors.hpp"
#include "adam_audit/problems.hpp"

namespace adam_audit {

enum class MarginDetail { all, nonhold, none };

inline const char* to_string(MarginDetail m) {
  switch (m) {
    case MarginDetail::all: return "all";
    case MarginDetail::nonhold: return "nonhold";
    case MarginDetail::none: return "none";
  }
  return "?";
}

struct RunConfig {
  std::string objective = "quadspan:1,10,10";
  std::string noise = "a3:sigma0=1,sigma1=0.5,p=2";
  double beta1 = 0.9;
  std::optional<double> beta2;  // unset: beta2 = 1 - c/T
  double c = 1.0;
  double C0 = 1.0;
  double eps0 = 1e-8;
  // eta = eta_c1 / (sqrt(T) log(T)^eta_logpow) when eta_c1 is set; overrides C0.
  std::optional<double> eta_c1;
  double eta_logpow = 0.0;
  std::int64_t T = 1000;
  std::vector<std::int64_t> T_grid;
  double delta = 0.1;
  std::uint64_t seed = 1;
  std::size_t seeds = 1;
  AuditMode audit_mode = AuditMode::standard;
  RegimeKind regime = RegimeKind::smooth;
  double E0 = 1.0;
  std::vector<double> x1;  // empty: objective default
  MarginDetail margins = MarginDetail::nonhold;
  unsigned threads = 0;  // 0: hardware concurrency

  Regime regime_value() const {
    return regime == RegimeKind::generalized ? Regime::generalized(E0) : Regime::smooth();
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "objective", "noise", "beta1", "beta2", "c", "C0", "eps0", "eta_c1", "eta_logpow", "T", "T_grid",
      "delta", "seed", "seeds", "audit_mode", "regime", "E0", "x1", "margins", "threads"};
  return keys;
}

namespace detail {

inline std::int64_t integral(double d, const std::string& key) {
  if (d != std::floor(d) || std::abs(d) > 9e15) throw Error(ErrorKind::config, key + " must be an integer");
  return static_cast<std::int64_t>(d);
}

// accepts 10000 and 1e4 alike
inline std::int64_t parse_int(const std::string& v, const std::string& key) { return integral(parse_double(v), key); }

}  // namespace detail

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string v = detail::trim(raw);
  auto num = [&] {
    try {
      return detail::parse_double(v);
    } catch (const Error&) {
      throw Error(ErrorKind::config, "bad number for " + key + ": '" + v + "'");
    }
  };
  if (key == "objective") cfg.objective = v;
  else if (key == "noise") cfg.noise = v;
  else if (key == "beta1") cfg.beta1 = num();
  else if (key == "beta2") {
    if (v.empty() || v == "auto") cfg.beta2.reset();
    else cfg.beta2 = num();
  } else if (key == "c") cfg.c = num();
  else if (key == "C0") cfg.C0 = num();
  else if (key == "eps0") cfg.eps0 = num();
  else if (key == "eta_c1") cfg.eta_c1 = num();
  else if (key == "eta_logpow") cfg.eta_logpow = num();
  else if (key == "T") cfg.T = detail::parse_int(v, key);
  else if (key == "T_grid") {
    cfg.T_grid.clear();
    for (double t : detail::parse_list(v)) cfg.T_grid.push_back(detail::integral(t, key));
  } else if (key == "delta") cfg.delta = num();
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_int(v, key));
  else if (key == "seeds") cfg.seeds = static_cast<std::size_t>(detail::parse_int(v, key));
  else if (key == "audit_mode") cfg.audit_mode = parse_audit_mode(v);
  else if (key == "regime") {
    if (v == "smooth") cfg.regime = RegimeKind::smooth;
    else if (v == "generalized") cfg.regime = RegimeKind::generalized;
    else throw Error(ErrorKind::config, "regime must be smooth or generalized");
  } else if (key == "E0") cfg.E0 = num();
  else if (key == "x1") cfg.x1 = v.empty() ? std::vector<double>{} : detail::parse_list(v);
  else if (key == "margins") {
    if (v == "all") cfg.margins = MarginDetail::all;
    else if (v == "nonhold") cfg.margins = MarginDetail::nonhold;
    else if (v == "none") cfg.margins = MarginDetail::none;
    else throw Error(ErrorKind::config, "margins must be all, nonhold or none");
  } else if (key == "threads") cfg.threads = static_cast<unsigned>(detail::parse_int(v, key));
  else throw Error(ErrorKind::config, "unknown config key '" + key + "'");
}

// key = value per line, '#' starts a comment.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<config>") {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::config, origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorKind::config, origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(base, ss.str(), path);
  return base;
}

// Echo in config-file syntax; load_config_file on the output reproduces cfg.
inline std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  auto list = [](const auto& v) {
    std::ostringstream s;
    s.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  os << "objective = " << cfg.objective << "\n";
  os << "noise = " << cfg.noise << "\n";
  os << "beta1 = " << cfg.beta1 << "\n";
  if (cfg.beta2) os << "beta2 = " << *cfg.beta2 << "\n";
  os << "c = " << cfg.c << "\n";
  os << "C0 = " << cfg.C0 << "\n";
  os << "eps0 = " << cfg.eps0 << "\n";
  if (cfg.eta_c1) os << "eta_c1 = " << *cfg.eta_c1 << "\neta_logpow = " << cfg.eta_logpow << "\n";
  os << "T = " << cfg.T << "\n";
  if (!cfg.T_grid.empty()) os << "T_grid = " << list(cfg.T_grid) << "\n";
  os << "delta = " << cfg.delta << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "seeds = " << cfg.seeds << "\n";
  os << "audit_mode = " << to_string(cfg.audit_mode) << "\n";
  os << "regime = " << to_string(cfg.regime) << "\n";
  os << "E0 = " << cfg.E0 << "\n";
  if (!cfg.x1.empty()) os << "x1 = " << list(cfg.x1) << "\n";
  os << "margins = " << to_string(cfg.margins) << "\n";
  os << "threads = " << cfg.threads << "\n";
  return os.str();
}

}  // namespace adam_audit
