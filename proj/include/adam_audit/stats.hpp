#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "adam_audit/errors.hpp"

namespace adam_audit::stats {

// Linear-interpolation quantile (R type 7).
inline double quantile(std::vector<double> v, double prob) {
  if (v.empty()) throw Error(ErrorKind::validation, "quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;
  double ci_lo = 0.0;  // 95% t interval
  double ci_hi = 0.0;
  std::size_t n = 0;
};

inline SlopeFit ols_slope(const std::vector<double>& x, const std::vector<double>& y, double level = 0.95) {
  if (x.size() != y.size() || x.size() < 3) throw Error(ErrorKind::validation, "slope fit needs >= 3 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorKind::validation, "slope fit needs distinct x values");
  SlopeFit f;
  f.n = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    rss += r * r;
  }
  f.std_error = std::sqrt(rss / (n - 2.0) / sxx);
  boost::math::students_t t(n - 2.0);
  const double tq = boost::math::quantile(t, 0.5 + level / 2.0);
  f.ci_lo = f.slope - tq * f.std_error;
  f.ci_hi = f.slope + tq * f.std_error;
  return f;
}

// One-sided Clopper-Pearson upper bound on a binomial proportion.
inline double clopper_pearson_upper(std::size_t failures, std::size_t trials, double confidence = 0.99) {
  if (trials == 0) throw Error(ErrorKind::validation, "no trials");
  if (failures >= trials) return 1.0;
  boost::math::beta_distribution<double> b(static_cast<double>(failures) + 1.0,
                                           static_cast<double>(trials - failures));
  return boost::math::quantile(b, confidence);
}

}  // namespace adam_audit::stats
