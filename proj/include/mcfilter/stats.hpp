#ifndef MCFILTER_STATS_HPP
#define MCFILTER_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "mcfilter/error.hpp"

namespace mcfilter {

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
  bool contains(double x) const { return lower <= x && x <= upper; }
  bool overlaps(const Interval &o) const {
    return lower <= o.upper && o.lower <= upper;
  }
};

/// Wilson score interval for a binomial proportion (z = 1.96 gives 95%).
inline Interval wilson_interval(std::size_t successes, std::size_t trials,
                                double z = 1.959963984540054) {
  if (trials == 0)
    return {0.0, 1.0};
  if (successes > trials)
    throw ModelError("successes exceed trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half =
      z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct SampleSummary {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

inline SampleSummary summarize(const std::vector<double> &x) {
  SampleSummary s;
  s.n = x.size();
  if (x.empty())
    return s;
  double sum = 0.0;
  for (double v : x)
    sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : x)
      ss += (v - s.mean) * (v - s.mean);
    s.std_error = std::sqrt(ss / static_cast<double>(s.n - 1) /
                            static_cast<double>(s.n));
  }
  return s;
}

/// One-sided exact McNemar test on paired outcomes: the p-value for "b errs
/// more often than a", from the discordant pairs only.
inline double mcnemar_worse_p(const std::vector<std::uint8_t> &a_correct,
                              const std::vector<std::uint8_t> &b_correct) {
  if (a_correct.size() != b_correct.size())
    throw ModelError("paired outcomes differ in length");
  std::size_t a_only = 0, b_only = 0;
  for (std::size_t i = 0; i < a_correct.size(); ++i) {
    a_only += a_correct[i] && !b_correct[i];
    b_only += !a_correct[i] && b_correct[i];
  }
  const std::size_t n = a_only + b_only;
  if (n == 0)
    return 1.0;
  // P[X >= a_only], X ~ Binomial(n, 1/2)
  double p = 0.0;
  for (std::size_t k = a_only; k <= n; ++k)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                  std::lgamma(static_cast<double>(n - k) + 1.0) -
                  static_cast<double>(n) * std::log(2.0));
  return std::min(1.0, p);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Asymptotic Kolmogorov distribution survival function P[K > x].
inline double kolmogorov_survival(double x) {
  if (x <= 0.0)
    return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16)
      break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
inline KsResult ks_test(std::vector<double> sample,
                        const std::function<double(double)> &cdf) {
  if (sample.empty())
    throw ModelError("KS test needs a non-empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f,
                  f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  // Stephens' small-sample correction
  return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

} // namespace mcfilter

#endif
