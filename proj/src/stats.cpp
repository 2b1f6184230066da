#include "tcav/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcav/errors.hpp"

namespace tcav {

namespace {

// Continued fraction for the incomplete beta (modified Lentz), valid for
// x < (a+1)/(a+b+2); the complement identity covers the rest.
double betacf(double a, double b, double x) {
  const int kMaxIter = 300;
  const double kEps = 3e-16;
  const double kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete_beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw InputError("incomplete_beta: a and b must be positive");
  if (x < 0.0 || x > 1.0) throw InputError("incomplete_beta: x must lie in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log1p(-x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw InputError("student_t_cdf: df must be positive");
  if (t == 0.0) return 0.5;
  double x = df / (df + t * t);
  double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

TTestResult one_sample_ttest(const std::vector<double>& xs, double mu0) {
  if (xs.size() < 2) throw InputError("one_sample_ttest: need at least 2 samples");
  TTestResult r;
  r.n = static_cast<int>(xs.size());
  bool all_same = true;
  for (double v : xs) {
    if (v != xs.front()) {
      all_same = false;
      break;
    }
  }
  double sum = 0.0;
  for (double v : xs) sum += v;
  r.mean = sum / r.n;
  double ss = 0.0;
  for (double v : xs) ss += (v - r.mean) * (v - r.mean);
  r.sd = std::sqrt(ss / (r.n - 1));
  if (all_same) {
    r.zero_variance = true;
    r.mean = xs.front();  // exact, not an accumulated rounding
    r.sd = 0.0;
    if (r.mean == mu0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = r.mean > mu0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = (r.mean - mu0) / (r.sd / std::sqrt(static_cast<double>(r.n)));
  // two-sided p; I_x form evaluates both tails at once
  double df = r.n - 1;
  r.p = incomplete_beta(df / 2.0, 0.5, df / (df + r.t * r.t));
  return r;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("ks_statistic: both samples must be non-empty");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0, j = 0;
  double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      double v = a[i];
      while (i < a.size() && a[i] == v) ++i;
      while (j < b.size() && b[j] == v) ++j;
    }
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  // Once a sample is exhausted the last in-loop update already saw the
  // boundary gap, and it only shrinks from there.
  return d;
}

}  // namespace tcav
