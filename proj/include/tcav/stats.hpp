#pragma once

#include <vector>

namespace tcav {

// Regularized incomplete beta function I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// CDF of Student's t distribution with df degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  double t = 0.0;       // +-inf when zero_variance and mean != mu0
  double p = 1.0;       // two-sided
  double mean = 0.0;
  double sd = 0.0;      // sample standard deviation (n-1 denominator)
  int n = 0;
  bool zero_variance = false;
};

// One-sample two-sided t-test of xs against mu0. With zero sample variance the
// t statistic is undefined; by continuity the result is p=0 when the mean
// differs from mu0 and p=1 when it equals it, with zero_variance flagged.
TTestResult one_sample_ttest(const std::vector<double>& xs, double mu0);

// Two-sample Kolmogorov-Smirnov statistic: sup_x |F_a(x) - F_b(x)|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

}  // namespace tcav
