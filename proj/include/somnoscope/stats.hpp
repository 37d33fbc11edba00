#pragma once

#include <span>

namespace somnoscope {

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample (n-1) convention; 0 for a single value
};

Summary aggregate(std::span<const double> values);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Student t cumulative distribution with `df` (> 0, not necessarily integral).
double student_t_cdf(double t, double df);

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 0.0;  // upper tail: evidence for mean(a) > mean(b)
    bool significant = false;
};

/// Welch's unequal-variance t-test, one-sided (H1: mean(a) > mean(b)).
TTestResult one_sided_t_test(std::span<const double> a, std::span<const double> b, double alpha = 0.05);

} // namespace somnoscope
