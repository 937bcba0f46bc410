#pragma once

#include <span>
#include <vector>

namespace prodspec::stats {

// Regularized upper incomplete gamma Q(a, x) (series / continued fraction).
double gamma_q(double a, double x);

// Kolmogorov distribution complement: P(D > observed) for sample size n,
// with the Stephens small-sample correction.
double ks_pvalue(double d_stat, std::size_t n);

// One-sample KS test against the uniform law on [0, 1). Input need not be sorted.
double ks_uniform_pvalue(std::vector<double> values);

// Two-sample KS test.
double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b);

// Chi-square test of uniform bin occupancy.
double chi2_uniform_pvalue(std::span<const std::size_t> counts);

// Simple least squares of y on x; returns (slope, intercept).
std::pair<double, double> linear_fit(std::span<const double> x, std::span<const double> y);

} // namespace prodspec::stats
