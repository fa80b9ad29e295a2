#pragma once

#include <cmath>
#include <numbers>
#include <span>

namespace calens {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// Standard normal CDF.
double norm_cdf(double x);

/// log Phi(x), accurate far into the lower tail.
double norm_log_cdf(double x);

/// Inverse of the standard normal CDF.
double norm_quantile(double p);

/// Inverse of the upper tail, Q^{-1}(q) with Q(x) = 1 - Phi(x). Accurate for tiny q.
double norm_upper_quantile(double q);

inline double norm_log_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * d * d / var;
}

/// log(sum(exp(v))). Returns -inf for an empty span or all -inf entries.
double log_sum_exp(std::span<const double> v);

} // namespace calens
