#include "calens/numerics.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <limits>

namespace calens {

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double norm_log_cdf(double x) {
    if (x > -30.0) {
        return std::log(norm_cdf(x));
    }
    // Asymptotic Mills-ratio expansion; relative error below 1e-16 at x <= -30.
    const double x2 = x * x;
    const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    return -kLogSqrt2Pi - 0.5 * x2 - std::log(-x) + std::log(series);
}

double norm_quantile(double p) {
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double norm_upper_quantile(double q) {
    return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) {
        return -std::numeric_limits<double>::infinity();
    }
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

} // namespace calens
