#include "calens/errors.hpp"
#include "calens/numerics.hpp"
#include "calens/random.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

using namespace calens;

TEST_CASE("normal cdf and quantile are inverse") {
    for (double p : {1e-300, 1e-20, 1e-8, 0.01, 0.3, 0.5, 0.9, 0.999999}) {
        CHECK(norm_cdf(norm_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
    }
    for (double q : {1e-300, 1e-50, 1e-5, 0.2, 0.5}) {
        const double x = norm_upper_quantile(q);
        CHECK(0.5 * std::erfc(x / std::numbers::sqrt2) == doctest::Approx(q).epsilon(1e-10));
    }
}

TEST_CASE("log cdf is continuous across the asymptotic switch") {
    const double left = norm_log_cdf(-30.0 - 1e-9);
    const double right = norm_log_cdf(-30.0 + 1e-9);
    CHECK(std::abs(left - right) < 1e-6);
    // log Phi(-40) from the Mills series, frozen.
    CHECK(norm_log_cdf(-40.0) == doctest::Approx(-804.6084420137538).epsilon(1e-12));
    CHECK(norm_log_cdf(0.0) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("log_sum_exp handles empty and -inf input") {
    CHECK(std::isinf(log_sum_exp(std::vector<double>{})));
    CHECK(std::isinf(log_sum_exp(std::vector<double>{-INFINITY, -INFINITY})));
    CHECK(log_sum_exp(std::vector<double>{1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("streams are reproducible and distinct") {
    Rng a(42, StreamKind::Neuron, 3);
    Rng b(42, StreamKind::Neuron, 3);
    Rng c(42, StreamKind::Neuron, 4);
    Rng d(42, StreamKind::Cluster, 3);
    const double xa = a.uniform();
    CHECK(xa == b.uniform());
    CHECK(xa != c.uniform());
    CHECK(xa != d.uniform());
}

TEST_CASE("uniform stays inside the open unit interval") {
    Rng rng(1);
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("half-normal mean of the positive truncation") {
    // E[Z | Z > 0] = sqrt(2 / pi).
    Rng rng(7);
    const int n = 200000;
    double sum = 0.0;
    double sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.truncated_normal_positive(0.0);
        REQUIRE(z > 0.0);
        sum += z;
        sum2 += z * z;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - std::sqrt(2.0 / std::numbers::pi)) < 4.0 * se);
}

TEST_CASE("truncated normal mean matches the inverse Mills ratio") {
    Rng rng(11);
    for (double lower : {-3.0, 0.5, 2.0, 4.9, 5.1, 8.0, 30.0}) {
        const double mills = std::exp(-0.5 * lower * lower - 0.5 * std::log(2.0 * std::numbers::pi) -
                                      norm_log_cdf(-lower));
        const int n = 100000;
        double sum = 0.0;
        double sum2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double z = sample_standard_normal_above(lower, rng);
            REQUIRE(z > lower);
            sum += z;
            sum2 += z * z;
        }
        const double mean = sum / n;
        const double se = std::sqrt(std::max(sum2 / n - mean * mean, 1e-30) / n);
        CHECK_MESSAGE(std::abs(mean - mills) < 4.0 * se + 1e-12, "lower = " << lower);
    }
}

TEST_CASE("negative truncation stays non-positive") {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        REQUIRE(rng.truncated_normal_negative(2.5) <= 0.0);
    }
}

TEST_CASE("categorical draws follow the weights") {
    Rng rng(5);
    const std::vector<double> w{0.2, 0.0, 0.5, 0.3};
    std::vector<int> counts(4, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        counts[rng.categorical(w)]++;
    }
    CHECK(counts[1] == 0);
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double se = std::sqrt(w[k] * (1 - w[k]) / n);
        CHECK(std::abs(counts[k] / static_cast<double>(n) - w[k]) <= 4.0 * se + 1e-12);
    }
    const std::vector<double> lw{std::log(0.2), -INFINITY, std::log(0.5) + 700.0 - 700.0, std::log(0.3)};
    std::vector<int> lcounts(4, 0);
    for (int i = 0; i < n; ++i) {
        lcounts[rng.categorical_log(lw)]++;
    }
    CHECK(lcounts[1] == 0);
    CHECK(std::abs(lcounts[2] / static_cast<double>(n) - 0.5) < 0.01);
}

TEST_CASE("categorical rejects weights with no mass") {
    Rng rng(1);
    CHECK_THROWS_AS(rng.categorical(std::vector<double>{0.0, 0.0}), NumericError);
    CHECK_THROWS_AS(rng.categorical_log(std::vector<double>{-INFINITY}), NumericError);
}

TEST_CASE("gamma and beta draws have the right means") {
    Rng rng(9);
    const int n = 100000;
    double g = 0.0;
    double b = 0.0;
    for (int i = 0; i < n; ++i) {
        g += rng.gamma(3.0, 2.0);
        b += rng.beta(2.0, 6.0);
    }
    // Gamma(3, rate 2): mean 1.5, sd 0.866; Beta(2, 6): mean 0.25, sd 0.144.
    CHECK(std::abs(g / n - 1.5) < 4.0 * 0.866 / std::sqrt(n));
    CHECK(std::abs(b / n - 0.25) < 4.0 * 0.144 / std::sqrt(n));
}
