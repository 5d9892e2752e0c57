#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "specklesim/metrics.hpp"

using namespace spk;

TEST_CASE("mae hand values and translation invariance") {
    CHECK(mae({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(mae({1, 2, 3}, {2, 2, 2}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(mae({11, 12, 13}, {12, 12, 12}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(mae({}, {}), parameter_error);
    CHECK_THROWS_AS(mae({1.0}, {1.0, 2.0}), parameter_error);
}

TEST_CASE("rmse hand values and the n=1 degeneracy") {
    CHECK(rmse({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(rmse({1, 2, 3}, {2, 2, 2}) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
    CHECK(rmse({5}, {2}) == doctest::Approx(3.0));
    CHECK(mae({5}, {2}) == doctest::Approx(3.0)); // single sample: rmse == mae
}

TEST_CASE("mae <= rmse on randomized vectors") {
    Rng rng(404);
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t n = 1 + rng.next_u64() % 12;
        std::vector<double> y(n), yhat(n);
        for (size_t i = 0; i < n; ++i) {
            y[i] = rng.normal(0.0, 3.0);
            yhat[i] = rng.normal(0.0, 3.0);
        }
        CHECK(mae(y, yhat) <= rmse(y, yhat) + 1e-15);
    }
}

TEST_CASE("r2 hand values: perfect, mean predictor, and the worked example") {
    CHECK(r2({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(r2({1, 2, 3}, {2, 2, 2}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(r2({1, 2, 3, 4}, {2.5, 2.5, 2.5, 2.5}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS_AS(r2({2, 2, 2}, {1, 2, 3}), domain_error);
    CHECK_THROWS_AS(r2({1}, {1}), parameter_error);
}

TEST_CASE("rcv hand value: (1,2,3) gives 74.13 percent") {
    // median 2, |dev| = (1,0,1), MAD = 1 -> 100 * 1.4826 / 2
    CHECK(rcv({1, 2, 3}) == doctest::Approx(74.13).epsilon(1e-12));
}

TEST_CASE("rcv is zero for constants and invariant under positive scaling") {
    CHECK(rcv({4, 4, 4, 4}) == 0.0);
    const double a = rcv({1.0, 2.5, 2.0, 3.5, 2.2});
    const double b = rcv({7.0, 17.5, 14.0, 24.5, 15.4});
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
    CHECK_THROWS_AS(rcv({-1.0, 0.0, 1.0}), domain_error);
}

TEST_CASE("median uses the midpoint tie rule") {
    CHECK(median({3.0, 1.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK(median({5.0, 1.0, 3.0}) == 3.0);
}

TEST_CASE("fidelity hand values and monotone decay in the error") {
    CHECK(fidelity(1.0, 1.0) == 100.0);
    CHECK(fidelity(0.0, 1.0) == 0.0);
    CHECK(fidelity(0.95, 1.0) == doctest::Approx(95.0).epsilon(1e-12));
    CHECK(fidelity(1.05, 1.0) == doctest::Approx(95.0).epsilon(1e-12)); // symmetric
    CHECK(fidelity(3.0, 1.0) == 0.0);                                   // clipped at zero
    CHECK(fidelity(0.9, 1.0) < fidelity(0.95, 1.0));
    CHECK_THROWS_AS(fidelity(1.0, 0.0), parameter_error);
}

TEST_CASE("noise_level is zero on constants and offset-invariant") {
    RealGrid constant(32, 32, 1.0, 9.0);
    CHECK(noise_level(constant) == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(8);
    RealGrid img(64, 64, 1.0);
    for (double& v : img.data) v = rng.normal(0.0, 2.0);
    RealGrid shifted = img;
    for (double& v : shifted.data) v += 123.0;
    CHECK(noise_level(img) == doctest::Approx(noise_level(shifted)).epsilon(1e-9));
}

TEST_CASE("white-noise response matches the pinned calibration factor") {
    Rng rng(9);
    RealGrid img(256, 256, 1.0);
    const double sigma = 3.0;
    for (double& v : img.data) v = rng.normal(0.0, sigma);
    const double est = noise_level(img);
    // border effects and sampling noise keep this a ~1% comparison
    CHECK(est == doctest::Approx(sigma * kNoiseLevelWhiteFactor).epsilon(0.02));
}

TEST_CASE("doubling the noise amplitude doubles the estimate within 5%") {
    Rng rng(10);
    RealGrid a(256, 256, 1.0), b(256, 256, 1.0);
    for (size_t i = 0; i < a.size(); ++i) a.data[i] = rng.normal(0.0, 1.0);
    Rng rng2(11);
    for (size_t i = 0; i < b.size(); ++i) b.data[i] = rng2.normal(0.0, 2.0);
    CHECK(noise_level(b) / noise_level(a) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("noise_level grows monotonically with added white noise") {
    Rng rng(12);
    RealGrid base(128, 128, 1.0);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) base.at(x, y) = std::sin(0.2 * x) + std::cos(0.13 * y);
    double prev = noise_level(base);
    for (double amp : {0.5, 1.0, 2.0}) {
        RealGrid noisy = base;
        Rng draw(13);
        for (double& v : noisy.data) v += draw.normal(0.0, amp);
        const double cur = noise_level(noisy);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("beer_lambert forward and inverse hand values") {
    CHECK(beer_lambert_absorbance(2.0, 1.0, 0.0) == 0.0);
    CHECK(beer_lambert_absorbance(2.0, 1.0, 3.0) == 6.0);
    CHECK(beer_lambert_absorbance(2.0, 1.0, 6.0) == 12.0); // linear
    CHECK(beer_lambert_concentration(0.0, 2.0, 1.0) == 0.0);
    CHECK(beer_lambert_concentration(6.0, 2.0, 1.0) == 3.0);
    CHECK_THROWS_AS(beer_lambert_concentration(1.0, 0.0, 1.0), parameter_error);
}

TEST_CASE("beer_lambert round-trip is exact") {
    for (double c : {1e-4, 0.3, 7.0}) {
        const double a = beer_lambert_absorbance(1.7, 1.2, c);
        CHECK(beer_lambert_concentration(a, 1.7, 1.2) == doctest::Approx(c).epsilon(1e-12));
    }
}

TEST_CASE("uvvis baseline: noiseless recovery below saturation") {
    const std::vector<double> ladder{0.1, 0.5, 1.0};
    const auto pts = uvvis_baseline(ladder, 0.8, 1.0, 10.0);
    for (size_t i = 0; i < ladder.size(); ++i) {
        REQUIRE(pts[i].c_est.has_value());
        CHECK(*pts[i].c_est == doctest::Approx(ladder[i]).epsilon(1e-12));
    }
}

TEST_CASE("uvvis baseline flags exactly the analytically saturated set") {
    // eps*D*c >= A_sat <=> c >= 2.5 given eps 2, D 1, A_sat 5
    const std::vector<double> ladder{0.5, 1.0, 2.0, 2.5, 3.0, 10.0};
    const auto pts = uvvis_baseline(ladder, 2.0, 1.0, 5.0);
    for (const auto& p : pts) {
        if (p.c_true >= 2.5)
            CHECK_FALSE(p.c_est.has_value());
        else
            CHECK(p.c_est.has_value());
    }
}

TEST_CASE("metric report aggregates the example series correctly") {
    const MetricReport rep = make_metric_report({1, 2, 3}, {2, 2, 2});
    CHECK(rep.n == 3);
    CHECK(rep.mae == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(rep.rmse == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
    REQUIRE(rep.r2.has_value());
    CHECK(*rep.r2 == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(rep.mae <= rep.rmse);
    // fidelities: (2,1)->0, (2,2)->100, (2,3)->66.67 -> mean 55.56
    CHECK(rep.fidelity_percent == doctest::Approx((0.0 + 100.0 + 200.0 / 3.0) / 3.0));
    CHECK(rep.fidelity_percent >= 0.0);
    CHECK(rep.fidelity_percent <= 100.0);

    const MetricReport constant = make_metric_report({2, 2, 2}, {1, 2, 3});
    CHECK_FALSE(constant.r2.has_value()); // zero truth variance
}

TEST_CASE("uvvis baseline is deterministic in its seed") {
    const std::vector<double> ladder{0.1, 1.0, 5.0};
    const auto a = uvvis_baseline(ladder, 1.0, 1.0, 100.0, 0.05, 42);
    const auto b = uvvis_baseline(ladder, 1.0, 1.0, 100.0, 0.05, 42);
    for (size_t i = 0; i < ladder.size(); ++i) CHECK(a[i].absorbance == b[i].absorbance);
}
