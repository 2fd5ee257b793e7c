#include <catch2/catch_amalgamated.hpp>

#include "annbias/metrics.hpp"
#include "oracles.hpp"

using namespace annbias;
namespace at = annbias::testing;

namespace {

Vector vec(std::initializer_list<double> vals) {
    Vector v(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

}  // namespace

TEST_CASE("auc basics") {
    SECTION("perfect ordering gives 1") {
        CHECK(auc(vec({0, 0, 1, 1}), vec({0.1, 0.2, 0.8, 0.9})) == 1.0);
    }
    SECTION("all scores tied gives 0.5") {
        CHECK(auc(vec({0, 1, 0, 1}), vec({0.3, 0.3, 0.3, 0.3})) == 0.5);
    }
    SECTION("reversed ordering gives 0") {
        CHECK(auc(vec({1, 1, 0, 0}), vec({0.1, 0.2, 0.8, 0.9})) == 0.0);
    }
    SECTION("single-class input is undefined") {
        CHECK_THROWS_AS(auc(vec({1, 1}), vec({0.2, 0.3})), InputError);
    }
}

TEST_CASE("auc equals brute-force pair counting, including ties") {
    Rng rng(2024);
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::Index n = 20 + static_cast<Eigen::Index>(rng.bounded(80));
        Vector y = at::random_binary(rng, n, 0.3);
        if (y.sum() == 0.0) y[0] = 1.0;
        if (y.sum() == static_cast<double>(n)) y[0] = 0.0;
        Vector scores(n);
        // quantized scores force plenty of ties
        for (Eigen::Index i = 0; i < n; ++i)
            scores[i] = static_cast<double>(rng.bounded(8)) / 8.0;
        CHECK(auc(y, scores) == at::auc_bruteforce(y, scores));
    }
}

TEST_CASE("auc properties") {
    Rng rng(55);
    const Eigen::Index n = 60;
    Vector y = at::random_binary(rng, n, 0.4);
    y[0] = 1.0;
    y[1] = 0.0;
    Vector s = at::random_vector(rng, n);

    SECTION("invariant under strictly increasing transforms") {
        Vector exp_s = s.array().exp();
        Vector affine_s = 3.0 * s.array() + 11.0;
        CHECK(auc(y, s) == auc(y, exp_s));
        CHECK(auc(y, s) == auc(y, affine_s));
    }
    SECTION("AUC(s) + AUC(-s) = 1 for tie-free scores") {
        CHECK(auc(y, s) + auc(y, (-s.array()).matrix()) == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("log_loss basics") {
    SECTION("matching prediction is ~0") {
        Vector y = vec({1, 0, 1});
        Vector y_hat = vec({1.0 - 1e-12, 1e-12, 1.0 - 1e-12});
        CHECK(log_loss(y, y_hat) == Catch::Approx(0.0).margin(1e-11));
    }
    SECTION("0.5 everywhere is ln 2") {
        CHECK(log_loss(vec({1, 0}), vec({0.5, 0.5}))
              == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SECTION("constant predictor is minimized at the base rate") {
        Rng rng(7);
        Vector y = at::random_binary(rng, 200, 0.3);
        const double base_rate = y.mean();
        const double at_base = log_loss(y, Vector::Constant(200, base_rate));
        for (double c : {0.05, 0.15, 0.25, 0.35, 0.5, 0.75, 0.95}) {
            CHECK(at_base <= log_loss(y, Vector::Constant(200, c)));
        }
    }
}

TEST_CASE("relative_auc_gain") {
    CHECK(relative_auc_gain(0.7, 0.7) == 0.0);
    CHECK(relative_auc_gain(0.563, 0.5) == Catch::Approx(12.6).epsilon(1e-12));
    CHECK_THROWS_AS(relative_auc_gain(0.5, 0.0), InputError);

    // first-order antisymmetry for nearby values
    const double g1 = relative_auc_gain(0.7001, 0.7);
    const double g2 = relative_auc_gain(0.7, 0.7001);
    CHECK(std::abs(g1 + g2) < 1e-3 * std::abs(g1));

    CHECK(absolute_pp_diff(0.563, 0.5) == Catch::Approx(6.3).epsilon(1e-12));
}

TEST_CASE("spearman rank correlation") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == Catch::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {40, 30, 20, 10}) == Catch::Approx(-1.0));
    // monotone but nonlinear is still rho = 1
    CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 64}) == Catch::Approx(1.0));
    CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), InputError);
}

TEST_CASE("sign test p-values") {
    CHECK(sign_test_p_value(10, 10) == Catch::Approx(1.0 / 1024.0).epsilon(1e-9));
    CHECK(sign_test_p_value(9, 10) == Catch::Approx(11.0 / 1024.0).epsilon(1e-9));
    CHECK(sign_test_p_value(8, 10) == Catch::Approx(56.0 / 1024.0).epsilon(1e-9));
    CHECK(sign_test_p_value(0, 10) == Catch::Approx(1.0).epsilon(1e-9));
    // the acceptance threshold: 9/10 is significant at 0.05, 8/10 is not
    CHECK(sign_test_p_value(9, 10) < 0.05);
    CHECK(sign_test_p_value(8, 10) > 0.05);
}

TEST_CASE("mean and stddev helpers") {
    CHECK(mean_of({1, 2, 3, 4}) == 2.5);
    CHECK(stddev_of({2, 4, 4, 4, 5, 5, 7, 9}) == Catch::Approx(2.13809).margin(1e-4));
    CHECK(stddev_of({3.0}) == 0.0);
}
