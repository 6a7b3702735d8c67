#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "ncssl/dynamics.hpp"
#include "ncssl/rng.hpp"

using namespace ncssl;

namespace {

DynamicsConfig standard(double alpha, double eta, double sigma2 = 1.0, double delta = 0.8) {
    DynamicsConfig c;
    c.alpha = alpha;
    c.eta = eta;
    c.sigma2 = sigma2;
    c.delta = delta;
    return c;
}

}  // namespace

TEST_CASE("rates") {
    const DynamicsConfig c = standard(1.0, 0.15);
    SUBCASE("origin is stationary in every mode") {
        for (FlowMode m : {FlowMode::standard, FlowMode::augmented_corr, FlowMode::eps_reg, FlowMode::deep,
                           FlowMode::diagonal}) {
            DynamicsConfig k = c;
            k.mode = m;
            if (m == FlowMode::deep) k.depth = 3;
            if (m == FlowMode::eps_reg) k.eps = 0.2;
            if (m == FlowMode::diagonal) k.sigma_i = 1.0;
            CHECK(rate_S(0.0, k) == 0.0);
            CHECK(rate_B(0.0, k) == 0.0);
        }
    }
    SUBCASE("closed forms") {
        CHECK(std::abs(rate_S(0.903453, c)) <= 1e-6);
        CHECK(rate_S(1.0, standard(1.0, 0.0)) == 0.0);
        // lambda (-(1+sigma2) lambda^4 + lambda^2 - eta) at lambda = 0.5
        CHECK(rate_B(0.5, c) == doctest::Approx(0.5 * (-2.0 * 0.0625 + 0.25 - 0.15)).epsilon(1e-14));
        DynamicsConfig a = c;
        a.mode = FlowMode::augmented_corr;
        CHECK(rate_B(0.5, a) == doctest::Approx(0.5 * (-8.0 * 0.0625 + 0.25 - 0.15)).epsilon(1e-14));
        DynamicsConfig g = standard(1.0, 0.1, 1.0);
        g.mode = FlowMode::diagonal;
        g.mu = 2.0;
        g.sigma_i = 0.5;
        // lambda (mu^3 a - (mu^4 + mu^2 sigma_i^2) a^2 - rho), a = lambda
        CHECK(rate_S(0.3, g) == doctest::Approx(0.3 * (8.0 * 0.3 - 17.0 * 0.09 - 0.1)).epsilon(1e-14));
        CHECK(rate_B(0.3, g) == rate_S(0.3, g));
        DynamicsConfig d = c;
        d.mode = FlowMode::deep;
        d.depth = 2;
        // -l lambda^{4a+3-2/l} + l lambda^{2a+3-2/l} - l eta lambda
        const double l = 0.7;
        CHECK(rate_S(l, d) == doctest::Approx(-2 * std::pow(l, 6.0) + 2 * std::pow(l, 4.0) - 2 * 0.15 * l).epsilon(1e-13));
        CHECK(rate_B(l, d) ==
              doctest::Approx(-2 * 2.0 * std::pow(l, 6.0) + 2 * std::pow(l, 4.0) - 2 * 0.15 * l).epsilon(1e-13));
        DynamicsConfig e = c;
        e.mode = FlowMode::eps_reg;
        e.eps = 0.3;
        const double q = l * l + 0.3;
        CHECK(rate_S(l, e) == doctest::Approx(-l * (q * q - q + 0.15)).epsilon(1e-14));
        CHECK(rate_B(l, e) == doctest::Approx(-l * (2.0 * q * q - q + 0.15)).epsilon(1e-14));
    }
    SUBCASE("odd in lambda") {
        for (double l : {0.1, 0.5, 0.9, 1.7}) {
            CHECK(rate_S(-l, c) == -rate_S(l, c));
            CHECK(rate_B(-l, c) == -rate_B(l, c));
        }
    }
    SUBCASE("NaN rejected") {
        CHECK_THROWS_AS(rate_S(std::nan(""), c), DomainError);
        CHECK_THROWS_AS(rate_B(std::nan(""), c), DomainError);
    }
}

TEST_CASE("config validation") {
    CHECK_NOTHROW(standard(1.0, 0.15).validate());
    DynamicsConfig c = standard(1.0, 0.15);
    c.eps = 0.1;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = standard(1.0, 0.15);
    c.depth = 2;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c.mode = FlowMode::deep;
    CHECK_NOTHROW(c.validate());
    c.depth = 0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = standard(1.0, 0.15);
    c.sigma_i = 1.0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c.mode = FlowMode::diagonal;
    CHECK_NOTHROW(c.validate());
    c.mu = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    CHECK_THROWS_AS(standard(0.0, 0.1).validate(), InvalidConfig);
    CHECK_THROWS_AS(standard(1.0, -0.1).validate(), InvalidConfig);
    CHECK_THROWS_AS(standard(1.0, 0.1, -1.0).validate(), InvalidConfig);
    CHECK(parse_flow_mode("augmented_corr") == FlowMode::augmented_corr);
    CHECK(to_string(FlowMode::eps_reg) == "eps_reg");
    CHECK_THROWS_AS(parse_flow_mode("nope"), InvalidConfig);
}

TEST_CASE("fixed_points") {
    SUBCASE("eta = 0") {
        for (double a : {0.3, 1.0, 2.5}) {
            const FixedPoints fp = fixed_points(a, 0.0);
            CHECK(fp.lambda_minus == 0.0);
            CHECK(fp.lambda_plus == 1.0);
        }
    }
    SUBCASE("alpha = 1, eta = 0.15") {
        const FixedPoints fp = fixed_points(1.0, 0.15);
        CHECK(fp.lambda_minus == doctest::Approx(0.428686).epsilon(1e-6));
        CHECK(fp.lambda_plus == doctest::Approx(0.903453).epsilon(1e-6));
        CHECK_FALSE(fp.collapse_only);
        CHECK_FALSE(fp.double_root);
    }
    SUBCASE("double root at 1/4") {
        const FixedPoints fp = fixed_points(1.0, 0.25);
        CHECK(fp.double_root);
        CHECK(fp.lambda_minus == fp.lambda_plus);
        CHECK(fp.lambda_plus == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    }
    SUBCASE("collapse only above 1/4") { CHECK(fixed_points(1.0, 0.26).collapse_only); }
    SUBCASE("errors") {
        CHECK_THROWS_AS(fixed_points(1.0, -0.01), InvalidConfig);
        CHECK_THROWS_AS(fixed_points(0.0, 0.1), InvalidConfig);
    }
    SUBCASE("stationarity on the alpha x eta grid") {
        for (double a : {0.25, 0.5, 1.0, 2.0}) {
            for (int k = 1; k <= 24; ++k) {
                const double eta = 0.01 * k;
                const FixedPoints fp = fixed_points(a, eta);
                const DynamicsConfig c = standard(a, eta);
                CHECK(std::abs(rate_S(fp.lambda_minus, c)) <= 1e-12);
                CHECK(std::abs(rate_S(fp.lambda_plus, c)) <= 1e-12);
            }
        }
    }
}

TEST_CASE("collapse_threshold") {
    CHECK(collapse_threshold(standard(1.0, 0.1, 1.0)) == 0.125);
    CHECK(collapse_threshold(standard(1.0, 0.1, 0.0)) == 0.25);
    DynamicsConfig a = standard(0.5, 0.1, 1.0);
    a.mode = FlowMode::augmented_corr;
    CHECK(collapse_threshold(a) == doctest::Approx(1.0 / 16.0).epsilon(1e-15));
    DynamicsConfig g = standard(1.0, 0.1);
    g.mode = FlowMode::diagonal;
    g.sigma_i = 1.0;
    CHECK(collapse_threshold(g) == 0.125);
    DynamicsConfig d = standard(1.0, 0.1);
    d.mode = FlowMode::deep;
    CHECK_THROWS_AS(collapse_threshold(d), UnsupportedError);
    d.mode = FlowMode::eps_reg;
    CHECK_THROWS_AS(collapse_threshold(d), UnsupportedError);
}

TEST_CASE("deep_window") {
    SUBCASE("one layer reduces to the single-layer window") {
        for (double a : {0.5, 1.0, 2.0}) {
            const DeepWindow w = deep_window(1, a, 1.0);
            CHECK(w.eta_high == doctest::Approx(0.25).epsilon(1e-14));
            CHECK(w.eta_low == doctest::Approx(0.125).epsilon(1e-14));
            CHECK(w.c_low == doctest::Approx(std::pow(0.5, 1.0 / (2.0 * a))).epsilon(1e-14));
        }
        // c_low matches the double-root scale at the window edge
        CHECK(deep_window(1, 1.0, 1.0).c_low == doctest::Approx(fixed_points(1.0, 0.25).lambda_plus).epsilon(1e-14));
    }
    SUBCASE("alpha = 1/2 lower limit") {
        for (int l = 1; l <= 8; ++l)
            CHECK(deep_window(l, 0.5, 1.0).c_low == doctest::Approx((3.0 * l - 2.0) / (4.0 * l - 2.0)).epsilon(1e-15));
        CHECK(deep_window(2, 0.5, 1.0).c_low == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("deep limit of the window") {
        const DeepWindow w = deep_window(100000, 0.5, 1.0);
        CHECK(w.eta_high == doctest::Approx(27.0 / 256.0).epsilon(1e-4));
        CHECK(w.eta_low == doctest::Approx(27.0 / (256.0 * 8.0)).epsilon(1e-4));
    }
    SUBCASE("deep_limit is a root inside (c_low, 1)") {
        for (int l : {2, 3, 5}) {
            for (double a : {0.5, 1.0}) {
                const DeepWindow w = deep_window(l, a, 1.0);
                const auto root = deep_limit(l, a, w.midpoint());
                REQUIRE(root.has_value());
                CHECK(*root > w.c_low);
                CHECK(*root < 1.0);
                DynamicsConfig c = standard(a, w.midpoint());
                c.mode = FlowMode::deep;
                c.depth = l;
                CHECK(std::abs(rate_S(*root, c)) <= 1e-12);
            }
        }
        CHECK_FALSE(deep_limit(2, 0.5, 1.0).has_value());
    }
}

TEST_CASE("eps_limit") {
    CHECK(eps_limit(1.0, 0.15, 0.0) == doctest::Approx(0.903453).epsilon(1e-6));
    CHECK(eps_limit(1.0, 0.15, 0.0) == doctest::Approx(fixed_points(1.0, 0.15).lambda_plus).epsilon(1e-15));
    CHECK(eps_limit(1.0, 0.15, 0.3) == doctest::Approx(0.718490).epsilon(1e-6));
    CHECK(eps_limit(1.0, 0.15, 0.9) == 0.0);
    CHECK_THROWS_AS(eps_limit(1.0, 0.0, 0.1), UnsupportedError);
    CHECK_THROWS_AS(eps_limit(1.0, 0.25, 0.1), UnsupportedError);
    CHECK_THROWS_AS(eps_limit(1.0, 0.3, 0.1), UnsupportedError);
}

TEST_CASE("diagonal_limit") {
    CHECK(diagonal_limit(1.0, 1.0, 1.0, 0.1).value() == doctest::Approx((1.0 + std::sqrt(0.2)) / 4.0).epsilon(1e-14));
    CHECK_FALSE(diagonal_limit(1.0, 1.0, 1.0, 0.13).has_value());
}

TEST_CASE("integrate_flow") {
    SUBCASE("trace shape") {
        const FlowTrace t = integrate_flow(standard(1.0, 0.15), 1.0, 0.1);
        CHECK(t.times.size() == 11);
        CHECK(t.lambda_S.size() == 11);
        CHECK(t.lambda_B.size() == 11);
        CHECK(t.method == "rk4");
        CHECK(t.dt == 0.1);
        for (std::size_t i = 1; i < t.times.size(); ++i) CHECK(t.times[i] > t.times[i - 1]);
        CHECK(t.lambda_S.front() == 0.8);
        CHECK(t.lambda_B.front() == 0.8);
    }
    SUBCASE("canonical run") {
        const FlowSummary s = summarize(integrate_flow(standard(1.0, 0.15), 200.0, 0.01));
        CHECK(std::abs(s.lambda_S - 0.903453) <= 1e-6);
        CHECK(std::abs(s.lambda_B) <= 1e-6);
        CHECK(s.settled());
    }
    SUBCASE("bad basin") {
        const FlowSummary s = summarize(integrate_flow(standard(1.0, 0.15, 1.0, 0.3), 200.0, 0.01));
        CHECK(std::abs(s.lambda_S) <= 1e-6);
    }
    SUBCASE("diagonal coordinate") {
        DynamicsConfig c = standard(1.0, 0.1);
        c.mode = FlowMode::diagonal;
        c.sigma_i = 1.0;
        const FlowSummary s = summarize(integrate_flow(c, 200.0, 0.01));
        CHECK(std::abs(s.lambda_S - 0.361803) <= 1e-6);
    }
    SUBCASE("eps_reg flow reaches the predicted limit") {
        DynamicsConfig c = standard(1.0, 0.15);
        c.mode = FlowMode::eps_reg;
        c.eps = 0.3;
        const FlowSummary s = summarize(integrate_flow(c, 400.0, 0.01));
        CHECK(std::abs(s.lambda_S - eps_limit(1.0, 0.15, 0.3)) <= 1e-6);
    }
    SUBCASE("negative initialization mirrors the positive one") {
        const FlowTrace pos = integrate_flow(standard(1.0, 0.1, 1.0, 0.8), 50.0, 0.01);
        const FlowTrace neg = integrate_flow(standard(1.0, 0.1, 1.0, -0.8), 50.0, 0.01);
        for (std::size_t i = 0; i < pos.times.size(); ++i) {
            CHECK(neg.lambda_S[i] == -pos.lambda_S[i]);
            CHECK(neg.lambda_B[i] == -pos.lambda_B[i]);
        }
    }
    SUBCASE("RK4 order") {
        // error against the next-finer run shrinks by ~16x per halving
        const DynamicsConfig c = standard(1.0, 0.15);
        double prev_err = 0.0;
        double terminal = integrate_flow(c, 10.0, 0.4).lambda_S.back();
        for (double dt : {0.2, 0.1}) {
            const double finer = integrate_flow(c, 10.0, dt).lambda_S.back();
            const double err = std::abs(terminal - finer);
            if (prev_err > 0.0) CHECK(prev_err / err >= 8.0);
            prev_err = err;
            terminal = finer;
        }
        CHECK(prev_err > 0.0);
    }
    SUBCASE("blow-up carries the time") {
        try {
            integrate_flow(standard(1.0, 0.0, 1.0, 1e3), 10.0, 0.01);
            FAIL("expected a blow-up");
        } catch (const BlowUpError& e) {
            CHECK(e.at() > 0.0);
            CHECK(e.at() <= 10.0);
        }
    }
    SUBCASE("bad arguments") {
        CHECK_THROWS_AS(integrate_flow(standard(1.0, 0.1), 1.0, 0.0), InvalidConfig);
        CHECK_THROWS_AS(integrate_flow(standard(1.0, 0.1), 0.01, 0.1), InvalidConfig);
        CHECK_THROWS_AS(integrate_flow(standard(1.0, -0.1), 1.0, 0.1), InvalidConfig);
    }
}

TEST_CASE("basin dichotomy over random configurations") {
    NormalStream s(20240);
    for (int trial = 0; trial < 20; ++trial) {
        const double alpha = 0.5 + 1.5 * s.uniform();
        const double eta = 0.05 + 0.15 * s.uniform();
        const FixedPoints fp = fixed_points(alpha, eta);
        const bool good = trial % 2 == 0;
        const double delta = good ? fp.lambda_minus + (1.5 - fp.lambda_minus) * (0.1 + 0.9 * s.uniform())
                                  : fp.lambda_minus * (0.2 + 0.7 * s.uniform());
        const FlowSummary f = summarize(integrate_flow(standard(alpha, eta, 1.0, delta), 1000.0, 0.02));
        INFO("alpha=", alpha, " eta=", eta, " delta=", delta);
        CHECK(std::abs(f.lambda_S - (good ? fp.lambda_plus : 0.0)) <= 1e-5);
    }
}

TEST_CASE("B suppression around the collapse threshold") {
    for (double sigma2 : {0.5, 1.0, 2.0}) {
        const double th = collapse_threshold(standard(1.0, 0.0, sigma2));
        for (double delta : {0.05, 0.5, 1.0, 2.0}) {
            const FlowSummary above = summarize(integrate_flow(standard(1.0, 1.2 * th, sigma2, delta), 1000.0, 0.01));
            CHECK(std::abs(above.lambda_B) <= 1e-6);
        }
        // below the threshold B survives from inside its good basin
        const double eta = 0.8 * th;
        const double lead = 1.0 + sigma2;
        const double b_minus = std::sqrt((1.0 - std::sqrt(1.0 - 4.0 * lead * eta)) / (2.0 * lead));
        const FlowSummary below = summarize(integrate_flow(standard(1.0, eta, sigma2, 2.0 * b_minus), 1000.0, 0.01));
        CHECK(below.lambda_B > 0.01);
    }
}

TEST_CASE("mode reductions") {
    NormalStream s(5);
    for (int k = 0; k < 50; ++k) {
        const double lambda = -2.0 + 4.0 * s.uniform();
        const double alpha = 0.25 + 2.0 * s.uniform();
        const DynamicsConfig base = standard(alpha, 0.2 * s.uniform(), 2.0 * s.uniform());
        DynamicsConfig deep = base;
        deep.mode = FlowMode::deep;
        deep.depth = 1;
        CHECK(std::abs(rate_S(lambda, deep) - rate_S(lambda, base)) <= 1e-14);
        CHECK(std::abs(rate_B(lambda, deep) - rate_B(lambda, base)) <= 1e-14);
        DynamicsConfig eps = base;
        eps.mode = FlowMode::eps_reg;
        CHECK(std::abs(rate_S(lambda, eps) - rate_S(lambda, base)) <= 1e-14);
        CHECK(std::abs(rate_B(lambda, eps) - rate_B(lambda, base)) <= 1e-14);
    }
    // whole trajectories coincide too
    DynamicsConfig deep = standard(1.0, 0.15);
    deep.mode = FlowMode::deep;
    const FlowTrace a = integrate_flow(standard(1.0, 0.15), 20.0, 0.01);
    const FlowTrace b = integrate_flow(deep, 20.0, 0.01);
    CHECK(a.lambda_S == b.lambda_S);
    CHECK(a.lambda_B == b.lambda_B);
}

TEST_CASE("summarize") {
    FlowTrace t;
    t.dt = 1.0;
    for (int i = 0; i <= 20; ++i) {
        t.times.push_back(i);
        t.lambda_S.push_back(i < 10 ? 1.0 * i : 5.0);
        t.lambda_B.push_back(0.0);
    }
    const FlowSummary s = summarize(t);
    CHECK(s.lambda_S == 5.0);
    CHECK(s.drift_S == 0.0);
    CHECK(s.settled());
    t.lambda_S.back() = 5.1;
    CHECK_FALSE(summarize(t).settled());
}
