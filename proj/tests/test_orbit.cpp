#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "viana/orbit.hpp"
#include "viana/params.hpp"

using namespace viana;

TEST_CASE("orbit iteration matches a hand-rolled reference loop", "[orbit]") {
    const parameter_set p = standard_parameter_set(0.01);
    const double theta0 = 0.3, x0 = 0.1;

    double t = theta0, x = x0;
    for (int i = 0; i < 25; ++i) {
        const double nx = p.a - x * x + p.alpha * std::sin(two_pi * t);
        double nt = t * 2.0;
        nt -= std::floor(nt);
        x = nx;
        t = nt;
    }
    const orbit_state s = iterate(theta0, x0, 25, p);
    CHECK(s.n == 25);
    CHECK(s.theta == Catch::Approx(t).margin(1e-13));
    CHECK(s.x == Catch::Approx(x).margin(1e-12));
}

TEST_CASE("vertical derivative cocycle equals the direct product", "[orbit]") {
    const parameter_set p = standard_parameter_set(0.002);
    orbit_state s;
    s.theta = 0.3;
    s.x = 0.4;
    long double prod = 1.0L;
    double log_ref = 0.0;
    for (int i = 0; i < 40; ++i) {
        prod *= static_cast<long double>(-2.0 * s.x);
        log_ref += std::log(std::abs(-2.0 * s.x));
        step(s, p);
    }
    CHECK(s.v.sign() == (prod < 0 ? -1 : 1));
    CHECK(s.v.log_abs() == Catch::Approx(static_cast<double>(std::log(std::abs(prod)))).margin(1e-9));
    CHECK(s.log_v() == Catch::Approx(log_ref).margin(1e-10));
}

TEST_CASE("vertical derivative survives far beyond double range", "[orbit]") {
    const parameter_set p = standard_parameter_set(0.001);
    orbit_state s;
    s.theta = 0.437;
    s.x = 0.9;
    kahan_sum ref;
    for (int i = 0; i < 20000; ++i) {
        ref += std::log(std::abs(-2.0 * s.x));
        step(s, p);
    }
    // |log V| is of order 20000 * 0.3; plain double products overflow around 700
    CHECK(std::isfinite(s.v.log_abs()));
    CHECK(s.v.log_abs() == Catch::Approx(ref.value()).margin(1e-6));
    CHECK(s.log_v() == Catch::Approx(ref.value()).margin(1e-7));
}

TEST_CASE("horizontal derivative matches central differences", "[orbit]") {
    const parameter_set p = standard_parameter_set(0.01);
    const double theta0 = 0.37, x0 = 0.2, h = 1e-8;
    const unsigned n = 12;
    const orbit_state up = iterate(theta0 + h, x0, n, p);
    const orbit_state dn = iterate(theta0 - h, x0, n, p);
    const double fd = (up.x - dn.x) / (2.0 * h);
    const orbit_state mid = iterate(theta0, x0, n, p);
    const double an = mid.h.to_double();
    CHECK(an == Catch::Approx(fd).epsilon(2e-4));
}

TEST_CASE("first-order response series has the documented closed form", "[orbit]") {
    // at a = 1.5, d = 2, phi = sin(2 pi t), theta = x = 0 the depth-2 series is
    //   G_2 = f'(c_1)/d * phi'(0) + phi'(0) = (-3/2) 2 pi + 2 pi = -pi
    parameter_set p;
    p.a = 1.5;
    p.d = 2;
    p.alpha = 0.0;
    CHECK(g_n_series(p, 0.0, 0.0, 2) == Catch::Approx(-viana::two_pi / 2.0).margin(1e-12));
}

TEST_CASE("horizontal derivative is the coupling times the response series", "[orbit]") {
    const unsigned n = 8;
    const double theta0 = 0.15, x0 = 0.0;
    double err_prev = 0.0;
    int k = 0;
    for (double alpha : {1e-5, 1e-6}) {
        const parameter_set p = standard_parameter_set(alpha);
        const double g = g_n_series(p, theta0, x0, n);
        const orbit_state s = iterate(theta0, x0, n, p);
        const double predicted = alpha * std::pow(2.0, n - 1) * g;
        const double err = std::abs(s.h.to_double() - predicted);
        // the residual must shrink linearly in alpha (second-order smallness)
        if (k++ == 0)
            err_prev = err;
        else
            CHECK(err < err_prev * 0.2);
        CHECK(std::abs(predicted) > 100.0 * err);
    }
}

TEST_CASE("domination survey finds contraction relative to the base", "[orbit]") {
    const parameter_set p = standard_parameter_set(0.01);
    const domination_report rep = verify_domination(p, 2000, 48, 1, 1);
    CHECK(rep.r1 < 2.0);
    CHECK(rep.r1 > 0.1);
    CHECK(rep.c1 >= 1.0);
    CHECK(rep.n0 >= 1);
    CHECK(rep.sup_root <= 2.0 * p.beta + 1e-9);
    CHECK(rep.log_sup_v.size() == 48);

    // deterministic across thread counts
    const domination_report rep3 = verify_domination(p, 2000, 48, 1, 3);
    CHECK(rep3.r1 == rep.r1);
    CHECK(rep3.c1 == rep.c1);
    CHECK(rep3.log_sup_v == rep.log_sup_v);
}

TEST_CASE("orbit states flag exact critical hits", "[orbit]") {
    const parameter_set p = standard_parameter_set(0.0);
    orbit_state s;
    s.theta = 0.0;  // phi(0) = 0, so x = 0 maps through the critical point
    s.x = 0.0;
    step(s, p);
    CHECK(s.critical_hit);
    CHECK(s.log_v() == -std::numeric_limits<double>::infinity());
    CHECK(s.v.is_zero());
}
