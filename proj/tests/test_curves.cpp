#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "viana/curves.hpp"

using namespace viana;

TEST_CASE("finite-difference weights reproduce classic stencils", "[curves]") {
    // centered 5-point stencil on a unit grid
    const auto w = detail::fd_weights(0.0, {-2.0, -1.0, 0.0, 1.0, 2.0}, 2);
    const double first[5] = {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
    const double second[5] = {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};
    for (int j = 0; j < 5; ++j) {
        CHECK(w[1][j] == Catch::Approx(first[j]).margin(1e-13));
        CHECK(w[2][j] == Catch::Approx(second[j]).margin(1e-13));
    }
    CHECK_THROWS_AS(detail::fd_weights(0.0, {0.0, 1.0}, 2), error);
}

TEST_CASE("derivative estimates converge on an analytic curve", "[curves]") {
    // plant X(u) = sin(2 pi u) on the grid and differentiate numerically
    const std::size_t m = 2048;
    sampled_curve c;
    c.grid_size = m;
    c.values.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double u = angle_value(grid_angle(i, m));
        c.values[i] = std::sin(two_pi * u);
    }
    compute_derivatives(c, 2);
    double worst1 = 0.0, worst2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double u = angle_value(grid_angle(i, m));
        worst1 = std::max(worst1, std::abs(c.derivs[0][i] - two_pi * std::cos(two_pi * u)));
        worst2 = std::max(worst2,
                          std::abs(c.derivs[1][i] + two_pi * two_pi * std::sin(two_pi * u)));
    }
    CHECK(worst1 < 1e-8);
    CHECK(worst2 < 1e-4);
}

TEST_CASE("propagation matches a hand-rolled skew-product loop", "[curves]") {
    const parameter_set p = standard_parameter_set(0.01);
    const partition_element elem{4, 11};
    const std::size_t m = 32;
    const double x0 = 0.5;
    const sampled_curve c = propagate(p, elem, x0, m, 1, 0);

    for (std::size_t i = 0; i < m; i += 5) {
        exact_angle a = preimage_angle(i, m, elem, 2);
        double x = x0;
        for (unsigned k = 0; k < elem.level; ++k) {
            x = p.f(x) + p.alpha * p.phi.eval(angle_value(a));
            a = advance(a, 2);
        }
        CHECK(c.values[i] == x);  // bit-exact: same operations in the same order
    }
    // threading must not change a single bit
    const sampled_curve c3 = propagate(p, elem, x0, m, 3, 0);
    CHECK(c3.values == c.values);
}

TEST_CASE("propagation validates its inputs", "[curves]") {
    const parameter_set p = standard_parameter_set(0.01);
    CHECK_THROWS_AS(propagate(p, {3, 9}, 0.5, 32), error);           // index 9 >= 2^3
    CHECK_THROWS_AS(propagate(p, {3, 2}, p.beta * 1.01, 32), error); // seed outside B
    CHECK_THROWS_AS(propagate(p, {3, 2}, 0.5, 4), error);            // grid too small
}

TEST_CASE("level curves are admissible: flat, first-order accurate, sandwiched", "[curves]") {
    const parameter_set p = standard_parameter_set(1e-3);
    const class_constants k =
        estimate_class_constants(p.phi, p.d, 250.4641, 1.4199, 1000, 1);
    sampled_curve c = propagate(p, {7, 0}, 0.5, 4096);
    const curve_class_report rep = curve_class_diagnostic(c, p, k);

    CHECK(rep.level == 7);
    CHECK(rep.violation_fraction == 0.0);
    CHECK(rep.max_abs_deriv1 <= k.a_hat * p.alpha);
    CHECK(rep.sandwich_lo >= k.mu);
    CHECK(rep.sandwich_hi <= k.a_hat);
    // the first-order prediction captures X' to O(alpha^2)
    CHECK(rep.residual_over_alpha2 < 50.0);
    CHECK(rep.residual < 1e-4);
}

TEST_CASE("the tangent residual scales quadratically in the coupling", "[curves]") {
    double res[2];
    int idx = 0;
    for (double alpha : {1e-3, 1e-4}) {
        const parameter_set p = standard_parameter_set(alpha);
        const class_constants k =
            estimate_class_constants(p.phi, p.d, 250.4641, 1.4199, 1000, 1);
        sampled_curve c = propagate(p, {8, 3}, 0.5, 2048);
        res[idx++] = curve_class_diagnostic(c, p, k).residual_over_alpha2;
    }
    CHECK(res[0] == Catch::Approx(res[1]).epsilon(0.5));  // same constant, both alphas
}

TEST_CASE("a zero coupling degenerates to a flat curve and a flagged report", "[curves]") {
    parameter_set p = standard_parameter_set(1e-3);
    p.alpha = 0.0;
    p.validate();
    const class_constants k =
        estimate_class_constants(p.phi, p.d, 250.4641, 1.4199, 1000, 1);
    sampled_curve c = propagate(p, {6, 5}, 0.5, 512);
    const curve_class_report rep = curve_class_diagnostic(c, p, k);
    CHECK(rep.alpha_zero);
    CHECK(rep.max_abs_deriv1 < 1e-9);
    CHECK(rep.violation_fraction == 0.0);
}

TEST_CASE("sublevel measures count exactly and fit the expected decay", "[curves]") {
    // synthetic curve X(u_i) = alpha * (2 i / m - 1): linear crossing through 0,
    // so measure(|X| < alpha eps) = eps exactly (kappa = 1)
    const std::size_t m = 100000;
    sampled_curve c;
    c.grid_size = m;
    c.alpha = 1e-3;
    c.values.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        c.values[i] = c.alpha * (2.0 * double(i) / double(m) - 1.0);

    const decay_report rep = deep_return_measure(c, {1e-1, 1e-2, 1e-3});
    REQUIRE(rep.eps.size() == 3);
    // expected counts 10000 / 1000 / 100 up to boundary rounding
    CHECK(std::llabs(static_cast<long long>(rep.counts[0]) - 10000) <= 2);
    CHECK(std::llabs(static_cast<long long>(rep.counts[1]) - 1000) <= 2);
    CHECK(std::llabs(static_cast<long long>(rep.counts[2]) - 100) <= 2);
    CHECK(rep.kappa_valid);
    CHECK(rep.kappa_hat == Catch::Approx(1.0).margin(1e-2));

    CHECK_THROWS_AS(deep_return_measure(c, {}), error);
    CHECK_THROWS_AS(deep_return_measure(c, {0.0}), error);
    CHECK_THROWS_AS(deep_return_measure(c, {1.5}), error);
}

TEST_CASE("sublevel scales are deduplicated and sorted before counting", "[curves]") {
    sampled_curve c;
    c.grid_size = 16;
    c.alpha = 1.0;
    c.values.assign(16, 0.5);
    const decay_report rep = deep_return_measure(c, {1e-2, 0.9, 0.9, 1e-1});
    REQUIRE(rep.eps.size() == 3);
    CHECK(rep.eps[0] == 0.9);
    CHECK(rep.eps[2] == 1e-2);
    CHECK(rep.counts[0] == 16);
    CHECK(rep.counts[1] == 0);
}

TEST_CASE("merging sublevel reports pools counts exactly", "[curves]") {
    sampled_curve a, b;
    a.grid_size = b.grid_size = 1000;
    a.alpha = b.alpha = 1e-2;
    a.values.resize(1000);
    b.values.resize(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        a.values[i] = a.alpha * (2.0 * double(i) / 1000.0 - 1.0);
        b.values[i] = b.alpha * (double(i) / 1000.0);  // one-sided: denser near 0
    }
    const std::vector<double> eps = {0.5, 0.1, 0.01};
    const decay_report ra = deep_return_measure(a, eps);
    const decay_report rb = deep_return_measure(b, eps);
    const decay_report merged = merge_decay({ra, rb});
    CHECK(merged.total == 2000);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(merged.counts[i] == ra.counts[i] + rb.counts[i]);

    decay_report rc = rb;
    rc.alpha = 0.5;
    CHECK_THROWS_AS(merge_decay({ra, rc}), error);
    CHECK_THROWS_AS(merge_decay({}), error);
}
