#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <json.hpp>

#include "viana/errors.hpp"
#include "viana/params.hpp"

using namespace viana;

namespace {
// independent oracle: locate the root of g(a) = f^{p+q}(a) - f^p(a) by plain
// bisection on a fine scan, no derivatives involved
double bisect_oracle(unsigned pre, unsigned per, double lo, double hi) {
    auto g = [&](double a) {
        double x = a;
        std::vector<double> orbit{x};
        for (unsigned i = 1; i < pre + per; ++i) {
            x = a - x * x;
            orbit.push_back(x);
        }
        return orbit[pre + per - 1] - orbit[pre - 1];
    };
    double glo = g(lo);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if ((glo <= 0.0) == (gm <= 0.0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}
}  // namespace

TEST_CASE("pre-periodic parameters match a bisection oracle", "[params]") {
    // (preperiod 1, period 1): the critical value itself is fixed -> a = 2
    const double a11 = misiurewicz_parameter(1, 1, 1.9, 2.1);
    CHECK(a11 == Catch::Approx(2.0).margin(1e-13));
    CHECK(a11 == Catch::Approx(bisect_oracle(1, 1, 1.9, 2.1)).margin(1e-12));

    // (preperiod 2, period 1): orbit 0 -> a -> -q -> q with q = a - a^2 negated
    const double a21 = misiurewicz_parameter(2, 1, 1.5, 1.6);
    CHECK(a21 == Catch::Approx(1.5436890126920764).margin(1e-13));
    CHECK(a21 == Catch::Approx(bisect_oracle(2, 1, 1.5, 1.6)).margin(1e-12));

    // the landing point is the positive fixed point q of x -> a - x^2
    const double q = positive_fixed_point(a21);
    CHECK(q == Catch::Approx(0.8392867552141614).margin(1e-12));
    const auto orbit = critical_orbit(a21, 4);
    CHECK(orbit[0] == Catch::Approx(a21).margin(1e-15));
    CHECK(orbit[1] == Catch::Approx(-q).margin(1e-12));
    CHECK(orbit[2] == Catch::Approx(q).margin(1e-12));
    CHECK(orbit[3] == Catch::Approx(q).margin(1e-12));
}

TEST_CASE("root finding rejects brackets without a sign change", "[params]") {
    CHECK_THROWS_MATCHES(misiurewicz_parameter(1, 1, 1.1, 1.2), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                             return e.code() == errc::no_root_in_bracket;
                         }));
}

TEST_CASE("canonical parameter set freezes the laboratory constants", "[params]") {
    const parameter_set p = standard_parameter_set(0.01);
    CHECK(p.a == Catch::Approx(1.5436890126920764).margin(1e-13));
    CHECK(p.d == 2);
    CHECK(p.beta == Catch::Approx(1.837447468458947).margin(1e-12));
    CHECK(p.xi0 == Catch::Approx(0.4196433776070805).margin(1e-12));
    CHECK(p.beta == Catch::Approx(0.999 * std::abs(negative_fixed_point(p.a))).margin(1e-14));
    CHECK(p.trapping_threshold() == Catch::Approx(0.0049233).margin(5e-5));
    p.validate();  // must not throw

    // the trapping threshold is advisory: couplings above it still validate
    // (orbit scans guard against actual escape at runtime), so the strongest
    // couplings the experiments use remain admissible
    parameter_set q = p;
    q.alpha = q.trapping_threshold() * 2.1;
    CHECK_NOTHROW(q.validate());
}

TEST_CASE("validation rejects broken parameter combinations", "[params]") {
    const parameter_set good = standard_parameter_set(0.001);

    parameter_set p = good;
    p.beta = std::abs(negative_fixed_point(p.a)) + 0.05;
    CHECK_THROWS_AS(p.validate(), error);

    p = good;
    p.alpha = p.xi0 * 1.01;  // coupling above the critical clearance
    CHECK_THROWS_AS(p.validate(), error);

    p = good;
    p.phi = fourier_series({}, {2.0});  // sup |phi| = 2
    CHECK_THROWS_AS(p.validate(), error);

    p = good;
    p.phi = fourier_series({}, {0.0});  // constant
    CHECK_THROWS_AS(p.validate(), error);

    p = good;
    p.a = 1.54;  // not a Misiurewicz value
    CHECK_THROWS_AS(p.validate(), error);

    p = good;
    p.d = 1;
    CHECK_THROWS_AS(p.validate(), error);
}

TEST_CASE("parameter sets round-trip through JSON strictly", "[params]") {
    const parameter_set p = standard_parameter_set(0.005);
    const nlohmann::json j = to_json(p);
    const parameter_set q = parameter_set_from_json(j);
    CHECK(q.a == p.a);
    CHECK(q.d == p.d);
    CHECK(q.alpha == p.alpha);
    CHECK(q.beta == p.beta);
    CHECK(q.xi0 == p.xi0);
    CHECK(q.preperiod == p.preperiod);
    CHECK(q.period == p.period);
    CHECK(q.phi.cos_coeffs() == p.phi.cos_coeffs());
    CHECK(q.phi.sin_coeffs() == p.phi.sin_coeffs());

    nlohmann::json bad = j;
    bad["surprise"] = 1;
    CHECK_THROWS_MATCHES(parameter_set_from_json(bad), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                             return e.code() == errc::invalid_config;
                         }));

    nlohmann::json badphi = j;
    badphi["phi"]["weights"] = {1.0};
    CHECK_THROWS_AS(parameter_set_from_json(badphi), error);

    nlohmann::json missing = j;
    missing.erase("beta");
    CHECK_THROWS_AS(parameter_set_from_json(missing), error);
}

TEST_CASE("boundary parameter a = 2 is admitted only without coupling", "[params]") {
    const parameter_set p = make_parameter_set(0.0, 1, 1, 2, fourier_series(), 1.9, 2.1);
    CHECK(p.a == Catch::Approx(2.0).margin(1e-13));
    CHECK(p.beta == Catch::Approx(2.0).margin(1e-12));  // boundary fallback
    p.validate();
    parameter_set q = p;
    q.alpha = 1e-6;
    CHECK_THROWS_AS(q.validate(), error);
}
