#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "viana/errors.hpp"
#include "viana/fourier.hpp"

namespace viana {

// ---------------------------------------------------------------------------
// Misiurewicz parameter selection for f(x) = a - x^2.
//
// (preperiod, period) counts along the orbit of the critical VALUE c1 = a:
// after `preperiod` steps from c1 the orbit lands on a cycle of length
// `period`.  The defining equation is
//     g(a) = f^(preperiod+period)(c1) - f^(preperiod)(c1) = 0.
// Examples: (1,1) on [1.9,2.1] -> a = 2 (orbit 0 -> 2 -> -2 -> -2);
//           (2,1) on [1.5,1.6] -> a = 1.5436890126920764 (0 -> a -> -q -> q).
// ---------------------------------------------------------------------------

namespace detail {

// g(a) and dg/da by forward-mode differentiation along the orbit
inline void misiurewicz_g(double a, unsigned preperiod, unsigned period, double& g, double& dg) {
    double x = a, dx = 1.0;       // c1 = a
    double xp = 0.0, dxp = 0.0;   // value at step `preperiod`
    for (unsigned k = 0; k < preperiod + period; ++k) {
        if (k == preperiod) {
            xp = x;
            dxp = dx;
        }
        const double nx = a - x * x;
        const double ndx = 1.0 - 2.0 * x * dx;
        x = nx;
        dx = ndx;
    }
    if (preperiod + period == 0) {
        xp = x;
        dxp = dx;
    }
    g = x - xp;
    dg = dx - dxp;
}

inline double misiurewicz_g(double a, unsigned preperiod, unsigned period) {
    double g, dg;
    misiurewicz_g(a, preperiod, period, g, dg);
    return g;
}

} // namespace detail

// Locate the Misiurewicz parameter in [lo, hi] by bisection, then polish with
// Newton.  Throws no_root_in_bracket when g has equal signs at the endpoints,
// degenerate_parameter when the resulting critical orbit is degenerate.
inline double misiurewicz_parameter(unsigned preperiod, unsigned period, double lo, double hi,
                                    double tol = 1e-14) {
    if (period == 0) fail(errc::invalid_parameter, "period must be >= 1");
    if (!(lo < hi) || !(lo > 1.0) || !(hi < 2.5))
        fail(errc::invalid_parameter, "bracket must satisfy 1 < lo < hi < 2.5");
    double glo = detail::misiurewicz_g(lo, preperiod, period);
    double ghi = detail::misiurewicz_g(hi, preperiod, period);
    if (glo == 0.0 && ghi == 0.0) fail(errc::no_root_in_bracket, "g vanishes on whole bracket");
    if ((glo > 0.0 && ghi > 0.0) || (glo < 0.0 && ghi < 0.0))
        fail(errc::no_root_in_bracket, "g has the same sign at both endpoints");
    double a = 0.5 * (lo + hi);
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        a = 0.5 * (lo + hi);
        const double gm = detail::misiurewicz_g(a, preperiod, period);
        if (gm == 0.0) break;
        if ((gm > 0.0) == (glo > 0.0)) {
            lo = a;
            glo = gm;
        } else {
            hi = a;
        }
    }
    for (int it = 0; it < 64; ++it) { // Newton polish
        double g, dg;
        detail::misiurewicz_g(a, preperiod, period, g, dg);
        if (std::abs(g) <= tol || dg == 0.0) break;
        const double an = a - g / dg;
        if (!(an > 1.0 && an < 2.5)) break;
        if (an == a) break;
        a = an;
    }
    if (std::abs(detail::misiurewicz_g(a, preperiod, period)) > tol)
        fail(errc::no_root_in_bracket, "root polish did not reach tolerance");
    if (!(a > 1.0 && a <= 2.0))
        fail(errc::degenerate_parameter, "root outside (1, 2]");
    // the critical orbit must not hit 0 within preperiod+period steps
    double x = 0.0;
    for (unsigned k = 0; k < preperiod + period; ++k) {
        x = a - x * x;
        if (std::abs(x) < 1e-9)
            fail(errc::degenerate_parameter, "critical orbit hits 0 at step " + std::to_string(k + 1));
    }
    return a;
}

// first n points of the critical orbit: c_1 = f(0) = a, ..., c_n = f^n(0)
inline std::vector<double> critical_orbit(double a, unsigned n) {
    std::vector<double> c;
    c.reserve(n);
    double x = 0.0;
    for (unsigned k = 0; k < n; ++k) {
        x = a - x * x;
        c.push_back(x);
    }
    return c;
}

// negative fixed point p1 = (-1 - sqrt(1+4a))/2 of f(x) = a - x^2
inline double negative_fixed_point(double a) { return 0.5 * (-1.0 - std::sqrt(1.0 + 4.0 * a)); }
inline double positive_fixed_point(double a) { return 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * a)); }

// ---------------------------------------------------------------------------
// Full parameter set of the skew product F(theta, x) = (d theta mod 1,
//   a - x^2 + alpha phi(theta)), together with the trapping interval
// B = [-beta, beta] and the critical-orbit clearance xi0.
// ---------------------------------------------------------------------------
struct parameter_set {
    double a = 0.0;
    std::uint64_t d = 2;
    double alpha = 0.0;
    double beta = 0.0;
    double xi0 = 0.0;
    fourier_series phi;
    unsigned preperiod = 2;
    unsigned period = 1;

    double f(double x) const { return a - x * x; }

    // largest coupling strength for which f(B) +- alpha stays inside B
    double trapping_threshold() const {
        return std::min(beta - a, beta - beta * beta + a);
    }

    std::vector<double> critical_cycle_points() const {
        return critical_orbit(a, preperiod + period);
    }

    void validate() const {
        if (!(a > 1.0) || !(a <= 2.0)) fail(errc::invalid_parameter, "a must lie in (1, 2]");
        if (d < 2) fail(errc::invalid_parameter, "d must be an integer >= 2");
        if (!(alpha >= 0.0)) fail(errc::invalid_parameter, "alpha must be >= 0");
        if (!(beta > 1.0)) fail(errc::invalid_parameter, "beta must exceed 1");
        const double p1 = std::abs(negative_fixed_point(a));
        if (beta > p1 + 1e-12) fail(errc::invalid_parameter, "beta must not exceed |p1|");
        if (2.0 * beta > 4.0 + 1e-12) fail(errc::invalid_parameter, "|f'| <= 4 violated on B");
        // trapping: f(B) subset int(B); the boundary case (a = 2) is admitted
        // only for the uncoupled map
        const double margin = trapping_threshold();
        if (alpha > 0.0 ? (margin <= 0.0) : (margin < -1e-12))
            fail(errc::invalid_parameter, "f(B) does not stay inside B");
        if (phi.is_constant()) fail(errc::invalid_parameter, "phi must be non-constant");
        if (phi.sup_on_grid() > 1.0 + 1e-9)
            fail(errc::invalid_parameter, "sup |phi| must be <= 1");
        if (!(xi0 > 0.0)) fail(errc::invalid_parameter, "xi0 must be positive");
        if (!(alpha <= xi0)) fail(errc::invalid_parameter, "alpha must be <= xi0");
        // Misiurewicz check: strictly pre-periodic critical orbit with all
        // points clear of the critical strip (-2 xi0, 2 xi0)
        if (std::abs(detail::misiurewicz_g(a, preperiod, period)) > 1e-12)
            fail(errc::invalid_parameter, "a fails the Misiurewicz equation at 1e-12");
        const auto c = critical_orbit(a, preperiod + 2 * period);
        for (std::size_t i = 0; i < c.size(); ++i)
            if (std::abs(c[i]) < 2.0 * xi0 - 1e-12)
                fail(errc::invalid_parameter,
                     "critical orbit point " + std::to_string(i + 1) + " enters (-2 xi0, 2 xi0)");
    }
};

// Canonical construction: Misiurewicz a for (preperiod, period), beta slightly
// inside |p1|, xi0 = half the smallest critical-orbit magnitude.
inline parameter_set make_parameter_set(double alpha, unsigned preperiod = 2, unsigned period = 1,
                                        std::uint64_t d = 2, fourier_series phi = fourier_series(),
                                        double bracket_lo = 1.5, double bracket_hi = 1.6) {
    parameter_set p;
    p.a = misiurewicz_parameter(preperiod, period, bracket_lo, bracket_hi);
    p.d = d;
    p.alpha = alpha;
    p.preperiod = preperiod;
    p.period = period;
    p.phi = std::move(phi);
    const double p1 = std::abs(negative_fixed_point(p.a));
    p.beta = 0.999 * p1;
    if (p.beta <= p.a || p.beta * p.beta - p.a >= p.beta) p.beta = p1; // boundary fallback (a = 2)
    const auto c = critical_orbit(p.a, preperiod + period);
    double m = std::abs(c[0]);
    for (double ci : c) m = std::min(m, std::abs(ci));
    p.xi0 = 0.5 * m;
    p.validate();
    return p;
}

// the standard laboratory map: a = Misiurewicz(2,1), d = 2, phi = sin(2 pi t)
inline parameter_set standard_parameter_set(double alpha) { return make_parameter_set(alpha); }

// --------------------------- JSON (strict) --------------------------------

namespace detail {

inline void reject_unknown_fields(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                  const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) fail(errc::invalid_config, "unknown field '" + it.key() + "' in " + where);
    }
}

} // namespace detail

inline nlohmann::json to_json(const parameter_set& p) {
    nlohmann::json j;
    j["a"] = p.a;
    j["d"] = p.d;
    j["alpha"] = p.alpha;
    j["beta"] = p.beta;
    j["xi0"] = p.xi0;
    j["phi"] = {{"cos", p.phi.cos_coeffs()}, {"sin", p.phi.sin_coeffs()}};
    j["preperiod"] = p.preperiod;
    j["period"] = p.period;
    return j;
}

inline parameter_set parameter_set_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(errc::invalid_config, "parameter set must be a JSON object");
    detail::reject_unknown_fields(
        j, {"a", "d", "alpha", "beta", "xi0", "phi", "preperiod", "period"}, "parameter set");
    parameter_set p;
    try {
        p.a = j.at("a").get<double>();
        p.d = j.at("d").get<std::uint64_t>();
        p.alpha = j.at("alpha").get<double>();
        p.beta = j.at("beta").get<double>();
        p.xi0 = j.at("xi0").get<double>();
        p.preperiod = j.at("preperiod").get<unsigned>();
        p.period = j.at("period").get<unsigned>();
        const auto& ph = j.at("phi");
        if (!ph.is_object()) fail(errc::invalid_config, "phi must be an object");
        detail::reject_unknown_fields(ph, {"cos", "sin"}, "phi");
        std::vector<double> c, s;
        if (ph.contains("cos")) c = ph.at("cos").get<std::vector<double>>();
        if (ph.contains("sin")) s = ph.at("sin").get<std::vector<double>>();
        p.phi = fourier_series(std::move(c), std::move(s));
    } catch (const nlohmann::json::exception& e) {
        fail(errc::invalid_config, std::string("malformed parameter set: ") + e.what());
    }
    p.validate();
    return p;
}

} // namespace viana
