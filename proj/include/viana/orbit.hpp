#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "viana/base_stream.hpp"
#include "viana/errors.hpp"
#include "viana/numeric.hpp"
#include "viana/params.hpp"
#include "viana/parallel.hpp"
#include "viana/rng.hpp"
#include "viana/stats.hpp"

namespace viana {

// ---------------------------------------------------------------------------
// One orbit of F(theta, x) = (d theta mod 1, a - x^2 + alpha phi(theta))
// together with its derivative cocycles:
//   V_n = d f_n / d x     = prod_{i<n} (-2 x_i)
//   H_n = d f_n / d theta,  H_{n+1} = (-2 x_n) H_n + alpha d^n phi'(theta_n)
// V and H are carried as mantissa*2^e pairs (they overflow double far before
// n = 1e6), and log|V| additionally as a compensated sum.
//
// theta is a plain double here; the update d*theta mod 1 is exact while theta
// has enough trailing zero digits (dyadic rationals, small n), which is what
// the derivative/identity checks need.  Statistical ensembles use base_stream.
// ---------------------------------------------------------------------------
struct orbit_state {
    double theta = 0.0;
    double x = 0.0;
    std::uint64_t n = 0;
    scaled_real v = scaled_real::one();   // exact signed V_n
    scaled_real h = scaled_real::zero();  // H_n
    scaled_real dn = scaled_real::one();  // d^n, kept for the H recursion
    kahan_sum logv;                       // sum of log |-2 x_i| over non-degenerate factors
    bool critical_hit = false;            // some x_i was exactly 0

    double log_v() const {
        if (critical_hit) return -std::numeric_limits<double>::infinity();
        return logv.value();
    }
};

inline double wrap_unit(double t) {
    double f = t - std::floor(t);
    if (f >= 1.0) f = 0.0; // floor rounding at the right edge
    return f;
}

// advance the state by one step of F
inline void step(orbit_state& s, const parameter_set& p) {
    const double x = s.x;
    const double mult = -2.0 * x;
    if (x == 0.0)
        s.critical_hit = true;
    else
        s.logv += std::log(std::abs(mult));
    s.v.mul(mult);
    // H_{n+1} = f'(x_n) H_n + alpha d^n phi'(theta_n)
    scaled_real add = s.dn;
    add.mul(p.alpha * p.phi.eval(s.theta, 1));
    s.h.mul(mult);
    s.h.add(add);
    s.x = p.f(x) + p.alpha * p.phi.eval(s.theta);
    s.theta = wrap_unit(s.theta * static_cast<double>(p.d));
    s.dn.mul(static_cast<double>(p.d));
    ++s.n;
}

// iterate n steps from (theta0, x0)
inline orbit_state iterate(double theta0, double x0, std::uint64_t n, const parameter_set& p) {
    orbit_state s;
    s.theta = wrap_unit(theta0);
    s.x = x0;
    for (std::uint64_t i = 0; i < n; ++i) step(s, p);
    return s;
}

// ---------------------------------------------------------------------------
// First-order theta-derivative series
//   G_n(theta, x) = sum_{k=1..n} ((f^{n-k})'(f^k x) / d^{n-k}) phi'(g^{k-1} theta)
// evaluated along the UNPERTURBED fiber orbit f^k(x); the perturbed derivative
// satisfies H_n = alpha d^{n-1} G_n + O(alpha^2).
// ---------------------------------------------------------------------------
inline double g_n_series(const parameter_set& p, double theta, double x, unsigned n) {
    if (n == 0) return 0.0;
    if (n > 500) fail(errc::invalid_parameter, "g_n_series: n too large for double products");
    std::vector<double> y(n + 1);
    y[0] = x;
    for (unsigned k = 1; k <= n; ++k) y[k] = p.f(y[k - 1]); // unperturbed orbit
    // suffix[k] = (f^{n-k})'(y_k) = prod_{j=k}^{n-1} (-2 y_j)
    std::vector<double> suffix(n + 1);
    suffix[n] = 1.0;
    for (unsigned k = n; k-- > 1;) suffix[k] = suffix[k + 1] * (-2.0 * y[k]);
    kahan_sum acc;
    double th = wrap_unit(theta);
    std::vector<double> dnk(n + 1); // dnk[k] = d^{n-k}
    dnk[n] = 1.0;
    for (unsigned k = n; k-- > 1;) dnk[k] = dnk[k + 1] * static_cast<double>(p.d);
    for (unsigned k = 1; k <= n; ++k) {
        acc += suffix[k] / dnk[k] * p.phi.eval(th, 1); // phi'(g^{k-1} theta)
        th = wrap_unit(th * static_cast<double>(p.d));
    }
    return acc.value();
}

// ---------------------------------------------------------------------------
// Fiber/base domination survey.  Samples orbits over T x B, records the
// per-step supremum of |V_k|, and fits the smallest envelope |V_k| <= C1 R1^k
// with R1 < d.  n0 is the first level at which R1^n <= d^n / 6, the depth from
// which admissible-curve machinery is valid.
// ---------------------------------------------------------------------------
struct domination_report {
    double sup_root = 0.0;            // max_k (sup |V_k|)^{1/k}
    double c1 = 0.0;
    double r1 = 0.0;
    unsigned n0 = 0;
    double escaped_fraction = 0.0;    // samples that left B during the window
    std::vector<double> log_sup_v;    // log sup |V_k|, k = 1..k_max
};

inline domination_report verify_domination(const parameter_set& p, std::size_t samples = 20000,
                                           unsigned k_max = 60, std::uint64_t seed = 1,
                                           unsigned threads = 1) {
    if (samples == 0 || k_max < 8) fail(errc::invalid_parameter, "verify_domination: need samples and k_max >= 8");
    std::vector<double> sup_log(k_max, -std::numeric_limits<double>::infinity());
    // Per-sample work: iterate k_max steps, record running log |V_k|.  The
    // estimate covers orbits while they stay in B; when the coupling exceeds
    // the trapping margin a small sliver of initial points near the edge of B
    // exits and blows up, and those are excluded and counted instead.
    std::vector<std::vector<double>> rows(samples);
    std::vector<std::uint8_t> escaped(samples, 0);
    parallel_for_index(samples, threads, [&](std::size_t i) {
        rng_stream rs(seed, i);
        base_stream bs(p.d, rng_stream(seed ^ 0x9e3779b97f4a7c15ULL, i));
        double x = rs.uniform(-p.beta, p.beta);
        std::vector<double> row(k_max);
        double acc = 0.0;
        bool dead = false;
        for (unsigned k = 0; k < k_max; ++k) {
            if (std::abs(x) > p.beta) {
                dead = true;
                escaped[i] = 1;
            }
            const double mult = std::abs(-2.0 * x);
            if (mult == 0.0) dead = true;
            if (!dead) acc += std::log(mult);
            row[k] = dead ? -std::numeric_limits<double>::infinity() : acc;
            x = p.f(x) + p.alpha * p.phi.eval(bs.theta());
            bs.advance();
        }
        rows[i] = std::move(row);
    });
    std::size_t n_escaped = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        if (escaped[i]) ++n_escaped;
        for (unsigned k = 0; k < k_max; ++k)
            if (rows[i][k] > sup_log[k]) sup_log[k] = rows[i][k];
    }

    domination_report rep;
    rep.escaped_fraction = static_cast<double>(n_escaped) / static_cast<double>(samples);
    rep.log_sup_v = sup_log;
    double sup_root_log = -std::numeric_limits<double>::infinity();
    for (unsigned k = 0; k < k_max; ++k)
        sup_root_log = std::max(sup_root_log, sup_log[k] / static_cast<double>(k + 1));
    rep.sup_root = std::exp(sup_root_log);
    // Tail growth rate of the envelope: the slope of log sup |V_k| over the
    // second half of the window.  (The ratio to the origin would be polluted
    // by one-time transients near the edge of B, which belong in C1.)
    std::vector<double> ks, vs;
    for (unsigned k = k_max / 2; k < k_max; ++k) {
        if (!std::isfinite(sup_log[k])) continue;
        ks.push_back(static_cast<double>(k + 1));
        vs.push_back(sup_log[k]);
    }
    rep.r1 = std::exp(linear_fit(ks, vs).slope);
    const double dlog = std::log(static_cast<double>(p.d));
    if (!(std::log(rep.r1) < dlog))
        fail(errc::domination_violated, "fitted R1 is not below d");
    double c1_log = 0.0;
    for (unsigned k = 0; k < k_max; ++k)
        c1_log = std::max(c1_log, sup_log[k] - static_cast<double>(k + 1) * std::log(rep.r1));
    rep.c1 = std::exp(c1_log);
    rep.n0 = static_cast<unsigned>(std::ceil(std::log(6.0) / (dlog - std::log(rep.r1))));
    if (rep.n0 < 1) rep.n0 = 1;
    return rep;
}

} // namespace viana
