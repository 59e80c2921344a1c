#pragma once

// Lyapunov exponents of the skew product.
//
// The base direction is rigid: every orbit expands angles by exactly d, so
// the base exponent is log d with no estimation error.  The fiber exponent
// is the Birkhoff limit of log |2 x_n| along typical orbits; it is measured
// over an ensemble of independent orbits started uniformly on circle x
// trapping interval, each angle carried by an explicit digit stream so the
// base dynamics never degenerates to a finite binary tail.  A QR-iterated
// frame gives the same pair of exponents through the Jacobian cocycle
//   J(theta, x) = [ d, 0 ; alpha phi'(theta), -2x ],
// whose triangular shape makes the diagonal Birkhoff averages an independent
// cross-check of the frame computation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "viana/base_stream.hpp"
#include "viana/errors.hpp"
#include "viana/numeric.hpp"
#include "viana/parallel.hpp"
#include "viana/params.hpp"
#include "viana/rng.hpp"
#include "viana/stats.hpp"

namespace viana {

// ---------------------------------------------------------------------------
// Ensemble estimate of the fiber exponent.
// ---------------------------------------------------------------------------
struct exponent_estimate {
    double alpha = 0.0;
    double lambda_base = 0.0;      // log d, exact
    double lambda_fiber = 0.0;     // ensemble mean of S_n / n
    double stderr_fiber = 0.0;     // ensemble standard error of that mean
    double liminf_proxy = 0.0;     // worst running average over the final decade,
                                   // minimized over the ensemble
    double frac_positive = 0.0;    // members with positive time average
    double frac_negative = 0.0;
    double frac_liminf_positive = 0.0; // members whose final-decade worst
                                       // running average is still positive
    double spread_observed = 0.0;  // stddev of member means
    double spread_predicted = 0.0; // IID prediction sqrt(var_step / n_steps)
    double trimmed_fraction = 0.0; // restarted members / ensemble
    std::size_t ensemble = 0;
    std::uint64_t n_steps = 0;
    std::uint64_t burn_in = 0;
    std::uint64_t seed = 0;
};

namespace detail {

struct member_result {
    double mean = 0.0;
    double liminf = 0.0;
    double sq_step_sum = 0.0; // sum of squared increments (for the IID spread)
    unsigned restarts = 0;
};

// One orbit's Birkhoff average of log |2 x_n|, with burn-in, running liminf
// proxy over the final decade, and restart-on-critical-hit.
inline member_result fiber_member(const parameter_set& p, std::uint64_t n_steps,
                                  std::uint64_t burn_in, std::uint64_t seed, std::uint64_t index) {
    member_result out;
    const std::uint64_t decade_from = std::max<std::uint64_t>(1, n_steps / 10);
    for (unsigned attempt = 0;; ++attempt) {
        if (attempt > 8)
            fail(errc::measurement_bug,
                 "orbit hits the critical line exactly after 8 restarts");
        // perturb the seed deterministically on each restart
        rng_stream rng(seed + 0x9e3779b97f4a7c15ULL * attempt, index);
        double x = rng.uniform(-p.beta, p.beta);
        base_stream bs(p.d, rng);
        bool hit = false;
        for (std::uint64_t i = 0; i < burn_in; ++i) {
            if (x == 0.0) { hit = true; break; }
            x = p.f(x) + p.alpha * p.phi.eval(bs.theta());
            bs.advance();
        }
        if (hit) { ++out.restarts; continue; }
        kahan_sum s;
        kahan_sum sq;
        double liminf = std::numeric_limits<double>::infinity();
        std::uint64_t i = 0;
        for (; i < n_steps; ++i) {
            if (x == 0.0) { hit = true; break; }
            const double inc = std::log(2.0 * std::abs(x));
            s.add(inc);
            sq.add(inc * inc);
            x = p.f(x) + p.alpha * p.phi.eval(bs.theta());
            bs.advance();
            if (i + 1 >= decade_from)
                liminf = std::min(liminf, s.value() / static_cast<double>(i + 1));
        }
        if (hit) { ++out.restarts; continue; }
        out.mean = s.value() / static_cast<double>(n_steps);
        out.liminf = liminf;
        out.sq_step_sum = sq.value();
        return out;
    }
}

} // namespace detail

inline exponent_estimate fiber_exponent(const parameter_set& p, std::size_t ensemble,
                                        std::uint64_t n_steps, std::uint64_t seed,
                                        unsigned threads = 1, std::uint64_t burn_in = 1000) {
    p.validate();
    if (ensemble < 1) fail(errc::invalid_parameter, "fiber exponent needs an ensemble");
    if (n_steps < 1000)
        fail(errc::invalid_parameter, "fiber exponent needs at least 1000 steps per orbit");

    exponent_estimate est;
    est.alpha = p.alpha;
    est.lambda_base = std::log(static_cast<double>(p.d));
    est.ensemble = ensemble;
    est.n_steps = n_steps;
    est.burn_in = burn_in;
    est.seed = seed;

    std::vector<detail::member_result> members(ensemble);
    parallel_for_index(ensemble, threads, [&](std::size_t j) {
        members[j] = detail::fiber_member(p, n_steps, burn_in, seed, j);
    });

    std::vector<double> means(ensemble);
    double var_step = 0.0;
    std::size_t restarts = 0;
    est.liminf_proxy = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < ensemble; ++j) {
        means[j] = members[j].mean;
        restarts += members[j].restarts;
        est.liminf_proxy = std::min(est.liminf_proxy, members[j].liminf);
        if (means[j] > 0.0) est.frac_positive += 1.0;
        if (means[j] < 0.0) est.frac_negative += 1.0;
        if (members[j].liminf > 0.0) est.frac_liminf_positive += 1.0;
        var_step += members[j].sq_step_sum / static_cast<double>(n_steps) - means[j] * means[j];
    }
    est.frac_positive /= static_cast<double>(ensemble);
    est.frac_negative /= static_cast<double>(ensemble);
    est.frac_liminf_positive /= static_cast<double>(ensemble);
    est.trimmed_fraction = static_cast<double>(restarts) / static_cast<double>(ensemble);

    const mean_stderr ms = summarize(means);
    est.lambda_fiber = ms.mean;
    est.stderr_fiber = ms.stderr_;
    est.spread_observed = ms.stderr_ * std::sqrt(static_cast<double>(ensemble));
    var_step = std::max(var_step / static_cast<double>(ensemble), 0.0);
    est.spread_predicted = std::sqrt(var_step / static_cast<double>(n_steps));
    return est;
}

// ---------------------------------------------------------------------------
// QR-iterated spectrum of the full 2x2 Jacobian cocycle along one orbit.
// ---------------------------------------------------------------------------
struct qr_estimate {
    double chi_1 = 0.0;        // QR exponents, sorted descending
    double chi_2 = 0.0;
    double diag_base = 0.0;    // Birkhoff averages of the triangular diagonal
    double diag_fiber = 0.0;   // along the SAME orbit: log d and mean log |2x|
    double theta0 = 0.0;
    double x0 = 0.0;
    std::uint64_t n_steps = 0;
    std::uint64_t burn_in = 0;
    std::uint64_t seed = 0;
    bool critical_hit = false; // diag_fiber is -inf; chi_2 follows it
};

inline qr_estimate qr_spectrum(const parameter_set& p, std::uint64_t n_steps, std::uint64_t seed,
                               std::uint64_t renorm_every = 1, std::uint64_t burn_in = 1000,
                               double theta0 = -1.0, double x0_in = std::numeric_limits<double>::quiet_NaN()) {
    p.validate();
    if (renorm_every < 1) fail(errc::invalid_parameter, "renormalisation period must be >= 1");
    if (n_steps < renorm_every)
        fail(errc::invalid_parameter, "orbit shorter than one renormalisation period");

    rng_stream rng(seed, 0);
    const double x0 = std::isnan(x0_in) ? rng.uniform(-p.beta, p.beta) : x0_in;
    if (std::abs(x0) > p.beta)
        fail(errc::invalid_parameter, "starting fiber value outside the trapping interval");
    base_stream bs = theta0 < 0.0 ? base_stream(p.d, rng) : base_stream(p.d, rng, theta0);

    qr_estimate est;
    est.theta0 = bs.theta();
    est.x0 = x0;
    est.n_steps = n_steps;
    est.burn_in = burn_in;
    est.seed = seed;

    double x = x0;
    for (std::uint64_t i = 0; i < burn_in; ++i) {
        if (x == 0.0) break; // burn-in hit: start measuring there anyway
        x = p.f(x) + p.alpha * p.phi.eval(bs.theta());
        bs.advance();
    }

    const double dd = static_cast<double>(p.d);
    // frame columns (2x2), kept orthonormal by Gram-Schmidt
    double q11 = 1.0, q21 = 0.0, q12 = 0.0, q22 = 1.0;
    kahan_sum log_r1, log_r2, diag2;
    std::uint64_t since_renorm = 0;
    bool hit = false;

    for (std::uint64_t i = 0; i < n_steps; ++i) {
        const double theta = bs.theta();
        if (x == 0.0) hit = true; // diagonal average is -inf; skip the add so
        else diag2.add(std::log(2.0 * std::abs(x))); // the kahan sum stays clean
        const double a21 = p.alpha * p.phi.eval(theta, 1);
        const double a22 = -2.0 * x;
        // multiply the frame by J = [d, 0; a21, a22]
        const double m11 = dd * q11, m21 = a21 * q11 + a22 * q21;
        const double m12 = dd * q12, m22 = a21 * q12 + a22 * q22;
        q11 = m11; q21 = m21; q12 = m12; q22 = m22;
        if (++since_renorm == renorm_every) {
            since_renorm = 0;
            const double n1 = std::hypot(q11, q21);
            if (!(n1 > 0.0) || !std::isfinite(n1))
                fail(errc::frame_collapse, "leading frame vector degenerated");
            q11 /= n1; q21 /= n1;
            const double proj = q11 * q12 + q21 * q22;
            q12 -= proj * q11; q22 -= proj * q21;
            const double n2 = std::hypot(q12, q22);
            if (!(n2 > 0.0) || !std::isfinite(n2))
                fail(errc::frame_collapse, "frame vectors became collinear");
            q12 /= n2; q22 /= n2;
            log_r1.add(std::log(n1));
            log_r2.add(std::log(n2));
        }
        x = p.f(x) + p.alpha * p.phi.eval(theta);
        bs.advance();
    }
    if (since_renorm != 0) { // fold in the unnormalized tail
        const double n1 = std::hypot(q11, q21);
        const double proj = (q11 * q12 + q21 * q22) / (n1 * n1);
        const double r12x = q12 - proj * q11, r22x = q22 - proj * q21;
        const double n2 = std::hypot(r12x, r22x);
        if (!(n1 > 0.0) || !(n2 > 0.0)) fail(errc::frame_collapse, "frame degenerated in the tail");
        log_r1.add(std::log(n1));
        log_r2.add(std::log(n2));
    }

    const double inv_n = 1.0 / static_cast<double>(n_steps);
    const double e1 = log_r1.value() * inv_n;
    const double e2 = log_r2.value() * inv_n;
    est.chi_1 = std::max(e1, e2);
    est.chi_2 = std::min(e1, e2);
    est.diag_base = std::log(dd);
    est.diag_fiber = hit ? -std::numeric_limits<double>::infinity() : diag2.value() * inv_n;
    est.critical_hit = hit;
    return est;
}

// ---------------------------------------------------------------------------
// Fiber exponent across a range of coupling strengths.
// ---------------------------------------------------------------------------
inline std::vector<exponent_estimate> exponent_vs_alpha_sweep(
    const std::vector<double>& alphas, std::size_t ensemble, std::uint64_t n_steps,
    std::uint64_t seed, unsigned threads = 1, std::uint64_t burn_in = 1000) {
    if (alphas.empty()) fail(errc::invalid_parameter, "sweep needs at least one alpha");
    std::vector<exponent_estimate> out;
    out.reserve(alphas.size());
    for (double a : alphas)
        out.push_back(
            fiber_exponent(standard_parameter_set(a), ensemble, n_steps, seed, threads, burn_in));
    return out;
}

} // namespace viana
