#pragma once

// Interval chains that shadow the critical orbit of the fibre quadratic map,
// bounded-distortion checks along them, and the coupling-strength scaling law
// N(alpha) / s(alpha) they induce.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "viana/errors.hpp"
#include "viana/numeric.hpp"
#include "viana/orbit.hpp"
#include "viana/params.hpp"
#include "viana/rng.hpp"
#include "viana/stats.hpp"

namespace viana {

struct interval {
    double lo = 0.0;
    double hi = 0.0;

    double len() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double x, double slack = 0.0) const {
        return x >= lo - slack && x <= hi + slack;
    }
    bool contains_zero() const { return lo <= 0.0 && 0.0 <= hi; }
};

// Chain of intervals I_1, ..., I_{N+1} around the critical value orbit:
//   I_1 = [c_1 - 2a, c_1 + 2a]   (a = coupling strength)
//   I_{n+1} = hull(f(I_n)) widened by a on each side,
// grown for as long as every interval is shorter than xi0 and the cumulative
// length stays at most xi0.  N is the index of the last interval that still
// has a successor inside the chain (segments.size() == N + 1).
struct interval_chain {
    double alpha = 0.0;
    std::size_t n_alpha = 0;           // N(alpha)
    std::vector<interval> segments;    // I_1 .. I_{N+1}
    std::vector<double> critical;      // c_1 .. c_{N+1}
    double total_length = 0.0;         // sum of |I_n|, n = 1 .. N+1
};

inline interval_chain build_chain(const parameter_set& p) {
    if (!(p.alpha > 0.0))
        fail(errc::invalid_parameter, "build_chain: coupling strength must be positive");
    if (!(p.alpha <= p.xi0))
        fail(errc::invalid_parameter, "build_chain: coupling strength exceeds the critical-orbit margin");

    const double a = p.alpha;
    interval_chain chain;
    chain.alpha = a;

    auto accept = [&](const interval& iv, double c) -> bool {
        if (!(iv.len() < p.xi0)) return false;
        if (!(chain.total_length + iv.len() <= p.xi0)) return false;
        if (iv.contains_zero())
            fail(errc::chain_degenerate,
                 "build_chain: interval straddles the critical point before the stopping rule fired");
        if (!iv.contains(c, 1e-12 * (1.0 + std::abs(c))))
            fail(errc::measurement_bug, "build_chain: critical orbit escaped its interval");
        chain.segments.push_back(iv);
        chain.critical.push_back(c);
        chain.total_length += iv.len();
        return true;
    };

    double c = p.a;                                    // c_1 = f(0)
    interval iv{c - 2.0 * a, c + 2.0 * a};
    if (!accept(iv, c))
        fail(errc::chain_degenerate, "build_chain: the first interval already violates the length budget");

    constexpr std::size_t hard_cap = 1u << 20;
    while (chain.segments.size() < hard_cap) {
        const interval& cur = chain.segments.back();
        const double flo = p.f(cur.lo);
        const double fhi = p.f(cur.hi);
        interval next{std::min(flo, fhi) - a, std::max(flo, fhi) + a};
        c = p.f(c);
        if (!accept(next, c)) break;
    }
    if (chain.segments.size() >= hard_cap)
        fail(errc::chain_degenerate, "build_chain: chain failed to terminate");

    chain.n_alpha = chain.segments.size() - 1;         // N(alpha)
    return chain;
}

struct distortion_report {
    double worst_pair_ratio = 1.0;   // max over n <= N of max_j P_n / min_j P_n
    std::size_t worst_step = 0;      // n achieving it
    double crude_bound = 1.0;        // prod_k sup_{I_k}|f'| / inf_{I_k}|f'|
    std::size_t probe_points = 0;
};

// Derivative products of the fibre map along unperturbed orbits started across
// I_1 must stay within a factor e of one another at every depth n <= N.
inline distortion_report check_distortion(const parameter_set& p,
                                          const interval_chain& chain,
                                          std::size_t probes = 33) {
    if (probes < 2) fail(errc::invalid_parameter, "check_distortion: need at least two probe points");
    const std::size_t n_steps = chain.n_alpha;         // derivative factors live on I_1 .. I_N
    distortion_report rep;
    rep.probe_points = probes;

    std::vector<double> x(probes);
    std::vector<kahan_sum> logp(probes);
    const interval& first = chain.segments.front();
    for (std::size_t j = 0; j < probes; ++j)
        x[j] = first.lo + first.len() * static_cast<double>(j) / static_cast<double>(probes - 1);

    kahan_sum log_crude;
    for (std::size_t n = 1; n <= n_steps; ++n) {
        const interval& cur = chain.segments[n - 1];
        const double abs_lo = std::abs(cur.lo);
        const double abs_hi = std::abs(cur.hi);
        const double sup = std::max(abs_lo, abs_hi);
        const double inf = cur.contains_zero() ? 0.0 : std::min(abs_lo, abs_hi);
        if (!(inf > 0.0))
            fail(errc::chain_degenerate, "check_distortion: interval touches the critical point");
        log_crude.add(std::log(sup) - std::log(inf));

        double lo_log = std::numeric_limits<double>::infinity();
        double hi_log = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < probes; ++j) {
            if (!chain.segments[n - 1].contains(x[j], 1e-12))
                fail(errc::measurement_bug, "check_distortion: probe orbit left the chain");
            logp[j].add(std::log(2.0 * std::abs(x[j])));
            x[j] = p.f(x[j]);
            lo_log = std::min(lo_log, logp[j].value());
            hi_log = std::max(hi_log, logp[j].value());
        }
        const double ratio = std::exp(hi_log - lo_log);
        if (ratio > rep.worst_pair_ratio) {
            rep.worst_pair_ratio = ratio;
            rep.worst_step = n;
        }
    }
    rep.crude_bound = std::exp(log_crude.value());

    const double e1 = std::exp(1.0);
    if (rep.worst_pair_ratio > e1 * (1.0 + 1e-9))
        fail(errc::distortion_violated, "check_distortion: derivative products spread beyond a factor e");
    return rep;
}

struct scaling_row {
    double alpha = 0.0;
    std::size_t n_alpha = 0;      // N(alpha)
    double s_alpha = 0.0;         // |(f^N)'(c_1)| * alpha
    double total_length = 0.0;
};

struct scaling_report {
    std::vector<scaling_row> rows;
    double c0_scaling = 0.0;      // min over rows of min(s, 1/s)
    double slope = 0.0;           // N against log10(1/alpha)
    double intercept = 0.0;
    double r2 = 0.0;
};

// For a decreasing ladder of coupling strengths, measure how the chain length
// N(alpha) grows and verify that s(alpha) = |(f^N)'(c_1)| alpha stays pinched
// inside [C0, 1/C0] for a single constant C0 > 0.
inline scaling_report n_alpha_scaling(const parameter_set& base,
                                      const std::vector<double>& alphas) {
    if (alphas.size() < 2)
        fail(errc::invalid_parameter, "n_alpha_scaling: need at least two coupling strengths");
    for (std::size_t i = 1; i < alphas.size(); ++i)
        if (!(alphas[i] < alphas[i - 1]))
            fail(errc::invalid_parameter, "n_alpha_scaling: coupling strengths must strictly decrease");

    scaling_report rep;
    rep.c0_scaling = std::numeric_limits<double>::infinity();
    std::vector<double> xs, ys;
    for (double a : alphas) {
        parameter_set p = base;
        p.alpha = a;
        p.validate();
        interval_chain chain = build_chain(p);

        kahan_sum logd;
        double c = p.a;
        for (std::size_t k = 1; k <= chain.n_alpha; ++k) {
            logd.add(std::log(2.0 * std::abs(c)));
            c = p.f(c);
        }
        scaling_row row;
        row.alpha = a;
        row.n_alpha = chain.n_alpha;
        row.s_alpha = std::exp(logd.value()) * a;
        row.total_length = chain.total_length;
        if (!rep.rows.empty() && row.n_alpha < rep.rows.back().n_alpha)
            fail(errc::scaling_broken, "n_alpha_scaling: chain length decreased while coupling shrank");
        rep.c0_scaling = std::min({rep.c0_scaling, row.s_alpha, 1.0 / row.s_alpha});
        xs.push_back(std::log10(1.0 / a));
        ys.push_back(static_cast<double>(row.n_alpha));
        rep.rows.push_back(row);
    }
    if (!(rep.c0_scaling > 0.0))
        fail(errc::scaling_broken, "n_alpha_scaling: degenerate derivative product along the chain");

    linear_fit_result fit = linear_fit(xs, ys);
    rep.slope = fit.slope;
    rep.intercept = fit.intercept;
    rep.r2 = fit.r2;
    return rep;
}

struct expansion_report {
    double min_v_alpha = 0.0;        // min over samples of |V_N| * alpha
    double frac_below_soft = 0.0;    // fraction below the soft floor c0_emp
    std::size_t samples = 0;
};

// After a visit to the critical strip |x| < sqrt(alpha), one application of
// the skew product lands the fibre coordinate in I_1; the following N(alpha)
// steps of the full (perturbed) dynamics must rebuild derivative growth:
// |V_N| * alpha >= c0_emp up to one factor e of slack.
inline expansion_report expansion_after_return(const parameter_set& p,
                                               const interval_chain& chain,
                                               double c0_emp,
                                               std::size_t samples = 4096,
                                               std::uint64_t seed = 1) {
    if (!(c0_emp > 0.0))
        fail(errc::invalid_parameter, "expansion_after_return: soft floor must be positive");
    if (samples == 0)
        fail(errc::invalid_parameter, "expansion_after_return: need samples");

    const double root_a = std::sqrt(p.alpha);
    expansion_report rep;
    rep.samples = samples;
    rep.min_v_alpha = std::numeric_limits<double>::infinity();
    std::size_t below = 0;

    for (std::size_t i = 0; i < samples; ++i) {
        rng_stream rng(seed, i);
        orbit_state s;
        s.theta = rng.next_double();
        s.x = rng.uniform(-root_a, root_a);
        step(s, p);                                    // the return step itself
        if (!chain.segments.front().contains(s.x, 1e-12))
            fail(errc::measurement_bug, "expansion_after_return: image of the strip missed I_1");

        kahan_sum logv;
        for (std::size_t k = 1; k <= chain.n_alpha; ++k) {
            if (!chain.segments[k - 1].contains(s.x, 1e-9))
                fail(errc::measurement_bug, "expansion_after_return: perturbed orbit left the chain");
            logv.add(std::log(2.0 * std::abs(s.x)));
            step(s, p);
        }
        const double v_alpha = std::exp(logv.value()) * p.alpha;
        rep.min_v_alpha = std::min(rep.min_v_alpha, v_alpha);
        if (v_alpha < c0_emp) ++below;
    }
    rep.frac_below_soft = static_cast<double>(below) / static_cast<double>(samples);

    if (rep.min_v_alpha < c0_emp / std::exp(1.0))
        fail(errc::expansion_violated,
             "expansion_after_return: derivative recovery fell below the hard floor");
    return rep;
}

}  // namespace viana
