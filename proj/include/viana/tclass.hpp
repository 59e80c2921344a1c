#pragma once

// The limit class of first-order tangent profiles
//   T(theta) = phi'((theta+k_1)/d) + sum_{n>=1} a_n phi'((theta+k_n+1)/d^{n+1}),
// |a_n| <= C1 (R1/d)^n, which admissible-curve tangents approach, and the
// empirical non-flatness constants (l0, mu, A) extracted from sampling it.

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <json.hpp>
#include <utility>
#include <vector>

#include "viana/errors.hpp"
#include "viana/fourier.hpp"
#include "viana/parallel.hpp"
#include "viana/rng.hpp"

namespace viana {

namespace detail {

// d^e with overflow detection; 0 on overflow
inline std::uint64_t checked_pow(std::uint64_t d, unsigned e) {
    std::uint64_t r = 1;
    for (unsigned i = 0; i < e; ++i) {
        if (r > std::numeric_limits<std::uint64_t>::max() / d) return 0;
        r *= d;
    }
    return r;
}

// largest truncation depth whose branch count d^{trunc+1} still fits u64
inline unsigned max_trunc_depth(std::uint64_t d) {
    unsigned t = 0;
    std::uint64_t p = d;
    while (p <= std::numeric_limits<std::uint64_t>::max() / d) {
        p *= d;
        ++t;
    }
    return t > 1 ? t - 1 : 1;
}

} // namespace detail

struct tphi_element {
    std::uint64_t d = 2;
    double c1 = 1.0;
    double r1 = 1.0;
    std::vector<std::uint64_t> k_seq;  // k_seq[i] in [0, d^{i+1})
    std::vector<double> a_seq;         // a_seq[i-1] = a_i, |a_i| <= c1 (r1/d)^i

    unsigned trunc() const { return static_cast<unsigned>(a_seq.size()); }
};

// validated constructor: coefficient-decay and branch-range contracts
inline tphi_element make_tphi_element(std::uint64_t d, double c1, double r1,
                                      std::vector<std::uint64_t> k_seq,
                                      std::vector<double> a_seq) {
    if (d < 2) fail(errc::invalid_element, "base degree must be >= 2");
    if (!(c1 > 0.0) || !(r1 > 0.0) || !(r1 < static_cast<double>(d)))
        fail(errc::invalid_element, "need c1 > 0 and 0 < r1 < d");
    if (k_seq.size() != a_seq.size() + 1)
        fail(errc::invalid_element, "k sequence must be one longer than a sequence");
    const double ratio = r1 / static_cast<double>(d);
    for (std::size_t i = 0; i < a_seq.size(); ++i) {
        const double bound = c1 * std::pow(ratio, static_cast<double>(i + 1));
        if (std::abs(a_seq[i]) > bound * (1.0 + 1e-12))
            fail(errc::invalid_element,
                 "coefficient " + std::to_string(i + 1) + " violates the geometric decay bound");
    }
    for (std::size_t i = 0; i < k_seq.size(); ++i) {
        const std::uint64_t branches = detail::checked_pow(d, static_cast<unsigned>(i + 1));
        if (branches == 0)
            fail(errc::invalid_element, "truncation too deep for the base degree");
        if (k_seq[i] >= branches)
            fail(errc::invalid_element, "branch index " + std::to_string(i) + " out of range");
    }
    tphi_element t;
    t.d = d;
    t.c1 = c1;
    t.r1 = r1;
    t.k_seq = std::move(k_seq);
    t.a_seq = std::move(a_seq);
    return t;
}

// upper bound on what the discarded tail can contribute to T^{(order)}
inline double tphi_tail_budget(const tphi_element& t, const fourier_series& phi, unsigned order) {
    const double ratio = t.r1 / static_cast<double>(t.d);
    return t.c1 * phi.sup_bound(order + 1) *
           std::pow(ratio, static_cast<double>(t.trunc() + 1)) / (1.0 - ratio);
}

// T^{(order)}(theta); the n-th term carries the chain-rule factor d^{-(n+1) order}
inline double tphi_eval(const tphi_element& t, const fourier_series& phi, double theta,
                        unsigned order = 0) {
    const double d = static_cast<double>(t.d);
    double scale = std::pow(d, -static_cast<double>(order));
    double acc = scale * phi.eval((theta + static_cast<double>(t.k_seq[0])) / d, order + 1);
    double div = d;
    for (std::size_t n = 1; n < t.k_seq.size(); ++n) {
        div *= d;                                   // d^{n+1}
        const double arg = (theta + static_cast<double>(t.k_seq[n])) / div;
        const double chain = std::pow(div, -static_cast<double>(order));
        acc += t.a_seq[n - 1] * chain * phi.eval(arg, order + 1);
    }
    return acc;
}

// Uniformly random admissible element; truncation clamped so branch indices
// stay representable.
inline tphi_element sample_tphi(const fourier_series& phi, std::uint64_t d, double c1, double r1,
                                unsigned trunc, rng_stream& rng) {
    (void)phi;
    const unsigned cap = detail::max_trunc_depth(d);
    if (trunc > cap) trunc = cap;
    std::vector<std::uint64_t> k(trunc + 1);
    std::vector<double> a(trunc);
    std::uint64_t branches = 1;
    const double ratio = r1 / static_cast<double>(d);
    double bound = c1;
    for (unsigned i = 0; i <= trunc; ++i) {
        branches *= d;
        k[i] = rng.next_below(branches);
        if (i >= 1) {
            bound *= ratio;  // c1 (r1/d)^i
            a[i - 1] = rng.uniform(-bound, bound);
        }
    }
    return make_tphi_element(d, c1, r1, std::move(k), std::move(a));
}

// Empirical class constants.  mu extremizes the derivative sum over T-orders
// 0..l0-1: a curve derivative X^(i) pairs with T^(i-1) through the tangent
// relation X' = (alpha/d) T, so this range is the one that composes with the
// curve sandwich  mu*alpha <= sum_{i=1}^{l0} |X^(i)| <= A*alpha.  The
// classical display sum_{i<=l0} |T^(i)| >= 2*d*mu then holds a fortiori.
struct class_constants {
    unsigned l0 = 0;
    double mu = 0.0;     // (1/2d) min over (T, theta) of sum_{i<=l0-1} |T^(i)|
    double a_hat = 0.0;  // (2/d)  max over (T, theta) of sum_{i<=l0+1} |T^(i)|
    std::size_t samples = 0;
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const class_constants& c) {
    return nlohmann::json{
        {"l0", c.l0}, {"mu", c.mu}, {"A", c.a_hat}, {"samples", c.samples}, {"seed", c.seed}};
}

namespace detail {

// sum_{i<=orders} |T^(i)(theta)|
inline double tphi_abs_sum(const tphi_element& t, const fourier_series& phi, double theta,
                           unsigned orders) {
    double s = 0.0;
    for (unsigned i = 0; i <= orders; ++i) s += std::abs(tphi_eval(t, phi, theta, i));
    return s;
}

// coarse grid scan plus golden-section polish of theta -> sum (min or max)
inline double tphi_extremize(const tphi_element& t, const fourier_series& phi, unsigned orders,
                             bool maximize, std::size_t grid) {
    double best_val = maximize ? -1.0 : std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    for (std::size_t i = 0; i < grid; ++i) {
        const double th = static_cast<double>(i) / static_cast<double>(grid);
        const double v = tphi_abs_sum(t, phi, th, orders);
        if (maximize ? (v > best_val) : (v < best_val)) {
            best_val = v;
            best_theta = th;
        }
    }
    const double h = 1.0 / static_cast<double>(grid);
    double lo = best_theta - h, hi = best_theta + h;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = tphi_abs_sum(t, phi, x1, orders), f2 = tphi_abs_sum(t, phi, x2, orders);
    for (int it = 0; it < 40; ++it) {
        const bool pick1 = maximize ? (f1 > f2) : (f1 < f2);
        if (pick1) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = tphi_abs_sum(t, phi, x1, orders);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = tphi_abs_sum(t, phi, x2, orders);
        }
        best_val = maximize ? std::max({best_val, f1, f2}) : std::min({best_val, f1, f2});
    }
    return best_val;
}

} // namespace detail

// Search l0 = 2, 3, ... for the least derivative count whose absolute-value
// sum is bounded away from zero across the sampled class, and report the
// empirical sandwich constants.  The margin is relative to sup |phi'|.
inline class_constants estimate_class_constants(const fourier_series& phi, std::uint64_t d,
                                                double c1, double r1, std::size_t samples,
                                                std::uint64_t seed = 1, unsigned threads = 1,
                                                unsigned trunc = 40, std::size_t grid = 128) {
    if (samples < 1000)
        fail(errc::invalid_parameter, "estimate_class_constants: need at least 1000 samples");
    if (phi.is_constant()) fail(errc::degenerate_parameter, "phi is constant");

    std::vector<tphi_element> elems(samples);
    parallel_for_index(samples, threads, [&](std::size_t i) {
        rng_stream rng(seed, i);
        elems[i] = sample_tphi(phi, d, c1, r1, trunc, rng);
    });

    const double margin = 1e-3 * phi.sup_bound(1);
    const double dd = static_cast<double>(d);
    for (unsigned l0 = 2; l0 <= 12; ++l0) {
        std::vector<double> mins(samples);
        parallel_for_index(samples, threads, [&](std::size_t i) {
            mins[i] = detail::tphi_extremize(elems[i], phi, l0 - 1, false, grid);
        });
        double lo = std::numeric_limits<double>::infinity();
        for (double v : mins) lo = std::min(lo, v);
        if (lo > margin) {
            std::vector<double> maxs(samples);
            parallel_for_index(samples, threads, [&](std::size_t i) {
                maxs[i] = detail::tphi_extremize(elems[i], phi, l0 + 1, true, grid);
            });
            double hi = 0.0;
            for (double v : maxs) hi = std::max(hi, v);
            class_constants out;
            out.l0 = l0;
            out.mu = lo / (2.0 * dd);
            out.a_hat = 2.0 * hi / dd;
            out.samples = samples;
            out.seed = seed;
            return out;
        }
    }
    fail(errc::class_degenerate,
         "no derivative count up to 12 separates the sampled class from zero");
}

} // namespace viana
