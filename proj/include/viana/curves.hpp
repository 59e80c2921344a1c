#pragma once

// Sample curves over partition elements.
//
// The level-n curve through element (n, j) with seed x0 is the graph
//     X(u) = fiber of F^n( tau(u), x0 ),   tau(u) = (u + j) / d^n,
// sampled on the rational grid u_i = (i*P + s)/(M*P).  Base angles are
// propagated exactly (grid.hpp), so after n steps the i-th point sits at
// u_i again, bit for bit.
//
// Derivatives in u are estimated by finite differences of order >= 4 on the
// uniform grid (spacing exactly 1/M), with one-sided stencils near the seam
// u = 0 (the curve is a graph over the circle but comes from a single
// inverse branch, so its two ends need not match).  Stencil weights come
// from Fornberg's algorithm rather than hardcoded tables.
//
// curve_class_diagnostic compares the measured first derivative against the
// first-order tangent prediction (alpha/d) * G_n(tau(u), x0), where G_n is
// the normalised horizontal response series (orbit.hpp), and checks the
// two-sided derivative-sum bounds  mu*alpha <= sum_{r<=l0} |X^(r)| <= A*alpha
// from the analytic class constants.  deep_return_measure estimates the
// decay of the sublevel sets {|X| < alpha * eps}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <viana/errors.hpp>
#include <viana/grid.hpp>
#include <viana/orbit.hpp>
#include <viana/params.hpp>
#include <viana/parallel.hpp>
#include <viana/stats.hpp>
#include <viana/tclass.hpp>

namespace viana {

namespace detail {

// Fornberg weights: given nodes x[0..n-1] and evaluation point z, returns
// w[k][j] = weight of f(x[j]) in the approximation of f^(k)(z), k <= m.
inline std::vector<std::vector<double>> fd_weights(double z, const std::vector<double>& x, unsigned m) {
    const std::size_t n = x.size();
    if (n == 0 || n <= m)
        fail(errc::invalid_parameter, "finite-difference stencil needs more nodes than derivative order");
    std::vector<std::vector<double>> c(m + 1, std::vector<double>(n, 0.0));
    double c1 = 1.0;
    double c4 = x[0] - z;
    c[0][0] = 1.0;
    for (std::size_t i = 1; i < n; ++i) {
        const unsigned mn = static_cast<unsigned>(std::min<std::size_t>(i, m));
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - z;
        for (std::size_t j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (unsigned k = mn; k >= 1; --k)
                    c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for (unsigned k = mn; k >= 1; --k)
                c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    return c;
}

} // namespace detail

struct sampled_curve {
    std::size_t grid_size = 0;       // M
    partition_element source;        // element whose inverse branch seeds the curve
    std::uint64_t d = 2;
    double alpha = 0.0;              // coupling used during propagation
    double x0 = 0.0;
    std::uint64_t cofactor = grid_cofactor_prime;
    std::uint64_t offset = 1;        // s in u_i = (i*P + s)/(M*P)
    std::vector<double> values;      // X(u_i)
    // derivs[r-1][i] = estimate of X^(r)(u_i); orders 1..derivs.size()
    std::vector<std::vector<double>> derivs;
};

// Exact starting angle tau(u_i) of grid point i.
inline exact_angle curve_preimage_angle(const sampled_curve& c, std::size_t i) {
    return preimage_angle(i, c.grid_size, c.source, c.d, c.cofactor, c.offset);
}

// Exact angle of grid point i after propagation (equals u_i).
inline exact_angle curve_grid_angle(const sampled_curve& c, std::size_t i) {
    return grid_angle(i, c.grid_size, c.cofactor, c.offset);
}

// Finite-difference derivative estimates of orders 1..max_order, appended to
// c.derivs.  Stencil width max(5, max_order + 3): order >= 4 accuracy for
// first and second derivatives, one-sided near the seam.
inline void compute_derivatives(sampled_curve& c, unsigned max_order) {
    if (max_order == 0) return;
    const std::size_t m = c.grid_size;
    const std::size_t width = std::max<std::size_t>(5, max_order + 3);
    if (m < width)
        fail(errc::invalid_parameter, "curve grid too small for derivative stencils");
    if (c.derivs.size() >= max_order) return;

    const double h = 1.0 / double(m);
    // Stencil classes: node offsets relative to the evaluation index.
    // Interior: centered; first/last few points: shifted windows.
    const std::size_t half = width / 2;
    std::vector<std::vector<std::vector<double>>> weight_class(width);
    std::vector<std::vector<double>> nodes_class(width);
    // class index q = position of the evaluation point inside its window.
    for (std::size_t q = 0; q < width; ++q) {
        std::vector<double> nodes(width);
        for (std::size_t t = 0; t < width; ++t)
            nodes[t] = (double(t) - double(q)) * h;
        weight_class[q] = detail::fd_weights(0.0, nodes, max_order);
        nodes_class[q] = std::move(nodes);
    }

    const unsigned lo = static_cast<unsigned>(c.derivs.size());
    for (unsigned r = lo; r < max_order; ++r)
        c.derivs.emplace_back(m, 0.0);

    for (std::size_t i = 0; i < m; ++i) {
        // window start so the evaluation point sits at interior position
        // `half` when possible, clamped at the ends.
        std::size_t start = (i >= half) ? i - half : 0;
        if (start + width > m) start = m - width;
        const std::size_t q = i - start;
        const auto& w = weight_class[q];
        for (unsigned r = lo + 1; r <= max_order; ++r) {
            double acc = 0.0;
            for (std::size_t t = 0; t < width; ++t)
                acc += w[r][t] * c.values[start + t];
            c.derivs[r - 1][i] = acc;
        }
    }
}

// Propagate the horizontal seed x0 through the inverse branch of `elem`:
// level steps of the skew product with exact base angles.  Fills values and
// derivative estimates of orders 1..derive_orders (0 skips the finite
// differences entirely; return-time scans over very large grids only need the
// values and would otherwise double their memory footprint).
inline sampled_curve propagate(const parameter_set& p, const partition_element& elem,
                               double x0, std::size_t grid_size, unsigned threads = 1,
                               unsigned derive_orders = 2) {
    p.validate();
    validate_element(elem, p.d);
    if (!(std::abs(x0) <= p.beta))
        fail(errc::invalid_parameter, "curve seed lies outside the invariant interval");
    if (grid_size < 8)
        fail(errc::invalid_parameter, "curve grid needs at least 8 points");

    sampled_curve c;
    c.grid_size = grid_size;
    c.source = elem;
    c.d = p.d;
    c.alpha = p.alpha;
    c.x0 = x0;
    c.values.assign(grid_size, 0.0);

    const double escape_cap = 2.0 * p.beta;
    std::vector<std::uint8_t> escaped(grid_size, 0);
    parallel_for_index(grid_size, threads, [&](std::size_t i) {
        exact_angle a = preimage_angle(i, grid_size, elem, p.d, c.cofactor, c.offset);
        double x = x0;
        for (unsigned k = 0; k < elem.level; ++k) {
            x = p.f(x) + p.alpha * p.phi.eval(angle_value(a));
            a = advance(a, p.d);
            if (!(std::abs(x) <= escape_cap)) { escaped[i] = 1; return; }
        }
        exact_angle back = grid_angle(i, grid_size, c.cofactor, c.offset);
        const uint128 lift = detail::pow_u128(p.d, elem.level);
        if (a.num != back.num * lift || a.den != back.den * lift)
            fail(errc::measurement_bug, "curve base angle failed to return to its grid point");
        c.values[i] = x;
    });
    for (std::size_t i = 0; i < grid_size; ++i)
        if (escaped[i])
            fail(errc::measurement_bug, "curve point left the trapping region during propagation");

    compute_derivatives(c, derive_orders);
    return c;
}

struct curve_class_report {
    double alpha = 0.0;
    unsigned level = 0;
    std::size_t grid_size = 0;
    double max_abs_deriv1 = 0.0;      // sup_i |X'(u_i)|
    double residual = 0.0;            // max_i |X' - (alpha/d) * G_level|
    double residual_over_alpha2 = 0.0;
    double sandwich_lo = 0.0;         // min_i sum_{r<=l0} |X^(r)| / alpha
    double sandwich_hi = 0.0;         // max_i sum_{r<=l0} |X^(r)| / alpha
    double violation_fraction = 0.0;  // fraction outside [mu, A] before tolerance
    bool alpha_zero = false;
};

// Compare the measured tangent data of a curve against the first-order
// prediction and the class-constant sandwich.  More than 0.1% of grid
// points violating the sandwich is an error; alpha = 0 yields a flagged
// degenerate report instead (the curve is horizontal to machine precision).
inline curve_class_report curve_class_diagnostic(sampled_curve& c, const parameter_set& p,
                                                 const class_constants& k,
                                                 unsigned threads = 1) {
    if (c.source.level == 0)
        fail(errc::invalid_parameter, "class diagnostic needs a curve of level >= 1");
    if (k.l0 == 0) fail(errc::invalid_parameter, "class constants carry no derivative depth");
    compute_derivatives(c, std::max(2u, k.l0));

    const std::size_t m = c.grid_size;
    const unsigned n = c.source.level;
    curve_class_report rep;
    rep.alpha = c.alpha;
    rep.level = n;
    rep.grid_size = m;
    rep.alpha_zero = (c.alpha == 0.0);

    std::vector<double> pred(m, 0.0);
    parallel_for_index(m, threads, [&](std::size_t i) {
        exact_angle a = curve_preimage_angle(c, i);
        pred[i] = g_n_series(p, angle_value(a), c.x0, n);
    });

    double max_d1 = 0.0, max_res = 0.0;
    double s_lo = std::numeric_limits<double>::infinity(), s_hi = 0.0;
    std::size_t violations = 0;
    const double scale = c.alpha / double(p.d);
    for (std::size_t i = 0; i < m; ++i) {
        const double d1 = c.derivs[0][i];
        max_d1 = std::max(max_d1, std::abs(d1));
        max_res = std::max(max_res, std::abs(d1 - scale * pred[i]));
        double s = 0.0;
        for (unsigned r = 1; r <= k.l0; ++r) s += std::abs(c.derivs[r - 1][i]);
        if (!rep.alpha_zero) {
            const double lo = k.mu * c.alpha, hi = k.a_hat * c.alpha;
            if (s < lo * (1.0 - 1e-9) || s > hi * (1.0 + 1e-9)) ++violations;
            s_lo = std::min(s_lo, s / c.alpha);
            s_hi = std::max(s_hi, s / c.alpha);
        }
    }
    rep.max_abs_deriv1 = max_d1;
    rep.residual = max_res;
    rep.residual_over_alpha2 = rep.alpha_zero ? 0.0 : max_res / (c.alpha * c.alpha);
    if (rep.alpha_zero) {
        rep.sandwich_lo = rep.sandwich_hi = 0.0;
        rep.violation_fraction = 0.0;
        return rep;
    }
    rep.sandwich_lo = s_lo;
    rep.sandwich_hi = s_hi;
    rep.violation_fraction = double(violations) / double(m);
    if (rep.violation_fraction > 1e-3)
        fail(errc::curve_not_admissible,
             "derivative-sum sandwich fails on " + std::to_string(rep.violation_fraction * 100.0) +
                 "% of grid points");
    return rep;
}

struct decay_report {
    std::vector<double> eps;              // strictly decreasing
    std::vector<std::uint64_t> counts;    // |{ i : |X(u_i)| < alpha * eps }|
    std::vector<double> fractions;
    std::uint64_t total = 0;
    double alpha = 0.0;
    double kappa_hat = 0.0;               // fitted decay exponent of fraction ~ eps^kappa
    bool kappa_valid = false;
};

namespace detail {

inline void fit_decay(decay_report& rep) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < rep.eps.size(); ++i) {
        if (rep.counts[i] > 0) {
            lx.push_back(std::log(rep.eps[i]));
            ly.push_back(std::log(rep.fractions[i]));
        }
    }
    if (lx.size() >= 2 && lx.front() != lx.back()) {
        rep.kappa_hat = linear_fit(lx, ly).slope;
        rep.kappa_valid = true;
        // sanity of the fitted power law at the smallest scale
        const double f_min = rep.fractions.back();
        const double bound = std::pow(rep.eps.back(), rep.kappa_hat / 2.0);
        if (rep.kappa_valid && f_min > bound * (1.0 + 1e-9))
            fail(errc::measurement_bug, "sublevel fraction exceeds its fitted power law");
    } else {
        rep.kappa_hat = 0.0;
        rep.kappa_valid = false;
    }
}

} // namespace detail

// Fractions of grid points with |X| < alpha * eps for each eps, and a fitted
// decay exponent.  The eps list is sorted into strictly decreasing order;
// monotonicity of the counts is asserted (the sublevel sets are nested).
inline decay_report deep_return_measure(const sampled_curve& c, std::vector<double> eps) {
    if (eps.empty()) fail(errc::invalid_parameter, "sublevel measure needs at least one scale");
    for (double e : eps)
        if (!(e > 0.0) || !(e < 1.0)) fail(errc::invalid_parameter, "sublevel scales must lie in (0,1)");
    std::sort(eps.begin(), eps.end(), std::greater<double>());
    eps.erase(std::unique(eps.begin(), eps.end()), eps.end());

    decay_report rep;
    rep.eps = eps;
    rep.alpha = c.alpha;
    rep.total = c.values.size();
    rep.counts.assign(eps.size(), 0);
    for (double x : c.values) {
        const double ax = std::abs(x);
        for (std::size_t i = 0; i < eps.size(); ++i) {
            if (ax < c.alpha * eps[i]) ++rep.counts[i];
            else break;  // eps decreasing => windows nested
        }
    }
    rep.fractions.resize(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i)
        rep.fractions[i] = double(rep.counts[i]) / double(rep.total);
    for (std::size_t i = 1; i < eps.size(); ++i)
        if (rep.counts[i] > rep.counts[i - 1])
            fail(errc::measurement_bug, "sublevel measure is not monotone in the scale");
    detail::fit_decay(rep);
    return rep;
}

// Exact merge of sublevel statistics from several curves (same eps list and
// alpha), followed by a refit of the decay exponent.
inline decay_report merge_decay(const std::vector<decay_report>& parts) {
    if (parts.empty()) fail(errc::invalid_parameter, "nothing to merge");
    decay_report rep = parts.front();
    for (std::size_t k = 1; k < parts.size(); ++k) {
        const decay_report& q = parts[k];
        if (q.eps != rep.eps || q.alpha != rep.alpha)
            fail(errc::invalid_parameter, "sublevel reports have mismatched scales");
        for (std::size_t i = 0; i < rep.counts.size(); ++i) rep.counts[i] += q.counts[i];
        rep.total += q.total;
    }
    for (std::size_t i = 0; i < rep.eps.size(); ++i)
        rep.fractions[i] = double(rep.counts[i]) / double(rep.total);
    detail::fit_decay(rep);
    return rep;
}

} // namespace viana
