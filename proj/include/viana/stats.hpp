#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "viana/errors.hpp"
#include "viana/numeric.hpp"

namespace viana {

struct mean_stderr {
    double mean = 0.0;
    double stderr_ = 0.0; // standard error of the mean
    std::size_t n = 0;
};

inline mean_stderr summarize(const std::vector<double>& v) {
    mean_stderr r;
    r.n = v.size();
    if (v.empty()) return r;
    kahan_sum s;
    for (double x : v) s += x;
    r.mean = s.value() / static_cast<double>(v.size());
    if (v.size() > 1) {
        kahan_sum q;
        for (double x : v) q += (x - r.mean) * (x - r.mean);
        const double var = q.value() / static_cast<double>(v.size() - 1);
        r.stderr_ = std::sqrt(var / static_cast<double>(v.size()));
    }
    return r;
}

// empirical quantile with linear interpolation, q in [0,1]
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) fail(errc::measurement_bug, "quantile of empty sample");
    std::sort(v.begin(), v.end());
    if (q <= 0.0) return v.front();
    if (q >= 1.0) return v.back();
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

struct linear_fit_result {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 1.0;
};

// ordinary least squares y ~ intercept + slope * x
inline linear_fit_result linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        fail(errc::measurement_bug, "linear_fit needs >= 2 matched points");
    const std::size_t n = x.size();
    kahan_sum sx, sy;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx.value() / static_cast<double>(n);
    const double my = sy.value() / static_cast<double>(n);
    kahan_sum sxx, sxy, syy;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx.value() <= 0.0) fail(errc::measurement_bug, "linear_fit: degenerate abscissae");
    linear_fit_result r;
    r.slope = sxy.value() / sxx.value();
    r.intercept = my - r.slope * mx;
    if (syy.value() > 0.0) {
        kahan_sum ss;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = y[i] - (r.intercept + r.slope * x[i]);
            ss += e * e;
        }
        r.r2 = 1.0 - ss.value() / syy.value();
    }
    return r;
}

// mean after removing the `trim` fraction from EACH tail
inline double trimmed_mean(std::vector<double> v, double trim) {
    if (v.empty()) fail(errc::measurement_bug, "trimmed_mean of empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t k = static_cast<std::size_t>(trim * static_cast<double>(v.size()));
    kahan_sum s;
    std::size_t cnt = 0;
    for (std::size_t i = k; i + k < v.size(); ++i) {
        s += v[i];
        ++cnt;
    }
    if (cnt == 0) fail(errc::measurement_bug, "trimmed_mean: trim too large");
    return s.value() / static_cast<double>(cnt);
}

// minimum after discarding the lowest `trim` fraction (used for a.e.-style
// statements, which are asserted off a 1% trimmed envelope)
inline double trimmed_min(std::vector<double> v, double trim) {
    if (v.empty()) fail(errc::measurement_bug, "trimmed_min of empty sample");
    std::sort(v.begin(), v.end());
    std::size_t k = static_cast<std::size_t>(trim * static_cast<double>(v.size()));
    if (k >= v.size()) k = v.size() - 1;
    return v[k];
}

} // namespace viana
