#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "viana/errors.hpp"

namespace viana {

inline constexpr double two_pi = 6.283185307179586476925286766559;

// Real trigonometric polynomial
//   phi(theta) = sum_{m>=1} cos_c[m-1] cos(2 pi m theta) + sin_c[m-1] sin(2 pi m theta)
// The coupling function of the skew product.  Must be non-constant with
// sup |phi| <= 1 (validated against a dense grid).
class fourier_series {
public:
    fourier_series() : fourier_series({}, {1.0}) {} // default: sin(2 pi theta)

    fourier_series(std::vector<double> cos_c, std::vector<double> sin_c)
        : cos_(std::move(cos_c)), sin_(std::move(sin_c)) {
        while (!cos_.empty() && cos_.back() == 0.0) cos_.pop_back();
        while (!sin_.empty() && sin_.back() == 0.0) sin_.pop_back();
    }

    const std::vector<double>& cos_coeffs() const { return cos_; }
    const std::vector<double>& sin_coeffs() const { return sin_; }

    std::size_t max_harmonic() const { return std::max(cos_.size(), sin_.size()); }

    bool is_constant() const {
        for (double c : cos_)
            if (c != 0.0) return false;
        for (double s : sin_)
            if (s != 0.0) return false;
        return true;
    }

    // evaluate the order-th derivative at theta (order 0 = phi itself)
    double eval(double theta, unsigned order = 0) const {
        double acc = 0.0;
        const std::size_t h = max_harmonic();
        for (std::size_t m = 1; m <= h; ++m) {
            double a = m <= cos_.size() ? cos_[m - 1] : 0.0;
            double b = m <= sin_.size() ? sin_[m - 1] : 0.0;
            if (a == 0.0 && b == 0.0) continue;
            const double w = two_pi * static_cast<double>(m);
            // each derivative maps (a, b) -> w * (b, -a)
            for (unsigned r = 0; r < order; ++r) {
                const double na = w * b;
                const double nb = -w * a;
                a = na;
                b = nb;
            }
            const double arg = w * theta;
            acc += a * std::cos(arg) + b * std::sin(arg);
        }
        return acc;
    }

    // upper bound on sup |phi^(order)| via the coefficient l1 norm
    double sup_bound(unsigned order = 0) const {
        double acc = 0.0;
        const std::size_t h = max_harmonic();
        for (std::size_t m = 1; m <= h; ++m) {
            const double a = m <= cos_.size() ? cos_[m - 1] : 0.0;
            const double b = m <= sin_.size() ? sin_[m - 1] : 0.0;
            acc += std::pow(two_pi * static_cast<double>(m), order) * (std::abs(a) + std::abs(b));
        }
        return acc;
    }

    // grid estimate of sup |phi| (used by parameter validation)
    double sup_on_grid(std::size_t n = 1u << 14) const {
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = std::abs(eval(static_cast<double>(i) / static_cast<double>(n)));
            if (v > best) best = v;
        }
        return best;
    }

    bool harmonic_nonzero(std::size_t m) const {
        const double a = (m >= 1 && m <= cos_.size()) ? cos_[m - 1] : 0.0;
        const double b = (m >= 1 && m <= sin_.size()) ? sin_[m - 1] : 0.0;
        return a != 0.0 || b != 0.0;
    }

    // complex Fourier coefficient c_m = (a_m - i b_m)/2 for m >= 1
    std::pair<double, double> complex_coeff(std::size_t m) const {
        const double a = (m >= 1 && m <= cos_.size()) ? cos_[m - 1] : 0.0;
        const double b = (m >= 1 && m <= sin_.size()) ? sin_[m - 1] : 0.0;
        return {a / 2.0, -b / 2.0};
    }

    // smallest N >= 1 such that phi is NOT invariant under theta -> theta + d^-N,
    // i.e. some nonzero harmonic m is not divisible by d^N
    unsigned periodicity_depth(std::uint64_t d) const {
        if (is_constant()) fail(errc::degenerate_parameter, "phi is constant");
        for (unsigned n = 1;; ++n) {
            std::uint64_t dn = 1;
            for (unsigned k = 0; k < n; ++k) dn *= d;
            for (std::size_t m = 1; m <= max_harmonic(); ++m)
                if (harmonic_nonzero(m) && m % dn != 0) return n;
        }
    }

    // smallest m with c_m != 0 and d^N0 not dividing m
    std::size_t minimal_witness_harmonic(std::uint64_t d) const {
        const unsigned n0 = periodicity_depth(d);
        std::uint64_t dn = 1;
        for (unsigned k = 0; k < n0; ++k) dn *= d;
        for (std::size_t m = 1; m <= max_harmonic(); ++m)
            if (harmonic_nonzero(m) && m % dn != 0) return m;
        fail(errc::degenerate_parameter, "no witness harmonic");
    }

private:
    std::vector<double> cos_;
    std::vector<double> sin_;
};

} // namespace viana
