#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#ifdef __FAST_MATH__
#error "compensated summation is broken by -ffast-math"
#endif

namespace viana {

// Kahan–Neumaier compensated accumulator.  Long Birkhoff sums of
// log-multipliers must stay reproducible to ~1e-10 relative error over 1e6
// terms, which plain double accumulation does not guarantee.
class kahan_sum {
public:
    kahan_sum() = default;
    explicit kahan_sum(double init) : sum_(init) {}

    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }

    kahan_sum& operator+=(double v) {
        add(v);
        return *this;
    }

    double value() const { return sum_ + comp_; }
    void reset() { sum_ = 0.0; comp_ = 0.0; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// A real number held as mantissa * 2^exp2.  Derivative cocycles along 1e6-step
// orbits overflow double (log |V_n| can reach ~3.5e5), so products are carried
// in this renormalized form; log_abs() stays finite and accurate.
struct scaled_real {
    double mant = 1.0;   // 0, or magnitude kept within [2^-512, 2^512)
    std::int64_t exp2 = 0;

    static scaled_real zero() { return {0.0, 0}; }
    static scaled_real one() { return {1.0, 0}; }

    static scaled_real from_double(double v) {
        scaled_real r{v, 0};
        r.normalize();
        return r;
    }

    bool is_zero() const { return mant == 0.0; }
    int sign() const { return mant > 0.0 ? 1 : (mant < 0.0 ? -1 : 0); }

    void normalize() {
        if (mant == 0.0) {
            exp2 = 0;
            return;
        }
        const double a = std::abs(mant);
        if (a >= 0x1p512 || a < 0x1p-512) {
            int e = 0;
            mant = std::frexp(mant, &e);
            exp2 += e;
        }
    }

    void mul(double v) {
        mant *= v;
        normalize();
    }

    void mul(const scaled_real& o) {
        mant *= o.mant;
        exp2 += o.exp2;
        normalize();
    }

    void add(const scaled_real& o) {
        if (o.is_zero()) return;
        if (is_zero()) {
            *this = o;
            return;
        }
        const std::int64_t de = o.exp2 - exp2;
        if (de > 1100) {
            *this = o;
        } else if (de >= -1100) {
            mant += std::ldexp(o.mant, static_cast<int>(de));
        } // else: o is negligible
        normalize();
    }

    // natural log of |value|; -inf for zero
    double log_abs() const {
        if (mant == 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(std::abs(mant)) + static_cast<double>(exp2) * 0.6931471805599453094172321215;
    }

    // value as plain double (may over/underflow to inf/0)
    double to_double() const {
        if (exp2 > 2000) return mant * std::numeric_limits<double>::infinity();
        if (exp2 < -2000) return mant * 0.0;
        return std::ldexp(mant, static_cast<int>(exp2));
    }
};

inline scaled_real operator*(scaled_real a, const scaled_real& b) {
    a.mul(b);
    return a;
}

} // namespace viana
