#pragma once

#include <cmath>
#include <cstdint>

#include "viana/errors.hpp"
#include "viana/rng.hpp"

namespace viana {

// A Lebesgue-typical orbit of the base map g(theta) = d*theta mod 1.
//
// Plain double angles are base-d digit strings of finite depth: for d = 2 the
// doubling map exhausts the 52 mantissa bits and the orbit collapses to the
// fixed point 0, which silently decouples the fiber.  Long-run statistics
// therefore use an explicit digit stream: theta_0 is an (effectively) infinite
// random base-d expansion drawn from the member's RNG stream, and the orbit is
// a sliding window over its digits.  Each reported angle carries >= 53
// significant bits, so phi(theta_n) is exact to double rounding while the
// dynamical relation theta_{n+1} = d*theta_n mod 1 holds to the same depth.
class base_stream {
public:
    base_stream(std::uint64_t d, rng_stream rng) : d_(d), rng_(rng) {
        if (d < 2) fail(errc::invalid_parameter, "base degree must be >= 2");
        if (d_ == 2) {
            window_ = rng_.next_u64();
            bits_ = rng_.next_u64();
            bits_used_ = 0;
        } else {
            // enough digits that the truncated tail is below 2^-60
            width_ = 2;
            double span = static_cast<double>(d_) * static_cast<double>(d_);
            while (span < 0x1p60 && width_ < 64) {
                span *= static_cast<double>(d_);
                ++width_;
            }
            for (unsigned i = 0; i < width_; ++i) digits_[i] = draw_digit();
            head_ = 0;
            recompute();
        }
    }

    // Start from a prescribed angle: the window holds theta0's leading base-d
    // digits, so theta() reproduces theta0 to double rounding, and the stream
    // continues past its mantissa with fresh random digits.
    base_stream(std::uint64_t d, rng_stream rng, double theta0) : base_stream(d, rng) {
        if (!(theta0 >= 0.0 && theta0 < 1.0))
            fail(errc::invalid_parameter, "starting angle must lie in [0, 1)");
        if (d_ == 2) {
            const double scaled = theta0 * 0x1.0p32;
            const std::uint64_t hi = static_cast<std::uint64_t>(scaled);
            const std::uint64_t lo =
                static_cast<std::uint64_t>((scaled - static_cast<double>(hi)) * 0x1.0p32);
            window_ = (hi << 32) | lo;
        } else {
            double v = theta0;
            for (unsigned j = 0; j < width_; ++j) { // digits_[head_ + j] is the j-th digit
                v *= static_cast<double>(d_);
                const double digit = std::floor(v);
                digits_[(head_ + j) % width_] = static_cast<std::uint64_t>(digit);
                v -= digit;
            }
            recompute();
        }
    }

    double theta() const {
        if (d_ == 2) return static_cast<double>(window_ >> 11) * 0x1.0p-53;
        return value_;
    }

    void advance() {
        if (d_ == 2) {
            const std::uint64_t bit = bits_ >> 63;
            bits_ <<= 1;
            if (++bits_used_ == 64) {
                bits_ = rng_.next_u64();
                bits_used_ = 0;
            }
            window_ = (window_ << 1) | bit;
            return;
        }
        const double dd = static_cast<double>(d_);
        const std::uint64_t leaving = digits_[head_];
        const std::uint64_t entering = draw_digit();
        digits_[head_] = entering;
        head_ = (head_ + 1) % width_;
        value_ = value_ * dd - static_cast<double>(leaving) + static_cast<double>(entering) * tail_scale_;
        if (++since_recompute_ >= 256) recompute(); // kill incremental drift
    }

private:
    std::uint64_t draw_digit() { return rng_.next_below(d_); }

    void recompute() {
        const double dd = static_cast<double>(d_);
        double v = 0.0;
        for (unsigned i = 0; i < width_; ++i)
            v = (v + static_cast<double>(digits_[(head_ + width_ - 1 - i) % width_])) / dd;
        value_ = v;
        tail_scale_ = 1.0;
        for (unsigned i = 0; i < width_; ++i) tail_scale_ /= dd;
        since_recompute_ = 0;
    }

    std::uint64_t d_;
    rng_stream rng_;
    // d == 2 path
    std::uint64_t window_ = 0;
    std::uint64_t bits_ = 0;
    unsigned bits_used_ = 0;
    // general path
    std::uint64_t digits_[64] = {};
    unsigned width_ = 0;
    unsigned head_ = 0;
    double value_ = 0.0;
    double tail_scale_ = 0.0;
    unsigned since_recompute_ = 0;
};

} // namespace viana
