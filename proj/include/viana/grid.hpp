#pragma once

// Exact arithmetic for the d-adic partition of the circle and for rational
// sample grids on partition elements.
//
// The level-n partition P_n divides [0,1) into d^n half-open intervals
// [j/d^n, (j+1)/d^n).  Under theta -> d*theta mod 1 each element maps onto
// the whole circle, and the inverse branch through element (n, j) is
// tau(u) = (u + j) / d^n.
//
// Sample grids would degenerate if their angles were plain fractions i/M
// with M a power of d: after log_d(M) extra steps every such angle collapses
// to 0 and the base orbits of all grid points coincide.  To keep exact
// integer bookkeeping *and* long non-degenerate base orbits, grid angles
// carry a fixed odd-prime cofactor P in the denominator:
//
//     u_i = (i*P + s) / (M*P),   0 <= i < M,  0 < s < P.
//
// All angles live as exact fractions num/den with den = M * P * d^n, and one
// base step is num -> (num * d) mod den.  Because P is prime and coprime to
// d, the P-part of the angle never dies; the multiplicative order of d
// modulo P (~10^11 for d = 2, P = 2^43 - 57) exceeds any horizon used here,
// so grid orbits never become eventually periodic in practice.  128-bit
// integers hold every intermediate product.

#include <cstdint>
#include <vector>

#include <viana/errors.hpp>

namespace viana {

// Prime cofactor for sample-grid denominators: 2^43 - 57.
inline constexpr std::uint64_t grid_cofactor_prime = 8796093022151ULL;

using uint128 = unsigned __int128;

namespace detail {

// d^level as u128, guarding against overflow past 2^96 (ample for every
// supported grid; keeps products num * d^level inside 128 bits).
inline uint128 pow_u128(std::uint64_t d, unsigned level) {
    uint128 r = 1;
    const uint128 cap = uint128(1) << 96;
    for (unsigned i = 0; i < level; ++i) {
        r *= d;
        if (r >= cap) fail(errc::invalid_parameter, "partition level overflows exact angle arithmetic");
    }
    return r;
}

} // namespace detail

// One element [index/d^level, (index+1)/d^level) of the level partition.
struct partition_element {
    unsigned level = 0;
    std::uint64_t index = 0;
};

inline void validate_element(const partition_element& e, std::uint64_t d) {
    if (d < 2) fail(errc::invalid_parameter, "partition requires base d >= 2");
    uint128 count = detail::pow_u128(d, e.level);
    if (uint128(e.index) >= count)
        fail(errc::invalid_element, "partition index out of range for level");
}

inline double element_lo(const partition_element& e, std::uint64_t d) {
    return double(e.index) / double(detail::pow_u128(d, e.level));
}

inline double element_hi(const partition_element& e, std::uint64_t d) {
    return double(e.index + 1) / double(detail::pow_u128(d, e.level));
}

// Exact angle num/den on the circle, 0 <= num < den.
struct exact_angle {
    uint128 num = 0;
    uint128 den = 1;
};

inline double angle_value(const exact_angle& a) {
    return double(a.num) / double(a.den);
}

// One base step theta -> d*theta mod 1.
inline exact_angle advance(const exact_angle& a, std::uint64_t d) {
    return {(a.num * d) % a.den, a.den};
}

// Index of the level-n partition element containing the angle: floor(theta d^n).
inline std::uint64_t element_index(const exact_angle& a, std::uint64_t d, unsigned level) {
    uint128 scale = detail::pow_u128(d, level);
    return std::uint64_t((a.num * scale) / a.den);
}

// Grid-point angle u_i = (i*P + s) / (M*P) on the circle.
inline exact_angle grid_angle(std::size_t i, std::size_t m,
                              std::uint64_t p = grid_cofactor_prime,
                              std::uint64_t s = 1) {
    if (m == 0 || i >= m) fail(errc::invalid_parameter, "grid index out of range");
    if (s == 0 || s >= p) fail(errc::invalid_parameter, "grid offset must lie in (0, P)");
    uint128 den = uint128(m) * p;
    return {uint128(i) * p + s, den};
}

// Exact preimage of the grid angle u_i under the inverse branch through
// element (level, index): tau(u_i) = (u_i + index) / d^level, i.e.
// (i*P + s + index*M*P) / (M * P * d^level).
inline exact_angle preimage_angle(std::size_t i, std::size_t m,
                                  const partition_element& elem, std::uint64_t d,
                                  std::uint64_t p = grid_cofactor_prime,
                                  std::uint64_t s = 1) {
    validate_element(elem, d);
    exact_angle u = grid_angle(i, m, p, s);
    uint128 den = u.den * detail::pow_u128(d, elem.level);
    uint128 num = u.num + uint128(elem.index) * u.den;
    return {num, den};
}

// Number of base steps until d^t = 1 (mod p), capped at t_max.  A return
// value of t_max + 1 means "no cycle within the horizon", which is the
// healthy case; a small value warns that grid orbits repeat their P-part.
inline std::uint64_t angle_order(std::uint64_t d, std::uint64_t p, std::uint64_t t_max) {
    if (p < 3 || d < 2) fail(errc::invalid_parameter, "angle_order needs d >= 2 and odd prime p");
    std::uint64_t pw = d % p;
    for (std::uint64_t t = 1; t <= t_max; ++t) {
        if (pw == 1) return t;
        pw = std::uint64_t((uint128(pw) * d) % p);
    }
    return t_max + 1;
}

} // namespace viana
