#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <set>

#include "viana/grid.hpp"

using namespace viana;

TEST_CASE("grid angles are the exact fractions (iP + s)/(MP)", "[grid]") {
    const std::size_t m = 64;
    for (std::size_t i : {std::size_t{0}, std::size_t{1}, std::size_t{33}, std::size_t{63}}) {
        const exact_angle a = grid_angle(i, m);
        CHECK(std::uint64_t(a.den / grid_cofactor_prime) == m);
        CHECK(std::uint64_t(a.num % grid_cofactor_prime) == 1);
        CHECK(std::uint64_t(a.num / grid_cofactor_prime) == i);
        // double value agrees with the naive formula to the last bit
        const double expect = (double(i) * double(grid_cofactor_prime) + 1.0) /
                              (double(m) * double(grid_cofactor_prime));
        CHECK(angle_value(a) == Catch::Approx(expect).margin(1e-15));
        CHECK(angle_value(a) >= 0.0);
        CHECK(angle_value(a) < 1.0);
    }
    CHECK_THROWS_AS(grid_angle(64, 64), error);
    CHECK_THROWS_AS(grid_angle(0, 0), error);
    CHECK_THROWS_AS(grid_angle(0, 8, grid_cofactor_prime, 0), error);
    CHECK_THROWS_AS(grid_angle(0, 8, grid_cofactor_prime, grid_cofactor_prime), error);
}

TEST_CASE("advance doubles the angle modulo one, exactly", "[grid]") {
    exact_angle a = grid_angle(5, 16);
    double approx = angle_value(a);
    for (int step = 0; step < 30; ++step) {
        a = advance(a, 2);
        approx = approx * 2.0;
        approx -= std::floor(approx);
        // each doubling costs the double shadow one bit; 30 keep ~23 bits
        CHECK(angle_value(a) == Catch::Approx(approx).margin(1e-6));
        CHECK(a.num < a.den);
    }
}

TEST_CASE("element index equals floor(theta d^n) for exact angles", "[grid]") {
    const std::size_t m = 256;
    for (std::size_t i = 0; i < m; i += 7) {
        const exact_angle a = grid_angle(i, m);
        for (unsigned n : {1u, 3u, 6u, 8u}) {
            const std::uint64_t j = element_index(a, 2, n);
            // containment: j/2^n <= theta < (j+1)/2^n via integer cross-products
            const uint128 scale = uint128(1) << n;
            CHECK(uint128(j) * a.den <= a.num * scale);
            CHECK(a.num * scale < uint128(j + 1) * a.den);
        }
    }
}

TEST_CASE("partition elements of consecutive grid points form contiguous runs", "[grid]") {
    // at level n <= log2(M/4), grid point i lies in element floor(i 2^n / M)
    // (the offset term s/(MP) never crosses an element boundary)
    const std::size_t m = 1024;
    for (unsigned n : {1u, 4u, 8u}) {
        for (std::size_t i = 0; i < m; ++i) {
            const std::uint64_t expect = std::uint64_t((uint128(i) << n) / m);
            CHECK(element_index(grid_angle(i, m), 2, n) == expect);
        }
    }
}

TEST_CASE("inverse-branch preimages land back in their element", "[grid]") {
    const std::size_t m = 128;
    const partition_element elem{5, 19};
    for (std::size_t i = 0; i < m; i += 11) {
        exact_angle a = preimage_angle(i, m, elem, 2);
        CHECK(element_index(a, 2, elem.level) == elem.index);
        // after `level` base steps the preimage returns to the grid angle
        for (unsigned k = 0; k < elem.level; ++k) a = advance(a, 2);
        const exact_angle u = grid_angle(i, m);
        CHECK(a.num * u.den == u.num * a.den);
    }
    CHECK_THROWS_AS(preimage_angle(0, m, partition_element{3, 8}, 2), error);
}

TEST_CASE("element bounds order correctly and validation rejects bad indices", "[grid]") {
    const partition_element e{4, 9};
    CHECK(element_lo(e, 2) == Catch::Approx(9.0 / 16.0));
    CHECK(element_hi(e, 2) == Catch::Approx(10.0 / 16.0));
    CHECK_NOTHROW(validate_element(e, 2));
    CHECK_THROWS_AS(validate_element(partition_element{4, 16}, 2), error);
    CHECK_THROWS_AS(validate_element(partition_element{0, 1}, 2), error);
    CHECK_THROWS_AS(validate_element(e, 1), error);
    // deep levels overflow the exact representation and must say so
    CHECK_THROWS_AS(validate_element(partition_element{97, 0}, 2), error);
}

TEST_CASE("the grid cofactor keeps base orbits aperiodic over any horizon used", "[grid]") {
    // order of 2 modulo P exceeds 10^6 (it is in fact ~10^11); a tiny prime
    // by contrast cycles almost immediately
    CHECK(angle_order(2, grid_cofactor_prime, 1'000'000) == 1'000'001);
    CHECK(angle_order(2, 7, 100) == 3);

    // distinct grid points stay distinct after many steps
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < 32; ++i) {
        exact_angle a = grid_angle(i, 32);
        for (int k = 0; k < 60; ++k) a = advance(a, 2);
        seen.insert(std::uint64_t(a.num % grid_cofactor_prime));
    }
    CHECK(seen.size() == 32);
}
