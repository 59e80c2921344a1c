// Return detection, depth codes, escape/bad-set/growth statistics, large
// deviations, strip expansion, separation, and checkpointing.
#include <catch2/catch_amalgamated.hpp>

#include <viana/curves.hpp>
#include <viana/params.hpp>
#include <viana/recurrence.hpp>
#include <viana/shadowing.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

using namespace viana;

namespace {

// A synthetic record: return times and per-return dyadic codes chosen by hand.
return_record make_record(std::uint64_t theta_index, std::uint32_t n_steps,
                          const std::vector<std::pair<std::uint32_t, std::int32_t>>& returns,
                          std::uint32_t resolved_to = 30) {
    return_record r;
    r.theta_index = theta_index;
    r.n_steps = n_steps;
    r.resolved_to = resolved_to;
    r.events.push_back({0u, 1.0, 0, 0, 0.0}); // shallow start
    for (auto [n, q_hat] : returns) {
        return_event e;
        e.n = n;
        e.q_hat = q_hat;
        e.depth = 1e-3 * std::pow(2.0, -static_cast<double>(q_hat));
        e.q = 0; // recomputed by consumers from q_hat
        r.events.push_back(e);
    }
    return r;
}

} // namespace

TEST_CASE("dyadic depth codes are integer-exact at their boundaries") {
    const double a = 1e-3;
    // d^-q * alpha <= depth < d^-(q-1) * alpha
    CHECK(detail::depth_code_hat(a, a, 2.0) == 0);
    CHECK(detail::depth_code_hat(a * 0.9999, a, 2.0) == 1);
    CHECK(detail::depth_code_hat(a / 2.0, a, 2.0) == 1);
    CHECK(detail::depth_code_hat(a / 2.0 * (1.0 - 1e-14), a, 2.0) == 2);
    CHECK(detail::depth_code_hat(a / 4.0, a, 2.0) == 2);
    CHECK(detail::depth_code_hat(2.0 * a, a, 2.0) == -1);
    CHECK(detail::depth_code_hat(3.9 * a, a, 2.0) == -1);
    CHECK(detail::depth_code_hat(4.0 * a, a, 2.0) == -2);

    // exact critical hit is deeper than any finite code
    CHECK(detail::depth_code_hat(0.0, a, 2.0) == (1 << 20));
    // no strip at alpha = 0: every positive depth is shallow
    CHECK(detail::depth_code_hat(0.25, 0.0, 2.0) == 0);

    // thresholded code: q = q_hat iff d^-(q_hat-1) < eps1; with eps1 = 1e-2
    // and d = 2 the smallest surviving code is 8 (2^-7 < 1e-2 <= 2^-6)
    CHECK(detail::depth_code(7, 2.0, 1e-2) == 0);
    CHECK(detail::depth_code(8, 2.0, 1e-2) == 8);
    CHECK(detail::depth_code(12, 2.0, 1e-2) == 12);
    CHECK(detail::depth_code(0, 2.0, 1e-2) == 0);
    CHECK(detail::depth_code(-3, 2.0, 1e-2) == 0);
    CHECK(detail::depth_code(1 << 20, 2.0, 1e-2) == (1 << 20));

    // reliable level: deepest n with d^n <= m / 4
    CHECK(detail::reliable_level(256, 2) == 6);
    CHECK(detail::reliable_level(255, 2) == 5);
    CHECK(detail::reliable_level(1u << 16, 2) == 14);
    CHECK(detail::reliable_level(81 * 4, 3) == 4);
}

TEST_CASE("return scan matches a from-scratch replay of its definition") {
    const auto p = standard_parameter_set(1e-2);
    const std::size_t m = 256;
    const std::uint32_t n_max = 6;
    const partition_element elem{2, 1};
    const auto curve = propagate(p, elem, 0.5, m);

    detect_options opt;
    opt.eps1 = 1e-2;
    const auto scan = detect_returns(curve, p, n_max, opt);
    REQUIRE(scan.records.size() == m);
    REQUIRE(scan.resolved_to == 6);
    CHECK(scan.strip == std::pow(p.alpha, 0.6));

    // Replay: every grid point advances by exact numerator doubling modulo
    // m * P, x moves by the skew map, and a return at step n means the
    // minimum of |x| over the point's level-n partition element lies inside
    // the strip.  Accumulations run in the same per-point order, so every
    // recorded quantity must match bitwise.
    std::vector<double> x(curve.values);
    std::vector<uint128> num(m);
    const uint128 den = static_cast<uint128>(m) * curve.cofactor;
    const double den_d = static_cast<double>(den);
    for (std::size_t i = 0; i < m; ++i)
        num[i] = static_cast<uint128>(i) * curve.cofactor + curve.offset;
    std::vector<double> lt(m, 0.0), lv(m, 0.0);
    std::vector<std::size_t> n_events(m, 1);

    for (std::size_t i = 0; i < m; ++i) {
        const auto& e0 = scan.records[i].events.at(0);
        CHECK(e0.n == 0);
        CHECK(e0.depth == std::abs(curve.values[i]));
        CHECK(e0.q_hat == detail::depth_code_hat(e0.depth, p.alpha, 2.0));
        CHECK(e0.q == detail::depth_code(e0.q_hat, 2.0, opt.eps1));
    }

    for (std::uint32_t n = 1; n <= n_max; ++n) {
        for (std::size_t i = 0; i < m; ++i) {
            const double xv = x[i];
            const double ax = std::abs(xv);
            REQUIRE(xv != 0.0);
            const double l = std::log(2.0 * ax);
            lv[i] += l;
            lt[i] += (ax >= p.alpha) ? l : std::log(2.0 * p.alpha);
            const double theta = static_cast<double>(num[i]) / den_d;
            x[i] = p.f(xv) + p.alpha * p.phi.eval(theta);
            uint128 nn = num[i] * p.d;
            while (nn >= den) nn -= den;
            num[i] = nn;
        }
        const std::uint64_t dn = std::uint64_t{1} << n;
        std::size_t run_begin = 0;
        while (run_begin < m) {
            const std::uint64_t j = static_cast<std::uint64_t>(run_begin) * dn / m;
            std::size_t run_end = static_cast<std::size_t>((((j + 1) * m) + dn - 1) / dn);
            if (run_end > m) run_end = m;
            double run_min = std::abs(x[run_begin]);
            for (std::size_t i = run_begin + 1; i < run_end; ++i)
                run_min = std::min(run_min, std::abs(x[i]));
            if (run_min <= scan.strip) {
                for (std::size_t i = run_begin; i < run_end; ++i) {
                    const auto& r = scan.records[i];
                    REQUIRE(r.events.size() > n_events[i]);
                    const auto& e = r.events[n_events[i]];
                    CHECK(e.n == n);
                    CHECK(e.depth == std::abs(x[i]));
                    CHECK(e.q_hat == detail::depth_code_hat(e.depth, p.alpha, 2.0));
                    CHECK(e.q == detail::depth_code(e.q_hat, 2.0, opt.eps1));
                    CHECK(e.log_trunc == lt[i]);
                    ++n_events[i];
                }
            } else {
                // negative check: nobody in this run recorded an event at n
                for (std::size_t i = run_begin; i < run_end; ++i) {
                    const auto& r = scan.records[i];
                    if (r.events.size() > n_events[i]) CHECK(r.events[n_events[i]].n != n);
                }
            }
            run_begin = run_end;
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        CHECK(scan.records[i].events.size() == n_events[i]);
        CHECK(scan.records[i].log_trunc_final == lt[i]);
        CHECK(scan.records[i].log_v_final == lv[i]);
    }
}

TEST_CASE("record stride keeps every stride-th record unchanged") {
    const auto p = standard_parameter_set(1e-2);
    const auto curve = propagate(p, partition_element{2, 1}, 0.5, 256);
    const auto full = detect_returns(curve, p, 6);
    detect_options opt;
    opt.record_stride = 4;
    const auto strided = detect_returns(curve, p, 6, opt);
    REQUIRE(strided.records.size() == 64);
    for (std::size_t r = 0; r < strided.records.size(); ++r) {
        const auto& a = strided.records[r];
        const auto& b = full.records[4 * r];
        CHECK(a.theta_index == b.theta_index);
        REQUIRE(a.events.size() == b.events.size());
        for (std::size_t k = 0; k < a.events.size(); ++k) {
            CHECK(a.events[k].n == b.events[k].n);
            CHECK(a.events[k].depth == b.events[k].depth);
            CHECK(a.events[k].log_trunc == b.events[k].log_trunc);
        }
        CHECK(a.log_trunc_final == b.log_trunc_final);
        CHECK(a.log_v_final == b.log_v_final);
    }
}

TEST_CASE("scan refuses depths past the reliable level unless overridden") {
    const auto p = standard_parameter_set(1e-2);
    const auto curve = propagate(p, partition_element{2, 1}, 0.5, 256);
    CHECK_THROWS_AS(detect_returns(curve, p, 7), error);
    try {
        detect_returns(curve, p, 7);
    } catch (const error& e) {
        CHECK(e.code() == errc::resolution_exhausted);
    }

    detect_options opt;
    opt.allow_underresolved = true;
    const auto scan = detect_returns(curve, p, 9, opt);
    CHECK(scan.resolved_to == 6);
    CHECK(scan.n_max == 9);
    for (const auto& r : scan.records) {
        CHECK(r.resolved_to == 6);
        CHECK(r.n_steps == 9);
    }
}

TEST_CASE("scan rejects malformed requests") {
    const auto p = standard_parameter_set(1e-2);
    const auto curve = propagate(p, partition_element{2, 1}, 0.5, 256);
    CHECK_THROWS_AS(detect_returns(curve, p, 0), error);

    detect_options bad_stride;
    bad_stride.record_stride = 0;
    CHECK_THROWS_AS(detect_returns(curve, p, 4, bad_stride), error);

    detect_options bad_eps;
    bad_eps.eps1 = 1.0;
    CHECK_THROWS_AS(detect_returns(curve, p, 4, bad_eps), error);
    bad_eps.eps1 = 0.0;
    CHECK_THROWS_AS(detect_returns(curve, p, 4, bad_eps), error);

    // curve propagated under other parameters is rejected
    const auto q = standard_parameter_set(1e-3);
    CHECK_THROWS_AS(detect_returns(curve, q, 4), error);

    sampled_curve empty;
    empty.d = p.d;
    empty.alpha = p.alpha;
    CHECK_THROWS_AS(detect_returns(empty, p, 4), error);
}

TEST_CASE("returns are spaced by at least the recovery time") {
    const auto p = standard_parameter_set(1e-3);
    const std::size_t n_alpha = build_chain(p).n_alpha;
    REQUIRE(n_alpha == 5);

    const auto curve = propagate(p, partition_element{7, 11}, 0.5, 4096);
    detect_options opt;
    opt.allow_underresolved = true;
    opt.record_stride = 8;
    const auto scan = detect_returns(curve, p, 40, opt);

    std::size_t total_returns = 0;
    for (const auto& r : scan.records) total_returns += r.events.size() - 1;
    INFO("returns seen: " << total_returns);
    const std::uint32_t gap = min_return_gap(scan.records, scan.strip);
    CHECK((gap == 0 || gap >= n_alpha));

    // the truncated product dominates the true one factor by factor
    for (const auto& r : scan.records) {
        if (r.log_v_final == -std::numeric_limits<double>::infinity()) continue;
        CHECK(r.log_trunc_final >= r.log_v_final - 1e-9);
        const auto cm = lower_bound_chain_margin(r, p, opt.eps1);
        CHECK_FALSE(cm.critical);
        CHECK(cm.margin >= -1e-9);
    }
}

TEST_CASE("minimum return gap counts the start only when it sits in the strip") {
    std::vector<return_record> recs;
    // start outside the strip (depth 1.0), returns at 7 and 10
    recs.push_back(make_record(0, 20, {{7, 8}, {10, 8}}));
    CHECK(min_return_gap(recs, 0.5) == 3);
    // a start inside the strip makes the 0 -> 7 gap eligible
    recs[0].events[0].depth = 0.4;
    CHECK(min_return_gap(recs, 0.5) == 3);
    recs[0].events[1].n = 2;
    CHECK(min_return_gap(recs, 0.5) == 2);
    // a single return yields no gap at all
    std::vector<return_record> lone;
    lone.push_back(make_record(0, 20, {{7, 8}}));
    CHECK(min_return_gap(lone, 0.5) == 0);
}

TEST_CASE("scan without coupling never re-enters the empty strip") {
    const auto p = standard_parameter_set(0.0);
    const auto curve = propagate(p, partition_element{2, 1}, 0.5, 256);
    const auto scan = detect_returns(curve, p, 6);
    CHECK(scan.strip == 0.0);
    for (const auto& r : scan.records) {
        REQUIRE(r.events.size() == 1);     // only the start
        CHECK(r.events[0].q_hat == 0);     // positive depth, no strip
        CHECK(r.events[0].q == 0);
        // without truncation the two cocycles coincide
        if (r.log_v_final != -std::numeric_limits<double>::infinity())
            CHECK(r.log_trunc_final == r.log_v_final);
    }
}

TEST_CASE("escape fraction on synthetic uniform elements") {
    const auto p = standard_parameter_set(1e-2);
    const std::size_t n_alpha = build_chain(p).n_alpha;
    REQUIRE(n_alpha == 1);
    const unsigned m_window = 1; // window = n_alpha + m_window = 2

    std::vector<return_record> recs;
    for (std::uint64_t i = 0; i < 8; ++i)
        recs.push_back(make_record(i, 12, {{2, 8}, {4, 8}})); // next return within 2
    CHECK(escape_fraction(recs, p, m_window, 2, 1) == 1.0);

    for (std::uint64_t i = 0; i < 8; ++i)
        recs[i].events[2].n = 10; // next return far outside the window
    CHECK(escape_fraction(recs, p, m_window, 2, 1) == 0.0);

    recs[3].events.pop_back(); // no second return at all is also an escape
    CHECK(escape_fraction(recs, p, m_window, 2, 1) == 0.0);

    // half return quickly (index 3 has no second return and stays an escape)
    for (std::uint64_t i : {0u, 1u, 2u, 4u}) recs[i].events[2].n = 4;
    CHECK(escape_fraction(recs, p, m_window, 2, 1) == 0.5);

    CHECK_THROWS_AS(escape_fraction(recs, p, m_window, 2, 0), error);
    CHECK_THROWS_AS(escape_fraction({}, p, m_window, 2, 1), error);

    // mixed first-return time breaks uniformity
    recs[5].events[1].n = 3;
    CHECK_THROWS_AS(escape_fraction(recs, p, m_window, 2, 1), error);
    recs[5].events[1].n = 2;

    // a censored window (time budget ends before level + window) is an error
    recs[6].n_steps = 3;
    CHECK_THROWS_AS(escape_fraction(recs, p, m_window, 2, 1), error);
}

TEST_CASE("escape survey keeps only uniform, fully sampled, resolved cells") {
    const auto p = standard_parameter_set(1e-2);
    const unsigned m_window = 1; // window = 2

    return_scan scan;
    scan.grid_size = 64;
    scan.record_stride = 1;
    scan.d = 2;
    scan.alpha = p.alpha;
    scan.strip = std::pow(p.alpha, 0.6);
    scan.n_max = 12;
    scan.resolved_to = 3;

    // every point returns first at n = 2 (level-2 elements hold 16 points);
    // elements 0 and 1 return quickly, elements 2 and 3 escape
    for (std::uint64_t i = 0; i < 64; ++i) {
        const bool quick = i < 32;
        scan.records.push_back(
            make_record(i, 12, quick ? std::vector<std::pair<std::uint32_t, std::int32_t>>{{2, 8}, {4, 8}}
                                     : std::vector<std::pair<std::uint32_t, std::int32_t>>{{2, 8}, {10, 8}},
                        3));
    }

    auto cells = escape_survey(scan, p, m_window, 1, 4);
    REQUIRE(cells.size() == 4);
    for (const auto& c : cells) {
        CHECK(c.level == 2);
        CHECK(c.points == 16);
        CHECK(c.fraction == (c.element < 2 ? 1.0 : 0.0));
    }

    // min_points above the population drops every cell
    CHECK(escape_survey(scan, p, m_window, 1, 17).empty());

    // one deviant first-return time breaks its element's uniform population
    scan.records[5].events[1].n = 3;
    cells = escape_survey(scan, p, m_window, 1, 4);
    CHECK(cells.size() == 3);
    for (const auto& c : cells) CHECK(c.element != 0);
    scan.records[5].events[1].n = 2;

    // returns past the reliable level are skipped, not guessed
    for (auto& r : scan.records) r.events[1].n = 4; // level 4 > resolved_to 3
    CHECK(escape_survey(scan, p, m_window, 1, 4).empty());
    for (auto& r : scan.records) r.events[1].n = 2;

    // censored window: n_steps < level + window
    for (auto& r : scan.records) r.n_steps = 3;
    CHECK(escape_survey(scan, p, m_window, 1, 4).empty());

    CHECK_THROWS_AS(escape_survey(scan, p, m_window, 0, 4), error);
}

TEST_CASE("bad-set decay recovers an exact geometric law") {
    const auto p = standard_parameter_set(1e-2);
    const unsigned m_window = 1; // window = 2, so the k-th return must land by 2k

    // 48 records with one quick return, 12 with two, 4 with three, 36 with none:
    // fractions 0.64, 0.16, 0.04 and ratio exactly 1/4
    std::vector<return_record> recs;
    std::uint64_t idx = 0;
    auto add = [&](int copies, std::vector<std::pair<std::uint32_t, std::int32_t>> evs) {
        for (int c = 0; c < copies; ++c) recs.push_back(make_record(idx++, 100, evs));
    };
    add(48, {{1, 8}});
    add(12, {{1, 8}, {2, 8}});
    add(4, {{1, 8}, {2, 8}, {3, 8}});
    add(36, {});

    const auto rep = bad_set_decay(recs, p, m_window, 3);
    REQUIRE(rep.fractions.size() == 3);
    CHECK(rep.fractions[0] == Catch::Approx(0.64).epsilon(1e-12));
    CHECK(rep.fractions[1] == Catch::Approx(0.16).epsilon(1e-12));
    CHECK(rep.fractions[2] == Catch::Approx(0.04).epsilon(1e-12));
    CHECK(rep.fit_points == 3);
    CHECK(rep.r_hat == Catch::Approx(0.25).epsilon(1e-9));
    CHECK(rep.total == 100);

    CHECK_THROWS_AS(bad_set_decay(recs, p, m_window, 0), error);
    CHECK_THROWS_AS(bad_set_decay({}, p, m_window, 3), error);

    // records shorter than window * k_max cannot resolve the statistic
    auto short_recs = recs;
    short_recs[0].n_steps = 5;
    CHECK_THROWS_AS(bad_set_decay(short_recs, p, m_window, 3), error);

    // growing fractions signal broken bookkeeping: first return misses the
    // k = 1 deadline (n = 3 > 2) but the second meets k = 2 (n = 4 <= 4)
    std::vector<return_record> grow;
    idx = 0;
    for (int c = 0; c < 50; ++c) grow.push_back(make_record(idx++, 100, {{3, 8}, {4, 8}}));
    for (int c = 0; c < 50; ++c) grow.push_back(make_record(idx++, 100, {}));
    CHECK_THROWS_AS(bad_set_decay(grow, p, m_window, 2), error);
}

TEST_CASE("truncated growth envelope and its failure modes") {
    const auto p = standard_parameter_set(1e-2);
    const std::uint32_t n = 50;

    std::vector<return_record> recs;
    for (std::uint64_t i = 0; i < 100; ++i) {
        auto r = make_record(i, n, {});
        r.log_trunc_final = 0.3 * static_cast<double>(n) + 0.001 * static_cast<double>(i);
        recs.push_back(r);
    }
    auto rep = truncated_growth(recs, p, 1, 0.01);
    CHECK(rep.n == n);
    CHECK(rep.total == 100);
    CHECK(rep.frac_nonpositive == 0.0);
    // trimmed min discards the single lowest of 100 points
    CHECK(rep.envelope == Catch::Approx(0.3 + 0.001 / n).epsilon(1e-12));
    CHECK(rep.lambda1_hat ==
          Catch::Approx(std::exp(rep.envelope * static_cast<double>(rep.n_alpha))).epsilon(1e-12));

    // one bad point in a hundred sits inside the 1% allowance
    recs[7].log_trunc_final = -2.0;
    rep = truncated_growth(recs, p, 1, 0.01);
    CHECK(rep.frac_nonpositive == Catch::Approx(0.01));
    CHECK(rep.envelope > 0.0);

    // two bad points exceed it
    recs[8].log_trunc_final = -2.0;
    CHECK_THROWS_AS(truncated_growth(recs, p, 1, 0.01), error);
    try {
        truncated_growth(recs, p, 1, 0.01);
    } catch (const error& e) {
        CHECK(e.code() == errc::growth_violated);
    }

    recs[8].log_trunc_final = 1.0;
    recs[7].log_trunc_final = 1.0;
    recs[3].n_steps = n + 1;
    CHECK_THROWS_AS(truncated_growth(recs, p, 1, 0.01), error); // mixed lengths
    recs[3].n_steps = n;
    CHECK_THROWS_AS(truncated_growth(recs, p, 0, 0.01), error); // empty window
    CHECK_THROWS_AS(truncated_growth({}, p, 1, 0.01), error);
}

TEST_CASE("large-deviation measures on planted depth codes") {
    const auto p = standard_parameter_set(1e-2);
    const double eps1 = 1e-2; // smallest surviving code is 8

    // 1 record with four deep returns, 9 with one deep then three shallow,
    // 90 with all shallow; threshold c = 8 keeps 10% at K = 1, 1% at K = 4
    std::vector<return_record> recs;
    std::uint64_t idx = 0;
    auto add = [&](int copies, std::vector<std::pair<std::uint32_t, std::int32_t>> evs) {
        for (int c = 0; c < copies; ++c) recs.push_back(make_record(idx++, 100, evs));
    };
    add(1, {{5, 8}, {10, 8}, {15, 8}, {20, 8}});
    add(9, {{5, 8}, {10, 0}, {15, 0}, {20, 0}});
    add(90, {{5, 0}, {10, 0}, {15, 0}, {20, 0}});

    auto rep = depth_codes_and_large_deviation(recs, p, eps1, {4, 1}, 8.0);
    REQUIRE(rep.k_list == std::vector<unsigned>{1, 4}); // sorted on entry
    CHECK(rep.measures[0] == Catch::Approx(0.10).epsilon(1e-12));
    CHECK(rep.measures[1] == Catch::Approx(0.01).epsilon(1e-12));
    CHECK(rep.fit_points == 2);
    // slope against sqrt(K): (log 0.01 - log 0.1) / (2 - 1)
    CHECK(rep.slope == Catch::Approx(-std::log(10.0)).epsilon(1e-12));
    CHECK(rep.delta == Catch::Approx(std::log(1.0 / eps1) / std::log(2.0)).epsilon(1e-12));

    // a threshold no record reaches: all measures zero, no fit, no error
    rep = depth_codes_and_large_deviation(recs, p, eps1, {1, 4}, 1e9);
    CHECK(rep.measures == std::vector<double>{0.0, 0.0});
    CHECK(rep.fit_points == 0);
    CHECK(rep.slope == 0.0);

    // K past the recorded horizon contributes nothing (under-count)
    rep = depth_codes_and_large_deviation(recs, p, eps1, {16}, 8.0);
    CHECK(rep.measures[0] == 0.0);

    // K = 0 compares the empty sum against 0 and always succeeds
    rep = depth_codes_and_large_deviation(recs, p, eps1, {0}, 8.0);
    CHECK(rep.measures[0] == 1.0);

    // a flat profile across two K values cannot pass the decay check
    std::vector<return_record> flat;
    idx = 0;
    auto add_flat = [&](int copies, std::vector<std::pair<std::uint32_t, std::int32_t>> evs) {
        for (int c = 0; c < copies; ++c) flat.push_back(make_record(idx++, 100, evs));
    };
    add_flat(10, {{5, 8}, {10, 8}, {15, 8}, {20, 8}});
    add_flat(90, {{5, 0}, {10, 0}, {15, 0}, {20, 0}});
    CHECK_THROWS_AS(depth_codes_and_large_deviation(flat, p, eps1, {1, 4}, 8.0), error);
    try {
        depth_codes_and_large_deviation(flat, p, eps1, {1, 4}, 8.0);
    } catch (const error& e) {
        CHECK(e.code() == errc::measurement_bug);
    }

    CHECK_THROWS_AS(depth_codes_and_large_deviation(recs, p, eps1, {1}, 0.0), error);
    CHECK_THROWS_AS(depth_codes_and_large_deviation(recs, p, eps1, {1}, -2.0), error);
    CHECK_THROWS_AS(depth_codes_and_large_deviation(recs, p, 0.0, {1}, 8.0), error);
    CHECK_THROWS_AS(depth_codes_and_large_deviation(recs, p, 1.0, {1}, 8.0), error);
    CHECK_THROWS_AS(depth_codes_and_large_deviation(recs, p, eps1, {}, 8.0), error);
    CHECK_THROWS_AS(depth_codes_and_large_deviation({}, p, eps1, {1}, 8.0), error);
}

TEST_CASE("chain margin corrects the truncated cocycle by the recorded depths") {
    const auto p = standard_parameter_set(1e-2);
    const double eps1 = 1e-2;

    // hand-built bookkeeping: one deep return with code 9, one shallow
    return_record r = make_record(0, 30, {{5, 9}, {20, 3}});
    r.log_trunc_final = 4.0;
    // the correction is min(log(eps1/2), -9 log 2) for the deep return and
    // log(eps1/2) for the shallow one and the start
    const double floor_term = std::log(eps1 / 2.0);
    const double corr = std::min(floor_term, -9.0 * std::log(2.0)) + 2.0 * floor_term;
    r.log_v_final = 4.0 + corr + 0.125; // margin 0.125 by construction
    auto cm = lower_bound_chain_margin(r, p, eps1);
    CHECK_FALSE(cm.critical);
    CHECK(cm.margin == Catch::Approx(0.125).margin(1e-12));

    r.log_v_final = -std::numeric_limits<double>::infinity();
    cm = lower_bound_chain_margin(r, p, eps1);
    CHECK(cm.critical);
    CHECK(cm.margin == 0.0);
}

TEST_CASE("strip expansion reports uniform growth outside the strip") {
    const auto p0 = standard_parameter_set(0.0);
    const auto rep0 = expansion_outside_strip(p0, 400, 25, 1);
    CHECK(rep0.alpha_zero);
    CHECK(rep0.strip == 0.0);
    CHECK(rep0.segments > 0);
    CHECK(rep0.lambda_hat > 1.0);
    CHECK(rep0.k_hat > 0.0);

    const auto p = standard_parameter_set(1e-2);
    const auto rep = expansion_outside_strip(p, 400, 25, 1);
    CHECK_FALSE(rep.alpha_zero);
    CHECK(rep.strip == std::pow(1e-2, 0.6));
    CHECK(rep.lambda_hat > 1.0);
    CHECK(rep.k_hat > 0.0);
    CHECK(rep.n_used >= 3);
    // the per-length minimum envelope is what the prefactor was fitted from
    for (unsigned n = 1; n <= rep.n_used; ++n)
        if (rep.counts[n - 1] > 0)
            CHECK(rep.min_log_v[n - 1] >=
                  std::log(rep.k_hat * rep.strip) + n * std::log(rep.lambda_hat) - 1e-9);

    CHECK_THROWS_AS(expansion_outside_strip(p, 0, 25), error);
    CHECK_THROWS_AS(expansion_outside_strip(p, 400, 0), error);
}

TEST_CASE("separation profile matches its closed form for the first harmonic") {
    const auto p = standard_parameter_set(1e-3);
    const auto rep = separation_diagnostic(p, 1, std::size_t{1} << 16);

    // For the baseline forcing and a one-step shift the oscillation profile
    // is 2 |sin(2 pi theta)|, so the 1% quantile over the circle is
    // 2 sin(0.005 pi) and the reported separation is a quarter of that.
    const double eta_exact = std::sin(0.005 * two_pi / 2.0) / 2.0;
    CHECK(rep.eta_hat == Catch::Approx(eta_exact).margin(1e-4));
    CHECK(rep.eta_hat > 0.0);
    CHECK(rep.profile_sup == Catch::Approx(2.0).margin(1e-6));
    CHECK(rep.q_sup == Catch::Approx(1.0).margin(1e-6));

    // the quadrature witness must agree with the exact coefficient identity
    CHECK(rep.periodicity == 1);
    CHECK(rep.witness_harmonic == 1);
    CHECK(rep.predicted_re == 0.0);
    CHECK(rep.predicted_im == -0.5);
    CHECK(rep.witness_error <= 1e-10);
}

TEST_CASE("separation detects shift-invariant forcing and digs for a witness") {
    // phi = sin(4 pi theta) is invariant under the half shift: the one-step
    // profile vanishes identically
    const auto p = make_parameter_set(1e-3, 2, 1, 2, fourier_series({}, {0.0, 1.0}));
    CHECK(p.phi.periodicity_depth(2) == 2);
    CHECK(p.phi.minimal_witness_harmonic(2) == 2);
    CHECK_THROWS_AS(separation_diagnostic(p, 1, 1u << 12), error);
    try {
        separation_diagnostic(p, 1, 1u << 12);
    } catch (const error& e) {
        CHECK(e.code() == errc::degenerate_parameter);
    }

    // at depth 2 the shift is a quarter turn and separation reappears
    const auto rep = separation_diagnostic(p, 2, 1u << 14);
    CHECK(rep.periodicity == 2);
    CHECK(rep.witness_harmonic == 2);
    CHECK(rep.eta_hat > 0.0);
    CHECK(rep.witness_error <= 1e-10);

    CHECK_THROWS_AS(separation_diagnostic(p, 0, 1u << 12), error);
}

TEST_CASE("checkpointed scans resume to bit-identical results") {
    const auto p = standard_parameter_set(1e-2);
    const auto curve = propagate(p, partition_element{2, 1}, 0.5, 256);
    const auto full = detect_returns(curve, p, 5);

    const auto dir = std::filesystem::temp_directory_path() / "viana-scan-ckpt-test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "scan.ckpt").string();
    std::filesystem::remove(path);

    detect_options opt;
    opt.checkpoint_path = path;
    opt.checkpoint_every = 1; // dump after every step
    const auto first = detect_returns(curve, p, 5, opt);
    REQUIRE(std::filesystem::exists(path)); // dumps happen at n = 1..4

    opt.resume = true;
    const auto resumed = detect_returns(curve, p, 5, opt);

    auto same = [&](const return_scan& a, const return_scan& b) {
        REQUIRE(a.records.size() == b.records.size());
        for (std::size_t i = 0; i < a.records.size(); ++i) {
            const auto& ra = a.records[i];
            const auto& rb = b.records[i];
            CHECK(ra.theta_index == rb.theta_index);
            CHECK(ra.log_trunc_final == rb.log_trunc_final);
            CHECK(ra.log_v_final == rb.log_v_final);
            REQUIRE(ra.events.size() == rb.events.size());
            for (std::size_t k = 0; k < ra.events.size(); ++k) {
                CHECK(ra.events[k].n == rb.events[k].n);
                CHECK(ra.events[k].depth == rb.events[k].depth);
                CHECK(ra.events[k].q_hat == rb.events[k].q_hat);
                CHECK(ra.events[k].q == rb.events[k].q);
                CHECK(ra.events[k].log_trunc == rb.events[k].log_trunc);
            }
        }
    };
    same(full, first);
    same(full, resumed);

    // a checkpoint written under different scan settings is refused
    detect_options other = opt;
    other.eps1 = 0.5;
    CHECK_THROWS_AS(detect_returns(curve, p, 5, other), error);
    try {
        detect_returns(curve, p, 5, other);
    } catch (const error& e) {
        CHECK(e.code() == errc::io_error);
    }

    std::filesystem::remove(path);
    std::filesystem::remove(dir);
}
