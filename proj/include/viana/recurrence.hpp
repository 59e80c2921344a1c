#pragma once

// Return-time bookkeeping over propagated curves.
//
// A grid point of a curve re-"returns" at step n when its level-n partition
// element contains SOME sampled point whose fiber coordinate has re-entered
// the critical strip |x| <= alpha^0.6; the whole element then shares the
// return time while each point keeps its own depth.  Detection at the
// element level is only meaningful while elements hold at least 4 grid
// points; past that the scan either stops with ResolutionExhausted or, on
// request, degrades to per-point detection (which can only under-detect) and
// stamps the records with the level through which grouping was honored.
//
// Alongside the return times every point accumulates
//   log  V_n      = sum log |2 x_i|          (true vertical derivative), and
//   log dV_n      = sum log max(2|x_i|, 2a)  (truncated: small factors are
//                                             replaced by 2*alpha),
// so the derived statistics — escape fractions out of an element, decay of
// the set that returns k times too quickly, growth envelopes of the
// truncated product, dyadic depth codes with their large-deviation measure —
// are pure reductions over the records.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "viana/base_stream.hpp"
#include "viana/curves.hpp"
#include "viana/errors.hpp"
#include "viana/fourier.hpp"
#include "viana/grid.hpp"
#include "viana/orbit.hpp"
#include "viana/parallel.hpp"
#include "viana/params.hpp"
#include "viana/rng.hpp"
#include "viana/shadowing.hpp"
#include "viana/stats.hpp"

namespace viana {

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct return_event {
    std::uint32_t n = 0;      // step of the return; the k = 0 entry is the start
    double depth = 0.0;       // |x_n| at this point's own value
    std::int32_t q_hat = 0;   // dyadic depth: d^-q_hat * alpha <= depth < d^-(q_hat-1) * alpha
    std::int32_t q = 0;       // thresholded code: 0 unless the return is deeper than eps1/d
    double log_trunc = 0.0;   // running log of the truncated derivative at this step
};

struct return_record {
    std::uint64_t theta_index = 0;     // grid index of the tracked point
    std::vector<return_event> events;  // events[0] is the start (n = 0)
    double log_trunc_final = 0.0;      // log truncated derivative after n_steps
    double log_v_final = 0.0;          // log |V_n| after n_steps (-inf on a critical hit)
    std::uint32_t n_steps = 0;
    std::uint32_t resolved_to = 0;     // element grouping honored through this level
};

struct return_scan {
    std::vector<return_record> records;
    std::size_t grid_size = 0;
    std::uint64_t record_stride = 1;
    std::uint64_t d = 2;
    double alpha = 0.0;
    double strip = 0.0;               // alpha^0.6
    double eps1 = 1e-2;               // depth-code cutoff used for the stored q
    std::uint32_t n_max = 0;
    std::uint32_t resolved_to = 0;
    std::uint64_t cofactor = grid_cofactor_prime;
    std::uint64_t offset = 1;
    partition_element source;          // the curve the scan continued from
    double x0 = 0.0;
};

struct detect_options {
    std::uint64_t record_stride = 1;   // keep a record every this many grid points
    bool allow_underresolved = false;  // continue past the reliable level per point
    double eps1 = 1e-2;                // depth-code cutoff baked into stored events
    unsigned threads = 1;
    std::string checkpoint_path;       // empty: no checkpointing
    std::uint64_t checkpoint_every = 1'000'000; // point-steps between dumps
    bool resume = false;               // load checkpoint_path and continue
};

namespace detail {

// dyadic depth code: the unique integer with d^-q * alpha <= depth < d^-(q-1) * alpha,
// validated by direct power comparison so boundary cases are exact.
inline std::int32_t depth_code_hat(double depth, double alpha, double d) {
    if (depth == 0.0) return 1 << 20; // exact critical hit: deeper than any code
    if (!(alpha > 0.0)) return 0;     // no strip: every positive depth is shallow
    std::int32_t q = static_cast<std::int32_t>(
        std::ceil(std::log(alpha / depth) / std::log(d) - 1e-12));
    auto pw = [&](std::int32_t e) { return alpha * std::pow(d, -static_cast<double>(e)); };
    while (pw(q) > depth) ++q;
    while (pw(q - 1) <= depth) --q;
    return q;
}

// q = q_hat when the return is deeper than the eps1 cutoff, i.e. d^-(q_hat-1) < eps1,
// else 0.  A positive code automatically exceeds Delta = log_d(1/eps1).
inline std::int32_t depth_code(std::int32_t q_hat, double d, double eps1) {
    if (q_hat >= (1 << 20)) return q_hat;
    const double shallow = std::pow(d, -static_cast<double>(q_hat - 1));
    return shallow >= eps1 ? 0 : q_hat;
}

// largest level whose partition elements still hold >= 4 of the m grid points
inline std::uint32_t reliable_level(std::size_t m, std::uint64_t d) {
    std::uint32_t n = 0;
    uint128 dn = 1;
    while (dn * d <= static_cast<uint128>(m) / 4) {
        dn *= d;
        ++n;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Checkpoint file: little-endian, versioned.  Layout (all fields in order):
//   magic "VNSCAN01"
//   u64 grid, u64 stride, u64 d, u64 cofactor, u64 offset
//   u32 curve_level, u64 curve_index
//   u32 n_max, u32 n_done, u32 resolved_to, u32 flags (bit 0: underresolved ok)
//   f64 alpha, f64 strip, f64 eps1, f64 x0
//   grid * (f64 x, u64 num_lo, u64 num_hi, f64 log_trunc, f64 log_v, u8 crit)
//   u64 record_count, then per record:
//     u64 theta_index, u32 n_events,
//     n_events * (u32 n, f64 depth, i32 q_hat, i32 q, f64 log_trunc)
// ---------------------------------------------------------------------------

struct scan_state {
    std::vector<double> x, log_trunc, log_v;
    std::vector<uint128> num;
    std::vector<std::uint8_t> crit;
    std::vector<return_record> records;
    std::uint32_t n_done = 0;
};

template <class T>
void put_raw(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
void get_raw(std::ifstream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof v);
}

inline void dump_scan_state(const std::string& path, const return_scan& meta,
                            const scan_state& st, std::uint32_t flags) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint layout assumes a little-endian host");
    const std::string tmp = path + ".tmp";
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(errc::io_error, "cannot open checkpoint file " + tmp);
    os.write("VNSCAN01", 8);
    put_raw(os, static_cast<std::uint64_t>(meta.grid_size));
    put_raw(os, meta.record_stride);
    put_raw(os, meta.d);
    put_raw(os, meta.cofactor);
    put_raw(os, meta.offset);
    put_raw(os, static_cast<std::uint32_t>(meta.source.level));
    put_raw(os, static_cast<std::uint64_t>(meta.source.index));
    put_raw(os, meta.n_max);
    put_raw(os, st.n_done);
    put_raw(os, meta.resolved_to);
    put_raw(os, flags);
    put_raw(os, meta.alpha);
    put_raw(os, meta.strip);
    put_raw(os, meta.eps1);
    put_raw(os, meta.x0);
    for (std::size_t i = 0; i < meta.grid_size; ++i) {
        put_raw(os, st.x[i]);
        const std::uint64_t lo = static_cast<std::uint64_t>(st.num[i]);
        const std::uint64_t hi = static_cast<std::uint64_t>(st.num[i] >> 64);
        put_raw(os, lo);
        put_raw(os, hi);
        put_raw(os, st.log_trunc[i]);
        put_raw(os, st.log_v[i]);
        put_raw(os, st.crit[i]);
    }
    put_raw(os, static_cast<std::uint64_t>(st.records.size()));
    for (const auto& r : st.records) {
        put_raw(os, r.theta_index);
        put_raw(os, static_cast<std::uint32_t>(r.events.size()));
        for (const auto& e : r.events) {
            put_raw(os, e.n);
            put_raw(os, e.depth);
            put_raw(os, e.q_hat);
            put_raw(os, e.q);
            put_raw(os, e.log_trunc);
        }
    }
    os.flush();
    if (!os) fail(errc::io_error, "short write to checkpoint file " + tmp);
    os.close();
    std::filesystem::rename(tmp, path);
}

inline scan_state load_scan_state(const std::string& path, const return_scan& meta,
                                  std::uint32_t expect_flags) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(errc::io_error, "cannot open checkpoint file " + path);
    char magic[8] = {};
    is.read(magic, 8);
    if (std::string(magic, 8) != "VNSCAN01")
        fail(errc::io_error, "checkpoint magic mismatch in " + path);
    std::uint64_t grid, stride, d, cofactor, offset, index;
    std::uint32_t level, n_max, n_done, resolved, flags;
    double alpha, strip, eps1, x0;
    get_raw(is, grid);
    get_raw(is, stride);
    get_raw(is, d);
    get_raw(is, cofactor);
    get_raw(is, offset);
    get_raw(is, level);
    get_raw(is, index);
    get_raw(is, n_max);
    get_raw(is, n_done);
    get_raw(is, resolved);
    get_raw(is, flags);
    get_raw(is, alpha);
    get_raw(is, strip);
    get_raw(is, eps1);
    get_raw(is, x0);
    if (grid != meta.grid_size || stride != meta.record_stride || d != meta.d ||
        cofactor != meta.cofactor || offset != meta.offset || level != meta.source.level ||
        index != meta.source.index || n_max != meta.n_max || resolved != meta.resolved_to ||
        flags != expect_flags || alpha != meta.alpha || strip != meta.strip ||
        eps1 != meta.eps1 || x0 != meta.x0)
        fail(errc::io_error, "checkpoint " + path + " does not match the requested scan");
    scan_state st;
    st.n_done = n_done;
    st.x.resize(grid);
    st.num.resize(grid);
    st.log_trunc.resize(grid);
    st.log_v.resize(grid);
    st.crit.resize(grid);
    for (std::size_t i = 0; i < grid; ++i) {
        get_raw(is, st.x[i]);
        std::uint64_t lo, hi;
        get_raw(is, lo);
        get_raw(is, hi);
        st.num[i] = (static_cast<uint128>(hi) << 64) | lo;
        get_raw(is, st.log_trunc[i]);
        get_raw(is, st.log_v[i]);
        get_raw(is, st.crit[i]);
    }
    std::uint64_t count;
    get_raw(is, count);
    st.records.resize(count);
    for (auto& r : st.records) {
        get_raw(is, r.theta_index);
        std::uint32_t ne;
        get_raw(is, ne);
        r.events.resize(ne);
        for (auto& e : r.events) {
            get_raw(is, e.n);
            get_raw(is, e.depth);
            get_raw(is, e.q_hat);
            get_raw(is, e.q);
            get_raw(is, e.log_trunc);
        }
        r.n_steps = meta.n_max;
        r.resolved_to = meta.resolved_to;
    }
    if (!is) fail(errc::io_error, "truncated checkpoint file " + path);
    return st;
}

} // namespace detail

// ---------------------------------------------------------------------------
// detect_returns: continue every grid point of the curve for n_max steps of
// the skew product and record strip re-entries at partition-element
// resolution.  Base angles advance exactly (numerator arithmetic mod M*P), so
// element membership at every level is integer-exact.
// ---------------------------------------------------------------------------
inline return_scan detect_returns(const sampled_curve& curve, const parameter_set& p,
                                  std::uint32_t n_max, detect_options opt = {}) {
    p.validate();
    if (n_max < 1) fail(errc::invalid_parameter, "detect_returns: need at least one step");
    if (curve.values.empty()) fail(errc::invalid_parameter, "detect_returns: curve is empty");
    if (curve.d != p.d || curve.alpha != p.alpha)
        fail(errc::invalid_parameter, "detect_returns: curve was propagated under other parameters");
    if (opt.record_stride < 1) fail(errc::invalid_parameter, "record stride must be >= 1");
    if (!(opt.eps1 > 0.0 && opt.eps1 < 1.0))
        fail(errc::invalid_parameter, "depth-code cutoff must lie in (0, 1)");

    const std::size_t m = curve.grid_size;
    if (m > (std::size_t{1} << 31))
        fail(errc::invalid_parameter, "detect_returns: grid too large for exact element indexing");
    const std::uint32_t n_reliable = detail::reliable_level(m, p.d);
    if (n_max > n_reliable && !opt.allow_underresolved)
        fail(errc::resolution_exhausted,
             "partition elements at level " + std::to_string(n_reliable + 1) + " hold fewer than 4 of the " +
                 std::to_string(m) + " grid points; largest reliable n = " + std::to_string(n_reliable));

    return_scan scan;
    scan.grid_size = m;
    scan.record_stride = opt.record_stride;
    scan.d = p.d;
    scan.alpha = p.alpha;
    scan.strip = std::pow(p.alpha, 0.6);
    scan.eps1 = opt.eps1;
    scan.n_max = n_max;
    scan.resolved_to = std::min(n_max, n_reliable);
    scan.cofactor = curve.cofactor;
    scan.offset = curve.offset;
    scan.source = curve.source;
    scan.x0 = curve.x0;

    // the shortcut element(i, n) = floor(i * d^n / m) is exact while
    // offset * d^n < cofactor (always true for the default prime cofactor)
    if (detail::pow_u128(p.d, scan.resolved_to) * curve.offset >= curve.cofactor)
        fail(errc::invalid_parameter,
             "grid offset too large for exact element grouping at the requested depth");

    const uint128 den = static_cast<uint128>(m) * curve.cofactor;
    const double den_d = static_cast<double>(den);
    const double dd = static_cast<double>(p.d);
    const double two_alpha = 2.0 * p.alpha;
    const double log_two_alpha =
        p.alpha > 0.0 ? std::log(two_alpha) : -std::numeric_limits<double>::infinity();
    const double escape_cap = 2.0 * p.beta;
    const double neg_inf = -std::numeric_limits<double>::infinity();

    const std::uint32_t flags = opt.allow_underresolved ? 1u : 0u;
    detail::scan_state st;
    bool resumed = false;
    if (opt.resume && !opt.checkpoint_path.empty() &&
        std::filesystem::exists(opt.checkpoint_path)) {
        st = detail::load_scan_state(opt.checkpoint_path, scan, flags);
        resumed = true;
    }
    if (!resumed) {
        st.x = curve.values;
        st.num.resize(m);
        for (std::size_t i = 0; i < m; ++i)
            st.num[i] = static_cast<uint128>(i) * curve.cofactor + curve.offset;
        st.log_trunc.assign(m, 0.0);
        st.log_v.assign(m, 0.0);
        st.crit.assign(m, 0);
        st.records.reserve((m + opt.record_stride - 1) / opt.record_stride);
        for (std::size_t i = 0; i < m; i += opt.record_stride) {
            return_record r;
            r.theta_index = i;
            r.n_steps = n_max;
            r.resolved_to = scan.resolved_to;
            const double depth = std::abs(st.x[i]);
            const std::int32_t qh = detail::depth_code_hat(depth, p.alpha, dd);
            r.events.push_back({0u, depth, qh, detail::depth_code(qh, dd, opt.eps1), 0.0});
            st.records.push_back(std::move(r));
        }
    }

    std::uint64_t point_steps_since_dump = 0;

    for (std::uint32_t n = st.n_done + 1; n <= n_max; ++n) {
        // one step of F for every point: accumulate cocycle logs, then move
        parallel_for_index(m, opt.threads, [&](std::size_t i) {
            const double xv = st.x[i];
            const double ax = std::abs(xv);
            if (xv == 0.0) {
                st.crit[i] = 1;
                st.log_trunc[i] += log_two_alpha; // max(0, 2 alpha)
            } else {
                const double l = std::log(2.0 * ax);
                st.log_v[i] += l;
                st.log_trunc[i] += (ax >= p.alpha) ? l : log_two_alpha;
            }
            const double theta = static_cast<double>(st.num[i]) / den_d;
            const double nx = p.f(xv) + p.alpha * p.phi.eval(theta);
            if (!(std::abs(nx) <= escape_cap))
                fail(errc::measurement_bug,
                     "scanned point left the trapping region at step " + std::to_string(n));
            st.x[i] = nx;
            uint128 nn = st.num[i] * p.d;
            while (nn >= den) nn -= den;
            st.num[i] = nn;
        });

        // detection at step n
        if (n <= scan.resolved_to) {
            // exact contiguous runs: element j covers i with floor(i*d^n/m) == j
            const std::uint64_t dn = static_cast<std::uint64_t>(detail::pow_u128(p.d, n));
            std::size_t run_begin = 0;
            while (run_begin < m) {
                const std::uint64_t j = static_cast<std::uint64_t>(run_begin) * dn / m;
                // first index of the next element: smallest i with i*d^n >= (j+1)*m
                std::size_t run_end = static_cast<std::size_t>(((j + 1) * static_cast<std::uint64_t>(m) + dn - 1) / dn);
                if (run_end > m) run_end = m;
                double run_min = std::abs(st.x[run_begin]);
                for (std::size_t i = run_begin + 1; i < run_end; ++i)
                    run_min = std::min(run_min, std::abs(st.x[i]));
                if (run_min <= scan.strip) {
                    const std::size_t first_rec =
                        (run_begin + opt.record_stride - 1) / opt.record_stride;
                    for (std::size_t rix = first_rec; rix * opt.record_stride < run_end; ++rix) {
                        const std::size_t i = rix * opt.record_stride;
                        const double depth = std::abs(st.x[i]);
                        const std::int32_t qh = detail::depth_code_hat(depth, p.alpha, dd);
                        st.records[rix].events.push_back(
                            {n, depth, qh, detail::depth_code(qh, dd, opt.eps1),
                             st.log_trunc[i]});
                    }
                }
                run_begin = run_end;
            }
        } else {
            // past the reliable level: per-point detection only (under-detects)
            for (std::size_t rix = 0; rix < st.records.size(); ++rix) {
                const std::size_t i = rix * opt.record_stride;
                const double depth = std::abs(st.x[i]);
                if (depth <= scan.strip) {
                    const std::int32_t qh = detail::depth_code_hat(depth, p.alpha, dd);
                    st.records[rix].events.push_back(
                        {n, depth, qh, detail::depth_code(qh, dd, opt.eps1), st.log_trunc[i]});
                }
            }
        }

        st.n_done = n;
        point_steps_since_dump += m;
        if (!opt.checkpoint_path.empty() && n < n_max &&
            point_steps_since_dump >= opt.checkpoint_every) {
            detail::dump_scan_state(opt.checkpoint_path, scan, st, flags);
            point_steps_since_dump = 0;
        }
    }

    for (std::size_t rix = 0; rix < st.records.size(); ++rix) {
        const std::size_t i = rix * opt.record_stride;
        st.records[rix].log_trunc_final = st.log_trunc[i];
        st.records[rix].log_v_final = st.crit[i] ? neg_inf : st.log_v[i];
    }
    scan.records = std::move(st.records);
    return scan;
}

// ---------------------------------------------------------------------------
// escape_fraction: among the points of one partition element whose k-th
// return happened at level_n, the fraction whose (k+1)-th return follows
// within N(alpha) + m_window steps.
// ---------------------------------------------------------------------------
inline double escape_fraction(const std::vector<return_record>& records, const parameter_set& p,
                              unsigned m_window, std::uint32_t level_n, unsigned k) {
    if (k < 1) fail(errc::invalid_parameter, "escape_fraction: k must be >= 1");
    if (records.empty()) fail(errc::invalid_element, "escape_fraction: no records in the element");
    const std::size_t n_alpha = build_chain(p).n_alpha;
    const std::uint32_t window = static_cast<std::uint32_t>(n_alpha + m_window);
    std::size_t quick = 0;
    for (const auto& r : records) {
        if (r.events.size() <= k || r.events[k].n != level_n)
            fail(errc::invalid_element, "element not uniform in the k-th return time");
        if (r.n_steps < level_n + window)
            fail(errc::invalid_parameter,
                 "time budget cannot resolve the escape window past level " +
                     std::to_string(level_n));
        if (r.events.size() > k + 1 && r.events[k + 1].n - level_n <= window) ++quick;
    }
    return static_cast<double>(quick) / static_cast<double>(records.size());
}

// Enumerate every (level, element) cell on which the k-th return time is
// uniform and fully sampled, and measure its escape fraction.  Cells past the
// reliable grouping level, with too few points, or with a censored window are
// skipped, never guessed.
struct escape_cell {
    std::uint32_t level = 0;
    std::uint64_t element = 0;
    std::size_t points = 0;
    double fraction = 0.0;
};

inline std::vector<escape_cell> escape_survey(const return_scan& scan, const parameter_set& p,
                                              unsigned m_window, unsigned k,
                                              std::size_t min_points = 4) {
    if (k < 1) fail(errc::invalid_parameter, "escape_survey: k must be >= 1");
    const std::size_t n_alpha = build_chain(p).n_alpha;
    const std::uint32_t window = static_cast<std::uint32_t>(n_alpha + m_window);
    const std::size_t m = scan.grid_size;

    std::map<std::pair<std::uint32_t, std::uint64_t>, std::pair<std::size_t, std::size_t>> cells;
    for (const auto& r : scan.records) {
        if (r.events.size() <= k) continue;
        const std::uint32_t level = r.events[k].n;
        if (level == 0 || level > scan.resolved_to) continue;
        if (r.n_steps < level + window) continue; // censored
        const std::uint64_t dn = static_cast<std::uint64_t>(detail::pow_u128(scan.d, level));
        const std::uint64_t elem = r.theta_index * dn / m;
        auto& cell = cells[{level, elem}];
        ++cell.first;
        if (r.events.size() > k + 1 && r.events[k + 1].n - level <= window) ++cell.second;
    }

    std::vector<escape_cell> out;
    for (const auto& [key, counts] : cells) {
        const auto [level, elem] = key;
        const std::uint64_t dn = static_cast<std::uint64_t>(detail::pow_u128(scan.d, level));
        // expected strided population of the element: indices in [lo, hi)
        const std::uint64_t lo = (elem * m + dn - 1) / dn;
        std::uint64_t hi = ((elem + 1) * m + dn - 1) / dn;
        if (hi > m) hi = m;
        const std::uint64_t s = scan.record_stride;
        const std::uint64_t expected = (hi + s - 1) / s - (lo + s - 1) / s;
        if (counts.first != expected) continue; // some member has another k-history
        if (counts.first < min_points) continue;
        out.push_back({level, elem, counts.first,
                       static_cast<double>(counts.second) / static_cast<double>(counts.first)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// bad_set_decay: fraction of points whose k-th return arrives within
// (N(alpha) + m_window) * k steps, for k = 1..k_max, with a geometric fit.
// ---------------------------------------------------------------------------
struct badset_report {
    std::vector<double> fractions;  // index k-1
    double r_hat = 0.0;
    unsigned fit_points = 0;
    std::size_t total = 0;
    std::uint32_t resolved_to = 0;
    std::size_t n_alpha = 0;
    unsigned m_window = 0;
};

inline badset_report bad_set_decay(const std::vector<return_record>& records,
                                   const parameter_set& p, unsigned m_window, unsigned k_max) {
    if (k_max < 1) fail(errc::invalid_parameter, "bad_set_decay: k_max must be >= 1");
    if (records.empty()) fail(errc::invalid_parameter, "bad_set_decay: no records");
    badset_report rep;
    rep.n_alpha = build_chain(p).n_alpha;
    rep.m_window = m_window;
    rep.total = records.size();
    rep.resolved_to = records.front().resolved_to;
    const std::uint64_t window = rep.n_alpha + m_window;
    for (const auto& r : records) {
        if (r.n_steps < window * k_max)
            fail(errc::invalid_parameter,
                 "bad_set_decay: records too short for k_max returns within budget");
        rep.resolved_to = std::min(rep.resolved_to, r.resolved_to);
    }

    rep.fractions.assign(k_max, 0.0);
    for (const auto& r : records)
        for (unsigned k = 1; k <= k_max; ++k)
            if (r.events.size() > k && r.events[k].n <= window * k) rep.fractions[k - 1] += 1.0;
    for (auto& f : rep.fractions) f /= static_cast<double>(rep.total);

    for (unsigned k = 0; k + 1 < k_max; ++k) {
        const double f = rep.fractions[k];
        const double tol =
            std::max(1e-3, 3.0 * std::sqrt(std::max(f * (1.0 - f), 1e-12) /
                                           static_cast<double>(rep.total)));
        if (rep.fractions[k + 1] > f + tol)
            fail(errc::measurement_bug,
                 "quick-return fractions grow from k = " + std::to_string(k + 1) + " to " +
                     std::to_string(k + 2));
    }

    std::vector<double> ks, ls;
    for (unsigned k = 1; k <= k_max; ++k)
        if (rep.fractions[k - 1] > 0.0) {
            ks.push_back(static_cast<double>(k));
            ls.push_back(std::log(rep.fractions[k - 1]));
        }
    rep.fit_points = static_cast<unsigned>(ks.size());
    rep.r_hat = rep.fit_points >= 2 ? std::exp(linear_fit(ks, ls).slope) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// truncated_growth: per-point exponential rate of the truncated derivative,
// reported as a trimmed lower envelope and the implied growth base.
// ---------------------------------------------------------------------------
struct growth_report {
    double envelope = 0.0;       // trimmed min over points of log dV_n / n
    double lambda1_hat = 0.0;    // envelope rewritten as a per-(N/m_window)-block base
    double frac_nonpositive = 0.0;
    double trimmed_fraction = 0.0;
    std::uint32_t n = 0;
    std::size_t total = 0;
    std::size_t n_alpha = 0;
    unsigned m_window = 0;
};

inline growth_report truncated_growth(const std::vector<return_record>& records,
                                      const parameter_set& p, unsigned m_window,
                                      double trim = 0.01) {
    if (records.empty()) fail(errc::invalid_parameter, "truncated_growth: no records");
    if (m_window < 1) fail(errc::invalid_parameter, "truncated_growth: window must be >= 1");
    growth_report rep;
    rep.n = records.front().n_steps;
    rep.total = records.size();
    rep.trimmed_fraction = trim;
    rep.n_alpha = build_chain(p).n_alpha;
    rep.m_window = m_window;
    std::vector<double> gamma;
    gamma.reserve(records.size());
    for (const auto& r : records) {
        if (r.n_steps != rep.n)
            fail(errc::invalid_parameter, "truncated_growth: records of mixed length");
        gamma.push_back(r.log_trunc_final / static_cast<double>(rep.n));
    }
    std::size_t nonpos = 0;
    for (double g : gamma)
        if (!(g > 0.0)) ++nonpos;
    rep.frac_nonpositive = static_cast<double>(nonpos) / static_cast<double>(gamma.size());
    if (rep.frac_nonpositive > trim)
        fail(errc::growth_violated,
             "truncated derivative fails to grow on " + std::to_string(rep.frac_nonpositive) +
                 " of the ensemble (allowance " + std::to_string(trim) + ")");
    rep.envelope = trimmed_min(gamma, trim);
    rep.lambda1_hat = std::exp(rep.envelope * static_cast<double>(rep.n_alpha) /
                               static_cast<double>(m_window));
    return rep;
}

// ---------------------------------------------------------------------------
// depth_codes_and_large_deviation: measure of the set whose summed depth
// codes up to the K-th return exceed c*K, fitted against sqrt(K).
// ---------------------------------------------------------------------------
struct ldev_report {
    std::vector<unsigned> k_list;
    std::vector<double> measures;
    double slope = 0.0;      // d log(measure) / d sqrt(K) over nonzero entries
    unsigned fit_points = 0;
    double delta = 0.0;      // log_d(1/eps1)
    double eps1 = 0.0;
    double c = 0.0;
    std::size_t total = 0;
};

inline ldev_report depth_codes_and_large_deviation(const std::vector<return_record>& records,
                                                   const parameter_set& p, double eps1,
                                                   std::vector<unsigned> k_list, double c) {
    if (!(c > 0.0)) fail(errc::invalid_parameter, "depth-code threshold c must be positive");
    if (!(eps1 > 0.0 && eps1 < 1.0))
        fail(errc::invalid_parameter, "depth-code cutoff must lie in (0, 1)");
    if (k_list.empty()) fail(errc::invalid_parameter, "no K values requested");
    if (records.empty()) fail(errc::invalid_parameter, "no records");
    std::sort(k_list.begin(), k_list.end());

    ldev_report rep;
    rep.k_list = k_list;
    rep.eps1 = eps1;
    rep.c = c;
    rep.total = records.size();
    const double dd = static_cast<double>(p.d);
    rep.delta = std::log(1.0 / eps1) / std::log(dd);

    rep.measures.assign(k_list.size(), 0.0);
    for (const auto& r : records) {
        // cumulative depth-code sums over the first K recorded returns; the
        // start event is not a return, and returns past the record's horizon
        // contribute nothing (an under-count, never an over-count)
        std::size_t ki = 0;
        std::uint64_t sum = 0;
        auto evaluate = [&](unsigned big_k) {
            if (static_cast<double>(sum) >= c * static_cast<double>(big_k))
                rep.measures[ki] += 1.0;
        };
        while (ki < k_list.size() && k_list[ki] == 0) evaluate(0), ++ki;
        for (std::size_t k = 1; k < r.events.size() && ki < k_list.size(); ++k) {
            const std::int32_t q = detail::depth_code(r.events[k].q_hat, dd, eps1);
            sum += static_cast<std::uint64_t>(std::max(q, 0));
            while (ki < k_list.size() && k == k_list[ki]) evaluate(k_list[ki]), ++ki;
        }
        while (ki < k_list.size()) evaluate(k_list[ki]), ++ki;
    }
    for (auto& v : rep.measures) v /= static_cast<double>(rep.total);

    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < k_list.size(); ++i)
        if (rep.measures[i] > 0.0) {
            xs.push_back(std::sqrt(static_cast<double>(k_list[i])));
            ys.push_back(std::log(rep.measures[i]));
        }
    rep.fit_points = static_cast<unsigned>(xs.size());
    if (rep.fit_points >= 2) {
        rep.slope = linear_fit(xs, ys).slope;
        if (!(rep.slope < 0.0))
            fail(errc::measurement_bug,
                 "large-deviation measure fails to decay against sqrt(K)");
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Exact bookkeeping identities between the true and truncated cocycles.
// ---------------------------------------------------------------------------

// log V_n  >=  log dV_n + sum over recorded returns of
//              min(log(eps1/d), -q_k log d),
// with every inequality exact up to floating accumulation.  Returns the
// margin (LHS - RHS); negative beyond rounding means broken bookkeeping.
struct chain_margin {
    double margin = 0.0;
    bool critical = false;  // log V = -inf; the bound is vacuous
};

inline chain_margin lower_bound_chain_margin(const return_record& r, const parameter_set& p,
                                             double eps1) {
    chain_margin out;
    if (r.log_v_final == -std::numeric_limits<double>::infinity()) {
        out.critical = true;
        return out;
    }
    const double dd = static_cast<double>(p.d);
    const double floor_term = std::log(eps1 / dd);
    double correction = 0.0;
    for (const auto& e : r.events) {
        const std::int32_t q = detail::depth_code(e.q_hat, dd, eps1);
        correction += std::min(floor_term, -static_cast<double>(std::max(q, 0)) * std::log(dd));
    }
    out.margin = (r.log_v_final - r.log_trunc_final) - correction;
    return out;
}

// Smallest gap between successive returns across all records.  The start
// event counts as a return only when the start itself lies inside the strip.
// Returns 0 when no record holds two returns.
inline std::uint32_t min_return_gap(const std::vector<return_record>& records, double strip) {
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    bool seen = false;
    for (const auto& r : records) {
        std::size_t k0 = (!r.events.empty() && r.events[0].depth <= strip) ? 0 : 1;
        for (std::size_t k = k0; k + 1 < r.events.size(); ++k) {
            best = std::min(best, r.events[k + 1].n - r.events[k].n);
            seen = true;
        }
    }
    return seen ? best : 0;
}

// ---------------------------------------------------------------------------
// expansion_outside_strip: orbit segments that stay outside the critical
// strip expand uniformly; measure the envelope constants.
// ---------------------------------------------------------------------------
struct strip_expansion_report {
    double k_hat = 0.0;        // uniform prefactor of |V_n| >= k_hat * strip * lambda^n
    double lambda_hat = 0.0;   // fitted growth base (> 1 expected)
    double k_hat_deep = 0.0;   // strengthened prefactor for segments ending near the strip
    bool alpha_zero = false;   // strip is empty; k_hat normalized without it
    std::size_t segments = 0;  // segment-length observations
    std::size_t deep_segments = 0;
    unsigned n_used = 0;       // largest segment length entering the fit
    double strip = 0.0;
    double deep_threshold = 0.0;
    std::vector<double> min_log_v;     // index n-1
    std::vector<std::size_t> counts;   // index n-1
};

inline strip_expansion_report expansion_outside_strip(const parameter_set& p, std::size_t samples,
                                                      unsigned n_max, std::uint64_t seed = 1) {
    p.validate();
    if (samples < 1) fail(errc::invalid_parameter, "expansion survey needs at least one sample");
    if (n_max < 1) fail(errc::invalid_parameter, "expansion survey needs at least one step");

    strip_expansion_report rep;
    rep.strip = std::pow(p.alpha, 0.6);
    rep.alpha_zero = (p.alpha == 0.0);
    rep.deep_threshold = rep.alpha_zero ? 0.05 : rep.strip;
    rep.min_log_v.assign(n_max, std::numeric_limits<double>::infinity());
    rep.counts.assign(n_max, 0);
    std::vector<double> deep_min(n_max, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> deep_counts(n_max, 0);

    for (std::size_t j = 0; j < samples; ++j) {
        rng_stream rng(seed, j);
        const double x0 = rng.uniform(-p.beta, p.beta);
        base_stream bs(p.d, rng);
        double x = x0;
        double logv = 0.0;
        for (unsigned n = 1; n <= n_max; ++n) {
            const double ax = std::abs(x);
            if (ax < rep.strip || x == 0.0) break; // segment must stay outside
            logv += std::log(2.0 * ax);
            x = p.f(x) + p.alpha * p.phi.eval(bs.theta());
            bs.advance();
            rep.min_log_v[n - 1] = std::min(rep.min_log_v[n - 1], logv);
            ++rep.counts[n - 1];
            if (std::abs(x) < rep.deep_threshold) {
                deep_min[n - 1] = std::min(deep_min[n - 1], logv);
                ++deep_counts[n - 1];
            }
        }
    }

    std::vector<double> ns, ls;
    for (unsigned n = 1; n <= n_max; ++n) {
        if (rep.counts[n - 1] == 0) continue;
        rep.segments += rep.counts[n - 1];
        rep.deep_segments += deep_counts[n - 1];
        rep.n_used = n;
        if (rep.counts[n - 1] >= std::max<std::size_t>(3, samples / 100)) {
            ns.push_back(static_cast<double>(n));
            ls.push_back(rep.min_log_v[n - 1]);
        }
    }
    if (rep.segments == 0)
        fail(errc::no_segments, "no orbit segment stays outside the critical strip");

    if (ns.size() >= 2) {
        rep.lambda_hat = std::exp(linear_fit(ns, ls).slope);
    } else {
        rep.lambda_hat = std::exp(rep.min_log_v[rep.n_used - 1] / rep.n_used);
    }
    const double log_lambda = std::log(rep.lambda_hat);
    const double strip_div = rep.alpha_zero ? 1.0 : rep.strip;
    double kmin = std::numeric_limits<double>::infinity();
    double kdeep = std::numeric_limits<double>::infinity();
    for (unsigned n = 1; n <= n_max; ++n) {
        if (rep.counts[n - 1] > 0)
            kmin = std::min(kmin, rep.min_log_v[n - 1] - n * log_lambda);
        if (deep_counts[n - 1] > 0)
            kdeep = std::min(kdeep, deep_min[n - 1] - n * log_lambda);
    }
    rep.k_hat = std::exp(kmin) / strip_div;
    rep.k_hat_deep = rep.deep_segments > 0 ? std::exp(kdeep) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// separation_diagnostic: the phase sum Q_{N1}(theta) = sum_k w_k phi(d^{k-1}
// theta) with w_k the unperturbed cocycle weights along the critical orbit,
// its oscillation against the d^-N1 shift, and the Fourier witness that the
// oscillation cannot vanish when phi has a harmonic outside d Z.
// ---------------------------------------------------------------------------
struct separation_report {
    double eta_hat = 0.0;          // largest eta with measure{profile >= 4 eta} >= 0.99
    unsigned n1 = 0;
    unsigned periodicity = 0;      // smallest N with phi not d^-N periodic
    std::size_t witness_harmonic = 0;
    double witness_re = 0.0, witness_im = 0.0;     // quadrature of the m0 coefficient
    double predicted_re = 0.0, predicted_im = 0.0; // exact coefficient identity
    double witness_error = 0.0;
    double profile_sup = 0.0;
    double q_sup = 0.0;
    std::size_t grid = 0;
};

inline separation_report separation_diagnostic(const parameter_set& p, unsigned n1,
                                               std::size_t grid = std::size_t{1} << 16) {
    if (n1 < 1) fail(errc::invalid_parameter, "separation diagnostic needs N1 >= 1");
    if (p.phi.is_constant()) fail(errc::degenerate_parameter, "phi is constant");

    separation_report rep;
    rep.n1 = n1;
    rep.periodicity = p.phi.periodicity_depth(p.d);
    rep.witness_harmonic = p.phi.minimal_witness_harmonic(p.d);

    // weights w_k = (f^{n1-k})'(f^k(0)) along the unperturbed critical orbit,
    // built by the suffix recursion w_{n1} = 1, w_k = f'(f^k(0)) * w_{k+1}
    const std::vector<double> c = critical_orbit(p.a, n1); // c[k-1] = f^k(0)
    std::vector<double> w(n1 + 1, 1.0);
    for (unsigned k = n1 - 1; k >= 1; --k) {
        w[k] = (-2.0 * c[k - 1]) * w[k + 1];
        if (k == 1) break;
    }

    // the quadrature is exact for trigonometric polynomials when the grid
    // strictly resolves every harmonic of Q and the witness frequency
    double dpow = 1.0;
    for (unsigned k = 1; k < n1; ++k) dpow *= static_cast<double>(p.d);
    const double max_freq =
        dpow * static_cast<double>(p.phi.max_harmonic()) + static_cast<double>(rep.witness_harmonic);
    while (static_cast<double>(grid) < 4.0 * max_freq) grid *= 2;
    rep.grid = grid;

    auto q_eval = [&](double theta) {
        double acc = 0.0;
        double scale = 1.0;
        for (unsigned k = 1; k <= n1; ++k) {
            acc += w[k] * p.phi.eval(wrap_unit(theta * scale));
            scale *= static_cast<double>(p.d);
        }
        return acc;
    };

    const double shift = std::pow(static_cast<double>(p.d), -static_cast<double>(n1));
    std::vector<double> profile(grid);
    double wr = 0.0, wi = 0.0;
    for (std::size_t g = 0; g < grid; ++g) {
        const double theta = static_cast<double>(g) / static_cast<double>(grid);
        const double qv = q_eval(theta);
        rep.q_sup = std::max(rep.q_sup, std::abs(qv));
        profile[g] = std::abs(qv - q_eval(wrap_unit(theta + shift)));
        rep.profile_sup = std::max(rep.profile_sup, profile[g]);
        const double arg = -two_pi * static_cast<double>(rep.witness_harmonic) * theta;
        wr += qv * std::cos(arg);
        wi += qv * std::sin(arg);
    }
    rep.witness_re = wr / static_cast<double>(grid);
    rep.witness_im = wi / static_cast<double>(grid);

    double scale_bound = 0.0;
    for (unsigned k = 1; k <= n1; ++k) scale_bound += std::abs(w[k]);
    scale_bound *= p.phi.sup_bound(0);
    if (rep.profile_sup <= 1e-12 * std::max(1.0, scale_bound))
        fail(errc::degenerate_parameter,
             "oscillation profile vanishes: phi is invariant under the d^-" +
                 std::to_string(n1) + " shift");

    rep.eta_hat = quantile(profile, 0.01) / 4.0;

    // exact m0 coefficient of Q: the k-th term contributes when d^{k-1} | m0
    // and m0 / d^{k-1} is a harmonic of phi
    double pr = 0.0, pi = 0.0;
    std::uint64_t dk = 1; // d^{k-1}
    for (unsigned k = 1; k <= n1; ++k) {
        if (rep.witness_harmonic % dk == 0) {
            const std::size_t mm = rep.witness_harmonic / dk;
            if (mm >= 1 && mm <= p.phi.max_harmonic()) {
                const auto [cr, ci] = p.phi.complex_coeff(mm);
                pr += w[k] * cr;
                pi += w[k] * ci;
            }
        }
        dk *= p.d;
    }
    rep.predicted_re = pr;
    rep.predicted_im = pi;
    rep.witness_error = std::hypot(rep.witness_re - pr, rep.witness_im - pi);
    return rep;
}

} // namespace viana
