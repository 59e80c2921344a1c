#pragma once

// Experiment runners: each takes a validated config, produces a JSON report,
// a set of named pass/fail assertions, and optional CSV/SVG artifacts.  The
// report never contains timing or host information, so identical configs
// yield byte-identical reports at any thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "viana/config.hpp"
#include "viana/curves.hpp"
#include "viana/io.hpp"
#include "viana/lyapunov.hpp"
#include "viana/orbit.hpp"
#include "viana/recurrence.hpp"
#include "viana/shadowing.hpp"
#include "viana/tclass.hpp"

namespace viana {

struct experiment_result {
    nlohmann::json report;
    std::map<std::string, bool> assertions;
    std::map<std::string, std::string> csv;  // file name -> content
    std::map<std::string, std::string> svg;  // file name -> content

    bool passed() const {
        for (const auto& [k, v] : assertions)
            if (!v) return false;
        return true;
    }
};

namespace detail {

// ------------------------- knob access (strict) ----------------------------

inline double knob_num(const nlohmann::json& k, const char* name, double fallback) {
    if (!k.contains(name)) return fallback;
    if (!k.at(name).is_number())
        fail(errc::invalid_config, std::string("knob '") + name + "' must be a number");
    return k.at(name).get<double>();
}

inline std::uint64_t knob_u64(const nlohmann::json& k, const char* name, std::uint64_t fallback) {
    if (!k.contains(name)) return fallback;
    const auto& v = k.at(name);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    fail(errc::invalid_config, std::string("knob '") + name + "' must be a non-negative integer");
}

inline bool knob_bool(const nlohmann::json& k, const char* name, bool fallback) {
    if (!k.contains(name)) return fallback;
    if (!k.at(name).is_boolean())
        fail(errc::invalid_config, std::string("knob '") + name + "' must be a boolean");
    return k.at(name).get<bool>();
}

inline std::vector<double> knob_num_list(const nlohmann::json& k, const char* name,
                                         std::vector<double> fallback) {
    if (!k.contains(name)) return fallback;
    if (!k.at(name).is_array())
        fail(errc::invalid_config, std::string("knob '") + name + "' must be an array of numbers");
    try {
        return k.at(name).get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
        fail(errc::invalid_config, std::string("knob '") + name + "' must be an array of numbers");
    }
}

inline std::vector<unsigned> knob_uint_list(const nlohmann::json& k, const char* name,
                                            std::vector<unsigned> fallback) {
    if (!k.contains(name)) return fallback;
    try {
        return k.at(name).get<std::vector<unsigned>>();
    } catch (const nlohmann::json::exception&) {
        fail(errc::invalid_config,
             std::string("knob '") + name + "' must be an array of unsigned integers");
    }
}

// ------------------------- shared scan plumbing ----------------------------

struct scan_knobs {
    std::size_t grid_size = std::size_t{1} << 16;
    unsigned level = 0;
    std::uint64_t index = 0;
    double x0 = 0.5;
    std::uint32_t n_max = 0;
    detect_options opt;
};

inline scan_knobs parse_scan_knobs(const nlohmann::json& k, std::initializer_list<const char*> extra) {
    std::vector<const char*> allowed = {"grid_size", "level",          "index",
                                       "x0",        "n_max",          "record_stride",
                                       "allow_underresolved", "eps1", "checkpoint",
                                       "checkpoint_every",    "resume"};
    allowed.insert(allowed.end(), extra.begin(), extra.end());
    for (auto it = k.begin(); it != k.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) { ok = true; break; }
        if (!ok) fail(errc::invalid_config, "unknown knob '" + it.key() + "'");
    }
    scan_knobs s;
    s.grid_size = static_cast<std::size_t>(knob_u64(k, "grid_size", s.grid_size));
    s.level = static_cast<unsigned>(knob_u64(k, "level", 0));
    s.index = knob_u64(k, "index", 0);
    s.x0 = knob_num(k, "x0", 0.5);
    const std::uint64_t n_max = knob_u64(k, "n_max", 0);
    if (n_max == 0) fail(errc::invalid_config, "knob 'n_max' (steps to scan) is required");
    s.n_max = static_cast<std::uint32_t>(n_max);
    s.opt.record_stride = knob_u64(k, "record_stride", 1);
    s.opt.allow_underresolved = knob_bool(k, "allow_underresolved", false);
    s.opt.eps1 = knob_num(k, "eps1", 1e-2);
    s.opt.checkpoint_every = knob_u64(k, "checkpoint_every", 1'000'000);
    s.opt.resume = knob_bool(k, "resume", false);
    if (knob_bool(k, "checkpoint", false)) s.opt.checkpoint_path = "scan.ckpt"; // resolved later
    return s;
}

inline return_scan run_scan(const experiment_config& cfg, scan_knobs& s) {
    s.opt.threads = cfg.threads;
    if (!s.opt.checkpoint_path.empty())
        s.opt.checkpoint_path = cfg.output_dir + "/" + s.opt.checkpoint_path;
    const sampled_curve curve =
        propagate(cfg.params, {s.level, s.index}, s.x0, s.grid_size, cfg.threads, 0);
    return detect_returns(curve, cfg.params, s.n_max, s.opt);
}

inline nlohmann::json scan_summary(const return_scan& scan) {
    nlohmann::json j;
    j["grid_size"] = scan.grid_size;
    j["record_stride"] = scan.record_stride;
    j["n_max"] = scan.n_max;
    j["resolved_to"] = scan.resolved_to;
    j["strip"] = scan.strip;
    j["eps1"] = scan.eps1;
    j["records"] = scan.records.size();
    return j;
}

// the documented record table: one row per return event
inline std::string records_csv(const return_scan& scan) {
    csv_writer w;
    w.header({"theta_index", "k", "n_k", "depth", "q_hat", "q", "log_trunc"});
    for (const auto& r : scan.records)
        for (std::size_t k = 0; k < r.events.size(); ++k) {
            const auto& e = r.events[k];
            w.field(r.theta_index)
                .field(std::uint64_t{k})
                .field(std::uint64_t{e.n})
                .field(e.depth)
                .field(std::int64_t{e.q_hat})
                .field(std::int64_t{e.q})
                .field(e.log_trunc);
            w.end_row();
        }
    return w.text();
}

// ------------------------- deep-return protocol ----------------------------

// Hunt for admissible curves that dip into the critical strip: follow a
// randomly started orbit of the full map until its fiber coordinate first
// re-enters [-alpha, alpha] after the settling time, then rebuild that orbit
// segment as a propagated curve over the starting point's partition element
// and check it really crosses the critical line.
struct deep_curve_trial {
    bool found = false;
    unsigned level = 0;
    std::uint64_t element = 0;
    double x0 = 0.0;
    double theta0 = 0.0;
};

inline deep_curve_trial find_deep_curve(const parameter_set& p, std::uint64_t seed,
                                        std::uint64_t trial, unsigned n_min, unsigned n_limit) {
    rng_stream rng(seed, trial);
    deep_curve_trial t;
    t.theta0 = rng.next_double();
    t.x0 = rng.uniform(-0.9 * p.beta, 0.9 * p.beta);
    double theta = t.theta0;
    double x = t.x0;
    for (unsigned n = 1; n <= n_limit; ++n) {
        x = p.f(x) + p.alpha * p.phi.eval(theta);
        theta = wrap_unit(theta * static_cast<double>(p.d));
        if (n >= n_min && std::abs(x) <= p.alpha) {
            t.found = true;
            t.level = n;
            t.element = static_cast<std::uint64_t>(
                t.theta0 * static_cast<double>(detail::pow_u128(p.d, n)));
            return t;
        }
    }
    return t;
}

} // namespace detail

// ===========================================================================
// runners
// ===========================================================================

namespace detail {

inline experiment_result run_lyapunov(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs, {"ensemble", "n_steps", "burn_in", "qr_steps", "renorm_every"},
                          "lyapunov knobs");
    const std::size_t ensemble = knob_u64(cfg.knobs, "ensemble", 1000);
    const std::uint64_t n_steps = knob_u64(cfg.knobs, "n_steps", 1'000'000);
    const std::uint64_t burn_in = knob_u64(cfg.knobs, "burn_in", 1000);
    const std::uint64_t qr_steps = knob_u64(cfg.knobs, "qr_steps", 100'000);
    const std::uint64_t renorm = knob_u64(cfg.knobs, "renorm_every", 1);
    experiment_result res;
    if (cfg.dry_run) return res;

    const exponent_estimate est =
        fiber_exponent(cfg.params, ensemble, n_steps, cfg.seed, cfg.threads, burn_in);
    nlohmann::json j;
    j["chi_base"] = est.lambda_base;
    j["chi_fiber"] = est.lambda_fiber;
    j["stderr_fiber"] = est.stderr_fiber;
    j["liminf_proxy"] = est.liminf_proxy;
    j["frac_positive"] = est.frac_positive;
    j["frac_negative"] = est.frac_negative;
    j["frac_liminf_positive"] = est.frac_liminf_positive;
    j["spread_observed"] = est.spread_observed;
    j["spread_predicted"] = est.spread_predicted;
    j["trimmed_fraction"] = est.trimmed_fraction;
    j["ensemble"] = est.ensemble;
    j["n_steps"] = est.n_steps;
    j["burn_in"] = est.burn_in;

    res.assertions["chi_base_is_log_d"] =
        est.lambda_base == std::log(static_cast<double>(cfg.params.d));
    res.assertions["fiber_exponent_positive"] = est.lambda_fiber > 0.0;
    res.assertions["liminf_positive_on_99_percent"] = est.frac_liminf_positive >= 0.99;
    res.assertions["ensemble_spread_within_clt"] =
        est.spread_observed < 10.0 * std::max(est.spread_predicted, 1e-12);
    res.assertions["restarts_rare"] = est.trimmed_fraction <= 0.01;

    if (qr_steps > 0) {
        const qr_estimate qr = qr_spectrum(cfg.params, qr_steps, cfg.seed, renorm, burn_in);
        nlohmann::json q;
        q["chi_1"] = qr.chi_1;
        q["chi_2"] = qr.chi_2;
        q["diag_base"] = qr.diag_base;
        q["diag_fiber"] = qr.diag_fiber;
        q["n_steps"] = qr.n_steps;
        j["qr"] = q;
        const double tol = cfg.params.alpha == 0.0 ? 1e-10 : 1e-3;
        res.assertions["qr_matches_triangular_diagonal"] =
            std::abs(qr.chi_1 - std::max(qr.diag_base, qr.diag_fiber)) <= tol &&
            std::abs(qr.chi_2 - std::min(qr.diag_base, qr.diag_fiber)) <= tol;
    }
    res.report = j;
    return res;
}

inline experiment_result run_sweep(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs, {"alphas", "ensemble", "n_steps", "burn_in"}, "sweep knobs");
    const std::vector<double> alphas = knob_num_list(cfg.knobs, "alphas", {});
    if (alphas.empty()) fail(errc::invalid_config, "knob 'alphas' (list) is required");
    const std::size_t ensemble = knob_u64(cfg.knobs, "ensemble", 200);
    const std::uint64_t n_steps = knob_u64(cfg.knobs, "n_steps", 100'000);
    const std::uint64_t burn_in = knob_u64(cfg.knobs, "burn_in", 1000);
    experiment_result res;
    if (cfg.dry_run) return res;

    const auto ests =
        exponent_vs_alpha_sweep(alphas, ensemble, n_steps, cfg.seed, cfg.threads, burn_in);
    nlohmann::json rows = nlohmann::json::array();
    csv_writer w;
    w.header({"alpha", "chi_fiber", "stderr_fiber", "liminf_proxy", "frac_positive",
              "frac_liminf_positive"});
    std::vector<double> xs, ys;
    bool all_pos = true, base_exact = true;
    for (const auto& e : ests) {
        nlohmann::json r;
        r["alpha"] = e.alpha;
        r["chi_base"] = e.lambda_base;
        r["chi_fiber"] = e.lambda_fiber;
        r["stderr_fiber"] = e.stderr_fiber;
        r["liminf_proxy"] = e.liminf_proxy;
        r["frac_positive"] = e.frac_positive;
        r["frac_liminf_positive"] = e.frac_liminf_positive;
        rows.push_back(r);
        w.field(e.alpha)
            .field(e.lambda_fiber)
            .field(e.stderr_fiber)
            .field(e.liminf_proxy)
            .field(e.frac_positive)
            .field(e.frac_liminf_positive);
        w.end_row();
        if (e.alpha > 0.0) {
            xs.push_back(std::log10(1.0 / e.alpha));
            ys.push_back(e.lambda_fiber);
        }
        all_pos = all_pos && e.lambda_fiber > 0.0;
        base_exact =
            base_exact && e.lambda_base == std::log(static_cast<double>(cfg.params.d));
    }
    res.report["estimates"] = rows;
    res.report["ensemble"] = ensemble;
    res.report["n_steps"] = n_steps;
    res.assertions["fiber_exponent_positive_at_every_alpha"] = all_pos;
    res.assertions["base_exponent_exact_at_every_alpha"] = base_exact;
    res.csv["sweep.csv"] = w.text();
    if (xs.size() >= 2) {
        svg_plot plot("fiber exponent vs coupling", "log10(1/alpha)", "chi_fiber");
        plot.add_series("chi_fiber", xs, ys);
        res.svg["sweep.svg"] = plot.render();
    }
    return res;
}

inline experiment_result run_shadow(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs, {}, "shadow knobs");
    experiment_result res;
    if (cfg.dry_run) return res;

    const interval_chain chain = build_chain(cfg.params);
    nlohmann::json segs = nlohmann::json::array();
    csv_writer w;
    w.header({"n", "lo", "hi", "len", "critical_point"});
    std::vector<double> ns, lens;
    for (std::size_t i = 0; i < chain.segments.size(); ++i) {
        const auto& s = chain.segments[i];
        nlohmann::json r;
        r["n"] = i + 1;
        r["lo"] = s.lo;
        r["hi"] = s.hi;
        r["critical_point"] = chain.critical[i];
        segs.push_back(r);
        w.field(std::uint64_t{i + 1}).field(s.lo).field(s.hi).field(s.len()).field(chain.critical[i]);
        w.end_row();
        ns.push_back(static_cast<double>(i + 1));
        lens.push_back(std::log10(s.len()));
    }
    // s(alpha) = |(f^N)'(c_1)| alpha, the pinched scaling constant
    double deriv = 1.0;
    for (std::size_t i = 0; i + 1 < chain.critical.size(); ++i)
        deriv *= 2.0 * std::abs(chain.critical[i]);
    res.report["n_alpha"] = chain.n_alpha;
    res.report["total_length"] = chain.total_length;
    res.report["s_alpha"] = deriv * chain.alpha;
    res.report["segments"] = segs;
    res.assertions["n_alpha_positive"] = chain.n_alpha >= 1;
    res.assertions["chain_stays_short"] = chain.total_length < 1.0;
    res.csv["chain.csv"] = w.text();
    svg_plot plot("shadowing interval growth", "n", "log10 |I_n|");
    plot.add_series("log10 len", ns, lens);
    res.svg["chain.svg"] = plot.render();
    return res;
}

inline experiment_result run_distortion(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs, {"probes"}, "distortion knobs");
    const std::size_t probes = knob_u64(cfg.knobs, "probes", 10'000);
    experiment_result res;
    if (cfg.dry_run) return res;

    const interval_chain chain = build_chain(cfg.params);
    const distortion_report rep = check_distortion(cfg.params, chain, probes);
    res.report["worst_pair_ratio"] = rep.worst_pair_ratio;
    res.report["worst_step"] = rep.worst_step;
    res.report["crude_bound"] = rep.crude_bound;
    res.report["probe_points"] = rep.probe_points;
    res.report["n_alpha"] = chain.n_alpha;
    res.assertions["ratios_strictly_inside_e"] = rep.worst_pair_ratio < std::exp(1.0);
    res.assertions["ratio_at_least_one"] = rep.worst_pair_ratio >= 1.0;
    return res;
}

inline experiment_result run_curve(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs,
                          {"level", "index", "x0", "grid_size", "class_samples", "c1", "r1"},
                          "curve knobs");
    const unsigned level = static_cast<unsigned>(knob_u64(cfg.knobs, "level", 0));
    if (level == 0) fail(errc::invalid_config, "knob 'level' (>= 1) is required");
    const std::uint64_t index = knob_u64(cfg.knobs, "index", 0);
    const double x0 = knob_num(cfg.knobs, "x0", 0.5);
    const std::size_t grid = knob_u64(cfg.knobs, "grid_size", std::uint64_t{1} << 16);
    const std::size_t class_samples = knob_u64(cfg.knobs, "class_samples", 1000);
    const double c1 = knob_num(cfg.knobs, "c1", 250.4641);
    const double r1 = knob_num(cfg.knobs, "r1", 1.4199);
    experiment_result res;
    if (cfg.dry_run) return res;

    sampled_curve curve = propagate(cfg.params, {level, index}, x0, grid, cfg.threads);
    const class_constants k = estimate_class_constants(cfg.params.phi, cfg.params.d, c1, r1,
                                                       class_samples, cfg.seed, cfg.threads);
    const curve_class_report rep = curve_class_diagnostic(curve, cfg.params, k, cfg.threads);

    res.report["level"] = rep.level;
    res.report["grid_size"] = rep.grid_size;
    res.report["max_abs_deriv1"] = rep.max_abs_deriv1;
    res.report["residual"] = rep.residual;
    res.report["residual_over_alpha2"] = rep.residual_over_alpha2;
    res.report["sandwich_lo"] = rep.sandwich_lo;
    res.report["sandwich_hi"] = rep.sandwich_hi;
    res.report["violation_fraction"] = rep.violation_fraction;
    res.report["alpha_zero"] = rep.alpha_zero;
    res.report["class_constants"] = to_json(k);
    res.assertions["curve_admissible"] = rep.violation_fraction <= 1e-3;
    if (!rep.alpha_zero)
        res.assertions["slope_within_class_bound"] =
            rep.max_abs_deriv1 <= k.a_hat * cfg.params.alpha;

    csv_writer w;
    w.header({"i", "angle", "x", "dx"});
    const std::size_t stride = std::max<std::size_t>(1, grid / 4096);
    for (std::size_t i = 0; i < grid; i += stride) {
        w.field(i)
            .field(angle_value(curve_grid_angle(curve, i)))
            .field(curve.values[i])
            .field(curve.derivs.empty() ? 0.0 : curve.derivs[0][i]);
        w.end_row();
    }
    res.csv["curve.csv"] = w.text();
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < grid; i += stride) {
        xs.push_back(static_cast<double>(i) / static_cast<double>(grid));
        ys.push_back(curve.values[i]);
    }
    svg_plot plot("admissible curve", "angle", "x");
    plot.add_series("X(theta)", xs, ys);
    res.svg["curve.svg"] = plot.render();
    return res;
}

inline experiment_result run_deep_return(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs,
                          {"curves", "grid_size", "eps_list", "scan_min", "scan_limit", "trial_cap"},
                          "deep-return knobs");
    const std::size_t curves = knob_u64(cfg.knobs, "curves", 20);
    const std::size_t grid = knob_u64(cfg.knobs, "grid_size", std::uint64_t{1} << 20);
    const std::vector<double> eps =
        knob_num_list(cfg.knobs, "eps_list", {1e-1, 1e-2, 1e-3, 1e-4});
    const unsigned scan_min = static_cast<unsigned>(knob_u64(cfg.knobs, "scan_min", 7));
    const unsigned scan_limit = static_cast<unsigned>(knob_u64(cfg.knobs, "scan_limit", 30));
    const std::uint64_t trial_cap = knob_u64(cfg.knobs, "trial_cap", 400 * curves);
    if (curves == 0) fail(errc::invalid_config, "knob 'curves' must be >= 1");
    if (!(cfg.params.alpha > 0.0))
        fail(errc::invalid_config, "deep-return hunting needs a positive coupling");
    experiment_result res;
    if (cfg.dry_run) return res;

    std::vector<decay_report> parts;
    nlohmann::json curve_rows = nlohmann::json::array();
    std::uint64_t trials = 0;
    for (; trials < trial_cap && parts.size() < curves; ++trials) {
        const deep_curve_trial t =
            find_deep_curve(cfg.params, cfg.seed, trials, scan_min, scan_limit);
        if (!t.found) continue;
        const sampled_curve curve =
            propagate(cfg.params, {t.level, t.element}, t.x0, grid, cfg.threads, 0);
        const auto [mn, mx] =
            std::minmax_element(curve.values.begin(), curve.values.end());
        if (!(*mn < 0.0 && *mx > 0.0)) continue; // no crossing: not a deep return
        decay_report part = deep_return_measure(curve, eps);
        nlohmann::json r;
        r["trial"] = trials;
        r["level"] = t.level;
        r["element"] = t.element;
        r["kappa_hat"] = part.kappa_hat;
        r["kappa_valid"] = part.kappa_valid;
        curve_rows.push_back(r);
        parts.push_back(std::move(part));
    }
    if (parts.empty())
        fail(errc::no_segments, "no deep-returning curve found within the trial budget");

    const decay_report merged = merge_decay(parts);
    res.report["curves_used"] = parts.size();
    res.report["trials"] = trials;
    res.report["eps"] = merged.eps;
    res.report["fractions"] = merged.fractions;
    res.report["kappa_hat"] = merged.kappa_hat;
    res.report["kappa_valid"] = merged.kappa_valid;
    res.report["per_curve"] = curve_rows;

    bool monotone = true;
    for (std::size_t i = 1; i < merged.fractions.size(); ++i)
        if (merged.fractions[i] > merged.fractions[i - 1]) monotone = false;
    res.assertions["kappa_positive"] = merged.kappa_valid && merged.kappa_hat > 0.0;
    res.assertions["sublevel_measure_monotone"] = monotone;
    res.assertions["enough_curves"] = parts.size() >= curves;

    csv_writer w;
    w.header({"eps", "count", "fraction"});
    for (std::size_t i = 0; i < merged.eps.size(); ++i) {
        w.field(merged.eps[i]).field(merged.counts[i]).field(merged.fractions[i]);
        w.end_row();
    }
    res.csv["decay.csv"] = w.text();
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < merged.eps.size(); ++i)
        if (merged.fractions[i] > 0.0) {
            xs.push_back(std::log10(merged.eps[i]));
            ys.push_back(std::log10(merged.fractions[i]));
        }
    if (xs.size() >= 2) {
        svg_plot plot("deep-return sublevel decay", "log10 eps", "log10 fraction");
        plot.add_series("measure", xs, ys);
        res.svg["decay.svg"] = plot.render();
    }
    return res;
}

inline experiment_result run_returns(const experiment_config& cfg) {
    scan_knobs s = parse_scan_knobs(cfg.knobs, {});
    experiment_result res;
    if (cfg.dry_run) return res;

    const return_scan scan = run_scan(cfg, s);
    const std::size_t n_alpha = build_chain(cfg.params).n_alpha;

    std::size_t with_return = 0, events_total = 0;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::size_t critical = 0;
    std::vector<std::size_t> per_step(scan.n_max + 1, 0);
    for (const auto& r : scan.records) {
        if (r.events.size() > 1) ++with_return;
        events_total += r.events.size() - 1;
        for (std::size_t k = 1; k < r.events.size(); ++k) ++per_step[r.events[k].n];
        const chain_margin cm = lower_bound_chain_margin(r, cfg.params, scan.eps1);
        if (cm.critical) ++critical;
        else worst_margin = std::min(worst_margin, cm.margin);
    }
    const std::uint32_t gap = min_return_gap(scan.records, scan.strip);

    res.report = scan_summary(scan);
    res.report["n_alpha"] = n_alpha;
    res.report["records_with_a_return"] = with_return;
    res.report["events_total"] = events_total;
    res.report["min_return_gap"] = gap;
    res.report["worst_chain_margin"] =
        std::isfinite(worst_margin) ? worst_margin : 0.0;
    res.report["critical_hits"] = critical;
    res.assertions["return_spacing_at_least_n_alpha"] = gap == 0 || gap >= n_alpha;
    res.assertions["true_derivative_dominates_truncated_bound"] =
        !std::isfinite(worst_margin) || worst_margin >= -1e-9;
    res.csv["records.csv"] = records_csv(scan);

    std::vector<double> xs, ys;
    for (std::uint32_t n = 1; n <= scan.n_max; ++n) {
        xs.push_back(n);
        ys.push_back(static_cast<double>(per_step[n]));
    }
    svg_plot plot("returns per step", "n", "marked records");
    plot.add_series("returns", xs, ys);
    res.svg["returns.svg"] = plot.render();
    return res;
}

inline experiment_result run_escape(const experiment_config& cfg) {
    scan_knobs s = parse_scan_knobs(cfg.knobs, {"m_window", "k", "min_points", "min_elements"});
    const unsigned m_window = static_cast<unsigned>(knob_u64(cfg.knobs, "m_window", 2));
    const unsigned k = static_cast<unsigned>(knob_u64(cfg.knobs, "k", 1));
    const std::size_t min_points = knob_u64(cfg.knobs, "min_points", 4);
    const std::size_t min_elements = knob_u64(cfg.knobs, "min_elements", 200);
    experiment_result res;
    if (cfg.dry_run) return res;

    const return_scan scan = run_scan(cfg, s);
    const auto cells = escape_survey(scan, cfg.params, m_window, k, min_points);
    double max_frac = 0.0, sum = 0.0;
    for (const auto& c : cells) {
        max_frac = std::max(max_frac, c.fraction);
        sum += c.fraction;
    }
    res.report = scan_summary(scan);
    res.report["m_window"] = m_window;
    res.report["k"] = k;
    res.report["elements"] = cells.size();
    res.report["max_escape_fraction"] = max_frac;
    res.report["mean_escape_fraction"] = cells.empty() ? 0.0 : sum / cells.size();
    res.assertions["max_escape_within_two_thirds_bound"] = max_frac <= 2.0 / 3.0 + 0.05;
    res.assertions["enough_elements_measured"] = cells.size() >= min_elements;

    csv_writer w;
    w.header({"level", "element", "points", "escape_fraction"});
    std::vector<double> xs, ys;
    for (const auto& c : cells) {
        w.field(std::uint64_t{c.level}).field(c.element).field(c.points).field(c.fraction);
        w.end_row();
        xs.push_back(c.level);
        ys.push_back(c.fraction);
    }
    res.csv["escape.csv"] = w.text();
    if (!xs.empty()) {
        svg_plot plot("escape fraction by element", "return level", "fraction");
        plot.add_series("elements", xs, ys);
        res.svg["escape.svg"] = plot.render();
    }
    return res;
}

inline experiment_result run_badset(const experiment_config& cfg) {
    scan_knobs s = parse_scan_knobs(cfg.knobs, {"m_window", "k_max"});
    const unsigned m_window = static_cast<unsigned>(knob_u64(cfg.knobs, "m_window", 2));
    const unsigned k_max = static_cast<unsigned>(knob_u64(cfg.knobs, "k_max", 8));
    experiment_result res;
    if (cfg.dry_run) return res;

    const return_scan scan = run_scan(cfg, s);
    const badset_report rep = bad_set_decay(scan.records, cfg.params, m_window, k_max);
    res.report = scan_summary(scan);
    res.report["m_window"] = m_window;
    res.report["k_max"] = k_max;
    res.report["fractions"] = rep.fractions;
    res.report["r_hat"] = rep.r_hat;
    res.report["fit_points"] = rep.fit_points;
    res.assertions["quick_return_rate_at_most_0_9"] = rep.r_hat <= 0.9;

    csv_writer w;
    w.header({"k", "fraction"});
    for (std::size_t i = 0; i < rep.fractions.size(); ++i) {
        w.field(std::uint64_t{i + 1}).field(rep.fractions[i]);
        w.end_row();
    }
    res.csv["badset.csv"] = w.text();
    return res;
}

inline experiment_result run_growth(const experiment_config& cfg) {
    scan_knobs s = parse_scan_knobs(cfg.knobs, {"m_window", "trim"});
    const unsigned m_window = static_cast<unsigned>(knob_u64(cfg.knobs, "m_window", 2));
    const double trim = knob_num(cfg.knobs, "trim", 0.01);
    experiment_result res;
    if (cfg.dry_run) return res;

    const return_scan scan = run_scan(cfg, s);
    const growth_report rep = truncated_growth(scan.records, cfg.params, m_window, trim);
    res.report = scan_summary(scan);
    res.report["envelope"] = rep.envelope;
    res.report["lambda1_hat"] = rep.lambda1_hat;
    res.report["frac_nonpositive"] = rep.frac_nonpositive;
    res.report["trim"] = rep.trimmed_fraction;
    res.report["n"] = rep.n;
    res.assertions["trimmed_growth_envelope_positive"] = rep.envelope > 0.0;
    return res;
}

inline experiment_result run_ldev(const experiment_config& cfg) {
    scan_knobs s = parse_scan_knobs(cfg.knobs, {"K_list", "c"});
    const std::vector<unsigned> k_list = knob_uint_list(cfg.knobs, "K_list", {});
    if (k_list.empty()) fail(errc::invalid_config, "knob 'K_list' (list) is required");
    const double c = knob_num(cfg.knobs, "c", 0.0);
    if (!(c > 0.0)) fail(errc::invalid_config, "knob 'c' (> 0) is required");
    experiment_result res;
    if (cfg.dry_run) return res;

    const return_scan scan = run_scan(cfg, s);
    const ldev_report rep =
        depth_codes_and_large_deviation(scan.records, cfg.params, scan.eps1, k_list, c);
    res.report = scan_summary(scan);
    res.report["K_list"] = rep.k_list;
    res.report["measures"] = rep.measures;
    res.report["slope_vs_sqrt_K"] = rep.slope;
    res.report["fit_points"] = rep.fit_points;
    res.report["delta"] = rep.delta;
    res.report["c"] = rep.c;
    res.assertions["deviation_measure_decays"] = rep.fit_points < 2 || rep.slope < 0.0;

    csv_writer w;
    w.header({"K", "measure"});
    for (std::size_t i = 0; i < rep.k_list.size(); ++i) {
        w.field(std::uint64_t{rep.k_list[i]}).field(rep.measures[i]);
        w.end_row();
    }
    res.csv["ldev.csv"] = w.text();
    return res;
}

inline experiment_result run_separation(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs, {"n1", "grid"}, "separation knobs");
    const unsigned n1 = static_cast<unsigned>(knob_u64(cfg.knobs, "n1", 1));
    const std::size_t grid = knob_u64(cfg.knobs, "grid", std::uint64_t{1} << 16);
    experiment_result res;
    if (cfg.dry_run) return res;

    const separation_report rep = separation_diagnostic(cfg.params, n1, grid);
    res.report["eta_hat"] = rep.eta_hat;
    res.report["n1"] = rep.n1;
    res.report["periodicity_depth"] = rep.periodicity;
    res.report["witness_harmonic"] = rep.witness_harmonic;
    res.report["witness"] = {rep.witness_re, rep.witness_im};
    res.report["predicted"] = {rep.predicted_re, rep.predicted_im};
    res.report["witness_error"] = rep.witness_error;
    res.report["profile_sup"] = rep.profile_sup;
    res.report["grid"] = rep.grid;
    const double scale = std::max(1.0, std::hypot(rep.predicted_re, rep.predicted_im));
    res.assertions["fourier_witness_matches_quadrature"] = rep.witness_error <= 1e-10 * scale;
    res.assertions["shift_separation_positive"] = rep.eta_hat > 0.0;
    return res;
}

inline experiment_result run_classconst(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs, {"samples", "c1", "r1", "trunc_orders", "opt_grid"},
                          "classconst knobs");
    const std::size_t samples = knob_u64(cfg.knobs, "samples", 1000);
    const double c1 = knob_num(cfg.knobs, "c1", 250.4641);
    const double r1 = knob_num(cfg.knobs, "r1", 1.4199);
    const unsigned trunc = static_cast<unsigned>(knob_u64(cfg.knobs, "trunc_orders", 40));
    const std::size_t grid = knob_u64(cfg.knobs, "opt_grid", 128);
    experiment_result res;
    if (cfg.dry_run) return res;

    const class_constants k = estimate_class_constants(cfg.params.phi, cfg.params.d, c1, r1,
                                                       samples, cfg.seed, cfg.threads, trunc, grid);
    res.report = to_json(k);
    res.report["c1"] = c1;
    res.report["r1"] = r1;
    res.assertions["class_window_positive"] = k.mu > 0.0;
    res.assertions["class_window_ordered"] = k.a_hat > k.mu;
    return res;
}

inline experiment_result run_domination(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs, {"samples", "k_max"}, "domination knobs");
    const std::size_t samples = knob_u64(cfg.knobs, "samples", 20'000);
    const unsigned k_max = static_cast<unsigned>(knob_u64(cfg.knobs, "k_max", 60));
    experiment_result res;
    if (cfg.dry_run) return res;

    const domination_report rep =
        verify_domination(cfg.params, samples, k_max, cfg.seed, cfg.threads);
    res.report["sup_root"] = rep.sup_root;
    res.report["c1"] = rep.c1;
    res.report["r1"] = rep.r1;
    res.report["n0"] = rep.n0;
    res.report["escaped_fraction"] = rep.escaped_fraction;
    res.report["log_sup_v"] = rep.log_sup_v;
    res.assertions["vertical_growth_below_base_rate"] =
        rep.sup_root < static_cast<double>(cfg.params.d) * 2.0;
    res.assertions["recovery_rate_exceeds_one"] = rep.r1 > 1.0;
    res.assertions["no_sample_escaped"] = rep.escaped_fraction == 0.0;

    csv_writer w;
    w.header({"k", "log_sup_v"});
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < rep.log_sup_v.size(); ++i) {
        w.field(std::uint64_t{i + 1}).field(rep.log_sup_v[i]);
        w.end_row();
        xs.push_back(static_cast<double>(i + 1));
        ys.push_back(rep.log_sup_v[i]);
    }
    res.csv["domination.csv"] = w.text();
    svg_plot plot("vertical derivative envelope", "k", "log sup |V_k|");
    plot.add_series("log sup", xs, ys);
    res.svg["domination.svg"] = plot.render();
    return res;
}

inline experiment_result run_expansion(const experiment_config& cfg) {
    reject_unknown_fields(cfg.knobs, {"samples", "n_max"}, "expansion knobs");
    const std::size_t samples = knob_u64(cfg.knobs, "samples", 2000);
    const unsigned n_max = static_cast<unsigned>(knob_u64(cfg.knobs, "n_max", 30));
    experiment_result res;
    if (cfg.dry_run) return res;

    const strip_expansion_report rep =
        expansion_outside_strip(cfg.params, samples, n_max, cfg.seed);
    res.report["lambda_hat"] = rep.lambda_hat;
    res.report["k_hat"] = rep.k_hat;
    res.report["k_hat_deep"] = rep.k_hat_deep;
    res.report["segments"] = rep.segments;
    res.report["deep_segments"] = rep.deep_segments;
    res.report["n_used"] = rep.n_used;
    res.report["strip"] = rep.strip;
    res.report["alpha_zero"] = rep.alpha_zero;
    res.assertions["expansion_rate_above_one"] = rep.lambda_hat > 1.0;
    res.assertions["expansion_prefactor_positive"] = rep.k_hat > 0.0;

    csv_writer w;
    w.header({"n", "min_log_v", "count"});
    std::vector<double> xs, ys;
    for (unsigned n = 1; n <= n_max; ++n) {
        if (rep.counts[n - 1] == 0) continue;
        w.field(std::uint64_t{n}).field(rep.min_log_v[n - 1]).field(rep.counts[n - 1]);
        w.end_row();
        xs.push_back(n);
        ys.push_back(rep.min_log_v[n - 1]);
    }
    res.csv["expansion.csv"] = w.text();
    if (xs.size() >= 2) {
        svg_plot plot("expansion outside the critical strip", "segment length n", "min log |V_n|");
        plot.add_series("envelope", xs, ys);
        res.svg["expansion.svg"] = plot.render();
    }
    return res;
}

} // namespace detail

inline experiment_result run_experiment(const experiment_config& cfg) {
    switch (cfg.kind) {
        case experiment_kind::lyapunov: return detail::run_lyapunov(cfg);
        case experiment_kind::sweep: return detail::run_sweep(cfg);
        case experiment_kind::shadow: return detail::run_shadow(cfg);
        case experiment_kind::distortion: return detail::run_distortion(cfg);
        case experiment_kind::curve: return detail::run_curve(cfg);
        case experiment_kind::deep_return: return detail::run_deep_return(cfg);
        case experiment_kind::returns_scan: return detail::run_returns(cfg);
        case experiment_kind::escape: return detail::run_escape(cfg);
        case experiment_kind::badset: return detail::run_badset(cfg);
        case experiment_kind::growth: return detail::run_growth(cfg);
        case experiment_kind::ldev: return detail::run_ldev(cfg);
        case experiment_kind::separation: return detail::run_separation(cfg);
        case experiment_kind::classconst: return detail::run_classconst(cfg);
        case experiment_kind::domination: return detail::run_domination(cfg);
        case experiment_kind::expansion: return detail::run_expansion(cfg);
    }
    fail(errc::invalid_config, "unhandled experiment kind");
}

} // namespace viana
