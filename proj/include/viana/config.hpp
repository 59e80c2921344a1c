#pragma once

// Experiment configuration: one strict JSON file per run.  Unknown fields
// anywhere are rejected so configs cannot silently drift, and the resolved
// config is itself canonical JSON — its hash identifies the run, and every
// output artifact is a pure function of it (threads never change results).

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "viana/errors.hpp"
#include "viana/io.hpp"
#include "viana/params.hpp"

namespace viana {

enum class experiment_kind {
    lyapunov,
    sweep,
    shadow,
    distortion,
    curve,
    deep_return,
    returns_scan,
    escape,
    badset,
    growth,
    ldev,
    separation,
    classconst,
    domination,
    expansion,
};

inline const std::vector<std::pair<std::string, experiment_kind>>& experiment_names() {
    static const std::vector<std::pair<std::string, experiment_kind>> names = {
        {"lyapunov", experiment_kind::lyapunov},
        {"sweep", experiment_kind::sweep},
        {"shadow", experiment_kind::shadow},
        {"distortion", experiment_kind::distortion},
        {"curve", experiment_kind::curve},
        {"deep-return", experiment_kind::deep_return},
        {"returns", experiment_kind::returns_scan},
        {"escape", experiment_kind::escape},
        {"badset", experiment_kind::badset},
        {"growth", experiment_kind::growth},
        {"ldev", experiment_kind::ldev},
        {"separation", experiment_kind::separation},
        {"classconst", experiment_kind::classconst},
        {"domination", experiment_kind::domination},
        {"expansion", experiment_kind::expansion},
    };
    return names;
}

inline experiment_kind experiment_from_name(const std::string& name) {
    for (const auto& [n, k] : experiment_names())
        if (n == name) return k;
    std::string known;
    for (const auto& [n, k] : experiment_names()) {
        if (!known.empty()) known += ", ";
        known += n;
    }
    fail(errc::invalid_config, "unknown experiment '" + name + "' (known: " + known + ")");
}

inline std::string experiment_name(experiment_kind k) {
    for (const auto& [n, kk] : experiment_names())
        if (kk == k) return n;
    fail(errc::invalid_config, "unnamed experiment kind");
}

// experiments whose results depend on random sampling must pin their seed in
// the config file, not on the command line only
inline bool experiment_is_stochastic(experiment_kind k) {
    switch (k) {
        case experiment_kind::lyapunov:
        case experiment_kind::sweep:
        case experiment_kind::deep_return:
        case experiment_kind::classconst:
        case experiment_kind::domination:
        case experiment_kind::expansion:
            return true;
        default:
            return false;
    }
}

struct experiment_config {
    experiment_kind kind = experiment_kind::lyapunov;
    parameter_set params;
    nlohmann::json knobs = nlohmann::json::object();
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    std::vector<std::string> formats = {"json"};
    unsigned threads = 1; // runtime concern: not part of the canonical config
    bool dry_run = false;

    // canonical JSON (sorted keys) describing everything that can change the
    // results; the manifest records its hash
    nlohmann::json canonical() const {
        nlohmann::json j;
        j["experiment"] = experiment_name(kind);
        j["params"] = to_json(params);
        j["knobs"] = knobs;
        j["seed"] = seed;
        j["formats"] = formats;
        return j;
    }
};

namespace detail {

// "params": either a full explicit parameter set (keyed by the presence of
// "a") or the canonical construction from a coupling strength and the
// Misiurewicz combinatorics.
// Any construction failure here is a configuration problem: re-raise domain
// errors (bad coupling, degenerate phi, empty bracket) as invalid_config so
// the caller can tell "your file is wrong" apart from "the run went wrong".
inline parameter_set params_from_config_raw(const nlohmann::json& j) {
    if (!j.is_object()) fail(errc::invalid_config, "params must be a JSON object");
    if (j.contains("a")) return parameter_set_from_json(j);
    reject_unknown_fields(j, {"alpha", "d", "preperiod", "period", "phi", "bracket"},
                          "params (canonical form)");
    double alpha = 0.0;
    std::uint64_t d = 2;
    unsigned preperiod = 2, period = 1;
    double lo = 1.5, hi = 1.6;
    fourier_series phi;
    try {
        alpha = j.at("alpha").get<double>();
        if (j.contains("d")) d = j.at("d").get<std::uint64_t>();
        if (j.contains("preperiod")) preperiod = j.at("preperiod").get<unsigned>();
        if (j.contains("period")) period = j.at("period").get<unsigned>();
        if (j.contains("bracket")) {
            const auto b = j.at("bracket").get<std::vector<double>>();
            if (b.size() != 2) fail(errc::invalid_config, "bracket must be [lo, hi]");
            lo = b[0];
            hi = b[1];
        }
        if (j.contains("phi")) {
            const auto& ph = j.at("phi");
            if (!ph.is_object()) fail(errc::invalid_config, "phi must be an object");
            reject_unknown_fields(ph, {"cos", "sin"}, "phi");
            std::vector<double> c, s;
            if (ph.contains("cos")) c = ph.at("cos").get<std::vector<double>>();
            if (ph.contains("sin")) s = ph.at("sin").get<std::vector<double>>();
            phi = fourier_series(std::move(c), std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(errc::invalid_config, std::string("malformed params: ") + e.what());
    }
    return make_parameter_set(alpha, preperiod, period, d, std::move(phi), lo, hi);
}

inline parameter_set params_from_config(const nlohmann::json& j) {
    try {
        return params_from_config_raw(j);
    } catch (const error& e) {
        if (e.code() == errc::invalid_config) throw;
        fail(errc::invalid_config, std::string("params rejected: ") + e.what());
    }
}

} // namespace detail

// flag overrides applied on top of the file: empty/negative means "not given"
struct config_overrides {
    std::int64_t seed = -1;
    std::string output_dir;
    std::string formats; // comma-separated
    unsigned threads = 0;
    bool dry_run = false;
};

inline experiment_config parse_config(const std::string& experiment, const nlohmann::json& file,
                                      const config_overrides& over = {}) {
    if (!file.is_object()) fail(errc::invalid_config, "config must be a JSON object");
    detail::reject_unknown_fields(
        file, {"experiment", "params", "knobs", "seed", "output_dir", "formats"}, "config");

    experiment_config cfg;
    cfg.kind = experiment_from_name(experiment);
    if (file.contains("experiment")) {
        const std::string declared = file.at("experiment").get<std::string>();
        if (declared != experiment)
            fail(errc::invalid_config, "config file declares experiment '" + declared +
                                           "' but '" + experiment + "' was requested");
    }
    if (!file.contains("params")) fail(errc::invalid_config, "config needs a params block");
    cfg.params = detail::params_from_config(file.at("params"));
    if (file.contains("knobs")) {
        if (!file.at("knobs").is_object()) fail(errc::invalid_config, "knobs must be an object");
        cfg.knobs = file.at("knobs");
    }

    const bool seed_in_file = file.contains("seed");
    if (seed_in_file) {
        try {
            cfg.seed = file.at("seed").get<std::uint64_t>();
        } catch (const nlohmann::json::exception&) {
            fail(errc::invalid_config, "seed must be an unsigned integer");
        }
    }
    if (over.seed >= 0) cfg.seed = static_cast<std::uint64_t>(over.seed);
    if (experiment_is_stochastic(cfg.kind) && !seed_in_file && over.seed < 0)
        fail(errc::invalid_config,
             "experiment '" + experiment + "' samples randomly: a seed is required");

    if (file.contains("output_dir")) cfg.output_dir = file.at("output_dir").get<std::string>();
    if (!over.output_dir.empty()) cfg.output_dir = over.output_dir;

    if (file.contains("formats")) cfg.formats = file.at("formats").get<std::vector<std::string>>();
    if (!over.formats.empty()) {
        cfg.formats.clear();
        std::string cur;
        for (char c : over.formats + ",") {
            if (c == ',') {
                if (!cur.empty()) cfg.formats.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
    }
    std::sort(cfg.formats.begin(), cfg.formats.end());
    cfg.formats.erase(std::unique(cfg.formats.begin(), cfg.formats.end()), cfg.formats.end());
    for (const auto& f : cfg.formats)
        if (f != "csv" && f != "json" && f != "svg")
            fail(errc::invalid_config, "unknown format '" + f + "' (known: csv, json, svg)");
    if (std::find(cfg.formats.begin(), cfg.formats.end(), "json") == cfg.formats.end())
        cfg.formats.insert(cfg.formats.begin(), "json"); // report.json is unconditional

    cfg.threads = over.threads ? over.threads : 1;
    cfg.dry_run = over.dry_run;
    return cfg;
}

inline experiment_config load_config(const std::string& experiment, const std::string& path,
                                     const config_overrides& over = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        fail(errc::invalid_config, "config " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(experiment, j, over);
}

} // namespace viana
