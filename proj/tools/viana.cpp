// Command-line driver for the skew-product laboratory.
//
//   viana <experiment> --config <file> [--threads N] [--seed S] [--out DIR]
//                      [--format csv,json,svg] [--dry-run]
//
// Every run writes <out>/report.json (deterministic: byte-identical for a
// given config at any thread count) and <out>/manifest.json (run metadata:
// config hash, wall time, per-assertion pass/fail).  Exit codes:
//   0  run completed, all assertions passed
//   2  run completed, at least one assertion failed
//   3  invalid configuration or command line (error JSON on stderr)
//   4  measurement or internal failure          (error JSON on stderr)

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "viana/experiments.hpp"

namespace {

struct cli_options {
    std::string experiment;
    std::string config_path;
    viana::config_overrides over;
};

void emit_error(const std::string& code, const std::string& message) {
    nlohmann::json e;
    e["error"]["code"] = code;
    e["error"]["message"] = message;
    std::cerr << viana::json_text(e);
}

// --threads wins; VIANA_THREADS is the fallback; otherwise single-threaded.
unsigned threads_from_env() {
    const char* env = std::getenv("VIANA_THREADS");
    if (env == nullptr || *env == '\0') return 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == nullptr || *end != '\0' || v < 1 || v > 4096)
        viana::fail(viana::errc::invalid_config,
                    std::string("VIANA_THREADS must be an integer in [1, 4096], got '") + env +
                        "'");
    return static_cast<unsigned>(v);
}

int run(const cli_options& cli) {
    using namespace viana;
    experiment_config cfg = load_config(cli.experiment, cli.config_path, cli.over);

    if (cfg.dry_run) {
        // validate knobs by dispatching the runner in dry mode, then print the
        // resolved configuration without touching the filesystem
        run_experiment(cfg);
        nlohmann::json resolved = cfg.canonical();
        resolved["output_dir"] = cfg.output_dir;
        resolved["threads"] = cfg.threads;
        std::cout << json_text(resolved);
        return 0;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const experiment_result res = run_experiment(cfg);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const nlohmann::json canonical = cfg.canonical();
    nlohmann::json report;
    report["artifact_version"] = "1";
    report["config"] = canonical;
    report["results"] = res.report;
    report["assertions"] = res.assertions;

    std::vector<std::string> outputs = {"report.json"};
    write_text_file(cfg.output_dir + "/report.json", json_text(report));
    const bool want_csv =
        std::find(cfg.formats.begin(), cfg.formats.end(), "csv") != cfg.formats.end();
    const bool want_svg =
        std::find(cfg.formats.begin(), cfg.formats.end(), "svg") != cfg.formats.end();
    if (want_csv)
        for (const auto& [name, text] : res.csv) {
            write_text_file(cfg.output_dir + "/" + name, text);
            outputs.push_back(name);
        }
    if (want_svg)
        for (const auto& [name, text] : res.svg) {
            write_text_file(cfg.output_dir + "/" + name, text);
            outputs.push_back(name);
        }

    nlohmann::json manifest;
    manifest["artifact_version"] = "1";
    manifest["experiment"] = experiment_name(cfg.kind);
    manifest["config_hash"] = hex64(fnv1a64(json_text(canonical)));
    manifest["outputs"] = outputs;
    manifest["threads"] = cfg.threads;
    manifest["wall_time_seconds"] = wall;
    manifest["assertions"] = res.assertions;
    manifest["passed"] = res.passed();
    write_text_file(cfg.output_dir + "/manifest.json", json_text(manifest));

    for (const auto& [name, ok] : res.assertions)
        std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
    std::cout << (res.passed() ? "passed" : "FAILED") << ": report in " << cfg.output_dir
              << "/report.json\n";
    return res.passed() ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for quadratic skew products over expanding circle maps"};
    app.require_subcommand(1);

    cli_options cli;
    long long seed = -1;
    int threads = 0;
    for (const auto& [name, kind] : viana::experiment_names()) {
        CLI::App* sub = app.add_subcommand(name, "run the '" + name + "' experiment");
        sub->add_option("--config", cli.config_path, "experiment configuration (JSON)")
            ->required();
        sub->add_option("--threads", threads, "worker threads (fallback: VIANA_THREADS)")
            ->check(CLI::Range(1, 4096));
        sub->add_option("--seed", seed, "random seed override")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", cli.over.output_dir, "output directory");
        sub->add_option("--format", cli.over.formats,
                        "comma-separated artifact formats: json,csv,svg");
        sub->add_flag("--dry-run", cli.over.dry_run,
                      "validate the configuration and print it resolved; write nothing");
        sub->callback([&cli, name = name]() { cli.experiment = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("InvalidConfig", e.what());
        return 3;
    }

    try {
        cli.over.seed = seed;
        cli.over.threads = threads > 0 ? static_cast<unsigned>(threads) : threads_from_env();
        return run(cli);
    } catch (const viana::error& e) {
        emit_error(viana::errc_name(e.code()), e.what());
        return e.code() == viana::errc::invalid_config ? 3 : 4;
    } catch (const std::exception& e) {
        emit_error("Internal", e.what());
        return 4;
    }
}
