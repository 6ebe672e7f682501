// loadcast command-line interface: synth, run, plot, validate-data.

#include "loadcast/ingest.hpp"
#include "loadcast/plot.hpp"
#include "loadcast/runner.hpp"
#include "loadcast/scenarios.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

fs::path default_out(const std::string& given, const std::string& fallback) {
    if (!given.empty()) return given;
    if (const char* env = std::getenv(loadcast::kOutputDirEnv); env && *env) return fs::path(env) / fallback;
    return fs::path("out") / fallback;
}

void print_error(const loadcast::Error& e) { std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n"; }

int cmd_synth(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed) {
    loadcast::SynthConfig cfg;
    if (!config_path.empty()) {
        json j;
        try {
            j = json::parse(loadcast::read_file(config_path));
        } catch (const json::exception& e) {
            throw loadcast::ConfigError("'" + config_path + "' is not valid JSON: " + e.what());
        }
        cfg = j.get<loadcast::SynthConfig>();
    }
    if (seed) cfg.seed = *seed;
    cfg.validate();
    const auto dir = default_out(out, "synth");
    const auto manifest = loadcast::write_bundle(loadcast::generate_synthetic(cfg), dir);
    std::cout << "wrote " << manifest["files"].size() << " files to " << dir.string() << " (stay-at-home "
              << manifest["stay_at_home"].get<std::string>() << ")\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed, bool verbose) {
    const auto text = loadcast::read_file(config_path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw loadcast::ConfigError("'" + config_path + "' is not valid JSON: " + e.what());
    }
    const bool from_manifest = doc.is_object() && doc.value("schema", "") == loadcast::kRunManifestSchema;
    if (from_manifest) {
        const auto bad = loadcast::manifest_digest_mismatches(doc);
        if (!bad.empty()) {
            std::string msg = "data files changed since the manifest was written:";
            for (const auto& b : bad) msg += "\n  - " + b;
            throw loadcast::DataQualityError(msg);
        }
    }
    auto cfg = loadcast::load_run_config(config_path);

    loadcast::RunOptions opts;
    if (!out.empty()) {
        opts.output_dir = out;
    } else if (cfg.output_dir) {
        opts.output_dir = *cfg.output_dir;
    } else {
        opts.output_dir = default_out("", "run");
    }
    opts.seed_override = seed;
    if (verbose) opts.log = [](const std::string& s) { std::cerr << s << "\n"; };

    const auto result = loadcast::execute_run(cfg, opts);
    std::cout << loadcast::read_file(opts.output_dir / "summary.txt");
    if (!result.ok()) {
        std::cerr << "some runs failed; see " << (opts.output_dir / "errors.json").string() << "\n";
        return kExitFailure;
    }
    return 0;
}

std::vector<loadcast::PlotSeries> series_from_file(const fs::path& path) {
    const auto text = loadcast::read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw loadcast::ParseError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    std::vector<loadcast::PlotSeries> out;
    if (j.is_object() && j.value("schema", "") == loadcast::kSummarySchema) {
        // One line per (scenario, architecture): mean daily MAPE over seeds.
        std::map<std::string, std::pair<std::vector<double>, int>> acc;
        std::vector<std::string> order;
        for (const auto& r : j.at("runs")) {
            std::string label = r.at("scenario").get<std::string>();
            if (label == "rolling") {
                std::string fs;
                for (const auto& f : r.value("features", json::array())) fs += (fs.empty() ? "" : "+") + f.get<std::string>();
                label += " [" + fs + "]";
            }
            label += " " + r.at("architecture").get<std::string>();
            const auto d = r.at("daily_mape").get<std::vector<double>>();
            auto [it, fresh] = acc.try_emplace(label, std::vector<double>(d.size(), 0.0), 0);
            if (fresh) order.push_back(label);
            if (it->second.first.size() != d.size()) throw loadcast::ParseError("runs for '" + label + "' differ in length");
            for (std::size_t i = 0; i < d.size(); ++i) it->second.first[i] += d[i];
            ++it->second.second;
        }
        for (const auto& label : order) {
            auto [sum, n] = acc.at(label);
            for (auto& v : sum) v /= n;
            out.push_back({label, sum});
        }
        return out;
    }
    try {
        const auto r = loadcast::parse_report(text);
        out.push_back({r.architecture + (r.scenario.empty() ? "" : " (" + r.scenario + ")"), r.daily_mape});
    } catch (const loadcast::ParseError& e) {
        throw loadcast::ParseError("'" + path.string() + "': " + e.what());
    }
    return out;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out, const std::string& title) {
    std::vector<loadcast::PlotSeries> series;
    for (const auto& in : inputs) {
        for (auto& s : series_from_file(in)) series.push_back(std::move(s));
    }
    const auto svg = loadcast::daily_mape_svg(series, title);
    const auto path = default_out(out, "daily_mape.svg");
    loadcast::write_file(path, svg);
    std::cout << "wrote " << path.string() << " (" << series.size() << " series)\n";
    return 0;
}

int cmd_validate(const std::string& dir, const std::vector<std::string>& files) {
    std::vector<loadcast::SourceSpec> specs;
    if (!dir.empty()) {
        for (auto kind : {loadcast::SourceKind::Load, loadcast::SourceKind::Weather, loadcast::SourceKind::Covid,
                          loadcast::SourceKind::Mobility}) {
            const auto p = fs::path(dir) / loadcast::default_file_name(kind);
            if (fs::exists(p)) specs.push_back({kind, p});
        }
    }
    for (const auto& f : files) {
        const auto eq = f.find('=');
        if (eq == std::string::npos) throw loadcast::ConfigError("expected KIND=PATH, got '" + f + "'");
        specs.push_back({loadcast::source_kind_from(f.substr(0, eq)), f.substr(eq + 1)});
    }
    if (specs.empty()) throw loadcast::ConfigError("no data files found to validate");

    int failures = 0;
    for (const auto& spec : specs) {
        try {
            std::string detail;
            if (loadcast::is_hourly(spec.kind)) {
                const auto s = loadcast::parse_hourly_csv(spec);
                detail = std::to_string(s.front().size()) + " hours from " + s.front().start().to_string();
            } else {
                const auto s = loadcast::parse_daily_csv(spec);
                detail = std::to_string(s.front().size()) + " days from " + s.front().start_date().to_string();
            }
            std::cout << "ok    " << loadcast::to_string(spec.kind) << "  " << spec.path.string() << "  " << detail << "\n";
        } catch (const loadcast::Error& e) {
            ++failures;
            std::cout << "FAIL  " << loadcast::to_string(spec.kind) << "  " << spec.path.string() << "\n      ["
                      << e.kind() << "] " << e.what() << "\n";
        }
    }
    return failures == 0 ? 0 : kExitFailure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Day-ahead load forecasting experiments"};
    app.set_version_flag("--version", std::string(loadcast::kToolVersion));
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::string out;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic data set (four CSVs and a manifest)");
    std::string synth_config;
    synth->add_option("-c,--config", synth_config, "Synthetic generator config (JSON)")->check(CLI::ExistingFile);
    synth->add_option("-o,--out", out, "Output directory");
    synth->add_option("--seed", seed, "Override the generator seed");

    auto* run = app.add_subcommand("run", "Run forecasting scenarios from a config or run manifest");
    std::string run_config;
    bool verbose = false;
    run->add_option("config", run_config, "Run config or manifest.json (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--out", out, "Output directory");
    run->add_option("--seed", seed, "Run a single seed instead of the configured list");
    run->add_flag("-v,--verbose", verbose, "Log progress to stderr");

    auto* plot = app.add_subcommand("plot", "Plot daily MAPE from reports or a summary.json as SVG");
    std::vector<std::string> plot_inputs;
    std::string title = "Daily MAPE";
    plot->add_option("inputs", plot_inputs, "Report or summary JSON files")->required()->check(CLI::ExistingFile);
    plot->add_option("-o,--out", out, "Output SVG path");
    plot->add_option("-t,--title", title, "Chart title");

    auto* validate = app.add_subcommand("validate-data", "Check CSV schemas and gaps without running anything");
    std::string data_dir;
    std::vector<std::string> data_files;
    validate->add_option("-d,--dir", data_dir, "Directory holding load.csv, weather.csv, ...")->check(CLI::ExistingDirectory);
    validate->add_option("files", data_files, "Explicit files as KIND=PATH");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return cmd_synth(synth_config, out, seed);
        if (*run) return cmd_run(run_config, out, seed, verbose);
        if (*plot) return cmd_plot(plot_inputs, out, title);
        if (*validate) return cmd_validate(data_dir, data_files);
    } catch (const loadcast::ConfigError& e) {
        print_error(e);
        return kExitUsage;
    } catch (const loadcast::Error& e) {
        print_error(e);
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
