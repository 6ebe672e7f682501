#pragma once

#include "loadcast/digest.hpp"
#include "loadcast/errors.hpp"
#include "loadcast/features.hpp"
#include "loadcast/ingest.hpp"
#include "loadcast/plot.hpp"
#include "loadcast/scenarios.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#ifndef LOADCAST_VERSION
#define LOADCAST_VERSION "0.0.0"
#endif

namespace loadcast {

inline constexpr std::string_view kToolVersion = LOADCAST_VERSION;
inline constexpr std::string_view kRunManifestSchema = "loadcast.run-manifest/1";
inline constexpr std::string_view kSummarySchema = "loadcast.summary/1";
/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "LOADCAST_OUT_DIR";

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct DataPaths {
    std::filesystem::path load;
    std::filesystem::path weather;
    std::filesystem::path covid;
    std::filesystem::path mobility;
};

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::Benchmark;
    std::vector<FeatureSet> features{FeatureSet::Weather};

    /// Label used in file names and summary tables, e.g. `rolling-mobility`.
    std::string label() const {
        std::string s(to_string(kind));
        if (kind == ScenarioKind::Rolling) {
            s += "-";
            for (std::size_t i = 0; i < features.size(); ++i) s += (i ? "+" : "") + std::string(to_string(features[i]));
        }
        return s;
    }
};

struct RunConfig {
    DataPaths data;
    std::vector<ScenarioSpec> scenarios;
    std::vector<nn::Architecture> architectures{nn::Architecture::FCDNN, nn::Architecture::LSTM,
                                                nn::Architecture::GRU};
    std::vector<std::uint64_t> seeds{1};
    SplitConfig split;
    nn::TrainConfig train;
    bool warm_start = false;
    bool pre_selftest = false;
    bool seasonal_naive = true;
    int workers = 1;
    std::optional<std::filesystem::path> output_dir;
};

namespace detail {

/// Collects every problem found while reading a config before failing.
class Problems {
public:
    void add(std::string msg) { items_.push_back(std::move(msg)); }
    bool empty() const { return items_.empty(); }

    [[noreturn]] void raise(const std::string& what) const {
        std::string msg = what + " (" + std::to_string(items_.size()) + " problem" +
                          (items_.size() == 1 ? "" : "s") + "):";
        for (const auto& s : items_) msg += "\n  - " + s;
        throw ConfigError(msg);
    }

    template <typename T, typename Fn>
    void read(const nlohmann::json& j, const std::string& key, const std::string& path, Fn&& assign) {
        if (!j.contains(key)) return;
        try {
            assign(j.at(key).get<T>());
        } catch (const nlohmann::json::exception&) {
            add(path + key + ": wrong type (" + std::string(j.at(key).type_name()) + ")");
        } catch (const Error& e) {
            add(path + key + ": " + e.what());
        }
    }

    void unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& path) {
        if (!j.is_object()) {
            add((path.empty() ? std::string("config") : path.substr(0, path.size() - 1)) + ": expected an object");
            return;
        }
        for (const auto& [k, _] : j.items()) {
            if (!known.contains(k)) add(path + k + ": unknown field");
        }
    }

private:
    std::vector<std::string> items_;
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative()) path = base / path;
    return path.lexically_normal();
}

} // namespace detail

/// Parses a run configuration document. Relative data paths resolve against
/// `base_dir`. Every violated field is reported in one ConfigError.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    detail::Problems p;
    p.unknown_keys(j, {"data", "scenarios", "architectures", "seeds", "split", "train", "warm_start",
                       "pre_selftest", "seasonal_naive", "workers", "output_dir"},
                   "");
    if (!j.is_object()) p.raise("invalid run config");

    if (!j.contains("data")) {
        p.add("data: required");
    } else {
        const auto& d = j.at("data");
        p.unknown_keys(d, {"dir", "load", "weather", "covid", "mobility"}, "data.");
        if (d.is_object()) {
            if (d.contains("dir")) {
                p.read<std::string>(d, "dir", "data.", [&](const std::string& dir) {
                    const auto root = detail::resolve(base_dir, dir);
                    cfg.data = {root / "load.csv", root / "weather.csv", root / "covid.csv", root / "mobility.csv"};
                });
            }
            p.read<std::string>(d, "load", "data.", [&](const std::string& s) { cfg.data.load = detail::resolve(base_dir, s); });
            p.read<std::string>(d, "weather", "data.", [&](const std::string& s) { cfg.data.weather = detail::resolve(base_dir, s); });
            p.read<std::string>(d, "covid", "data.", [&](const std::string& s) { cfg.data.covid = detail::resolve(base_dir, s); });
            p.read<std::string>(d, "mobility", "data.", [&](const std::string& s) { cfg.data.mobility = detail::resolve(base_dir, s); });
            if (cfg.data.load.empty()) p.add("data.load: required (or data.dir)");
            if (cfg.data.weather.empty()) p.add("data.weather: required (or data.dir)");
        }
    }

    if (!j.contains("scenarios")) {
        p.add("scenarios: required");
    } else if (!j.at("scenarios").is_array() || j.at("scenarios").empty()) {
        p.add("scenarios: expected a non-empty list");
    } else {
        std::size_t i = 0;
        for (const auto& s : j.at("scenarios")) {
            const std::string path = "scenarios[" + std::to_string(i++) + "].";
            ScenarioSpec spec;
            if (s.is_string()) {
                try {
                    spec.kind = scenario_kind_from(s.get<std::string>());
                } catch (const Error& e) {
                    p.add(path.substr(0, path.size() - 1) + ": " + e.what());
                    continue;
                }
                if (spec.kind == ScenarioKind::Rolling) {
                    p.add(path + "features: required for rolling scenarios");
                    continue;
                }
                cfg.scenarios.push_back(spec);
                continue;
            }
            p.unknown_keys(s, {"kind", "features"}, path);
            if (!s.is_object()) continue;
            bool ok = s.contains("kind");
            if (!ok) p.add(path + "kind: required");
            p.read<std::string>(s, "kind", path, [&](const std::string& k) { spec.kind = scenario_kind_from(k); });
            if (s.contains("features")) {
                spec.features.clear();
                p.read<std::vector<std::string>>(s, "features", path, [&](const std::vector<std::string>& fs) {
                    for (const auto& f : fs) spec.features.push_back(feature_set_from(f));
                });
            } else if (ok && s.at("kind") == "rolling") {
                p.add(path + "features: required for rolling scenarios");
            }
            for (auto f : spec.features) {
                if (f != FeatureSet::Weather && spec.kind != ScenarioKind::Rolling) {
                    p.add(path + "features: '" + std::string(to_string(f)) + "' requires kind rolling");
                }
            }
            cfg.scenarios.push_back(spec);
        }
    }

    if (j.contains("architectures")) {
        cfg.architectures.clear();
        p.read<std::vector<std::string>>(j, "architectures", "", [&](const std::vector<std::string>& as) {
            for (const auto& a : as) cfg.architectures.push_back(nn::architecture_from(a));
        });
        if (cfg.architectures.empty()) p.add("architectures: expected at least one of FCDNN, LSTM, GRU");
    }
    p.read<std::vector<std::uint64_t>>(j, "seeds", "", [&](const std::vector<std::uint64_t>& s) { cfg.seeds = s; });
    if (cfg.seeds.empty()) p.add("seeds: expected at least one seed");

    if (j.contains("split")) {
        const auto& s = j.at("split");
        p.unknown_keys(s, {"stay_at_home", "train_start", "horizon_weeks"}, "split.");
        if (s.is_object()) {
            p.read<std::string>(s, "stay_at_home", "split.",
                                [&](const std::string& t) { cfg.split.stay_at_home = Timestamp::parse(t); });
            if (s.contains("train_start") && !s.at("train_start").is_null()) {
                p.read<std::string>(s, "train_start", "split.",
                                    [&](const std::string& t) { cfg.split.train_start = Timestamp::parse(t); });
            }
            p.read<int>(s, "horizon_weeks", "split.", [&](int w) { cfg.split.horizon_weeks = w; });
        }
    }
    if (cfg.split.horizon_weeks < 1) p.add("split.horizon_weeks: must be >= 1");
    if (cfg.split.stay_at_home.hour() != 0) p.add("split.stay_at_home: must be midnight");
    if (cfg.split.train_start && *cfg.split.train_start >= cfg.split.stay_at_home) {
        p.add("split.train_start: must precede stay_at_home");
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        p.unknown_keys(t, {"seed", "epochs", "batch_size", "learning_rate", "patience", "val_fraction",
                           "fcdnn_hidden", "rnn_hidden", "clip_norm"},
                       "train.");
        if (t.contains("seed")) p.add("train.seed: set seeds at the top level");
        if (t.is_object()) {
            p.read<int>(t, "epochs", "train.", [&](int v) { cfg.train.epochs = v; });
            p.read<int>(t, "batch_size", "train.", [&](int v) { cfg.train.batch_size = v; });
            p.read<double>(t, "learning_rate", "train.", [&](double v) { cfg.train.learning_rate = v; });
            p.read<int>(t, "patience", "train.", [&](int v) { cfg.train.patience = v; });
            p.read<double>(t, "val_fraction", "train.", [&](double v) { cfg.train.val_fraction = v; });
            p.read<std::vector<std::size_t>>(t, "fcdnn_hidden", "train.",
                                             [&](const std::vector<std::size_t>& v) { cfg.train.fcdnn_hidden = v; });
            p.read<std::size_t>(t, "rnn_hidden", "train.", [&](std::size_t v) { cfg.train.rnn_hidden = v; });
            p.read<double>(t, "clip_norm", "train.", [&](double v) { cfg.train.clip_norm = v; });
        }
    }
    for (const auto& v : cfg.train.violations()) p.add(v);

    p.read<bool>(j, "warm_start", "", [&](bool v) { cfg.warm_start = v; });
    p.read<bool>(j, "pre_selftest", "", [&](bool v) { cfg.pre_selftest = v; });
    p.read<bool>(j, "seasonal_naive", "", [&](bool v) { cfg.seasonal_naive = v; });
    p.read<int>(j, "workers", "", [&](int v) { cfg.workers = v; });
    if (cfg.workers < 1) p.add("workers: must be >= 1");
    p.read<std::string>(j, "output_dir", "", [&](const std::string& s) { cfg.output_dir = detail::resolve(base_dir, s); });

    bool needs_covid = false, needs_mobility = false;
    for (const auto& s : cfg.scenarios) {
        for (auto f : s.features) {
            needs_covid = needs_covid || f == FeatureSet::Covid;
            needs_mobility = needs_mobility || f == FeatureSet::Mobility;
        }
    }
    if (needs_covid && cfg.data.covid.empty()) p.add("data.covid: required by a covid-feature scenario");
    if (needs_mobility && cfg.data.mobility.empty()) p.add("data.mobility: required by a mobility-feature scenario");

    if (!p.empty()) p.raise("invalid run config");
    return cfg;
}

/// Canonical JSON form with absolute paths; parsing it back yields the same
/// configuration.
inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    const auto path_or_null = [](const std::filesystem::path& p) {
        return p.empty() ? nlohmann::json(nullptr) : nlohmann::json(std::filesystem::absolute(p).lexically_normal().string());
    };
    j["data"] = nlohmann::json::object();
    for (const auto& [k, v] : {std::pair{"load", &c.data.load}, std::pair{"weather", &c.data.weather},
                               std::pair{"covid", &c.data.covid}, std::pair{"mobility", &c.data.mobility}}) {
        if (!v->empty()) j["data"][k] = path_or_null(*v);
    }
    j["scenarios"] = nlohmann::json::array();
    for (const auto& s : c.scenarios) {
        std::vector<std::string> fs;
        for (auto f : s.features) fs.emplace_back(to_string(f));
        j["scenarios"].push_back({{"kind", to_string(s.kind)}, {"features", fs}});
    }
    j["architectures"] = nlohmann::json::array();
    for (auto a : c.architectures) j["architectures"].push_back(nn::to_string(a));
    j["seeds"] = c.seeds;
    j["split"] = {{"stay_at_home", c.split.stay_at_home.to_string()},
                  {"train_start", c.split.train_start ? nlohmann::json(c.split.train_start->to_string()) : nlohmann::json(nullptr)},
                  {"horizon_weeks", c.split.horizon_weeks}};
    nlohmann::json train = c.train;
    train.erase("seed");
    j["train"] = train;
    j["warm_start"] = c.warm_start;
    j["pre_selftest"] = c.pre_selftest;
    j["seasonal_naive"] = c.seasonal_naive;
    j["workers"] = c.workers;
    if (c.output_dir) j["output_dir"] = path_or_null(*c.output_dir);
    return j;
}

/// Reads a run config file or a run manifest (whose `config` member is used).
inline RunConfig load_run_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    const auto base = std::filesystem::absolute(path).parent_path();
    if (j.is_object() && j.value("schema", "") == kRunManifestSchema) {
        return parse_run_config(j.at("config"), base);
    }
    return parse_run_config(j, base);
}

// ---------------------------------------------------------------------------
// Data loading
// ---------------------------------------------------------------------------

struct LoadedData {
    AlignedDataset dataset;
    /// file name -> digest
    std::map<std::string, std::string> digests;
};

inline LoadedData load_data(const DataPaths& paths) {
    SourceBundle src;
    LoadedData out;
    const auto note = [&](const std::filesystem::path& p) { out.digests[p.string()] = file_digest(p); };
    auto load = parse_hourly_csv({SourceKind::Load, paths.load});
    src.load = load.at(0);
    note(paths.load);
    src.weather = parse_hourly_csv({SourceKind::Weather, paths.weather});
    note(paths.weather);
    if (!paths.covid.empty()) {
        src.covid = parse_daily_csv({SourceKind::Covid, paths.covid});
        note(paths.covid);
    }
    if (!paths.mobility.empty()) {
        src.mobility = parse_daily_csv({SourceKind::Mobility, paths.mobility});
        note(paths.mobility);
    }
    out.dataset = prepare_dataset(src);
    return out;
}

/// Aligned dataset of an in-memory synthetic bundle, identical to what
/// `load_data` yields for the bundle's CSVs.
inline AlignedDataset synthetic_dataset(const SyntheticBundle& b) {
    return prepare_dataset(SourceBundle{b.load, b.weather, b.covid, b.mobility});
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct RunJob {
    std::string name;
    std::string scenario_label;
    ScenarioConfig config;
    bool pre_selftest = false;
};

inline std::vector<RunJob> plan_jobs(const RunConfig& rc) {
    std::vector<RunJob> jobs;
    const auto add = [&](const ScenarioSpec& spec, nn::Architecture arch, std::uint64_t seed, bool selftest) {
        RunJob job;
        job.scenario_label = selftest ? "pre_selftest" : spec.label();
        job.name = job.scenario_label + "-" + std::string(nn::to_string(arch)) + "-seed" + std::to_string(seed);
        job.config.kind = spec.kind;
        job.config.features = spec.features;
        job.config.split = rc.split;
        job.config.train = rc.train;
        job.config.train.seed = seed;
        job.config.architecture = arch;
        job.config.warm_start = rc.warm_start && spec.kind == ScenarioKind::Rolling;
        job.pre_selftest = selftest;
        jobs.push_back(std::move(job));
    };
    for (const auto& spec : rc.scenarios) {
        for (auto arch : rc.architectures) {
            for (auto seed : rc.seeds) add(spec, arch, seed, false);
        }
    }
    if (rc.pre_selftest) {
        for (auto arch : rc.architectures) {
            for (auto seed : rc.seeds) add(ScenarioSpec{ScenarioKind::Benchmark, {FeatureSet::Weather}}, arch, seed, true);
        }
    }
    return jobs;
}

struct JobOutcome {
    std::string name;
    std::optional<ScenarioReport> report;
    std::string error_kind;
    std::string error;
    double seconds = 0.0;
};

struct RunResult {
    std::vector<JobOutcome> jobs;
    std::optional<ScenarioReport> seasonal_naive;
    nlohmann::json manifest;
    bool ok() const {
        for (const auto& j : jobs) {
            if (!j.report) return false;
        }
        return true;
    }
};

struct RunOptions {
    std::filesystem::path output_dir;
    std::optional<std::uint64_t> seed_override;
    std::function<void(const std::string&)> log;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Stats {
    double mean = 0, min = 0, max = 0;
    std::size_t n = 0;
};

inline Stats stats_of(const std::vector<double>& v) {
    Stats s;
    s.n = v.size();
    if (v.empty()) return s;
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    return s;
}

inline std::string pad_right(std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
}

inline std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

/// Column title for a `+`-joined feature label, e.g. `Weather+COVID`.
inline std::string feature_title(const std::string& label) {
    std::string out;
    std::size_t pos = 0;
    while (pos <= label.size()) {
        const auto end = std::min(label.find('+', pos), label.size());
        const auto f = label.substr(pos, end - pos);
        out += (out.empty() ? "" : "+") + (f == "weather" ? "Weather" : f == "covid" ? "COVID" : f == "mobility" ? "Mobility" : f);
        pos = end + 1;
    }
    return out;
}

inline std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& r : rows) {
        widths.resize(std::max(widths.size(), r.size()), 0);
        for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], r[c].size());
    }
    std::string out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            out += (c ? "  " : "") + pad_right(rows[i][c], widths[c]);
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += '\n';
        if (i == 0) {
            std::size_t total = 0;
            for (auto w : widths) total += w;
            out += std::string(total + 2 * (widths.size() - 1), '-') + '\n';
        }
    }
    return out;
}

} // namespace detail

struct Summary {
    std::string text;
    std::string csv;
    nlohmann::json json;
};

/// Seed-mean overall MAPE tables: scenarios x architectures for benchmark,
/// weekend and self-test runs; architectures x feature sets for rolling runs.
inline Summary summarize(const RunConfig& rc, const std::vector<JobOutcome>& jobs,
                         const std::optional<ScenarioReport>& naive) {
    // (scenario label, architecture) -> overall MAPEs
    std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
    std::vector<std::string> labels;
    for (const auto& j : jobs) {
        if (!j.report) continue;
        const std::string label = j.name.substr(0, j.name.find("-" + j.report->architecture + "-seed"));
        if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
        cells[{label, j.report->architecture}].push_back(j.report->overall_mape);
    }
    std::vector<std::string> archs;
    for (auto a : rc.architectures) archs.emplace_back(nn::to_string(a));

    Summary s;
    s.csv = "scenario,architecture,n_seeds,mean_mape,min_mape,max_mape\n";
    s.json["schema"] = kSummarySchema;
    s.json["rows"] = nlohmann::json::array();
    for (const auto& label : labels) {
        for (const auto& a : archs) {
            const auto it = cells.find({label, a});
            if (it == cells.end()) continue;
            const auto st = detail::stats_of(it->second);
            s.csv += label + "," + a + "," + std::to_string(st.n) + "," + detail::pct(st.mean) + "," +
                     detail::pct(st.min) + "," + detail::pct(st.max) + "\n";
            s.json["rows"].push_back({{"scenario", label}, {"architecture", a}, {"n_seeds", st.n}, {"mean_mape", st.mean},
                                      {"min_mape", st.min}, {"max_mape", st.max}, {"per_seed", it->second}});
        }
    }
    if (naive) {
        s.csv += "seasonal_naive,-,1," + detail::pct(naive->overall_mape) + "," + detail::pct(naive->overall_mape) +
                 "," + detail::pct(naive->overall_mape) + "\n";
        s.json["seasonal_naive_mape"] = naive->overall_mape;
    }

    const auto cell = [&](const std::string& label, const std::string& a) -> std::string {
        const auto it = cells.find({label, a});
        return it == cells.end() ? "-" : detail::pct(detail::stats_of(it->second).mean);
    };

    std::vector<std::string> plain;
    std::vector<std::string> rolling;
    for (const auto& l : labels) (l.starts_with("rolling-") ? rolling : plain).push_back(l);

    s.text = "Overall MAPE (%), mean over " + std::to_string(rc.seeds.size()) + " seed" +
             (rc.seeds.size() == 1 ? "" : "s") + "\n\n";
    if (!plain.empty()) {
        std::vector<std::vector<std::string>> rows{{"Scenario"}};
        for (const auto& a : archs) rows[0].push_back(a);
        for (const auto& l : plain) {
            std::vector<std::string> r{l};
            for (const auto& a : archs) r.push_back(cell(l, a));
            rows.push_back(std::move(r));
        }
        s.text += detail::render_table(rows) + "\n";
    }
    if (!rolling.empty()) {
        std::vector<std::vector<std::string>> rows{{"Features"}};
        for (const auto& l : rolling) rows[0].push_back(detail::feature_title(l.substr(8)));
        for (const auto& a : archs) {
            std::vector<std::string> r{a};
            for (const auto& l : rolling) r.push_back(cell(l, a));
            rows.push_back(std::move(r));
        }
        if (std::find(plain.begin(), plain.end(), "benchmark") != plain.end()) {
            std::vector<std::string> r{"Benchmark"};
            const std::string bench_arch =
                std::find(archs.begin(), archs.end(), "LSTM") != archs.end() ? "LSTM" : archs.front();
            for (std::size_t i = 0; i < rolling.size(); ++i) r.push_back(i == 0 ? cell("benchmark", bench_arch) : "-");
            rows.push_back(std::move(r));
        }
        s.text += detail::render_table(rows) + "\n";
    }
    if (naive) s.text += "Seasonal naive: " + detail::pct(naive->overall_mape) + "\n";

    s.json["runs"] = nlohmann::json::array();
    for (const auto& j : jobs) {
        if (!j.report) continue;
        s.json["runs"].push_back({{"name", j.name},
                                  {"scenario", j.report->scenario},
                                  {"architecture", j.report->architecture},
                                  {"features", j.report->features},
                                  {"seed", j.report->seed},
                                  {"overall_mape", j.report->overall_mape},
                                  {"daily_mape", j.report->daily_mape}});
    }
    return s;
}

/// Runs every (scenario x architecture x seed) job, writing one report per
/// job plus summary tables and a manifest into `opts.output_dir`.
///
/// Layout: reports/<job>.json, reports/<job>.daily_mape.csv, summary.txt,
/// summary.csv, summary.json, manifest.json, and errors.json when a job fails.
/// Jobs run on up to `workers` threads; each writes only its own files.
inline RunResult execute_run(RunConfig rc, const RunOptions& opts) {
    const auto log = [&](const std::string& s) {
        if (opts.log) opts.log(s);
    };
    if (opts.seed_override) rc.seeds = {*opts.seed_override};
    const auto out_dir = opts.output_dir;
    std::filesystem::create_directories(out_dir / "reports");

    nlohmann::json stages = nlohmann::json::object();
    auto t0 = std::chrono::steady_clock::now();
    const LoadedData data = load_data(rc.data);
    stages["load_data"] = detail::seconds_since(t0);
    log("loaded " + std::to_string(data.dataset.rows()) + " hourly rows, " +
        std::to_string(data.dataset.channel_count()) + " channels");

    RunResult result;
    const auto jobs = plan_jobs(rc);
    result.jobs.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    const auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& job = jobs[i];
            JobOutcome& out = result.jobs[i];
            out.name = job.name;
            const auto start = std::chrono::steady_clock::now();
            try {
                ScenarioReport r = job.pre_selftest ? run_pre_selftest(data.dataset, job.config)
                                                    : run_scenario(data.dataset, job.config);
                write_file(out_dir / "reports" / (job.name + ".json"), serialize_report(r));
                write_file(out_dir / "reports" / (job.name + ".daily_mape.csv"), daily_mape_csv(r));
                out.report = std::move(r);
            } catch (const Error& e) {
                out.error_kind = e.kind();
                out.error = e.what();
            } catch (const std::exception& e) {
                out.error_kind = "internal";
                out.error = e.what();
            }
            out.seconds = detail::seconds_since(start);
            std::lock_guard lock(log_mutex);
            log(job.name + ": " + (out.report ? "MAPE " + detail::pct(out.report->overall_mape) + "%" : "FAILED " + out.error));
        }
    };
    t0 = std::chrono::steady_clock::now();
    const int n_threads = std::max(1, std::min<int>(rc.workers, static_cast<int>(jobs.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    stages["scenarios"] = detail::seconds_since(t0);

    if (rc.seasonal_naive) {
        try {
            result.seasonal_naive = run_seasonal_naive(select_features(data.dataset, std::vector<FeatureSet>{}), rc.split);
            write_file(out_dir / "reports" / "seasonal_naive.json", serialize_report(*result.seasonal_naive));
        } catch (const Error& e) {
            log(std::string("seasonal naive baseline skipped: ") + e.what());
        }
    }

    t0 = std::chrono::steady_clock::now();
    const Summary summary = summarize(rc, result.jobs, result.seasonal_naive);
    write_file(out_dir / "summary.txt", summary.text);
    write_file(out_dir / "summary.csv", summary.csv);
    write_file(out_dir / "summary.json", summary.json.dump(2) + "\n");
    stages["summary"] = detail::seconds_since(t0);

    if (!result.ok()) {
        nlohmann::json errors = nlohmann::json::array();
        for (const auto& j : result.jobs) {
            if (!j.report) errors.push_back({{"job", j.name}, {"kind", j.error_kind}, {"message", j.error}});
        }
        write_file(out_dir / "errors.json", errors.dump(2) + "\n");
    }

    nlohmann::json& m = result.manifest;
    m["schema"] = kRunManifestSchema;
    m["tool_version"] = kToolVersion;
    m["config"] = run_config_to_json(rc);
    m["data_digests"] = data.digests;
    m["dataset_digest"] = dataset_digest(data.dataset);
    m["seeds"] = rc.seeds;
    m["stage_seconds"] = stages;
    m["jobs"] = nlohmann::json::array();
    for (const auto& j : result.jobs) {
        m["jobs"].push_back({{"name", j.name}, {"ok", j.report.has_value()}, {"seconds", j.seconds},
                             {"report", j.report ? nlohmann::json("reports/" + j.name + ".json") : nlohmann::json(nullptr)}});
    }
    write_file(out_dir / "manifest.json", m.dump(2) + "\n");
    return result;
}

/// Verifies that the data files named by a manifest still match its digests.
inline std::vector<std::string> manifest_digest_mismatches(const nlohmann::json& manifest) {
    std::vector<std::string> out;
    for (const auto& [path, digest] : manifest.at("data_digests").items()) {
        std::string actual;
        try {
            actual = file_digest(path);
        } catch (const Error&) {
            out.push_back(path + ": missing");
            continue;
        }
        if (actual != digest.get<std::string>()) out.push_back(path + ": digest " + actual + " != " + digest.get<std::string>());
    }
    return out;
}

} // namespace loadcast
