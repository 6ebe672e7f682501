#pragma once

#include "loadcast/digest.hpp"
#include "loadcast/errors.hpp"
#include "loadcast/features.hpp"
#include "loadcast/nn/models.hpp"
#include "loadcast/nn/train.hpp"
#include "loadcast/series.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace loadcast {

// ---------------------------------------------------------------------------
// Metric
// ---------------------------------------------------------------------------

/// Mean absolute percentage error, in percent: (100/n) sum |L - F| / |L|.
/// `start`, when given, is the timestamp of element 0 and is used to name a
/// zero actual value in the error message.
inline double mape(std::span<const double> actual, std::span<const double> forecast,
                   std::optional<Timestamp> start = std::nullopt) {
    if (actual.size() != forecast.size()) {
        throw MetricError("mape length mismatch: " + std::to_string(actual.size()) + " actual vs " +
                          std::to_string(forecast.size()) + " forecast");
    }
    if (actual.empty()) throw MetricError("mape of zero points");
    double sum = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        if (actual[t] == 0.0) {
            throw MetricError("actual value is zero at " +
                              (start ? (*start + static_cast<std::int64_t>(t)).to_string()
                                     : "index " + std::to_string(t)) +
                              "; MAPE undefined");
        }
        sum += std::abs((actual[t] - forecast[t]) / actual[t]);
    }
    return 100.0 * sum / static_cast<double>(actual.size());
}

/// Forecast for `day` equal to the load observed seven days earlier.
inline std::vector<double> seasonal_naive(const AlignedDataset& ds, Date day) {
    try {
        return day_values(ds, day - 7);
    } catch (const RangeError&) {
        throw RangeError("seasonal naive forecast for " + day.to_string() + " needs load on " +
                         (day - 7).to_string());
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class ScenarioKind { Benchmark, Weekend, Rolling };

inline std::string_view to_string(ScenarioKind k) {
    switch (k) {
    case ScenarioKind::Benchmark: return "benchmark";
    case ScenarioKind::Weekend: return "weekend";
    case ScenarioKind::Rolling: return "rolling";
    }
    return "?";
}

inline ScenarioKind scenario_kind_from(std::string_view name) {
    if (name == "benchmark") return ScenarioKind::Benchmark;
    if (name == "weekend") return ScenarioKind::Weekend;
    if (name == "rolling") return ScenarioKind::Rolling;
    throw ConfigError("unknown scenario kind '" + std::string(name) + "' (valid: benchmark, weekend, rolling)");
}

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::Benchmark;
    std::vector<FeatureSet> features{FeatureSet::Weather};
    SplitConfig split;
    nn::TrainConfig train;
    nn::Architecture architecture = nn::Architecture::LSTM;
    /// Rolling only: start each weekly retrain from the previous week's weights.
    bool warm_start = false;

    std::vector<std::string> violations() const {
        auto out = train.violations();
        if (split.horizon_weeks < 1) out.push_back("split.horizon_weeks must be >= 1");
        if (kind == ScenarioKind::Rolling && split.horizon_weeks < 2) {
            out.push_back("rolling scenarios need split.horizon_weeks >= 2");
        }
        for (auto f : features) {
            if (f != FeatureSet::Weather && kind != ScenarioKind::Rolling) {
                out.push_back("feature '" + std::string(to_string(f)) + "' requires the rolling scenario (got " +
                              std::string(to_string(kind)) + ")");
            }
        }
        if (warm_start && kind != ScenarioKind::Rolling) out.push_back("warm_start applies to rolling scenarios only");
        return out;
    }

    void validate() const {
        const auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid scenario config:";
        for (const auto& s : v) msg += "\n  - " + s;
        throw ConfigError(msg);
    }
};

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
    std::vector<std::string> features;
    for (auto f : c.features) features.emplace_back(to_string(f));
    j = nlohmann::json{{"kind", to_string(c.kind)},
                       {"features", features},
                       {"architecture", nn::to_string(c.architecture)},
                       {"stay_at_home", c.split.stay_at_home.to_string()},
                       {"train_start", c.split.train_start ? nlohmann::json(c.split.train_start->to_string())
                                                           : nlohmann::json(nullptr)},
                       {"horizon_weeks", c.split.horizon_weeks},
                       {"train", c.train},
                       {"warm_start", c.warm_start}};
}

/// Content digest of a dataset: index, channel names, roles and value bits.
inline std::string dataset_digest(const AlignedDataset& ds) {
    Fnv1a h;
    for (auto t : ds.index()) {
        const auto v = t.hours_since_epoch();
        h.update(&v, sizeof v);
    }
    for (const auto& c : ds.channels()) {
        h.update(c.name);
        h.update(c.role == ChannelRole::Target ? "T" : "X");
        h.update(c.values.data(), c.values.size() * sizeof(double));
    }
    return h.hex();
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline constexpr std::string_view kReportSchema = "loadcast.report/1";

/// Summary of one model fit inside a scenario run.
struct TrainingRecord {
    std::string label;
    std::size_t windows = 0;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    int epochs_run = 0;
};

struct ScenarioReport {
    std::string scenario;  // benchmark | weekend | rolling | seasonal_naive
    std::string period = "post";  // post | pre_selftest
    std::string architecture;
    std::vector<std::string> features;
    std::uint64_t seed = 0;
    std::string fingerprint;
    std::string dataset_digest;

    std::vector<Date> days;
    std::vector<std::vector<double>> forecasts;
    std::vector<std::vector<double>> actuals;
    std::vector<double> daily_mape;
    std::vector<double> weekly_mape;
    double overall_mape = 0.0;

    /// 1-based weeks forecast by a model that never saw the scenario features vary.
    std::vector<int> feature_blind_weeks;
    std::vector<TrainingRecord> training;
};

/// Computes daily, weekly (7-day blocks, last one possibly shorter) and
/// overall MAPE. Overall pools every hourly point.
inline ScenarioReport assemble_report(std::vector<Date> days, std::vector<std::vector<double>> forecasts,
                                      std::vector<std::vector<double>> actuals) {
    if (days.empty()) throw ReportError("report needs at least one day");
    if (forecasts.size() != days.size() || actuals.size() != days.size()) {
        throw ReportError("report has " + std::to_string(days.size()) + " days but " +
                          std::to_string(forecasts.size()) + " forecasts and " + std::to_string(actuals.size()) +
                          " actuals");
    }
    for (std::size_t d = 0; d < days.size(); ++d) {
        if (forecasts[d].size() != kHorizonHours || actuals[d].size() != kHorizonHours) {
            throw ReportError("day " + days[d].to_string() + " does not have 24 forecast and actual values");
        }
    }
    ScenarioReport r;
    std::vector<double> all_actual, all_forecast;
    for (std::size_t d = 0; d < days.size(); ++d) {
        r.daily_mape.push_back(mape(actuals[d], forecasts[d], start_of(days[d])));
        all_actual.insert(all_actual.end(), actuals[d].begin(), actuals[d].end());
        all_forecast.insert(all_forecast.end(), forecasts[d].begin(), forecasts[d].end());
    }
    for (std::size_t w = 0; w * 7 < days.size(); ++w) {
        const std::size_t lo = w * 7 * 24;
        const std::size_t hi = std::min(days.size(), (w + 1) * 7) * 24;
        r.weekly_mape.push_back(mape(std::span(all_actual).subspan(lo, hi - lo),
                                     std::span(all_forecast).subspan(lo, hi - lo), start_of(days[w * 7])));
    }
    r.overall_mape = mape(all_actual, all_forecast, start_of(days.front()));
    r.days = std::move(days);
    r.forecasts = std::move(forecasts);
    r.actuals = std::move(actuals);
    return r;
}

inline nlohmann::json report_to_json(const ScenarioReport& r) {
    nlohmann::json j;
    j["schema"] = kReportSchema;
    j["scenario"] = r.scenario;
    j["period"] = r.period;
    j["architecture"] = r.architecture;
    j["features"] = r.features;
    j["seed"] = r.seed;
    j["fingerprint"] = r.fingerprint;
    j["dataset_digest"] = r.dataset_digest;
    j["overall_mape"] = r.overall_mape;
    j["weekly_mape"] = r.weekly_mape;
    j["daily_mape"] = r.daily_mape;
    j["feature_blind_weeks"] = r.feature_blind_weeks;
    j["training"] = nlohmann::json::array();
    for (const auto& t : r.training) {
        j["training"].push_back({{"label", t.label},
                                 {"windows", t.windows},
                                 {"best_epoch", t.best_epoch},
                                 {"best_val_loss", t.best_val_loss},
                                 {"epochs_run", t.epochs_run}});
    }
    j["days"] = nlohmann::json::array();
    for (std::size_t d = 0; d < r.days.size(); ++d) {
        j["days"].push_back({{"date", r.days[d].to_string()}, {"forecast", r.forecasts[d]}, {"actual", r.actuals[d]}});
    }
    return j;
}

inline std::string serialize_report(const ScenarioReport& r) { return report_to_json(r).dump(2) + "\n"; }

/// Parses a report document and re-derives every MAPE from the stored
/// per-day vectors; a stored overall MAPE that disagrees beyond 1e-9 is
/// rejected.
inline ScenarioReport parse_report(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("schema") != kReportSchema) {
            throw ParseError("unsupported report schema " + j.at("schema").dump());
        }
        std::vector<Date> days;
        std::vector<std::vector<double>> forecasts, actuals;
        for (const auto& d : j.at("days")) {
            days.push_back(Date::parse(d.at("date").get<std::string>()));
            forecasts.push_back(d.at("forecast").get<std::vector<double>>());
            actuals.push_back(d.at("actual").get<std::vector<double>>());
        }
        ScenarioReport r = assemble_report(std::move(days), std::move(forecasts), std::move(actuals));
        const double stored = j.at("overall_mape").get<double>();
        if (std::abs(stored - r.overall_mape) > 1e-9) {
            throw ParseError("stored overall_mape " + std::to_string(stored) + " disagrees with per-day data (" +
                             std::to_string(r.overall_mape) + ")");
        }
        r.scenario = j.at("scenario").get<std::string>();
        r.period = j.value("period", "post");
        r.architecture = j.at("architecture").get<std::string>();
        r.features = j.at("features").get<std::vector<std::string>>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.fingerprint = j.at("fingerprint").get<std::string>();
        r.dataset_digest = j.value("dataset_digest", "");
        r.feature_blind_weeks = j.value("feature_blind_weeks", std::vector<int>{});
        for (const auto& t : j.value("training", nlohmann::json::array())) {
            r.training.push_back(TrainingRecord{t.at("label"), t.at("windows"), t.at("best_epoch"),
                                                t.at("best_val_loss"), t.at("epochs_run")});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed report: ") + e.what());
    } catch (const ReportError& e) {
        throw ParseError(std::string("malformed report: ") + e.what());
    }
}

/// `date,mape_pct` rows.
inline std::string daily_mape_csv(const ScenarioReport& r) {
    std::string out = "date,mape_pct\n";
    for (std::size_t d = 0; d < r.days.size(); ++d) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, r.daily_mape[d]);
        out += r.days[d].to_string() + "," + std::string(buf, ptr) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scenario runs
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> feature_names(std::span<const FeatureSet> fs) {
    std::vector<std::string> out;
    for (auto f : fs) out.emplace_back(to_string(f));
    return out;
}

inline TrainingRecord record_of(std::string label, const nn::TrainResult& r) {
    return TrainingRecord{std::move(label), r.trace.train_samples + r.trace.val_samples, r.trace.best_epoch,
                          r.trace.best_val_loss.empty() ? 0.0 : r.trace.best_val_loss.back(),
                          static_cast<int>(r.trace.train_loss.size())};
}

inline std::vector<Date> horizon_days(Date first, int weeks) {
    std::vector<Date> days;
    for (int d = 0; d < weeks * 7; ++d) days.push_back(first + d);
    return days;
}

struct Forecasts {
    std::vector<std::vector<double>> forecast;
    std::vector<std::vector<double>> actual;
};

inline void forecast_days(const nn::ModelParameters& model, const AlignedDataset& history,
                          std::span<const Date> days, Forecasts& out) {
    for (Date d : days) {
        out.forecast.push_back(nn::predict(model, input_window(history, d)));
        out.actual.push_back(day_values(history, d));
    }
}

inline void stamp(ScenarioReport& r, const ScenarioConfig& cfg, const AlignedDataset& ds) {
    r.scenario = std::string(to_string(cfg.kind));
    r.architecture = std::string(nn::to_string(cfg.architecture));
    r.features = feature_names(cfg.features);
    r.seed = cfg.train.seed;
    r.dataset_digest = dataset_digest(ds);
    nlohmann::json fp = cfg;
    fp["dataset"] = r.dataset_digest;
    fp["period"] = r.period;
    r.fingerprint = digest_of(fp.dump());
}

inline Date stay_date(const SplitConfig& split) {
    if (split.stay_at_home.hour() != 0) {
        throw ConfigError("stay_at_home must fall on midnight, got " + split.stay_at_home.to_string());
    }
    return split.stay_at_home.date();
}

} // namespace detail

/// Classical scenario: train once on every pre-period day, forecast the post
/// period day-ahead without retraining.
inline ScenarioReport run_benchmark(const AlignedDataset& ds, const ScenarioConfig& cfg) {
    cfg.validate();
    if (cfg.kind != ScenarioKind::Benchmark) throw ConfigError("run_benchmark needs kind=benchmark");
    const AlignedDataset sel = select_features(ds, cfg.features);
    const auto split = split_pre_post(sel, cfg.split);
    const auto fit = nn::train(cfg.architecture, build_windows(split.pre, false), cfg.train);

    const auto days = detail::horizon_days(detail::stay_date(cfg.split), cfg.split.horizon_weeks);
    detail::Forecasts f;
    detail::forecast_days(fit.model, sel.restrict(sel.first(), cfg.split.post_end()), days, f);
    ScenarioReport r = assemble_report(days, std::move(f.forecast), std::move(f.actual));
    r.training.push_back(detail::record_of("pre", fit));
    detail::stamp(r, cfg, sel);
    return r;
}

/// Benchmark model checked on ordinary data: trained on the pre period minus
/// its last `horizon_weeks`, then forecasting those held-out weeks.
inline ScenarioReport run_pre_selftest(const AlignedDataset& ds, const ScenarioConfig& cfg) {
    cfg.validate();
    if (cfg.kind != ScenarioKind::Benchmark) throw ConfigError("run_pre_selftest needs kind=benchmark");
    const AlignedDataset sel = select_features(ds, cfg.features);
    const Date stay = detail::stay_date(cfg.split);
    const Date test_first = stay - 7 * cfg.split.horizon_weeks;
    const Timestamp from = cfg.split.train_start ? std::max(*cfg.split.train_start, sel.first()) : sel.first();
    if (start_of(test_first) <= from) {
        throw RangeError("pre-period self-test needs data before " + test_first.to_string());
    }
    const auto fit = nn::train(cfg.architecture, build_windows(sel.restrict(from, start_of(test_first)), false),
                               cfg.train);

    const auto days = detail::horizon_days(test_first, cfg.split.horizon_weeks);
    detail::Forecasts f;
    detail::forecast_days(fit.model, sel.restrict(sel.first(), cfg.split.stay_at_home), days, f);
    ScenarioReport r = assemble_report(days, std::move(f.forecast), std::move(f.actual));
    r.period = "pre_selftest";
    r.training.push_back(detail::record_of("pre_selftest", fit));
    detail::stamp(r, cfg, sel);
    return r;
}

/// Training windows of the weekend-simulation scenario: pre-period weekend
/// days, each paired with the 7 preceding weekend days.
inline WindowSet weekend_windows(const AlignedDataset& sel, const SplitConfig& split) {
    return build_windows(filter_weekends(split_pre_post(sel, split).pre), true);
}

/// Weekend-simulation scenario: train on pre-period weekends only, forecast
/// the post period as in the benchmark.
inline ScenarioReport run_weekend(const AlignedDataset& ds, const ScenarioConfig& cfg) {
    cfg.validate();
    if (cfg.kind != ScenarioKind::Weekend) throw ConfigError("run_weekend needs kind=weekend");
    const AlignedDataset sel = select_features(ds, cfg.features);
    const auto fit = nn::train(cfg.architecture, weekend_windows(sel, cfg.split), cfg.train);

    const auto days = detail::horizon_days(detail::stay_date(cfg.split), cfg.split.horizon_weeks);
    detail::Forecasts f;
    detail::forecast_days(fit.model, sel.restrict(sel.first(), cfg.split.post_end()), days, f);
    ScenarioReport r = assemble_report(days, std::move(f.forecast), std::move(f.actual));
    r.training.push_back(detail::record_of("weekend", fit));
    detail::stamp(r, cfg, sel);
    return r;
}

/// Training cutoff after post week `week` (1-based): stay_at_home + 7 week days.
inline Timestamp rolling_cutoff(const SplitConfig& split, int week) {
    return split.stay_at_home + static_cast<std::int64_t>(week) * 168;
}

/// Training windows for the model that forecasts week `week + 1`: the
/// weekend-paired pre-period windows plus every post-period day before
/// `rolling_cutoff(week)`. Throws LeakageError if any sample touches data at
/// or after the cutoff.
inline WindowSet rolling_training_set(const AlignedDataset& sel, const SplitConfig& split, int week) {
    const Timestamp cutoff = rolling_cutoff(split, week);
    const Date stay = split.stay_at_home.date();
    WindowSet ws = weekend_windows(sel, split);
    const WindowSet recent = build_windows(sel.restrict(sel.first(), cutoff), false);
    for (std::size_t i = 0; i < recent.size(); ++i) {
        if (recent.target_dates[i] < stay) continue;
        ws.push(recent.inputs[i], recent.targets[i], recent.target_dates[i], recent.input_latest[i]);
    }
    for (std::size_t i = 0; i < ws.size(); ++i) {
        if (ws.input_latest[i] >= cutoff || start_of(ws.target_dates[i]) + 24 > cutoff) {
            throw LeakageError("training sample for " + ws.target_dates[i].to_string() +
                               " uses data at or after cutoff " + cutoff.to_string());
        }
    }
    return ws;
}

/// Model forecasting rolling week `week + 1`; week 0 is the weekend-trained
/// fallback used for the first post week.
inline nn::TrainResult rolling_week_model(const AlignedDataset& sel, const ScenarioConfig& cfg, int week,
                                          const nn::ModelParameters* warm = nullptr) {
    const WindowSet ws = week == 0 ? weekend_windows(sel, cfg.split) : rolling_training_set(sel, cfg.split, week);
    return nn::train(cfg.architecture, ws, cfg.train, warm);
}

/// Rolling retraining scenario: week 1 is forecast by the weekend-trained
/// model (flagged feature-blind); for each later week the model is retrained
/// on weekend windows plus all completed post weeks.
inline ScenarioReport run_rolling(const AlignedDataset& ds, const ScenarioConfig& cfg) {
    cfg.validate();
    if (cfg.kind != ScenarioKind::Rolling) throw ConfigError("run_rolling needs kind=rolling");
    const AlignedDataset sel = select_features(ds, cfg.features);
    split_pre_post(sel, cfg.split);
    const AlignedDataset history = sel.restrict(sel.first(), cfg.split.post_end());
    const Date stay = detail::stay_date(cfg.split);

    detail::Forecasts f;
    std::vector<TrainingRecord> records;
    std::optional<nn::ModelParameters> previous;
    for (int week = 0; week < cfg.split.horizon_weeks; ++week) {
        const nn::ModelParameters* warm = cfg.warm_start && previous ? &*previous : nullptr;
        auto fit = rolling_week_model(sel, cfg, week, warm);
        const auto days = detail::horizon_days(stay + 7 * week, 1);
        detail::forecast_days(fit.model, history, days, f);
        records.push_back(detail::record_of(week == 0 ? "weekend" : "cutoff_week_" + std::to_string(week), fit));
        previous = std::move(fit.model);
    }
    ScenarioReport r = assemble_report(detail::horizon_days(stay, cfg.split.horizon_weeks), std::move(f.forecast),
                                       std::move(f.actual));
    r.feature_blind_weeks = {1};
    r.training = std::move(records);
    detail::stamp(r, cfg, sel);
    return r;
}

/// Seasonal-naive baseline over the post period.
inline ScenarioReport run_seasonal_naive(const AlignedDataset& ds, const SplitConfig& split) {
    const Date stay = detail::stay_date(split);
    split_pre_post(ds, split);
    const auto days = detail::horizon_days(stay, split.horizon_weeks);
    std::vector<std::vector<double>> forecast, actual;
    for (Date d : days) {
        forecast.push_back(seasonal_naive(ds, d));
        actual.push_back(day_values(ds, d));
    }
    ScenarioReport r = assemble_report(days, std::move(forecast), std::move(actual));
    r.scenario = "seasonal_naive";
    r.architecture = "seasonal_naive";
    r.dataset_digest = dataset_digest(ds);
    r.fingerprint = digest_of("seasonal_naive:" + split.stay_at_home.to_string() + ":" +
                              std::to_string(split.horizon_weeks) + ":" + r.dataset_digest);
    return r;
}

/// Dispatches on `cfg.kind`.
inline ScenarioReport run_scenario(const AlignedDataset& ds, const ScenarioConfig& cfg) {
    switch (cfg.kind) {
    case ScenarioKind::Benchmark: return run_benchmark(ds, cfg);
    case ScenarioKind::Weekend: return run_weekend(ds, cfg);
    case ScenarioKind::Rolling: return run_rolling(ds, cfg);
    }
    throw ConfigError("unknown scenario kind");
}

} // namespace loadcast
