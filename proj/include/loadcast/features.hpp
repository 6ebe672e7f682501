#pragma once

#include "loadcast/errors.hpp"
#include "loadcast/series.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace loadcast {

// ---------------------------------------------------------------------------
// Source preparation
// ---------------------------------------------------------------------------

/// Moves every weather value 24 hours later so that the reading at h stands
/// in for a day-ahead forecast issued at h - 24. The first day is dropped.
inline HourlySeries shift_weather(const HourlySeries& w) {
    if (w.size() <= 24) {
        throw RangeError("cannot shift '" + w.name() + "' by 24h: only " + std::to_string(w.size()) +
                         " hours");
    }
    std::vector<double> values(w.values().begin(), w.values().end() - 24);
    return {w.name(), w.start() + 24, std::move(values)};
}

/// Repeats each daily value for the 24 hours of its day.
inline HourlySeries upsample_daily(const DailySeries& d) {
    if (d.empty()) throw RangeError("cannot upsample empty series '" + d.name() + "'");
    std::vector<double> values;
    values.reserve(d.size() * 24);
    for (double v : d.values()) values.insert(values.end(), 24, v);
    return {d.name(), start_of(d.start_date()), std::move(values)};
}

/// Extends a series backwards to `full_start` with exact zeros.
inline HourlySeries zero_fill_prefix(const HourlySeries& s, Timestamp full_start) {
    if (full_start > s.start()) {
        throw RangeError("zero-fill start " + full_start.to_string() + " is after '" + s.name() +
                         "' start " + s.start().to_string());
    }
    std::vector<double> values(static_cast<std::size_t>(s.start() - full_start), 0.0);
    values.insert(values.end(), s.values().begin(), s.values().end());
    return {s.name(), full_start, std::move(values)};
}

inline DailySeries zero_fill_prefix(const DailySeries& s, Date full_start) {
    if (full_start > s.start_date()) {
        throw RangeError("zero-fill start " + full_start.to_string() + " is after '" + s.name() +
                         "' start " + s.start_date().to_string());
    }
    std::vector<double> values(static_cast<std::size_t>(s.start_date() - full_start), 0.0);
    values.insert(values.end(), s.values().begin(), s.values().end());
    return {s.name(), full_start, std::move(values)};
}

enum class FeatureSet { Weather, Covid, Mobility };

inline std::string_view to_string(FeatureSet f) {
    switch (f) {
    case FeatureSet::Weather: return "weather";
    case FeatureSet::Covid: return "covid";
    case FeatureSet::Mobility: return "mobility";
    }
    return "?";
}

inline FeatureSet feature_set_from(std::string_view name) {
    if (name == "weather") return FeatureSet::Weather;
    if (name == "covid") return FeatureSet::Covid;
    if (name == "mobility") return FeatureSet::Mobility;
    throw ConfigError("unknown feature set '" + std::string(name) + "' (valid: weather, covid, mobility)");
}

inline const std::vector<std::string>& feature_channels(FeatureSet f) {
    static const std::vector<std::string> weather{"air_temp_c", "dew_point_c", "wind_speed_ms",
                                                  "rel_humidity_pct"};
    static const std::vector<std::string> covid{"new_cases", "new_deaths"};
    static const std::vector<std::string> mobility{"workplaces_pct_change", "residential_pct_change"};
    switch (f) {
    case FeatureSet::Weather: return weather;
    case FeatureSet::Covid: return covid;
    case FeatureSet::Mobility: return mobility;
    }
    return weather;
}

inline constexpr std::string_view kLoadChannel = "load_mw";

/// Raw parsed sources before alignment.
struct SourceBundle {
    HourlySeries load;
    std::vector<HourlySeries> weather;
    std::vector<DailySeries> covid;
    std::vector<DailySeries> mobility;
};

/// Applies the source preparation rules and joins everything on one hourly
/// grid: weather shifted by 24h, covid and mobility repeated 24 times per day
/// and zero-filled back to the load start. Missing groups are omitted.
inline AlignedDataset prepare_dataset(const SourceBundle& src) {
    std::vector<HourlySeries> channels{src.load.renamed(std::string(kLoadChannel))};
    for (const auto& w : src.weather) channels.push_back(shift_weather(w));
    const auto add_daily = [&](const std::vector<DailySeries>& group) {
        for (const auto& d : group) {
            HourlySeries h = upsample_daily(d);
            if (h.start() > src.load.start()) h = zero_fill_prefix(h, src.load.start());
            channels.push_back(std::move(h));
        }
    };
    add_daily(src.covid);
    add_daily(src.mobility);
    return align(channels, kLoadChannel);
}

/// Keeps the load channel plus the channels of the given feature groups.
inline AlignedDataset select_features(const AlignedDataset& ds, std::span<const FeatureSet> features) {
    std::vector<std::string> names{std::string(kLoadChannel)};
    for (auto f : features) {
        for (const auto& c : feature_channels(f)) {
            if (std::find(names.begin(), names.end(), c) == names.end()) names.push_back(c);
        }
    }
    return ds.select(names);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitConfig {
    Timestamp stay_at_home = Timestamp::from_ymdh(2020, 3, 22, 0);
    /// Earliest training timestamp; the dataset start when unset.
    std::optional<Timestamp> train_start;
    int horizon_weeks = 10;

    Timestamp post_end() const { return stay_at_home + static_cast<std::int64_t>(horizon_weeks) * 168; }

    void validate() const {
        if (horizon_weeks < 1) throw ConfigError("horizon_weeks must be >= 1");
        if (train_start && *train_start >= stay_at_home) {
            throw ConfigError("train_start " + train_start->to_string() + " must precede stay_at_home " +
                              stay_at_home.to_string());
        }
    }
};

struct PrePostSplit {
    AlignedDataset pre;
    AlignedDataset post;
};

/// pre = [start, stay_at_home), post = [stay_at_home, stay_at_home + horizon).
inline PrePostSplit split_pre_post(const AlignedDataset& ds, const SplitConfig& cfg) {
    cfg.validate();
    if (ds.empty()) throw RangeError("cannot split an empty dataset");
    if (cfg.stay_at_home <= ds.first() || cfg.stay_at_home >= ds.end()) {
        throw RangeError("stay-at-home " + cfg.stay_at_home.to_string() + " outside data range [" +
                         ds.first().to_string() + ", " + ds.end().to_string() + ")");
    }
    if (cfg.post_end() > ds.end()) {
        throw RangeError("post window needs data until " + cfg.post_end().to_string() +
                         " but data ends at " + ds.end().to_string());
    }
    const Timestamp from = cfg.train_start ? std::max(*cfg.train_start, ds.first()) : ds.first();
    return {ds.restrict(from, cfg.stay_at_home), ds.restrict(cfg.stay_at_home, cfg.post_end())};
}

/// Rows falling on Saturday or Sunday, order preserved.
inline AlignedDataset filter_weekends(const AlignedDataset& ds) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        if (is_weekend(ds.index()[r].weekday())) rows.push_back(r);
    }
    return ds.take_rows(rows);
}

// ---------------------------------------------------------------------------
// Supervised windows
// ---------------------------------------------------------------------------

inline constexpr std::size_t kWindowHours = 168;
inline constexpr std::size_t kHorizonHours = 24;

/// Supervised samples: `window_hours x channels` history (row-major, oldest
/// hour first) mapped to the 24 target-channel values of the following day.
struct WindowSet {
    std::size_t window_hours = kWindowHours;
    std::size_t horizon = kHorizonHours;
    std::vector<std::string> channel_names;
    std::size_t target_channel = 0;

    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> targets;
    std::vector<Date> target_dates;
    /// Latest timestamp that contributed to each input.
    std::vector<Timestamp> input_latest;

    std::size_t size() const { return targets.size(); }
    bool empty() const { return targets.empty(); }
    std::size_t channels() const { return channel_names.size(); }

    double input(std::size_t sample, std::size_t hour, std::size_t channel) const {
        return inputs[sample][hour * channels() + channel];
    }

    void push(std::vector<double> input, std::vector<double> target, Date date, Timestamp latest) {
        inputs.push_back(std::move(input));
        targets.push_back(std::move(target));
        target_dates.push_back(date);
        input_latest.push_back(latest);
    }

    /// Appends compatible samples from `other`.
    void append(const WindowSet& other) {
        if (other.channel_names != channel_names || other.window_hours != window_hours ||
            other.horizon != horizon) {
            throw ShapeError("cannot merge window sets with different layouts");
        }
        for (std::size_t i = 0; i < other.size(); ++i) {
            push(other.inputs[i], other.targets[i], other.target_dates[i], other.input_latest[i]);
        }
    }

    /// Samples [from, to) as a new set.
    WindowSet subset(std::size_t from, std::size_t to) const {
        WindowSet out = empty_like();
        for (std::size_t i = from; i < to; ++i) {
            out.push(inputs[i], targets[i], target_dates[i], input_latest[i]);
        }
        return out;
    }

    WindowSet empty_like() const {
        WindowSet out;
        out.window_hours = window_hours;
        out.horizon = horizon;
        out.channel_names = channel_names;
        out.target_channel = target_channel;
        return out;
    }

    bool operator==(const WindowSet&) const = default;
};

namespace detail {

/// Row positions of every fully observed calendar day (hours 0..23 present).
inline std::vector<std::size_t> complete_day_rows(const AlignedDataset& ds) {
    std::vector<std::size_t> rows;
    const auto& idx = ds.index();
    for (std::size_t r = 0; r + 23 < idx.size(); ++r) {
        if (idx[r].hour() == 0 && idx[r + 23] == idx[r] + 23) rows.push_back(r);
    }
    return rows;
}

inline void copy_rows(const AlignedDataset& ds, std::size_t first, std::size_t count,
                      std::vector<double>& out) {
    for (std::size_t r = first; r < first + count; ++r) {
        for (std::size_t c = 0; c < ds.channel_count(); ++c) out.push_back(ds.value(r, c));
    }
}

inline WindowSet empty_windows(const AlignedDataset& ds) {
    WindowSet ws;
    ws.channel_names = ds.channel_names();
    ws.target_channel = ds.target_column();
    return ws;
}

} // namespace detail

/// Builds one day-ahead sample per complete calendar day.
///
/// Without pairing, the input is the 168 contiguous hours before the target
/// day; days lacking that history are skipped. With `weekend_pairing`, only
/// weekend days are targets and the input is the 7 most recent complete
/// weekend days before the target, concatenated oldest first.
inline WindowSet build_windows(const AlignedDataset& ds, bool weekend_pairing) {
    WindowSet ws = detail::empty_windows(ds);
    const std::size_t tcol = ws.target_channel;
    const auto& idx = ds.index();
    const auto days = detail::complete_day_rows(ds);
    const std::size_t days_per_window = kWindowHours / 24;

    const auto target_of = [&](std::size_t r) {
        std::vector<double> t(kHorizonHours);
        for (std::size_t h = 0; h < kHorizonHours; ++h) t[h] = ds.value(r + h, tcol);
        return t;
    };

    if (!weekend_pairing) {
        for (std::size_t r : days) {
            if (r < kWindowHours || idx[r - kWindowHours] != idx[r] - static_cast<std::int64_t>(kWindowHours)) {
                continue;
            }
            std::vector<double> input;
            input.reserve(kWindowHours * ds.channel_count());
            detail::copy_rows(ds, r - kWindowHours, kWindowHours, input);
            ws.push(std::move(input), target_of(r), idx[r].date(), idx[r - 1]);
        }
    } else {
        std::vector<std::size_t> weekend;
        for (std::size_t r : days) {
            if (is_weekend(idx[r].weekday())) weekend.push_back(r);
        }
        for (std::size_t k = days_per_window; k < weekend.size(); ++k) {
            std::vector<double> input;
            input.reserve(kWindowHours * ds.channel_count());
            for (std::size_t j = k - days_per_window; j < k; ++j) detail::copy_rows(ds, weekend[j], 24, input);
            ws.push(std::move(input), target_of(weekend[k]), idx[weekend[k]].date(),
                    idx[weekend[k - 1] + 23]);
        }
    }
    if (ws.empty()) {
        throw DatasetError(std::string("no complete ") + (weekend_pairing ? "weekend-paired " : "") +
                           "windows in " + std::to_string(ds.rows()) + " rows");
    }
    return ws;
}

/// Input for forecasting `day`: the 168 contiguous hours before it.
inline std::vector<double> input_window(const AlignedDataset& ds, Date day) {
    const Timestamp begin = start_of(day) - static_cast<std::int64_t>(kWindowHours);
    const auto pos = ds.position_of(begin);
    if (!pos || *pos + kWindowHours > ds.rows() ||
        ds.index()[*pos + kWindowHours - 1] != start_of(day) - 1) {
        throw RangeError("no contiguous 168h history before " + day.to_string());
    }
    std::vector<double> input;
    input.reserve(kWindowHours * ds.channel_count());
    detail::copy_rows(ds, *pos, kWindowHours, input);
    return input;
}

/// Target-channel values of `day`.
inline std::vector<double> day_values(const AlignedDataset& ds, Date day) {
    const auto pos = ds.position_of(start_of(day));
    if (!pos || *pos + 24 > ds.rows() || ds.index()[*pos + 23] != start_of(day) + 23) {
        throw RangeError("no complete data for " + day.to_string());
    }
    std::vector<double> v(24);
    const std::size_t tcol = ds.target_column();
    for (std::size_t h = 0; h < 24; ++h) v[h] = ds.value(*pos + h, tcol);
    return v;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

struct NormStats {
    std::vector<double> mean;
    std::vector<double> sd;
    std::vector<bool> constant;
    double target_mean = 0.0;
    double target_sd = 1.0;
    bool target_constant = false;

    bool operator==(const NormStats&) const = default;
};

namespace detail {

inline constexpr double kMinSd = 1e-12;

inline void finish_stats(double sumsq_centered, std::size_t n, double mean, double& sd, bool& constant) {
    sd = std::sqrt(sumsq_centered / static_cast<double>(n));
    constant = !(sd > kMinSd * std::max(1.0, std::abs(mean)));
    if (constant) sd = 1.0;
}

} // namespace detail

/// Per-channel z-score statistics (population sd) over all input hours, plus
/// target statistics. Constant channels get sd = 1 and are flagged.
inline NormStats fit_norm(const WindowSet& ws) {
    if (ws.empty()) throw DatasetError("cannot fit normalization on an empty window set");
    const std::size_t C = ws.channels();
    NormStats s;
    s.mean.assign(C, 0.0);
    s.sd.assign(C, 1.0);
    s.constant.assign(C, false);

    const double n_in = static_cast<double>(ws.size() * ws.window_hours);
    for (const auto& in : ws.inputs) {
        for (std::size_t h = 0; h < ws.window_hours; ++h) {
            for (std::size_t c = 0; c < C; ++c) s.mean[c] += in[h * C + c];
        }
    }
    for (auto& m : s.mean) m /= n_in;
    std::vector<double> ss(C, 0.0);
    for (const auto& in : ws.inputs) {
        for (std::size_t h = 0; h < ws.window_hours; ++h) {
            for (std::size_t c = 0; c < C; ++c) {
                const double d = in[h * C + c] - s.mean[c];
                ss[c] += d * d;
            }
        }
    }
    for (std::size_t c = 0; c < C; ++c) {
        double sd = 0.0;
        bool constant = false;
        detail::finish_stats(ss[c], ws.size() * ws.window_hours, s.mean[c], sd, constant);
        s.sd[c] = sd;
        s.constant[c] = constant;
    }

    double tsum = 0.0;
    std::size_t tn = 0;
    for (const auto& t : ws.targets) {
        for (double v : t) tsum += v;
        tn += t.size();
    }
    s.target_mean = tsum / static_cast<double>(tn);
    double tss = 0.0;
    for (const auto& t : ws.targets) {
        for (double v : t) tss += (v - s.target_mean) * (v - s.target_mean);
    }
    detail::finish_stats(tss, tn, s.target_mean, s.target_sd, s.target_constant);
    return s;
}

inline std::vector<double> normalize_input(std::span<const double> input, const NormStats& s) {
    const std::size_t C = s.mean.size();
    if (C == 0 || input.size() % C != 0) {
        throw ShapeError("input of " + std::to_string(input.size()) + " values does not match " +
                         std::to_string(C) + " normalized channels");
    }
    std::vector<double> out(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const std::size_t c = i % C;
        out[i] = (input[i] - s.mean[c]) / s.sd[c];
    }
    return out;
}

inline std::vector<double> normalize_target(std::span<const double> target, const NormStats& s) {
    std::vector<double> out(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) out[i] = (target[i] - s.target_mean) / s.target_sd;
    return out;
}

inline WindowSet apply_norm(const WindowSet& ws, const NormStats& s) {
    if (s.mean.size() != ws.channels()) {
        throw ShapeError("normalization has " + std::to_string(s.mean.size()) + " channels, windows have " +
                         std::to_string(ws.channels()));
    }
    WindowSet out = ws;
    for (auto& in : out.inputs) in = normalize_input(in, s);
    for (auto& t : out.targets) t = normalize_target(t, s);
    return out;
}

inline std::vector<double> invert_target(std::span<const double> pred, const NormStats& s) {
    std::vector<double> out(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) out[i] = pred[i] * s.target_sd + s.target_mean;
    return out;
}

} // namespace loadcast
