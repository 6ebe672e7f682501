#pragma once

#include "loadcast/digest.hpp"
#include "loadcast/errors.hpp"
#include "loadcast/rng.hpp"
#include "loadcast/series.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace loadcast {

// ---------------------------------------------------------------------------
// Source schemas
// ---------------------------------------------------------------------------

enum class SourceKind { Load, Weather, Covid, Mobility };

inline std::string_view to_string(SourceKind kind) {
    switch (kind) {
    case SourceKind::Load: return "load";
    case SourceKind::Weather: return "weather";
    case SourceKind::Covid: return "covid";
    case SourceKind::Mobility: return "mobility";
    }
    return "?";
}

inline SourceKind source_kind_from(std::string_view name) {
    if (name == "load") return SourceKind::Load;
    if (name == "weather") return SourceKind::Weather;
    if (name == "covid") return SourceKind::Covid;
    if (name == "mobility") return SourceKind::Mobility;
    throw ConfigError("unknown source kind '" + std::string(name) +
                      "' (valid: load, weather, covid, mobility)");
}

inline bool is_hourly(SourceKind kind) { return kind == SourceKind::Load || kind == SourceKind::Weather; }

/// Exact header row for each source kind; the first column is the time key.
inline const std::vector<std::string>& schema_columns(SourceKind kind) {
    static const std::vector<std::string> load{"timestamp", "load_mw"};
    static const std::vector<std::string> weather{"timestamp", "air_temp_c", "dew_point_c",
                                                  "wind_speed_ms", "rel_humidity_pct"};
    static const std::vector<std::string> covid{"date", "new_cases", "new_deaths"};
    static const std::vector<std::string> mobility{"date", "workplaces_pct_change",
                                                   "residential_pct_change"};
    switch (kind) {
    case SourceKind::Load: return load;
    case SourceKind::Weather: return weather;
    case SourceKind::Covid: return covid;
    case SourceKind::Mobility: return mobility;
    }
    return load;
}

inline std::string default_file_name(SourceKind kind) { return std::string(to_string(kind)) + ".csv"; }

struct SourceSpec {
    SourceKind kind = SourceKind::Load;
    std::filesystem::path path;
};

/// Longest run of consecutive missing hours that is filled by interpolation.
inline constexpr int kMaxInterpolatedGapHours = 3;

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return fields;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string_view> fields;
};

/// Splits text into header and data rows, validating the header against the
/// schema. Views point into `text`.
inline std::vector<CsvRow> read_csv_rows(std::string_view text, SourceKind kind,
                                         const std::string& source) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    std::vector<CsvRow> rows;
    std::size_t line_no = 0;
    bool header_seen = false;
    const auto& expected = schema_columns(kind);
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        for (auto& f : fields) f = trim(f);
        if (!header_seen) {
            header_seen = true;
            bool ok = fields.size() == expected.size();
            for (std::size_t i = 0; ok && i < fields.size(); ++i) ok = fields[i] == expected[i];
            if (!ok) {
                std::string want;
                for (const auto& c : expected) want += (want.empty() ? "" : ",") + c;
                throw ParseError(source + ":" + std::to_string(line_no) + ": header must be '" + want +
                                 "' for " + std::string(to_string(kind)) + " data");
            }
            continue;
        }
        if (fields.size() != expected.size()) {
            throw ParseError(source + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(expected.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        rows.push_back(CsvRow{line_no, std::move(fields)});
    }
    if (!header_seen) throw ParseError(source + ": missing header row");
    return rows;
}

inline std::optional<double> parse_cell(std::string_view cell, const std::string& source,
                                        std::size_t line) {
    if (cell.empty()) return std::nullopt;
    double value = 0.0;
    const char* first = cell.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
        throw ParseError(source + ":" + std::to_string(line) + ": invalid number '" +
                         std::string(cell) + "'");
    }
    return value;
}

template <typename Fn>
auto with_line(const std::string& source, std::size_t line, Fn&& fn) {
    try {
        return fn();
    } catch (const ParseError& e) {
        throw ParseError(source + ":" + std::to_string(line) + ": " + e.what());
    }
}

inline std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace detail

/// Parses an hourly (load or weather) CSV document.
///
/// Missing hours, whether absent rows or empty cells, are filled by linear
/// interpolation when a run is at most `kMaxInterpolatedGapHours` long. A
/// timestamp repeated on consecutive rows (the DST fall-back hour) keeps the
/// first occurrence.
inline std::vector<HourlySeries> parse_hourly_csv_text(SourceKind kind, std::string_view text,
                                                       const std::string& source = "<memory>") {
    if (!is_hourly(kind)) {
        throw ConfigError(std::string(to_string(kind)) + " data is daily, not hourly");
    }
    const auto rows = detail::read_csv_rows(text, kind, source);
    if (rows.empty()) throw DataQualityError(source + ": no data rows");

    const auto& columns = schema_columns(kind);
    const std::size_t n_values = columns.size() - 1;

    std::vector<Timestamp> stamps;
    std::vector<std::vector<std::optional<double>>> cells(n_values);
    for (const auto& row : rows) {
        const Timestamp ts =
            detail::with_line(source, row.line, [&] { return Timestamp::parse(row.fields[0]); });
        if (!stamps.empty()) {
            if (ts == stamps.back()) continue;
            if (ts < stamps.back()) {
                throw OrderingError(source + ":" + std::to_string(row.line) + ": timestamp " +
                                    ts.to_string() + " is not after " + stamps.back().to_string());
            }
        }
        stamps.push_back(ts);
        for (std::size_t c = 0; c < n_values; ++c) {
            cells[c].push_back(detail::parse_cell(row.fields[c + 1], source, row.line));
        }
    }

    const Timestamp start = stamps.front();
    const auto length = static_cast<std::size_t>(stamps.back() - start + 1);

    std::vector<HourlySeries> out;
    for (std::size_t c = 0; c < n_values; ++c) {
        std::vector<std::optional<double>> grid(length);
        for (std::size_t i = 0; i < stamps.size(); ++i) {
            grid[static_cast<std::size_t>(stamps[i] - start)] = cells[c][i];
        }
        const std::string& name = columns[c + 1];
        if (!grid.front() || !grid.back()) {
            throw DataQualityError(source + ": column '" + name +
                                   "' must have values in its first and last rows");
        }
        std::vector<double> values(length);
        std::size_t i = 0;
        while (i < length) {
            if (grid[i]) {
                values[i] = *grid[i];
                ++i;
                continue;
            }
            std::size_t j = i;
            while (!grid[j]) ++j;
            const std::size_t gap = j - i;
            if (gap > static_cast<std::size_t>(kMaxInterpolatedGapHours)) {
                throw DataQualityError(source + ": column '" + name + "' has a " + std::to_string(gap) +
                                       "-hour gap from " + (start + static_cast<std::int64_t>(i)).to_string() +
                                       " to " + (start + static_cast<std::int64_t>(j)).to_string() +
                                       " (limit " + std::to_string(kMaxInterpolatedGapHours) + "h)");
            }
            const double left = *grid[i - 1];
            const double right = *grid[j];
            const double span = static_cast<double>(gap + 1);
            for (std::size_t k = i; k < j; ++k) {
                const double w = static_cast<double>(k - (i - 1)) / span;
                values[k] = left + (right - left) * w;
            }
            i = j;
        }
        out.emplace_back(name, start, std::move(values));
    }
    return out;
}

/// Parses a daily (covid or mobility) CSV document. Days must be contiguous.
inline std::vector<DailySeries> parse_daily_csv_text(SourceKind kind, std::string_view text,
                                                     const std::string& source = "<memory>") {
    if (is_hourly(kind)) {
        throw ConfigError(std::string(to_string(kind)) + " data is hourly, not daily");
    }
    const auto rows = detail::read_csv_rows(text, kind, source);
    if (rows.empty()) throw DataQualityError(source + ": no data rows");

    const auto& columns = schema_columns(kind);
    const std::size_t n_values = columns.size() - 1;
    std::vector<std::vector<double>> values(n_values);
    std::optional<Date> first;
    std::optional<Date> previous;
    for (const auto& row : rows) {
        const Date d = detail::with_line(source, row.line, [&] { return Date::parse(row.fields[0]); });
        if (previous) {
            if (d <= *previous) {
                throw OrderingError(source + ":" + std::to_string(row.line) + ": date " + d.to_string() +
                                    " is not after " + previous->to_string());
            }
            if (d - *previous > 1) {
                throw DataQualityError(source + ":" + std::to_string(row.line) + ": missing day " +
                                       (*previous + 1).to_string());
            }
        } else {
            first = d;
        }
        previous = d;
        for (std::size_t c = 0; c < n_values; ++c) {
            const auto v = detail::parse_cell(row.fields[c + 1], source, row.line);
            if (!v) {
                throw DataQualityError(source + ":" + std::to_string(row.line) + ": empty '" +
                                       columns[c + 1] + "' on " + d.to_string());
            }
            if (kind == SourceKind::Covid && *v < 0.0) {
                throw DataQualityError(source + ":" + std::to_string(row.line) + ": negative count " +
                                       detail::format_number(*v) + " in '" + columns[c + 1] + "'");
            }
            values[c].push_back(*v);
        }
    }
    std::vector<DailySeries> out;
    for (std::size_t c = 0; c < n_values; ++c) out.emplace_back(columns[c + 1], *first, std::move(values[c]));
    return out;
}

inline std::vector<HourlySeries> parse_hourly_csv(const SourceSpec& spec) {
    return parse_hourly_csv_text(spec.kind, read_file(spec.path), spec.path.string());
}

inline std::vector<DailySeries> parse_daily_csv(const SourceSpec& spec) {
    return parse_daily_csv_text(spec.kind, read_file(spec.path), spec.path.string());
}

/// Serializes hourly series (same start and length) with the schema header
/// for `kind`. Values use shortest round-trip formatting.
inline std::string to_csv(SourceKind kind, std::span<const HourlySeries> series) {
    const auto& columns = schema_columns(kind);
    if (!is_hourly(kind) || series.size() + 1 != columns.size()) {
        throw ShapeError(std::string(to_string(kind)) + " CSV needs " +
                         std::to_string(columns.size() - 1) + " hourly series");
    }
    for (const auto& s : series) {
        if (s.start() != series[0].start() || s.size() != series[0].size()) {
            throw ShapeError("series '" + s.name() + "' is not aligned with '" + series[0].name() + "'");
        }
    }
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += '\n';
    for (std::size_t i = 0; i < series[0].size(); ++i) {
        out += (series[0].start() + static_cast<std::int64_t>(i)).to_string();
        for (const auto& s : series) out += "," + detail::format_number(s.values()[i]);
        out += '\n';
    }
    return out;
}

inline std::string to_csv(SourceKind kind, std::span<const DailySeries> series) {
    const auto& columns = schema_columns(kind);
    if (is_hourly(kind) || series.size() + 1 != columns.size()) {
        throw ShapeError(std::string(to_string(kind)) + " CSV needs " +
                         std::to_string(columns.size() - 1) + " daily series");
    }
    for (const auto& s : series) {
        if (s.start_date() != series[0].start_date() || s.size() != series[0].size()) {
            throw ShapeError("series '" + s.name() + "' is not aligned with '" + series[0].name() + "'");
        }
    }
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += '\n';
    for (std::size_t i = 0; i < series[0].size(); ++i) {
        out += (series[0].start_date() + static_cast<std::int64_t>(i)).to_string();
        for (const auto& s : series) out += "," + detail::format_number(s.values()[i]);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Default regime onset date; synthetic bundles without an explicit start are
/// placed so that `shift_day` lands on it.
inline Date default_stay_at_home_date() { return Date::from_ymd(2020, 3, 22); }

struct SynthConfig {
    std::uint64_t seed = 1;
    int n_days = 365;
    double base_mw = 15000.0;
    double weekday_amp = 6000.0;
    double weekend_amp = 3000.0;
    int shift_day = 295;
    /// Defaults to `weekend_amp` when unset.
    std::optional<double> post_shift_weekday_amp;
    double weather_coupling = 40.0;
    double noise_sd = 150.0;
    /// First calendar day. Defaults to `default_stay_at_home_date() - shift_day`.
    std::optional<Date> start_date;

    double post_amp() const { return post_shift_weekday_amp.value_or(weekend_amp); }
    Date first_day() const { return start_date.value_or(default_stay_at_home_date() - shift_day); }
    Date shift_date() const { return first_day() + shift_day; }

    /// All violated constraints, empty when valid.
    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (n_days < 14) out.push_back("n_days must be >= 14 (got " + std::to_string(n_days) + ")");
        if (shift_day <= 7 || shift_day >= n_days) {
            out.push_back("shift_day must lie in (7, n_days) (got " + std::to_string(shift_day) + ")");
        }
        if (!(weekday_amp > 0)) out.push_back("weekday_amp must be > 0");
        if (!(weekend_amp > 0)) out.push_back("weekend_amp must be > 0");
        if (post_shift_weekday_amp && !(*post_shift_weekday_amp > 0)) {
            out.push_back("post_shift_weekday_amp must be > 0");
        }
        if (!(noise_sd >= 0)) out.push_back("noise_sd must be >= 0");
        if (!std::isfinite(base_mw) || !std::isfinite(weather_coupling)) {
            out.push_back("base_mw and weather_coupling must be finite");
        }
        return out;
    }

    void validate() const {
        const auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid synthetic config:";
        for (const auto& s : v) msg += "\n  - " + s;
        throw ConfigError(msg);
    }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{{"seed", c.seed},
                       {"n_days", c.n_days},
                       {"base_mw", c.base_mw},
                       {"weekday_amp", c.weekday_amp},
                       {"weekend_amp", c.weekend_amp},
                       {"shift_day", c.shift_day},
                       {"post_shift_weekday_amp", c.post_amp()},
                       {"weather_coupling", c.weather_coupling},
                       {"noise_sd", c.noise_sd},
                       {"start_date", c.first_day().to_string()}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
    static const std::set<std::string> known{"seed",      "n_days",           "base_mw",
                                             "weekday_amp", "weekend_amp",    "shift_day",
                                             "post_shift_weekday_amp", "weather_coupling",
                                             "noise_sd",  "start_date"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown synthetic config field '" + key + "'");
    }
    try {
        c.seed = j.value("seed", c.seed);
        c.n_days = j.value("n_days", c.n_days);
        c.base_mw = j.value("base_mw", c.base_mw);
        c.weekday_amp = j.value("weekday_amp", c.weekday_amp);
        c.weekend_amp = j.value("weekend_amp", c.weekend_amp);
        c.shift_day = j.value("shift_day", c.shift_day);
        if (j.contains("post_shift_weekday_amp")) c.post_shift_weekday_amp = j.at("post_shift_weekday_amp").get<double>();
        c.weather_coupling = j.value("weather_coupling", c.weather_coupling);
        c.noise_sd = j.value("noise_sd", c.noise_sd);
        if (j.contains("start_date")) c.start_date = Date::parse(j.at("start_date").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthetic config: ") + e.what());
    }
}

/// Daytime hump: sin(pi (h - 5) / 14) on [5, 19], zero elsewhere.
inline double diurnal(int hour) {
    if (hour < 5 || hour > 19) return 0.0;
    return std::max(0.0, std::sin(std::numbers::pi * (hour - 5) / 14.0));
}

struct SyntheticBundle {
    SynthConfig config;
    HourlySeries load;
    std::vector<HourlySeries> weather;   // weather.csv columns, in schema order
    std::vector<DailySeries> covid;      // new_cases, new_deaths
    std::vector<DailySeries> mobility;   // workplaces, residential
};

/// Deterministic synthetic load, weather, covid and mobility bundle with a
/// regime shift at `shift_day`.
///
/// Draw order per day d (all normals from one SplitMix64 stream seeded with
/// `seed`): one weather anomaly, then for each hour 0..23 four normals
/// (dew point, wind, humidity, load noise), then two for mobility and two
/// for covid. Formulas:
///
///   anomaly_d   = 0.7 anomaly_{d-1} + 1.5 g
///   temp(d,h)   = 12 - 10 cos(2 pi (doy - 20) / 365) + 4 sin(2 pi (h - 9) / 24) + anomaly_d
///   dew         = temp - 4 - |g|
///   wind        = 4 + 1.5 |g|
///   humidity    = clamp(70 + 10 g, 10, 100)
///   load        = base + amp(d) diurnal(h) + weather_coupling temp + noise_sd g
///   workplaces  = -40 + 3 g,  residential = 12 + 1.5 g      (d >= shift_day, else 0)
///   new_cases   = round(|2000 r + 600 g|), new_deaths = round(|100 r + 30 g|)  (d >= shift_day, else 0)
///
/// where r = min(1, (d - shift_day + 1) / 42) is a six-week outbreak ramp.
/// Mobility is a stable step at the shift while case counts keep drifting.
///
/// amp(d) is weekend_amp on Saturdays and Sundays, weekday_amp on weekdays
/// before the shift and post_shift_weekday_amp on weekdays from the shift on.
inline SyntheticBundle generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    SplitMix64 rng(cfg.seed);
    const Date first = cfg.first_day();
    const auto n = static_cast<std::size_t>(cfg.n_days);

    std::vector<double> load(n * 24), temp(n * 24), dew(n * 24), wind(n * 24), hum(n * 24);
    std::vector<double> cases(n), deaths(n), work(n), resid(n);

    double anomaly = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
        const Date date = first + static_cast<std::int64_t>(d);
        const auto ymd = date.ymd();
        const Date jan1 = Date::from_ymd(static_cast<int>(ymd.year()), 1, 1);
        const double doy = static_cast<double>(date - jan1);
        const bool post = static_cast<int>(d) >= cfg.shift_day;
        const double amp = is_weekend(date.weekday()) ? cfg.weekend_amp
                                                      : (post ? cfg.post_amp() : cfg.weekday_amp);

        anomaly = 0.7 * anomaly + 1.5 * rng.gaussian();
        const double seasonal = 12.0 - 10.0 * std::cos(2.0 * std::numbers::pi * (doy - 20.0) / 365.0);
        for (int h = 0; h < 24; ++h) {
            const std::size_t i = d * 24 + static_cast<std::size_t>(h);
            const double t = seasonal + 4.0 * std::sin(2.0 * std::numbers::pi * (h - 9) / 24.0) + anomaly;
            temp[i] = t;
            dew[i] = t - 4.0 - std::abs(rng.gaussian());
            wind[i] = 4.0 + 1.5 * std::abs(rng.gaussian());
            hum[i] = std::clamp(70.0 + 10.0 * rng.gaussian(), 10.0, 100.0);
            load[i] = cfg.base_mw + amp * diurnal(h) + cfg.weather_coupling * t +
                      cfg.noise_sd * rng.gaussian();
        }
        const double gw = rng.gaussian();
        const double gr = rng.gaussian();
        const double gc = rng.gaussian();
        const double gd = rng.gaussian();
        if (post) {
            work[d] = -40.0 + 3.0 * gw;
            resid[d] = 12.0 + 1.5 * gr;
            const double r = std::min(1.0, static_cast<double>(static_cast<int>(d) - cfg.shift_day + 1) / 42.0);
            cases[d] = std::round(std::abs(2000.0 * r + 600.0 * gc));
            deaths[d] = std::round(std::abs(100.0 * r + 30.0 * gd));
        }
    }

    const Timestamp t0 = start_of(first);
    SyntheticBundle b;
    b.config = cfg;
    b.load = HourlySeries("load_mw", t0, std::move(load));
    b.weather = {HourlySeries("air_temp_c", t0, std::move(temp)),
                 HourlySeries("dew_point_c", t0, std::move(dew)),
                 HourlySeries("wind_speed_ms", t0, std::move(wind)),
                 HourlySeries("rel_humidity_pct", t0, std::move(hum))};
    b.covid = {DailySeries("new_cases", first, std::move(cases)),
               DailySeries("new_deaths", first, std::move(deaths))};
    b.mobility = {DailySeries("workplaces_pct_change", first, std::move(work)),
                  DailySeries("residential_pct_change", first, std::move(resid))};
    return b;
}

/// Writes load/weather/covid/mobility CSVs and `manifest.json` into `dir`.
/// Returns the manifest document.
inline nlohmann::json write_bundle(const SyntheticBundle& b, const std::filesystem::path& dir) {
    const std::array<std::pair<SourceKind, std::string>, 4> files{{
        {SourceKind::Load, to_csv(SourceKind::Load, std::span<const HourlySeries>(&b.load, 1))},
        {SourceKind::Weather, to_csv(SourceKind::Weather, std::span<const HourlySeries>(b.weather))},
        {SourceKind::Covid, to_csv(SourceKind::Covid, std::span<const DailySeries>(b.covid))},
        {SourceKind::Mobility, to_csv(SourceKind::Mobility, std::span<const DailySeries>(b.mobility))},
    }};
    nlohmann::json manifest;
    manifest["schema"] = "loadcast.synth-manifest/1";
    manifest["generator"] = "splitmix64";
    manifest["config"] = b.config;
    manifest["stay_at_home"] = start_of(b.config.shift_date()).to_string();
    for (const auto& [kind, text] : files) {
        const auto name = default_file_name(kind);
        write_file(dir / name, text);
        manifest["files"][name] = {{"digest", digest_of(text)}, {"bytes", text.size()}};
    }
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

} // namespace loadcast
