#pragma once

#include "loadcast/errors.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loadcast {

// ---------------------------------------------------------------------------
// Calendar
// ---------------------------------------------------------------------------

enum class Weekday { Sunday = 0, Monday, Tuesday, Wednesday, Thursday, Friday, Saturday };

inline constexpr std::string_view weekday_name(Weekday d) {
    constexpr std::string_view names[] = {"Sunday",   "Monday", "Tuesday", "Wednesday",
                                          "Thursday", "Friday", "Saturday"};
    return names[static_cast<int>(d)];
}

inline constexpr bool is_weekend(Weekday d) {
    return d == Weekday::Saturday || d == Weekday::Sunday;
}

namespace detail {

inline int parse_int(std::string_view text, std::string_view what) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError("invalid " + std::string(what) + " '" + std::string(text) + "'");
    }
    return value;
}

inline std::string pad(int value, int width) {
    std::string s = std::to_string(value);
    if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
    return s;
}

} // namespace detail

/// Proleptic Gregorian calendar date, stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int64_t days_since_epoch) : days_(days_since_epoch) {}

    static Date from_ymd(int year, unsigned month, unsigned day) {
        const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                              std::chrono::day{day}};
        if (!ymd.ok()) {
            throw ParseError("invalid calendar date " + detail::pad(year, 4) + "-" +
                             detail::pad(static_cast<int>(month), 2) + "-" +
                             detail::pad(static_cast<int>(day), 2));
        }
        return Date{std::chrono::sys_days{ymd}.time_since_epoch().count()};
    }

    /// Parses `YYYY-MM-DD`.
    static Date parse(std::string_view text) {
        if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
            throw ParseError("expected date YYYY-MM-DD, got '" + std::string(text) + "'");
        }
        return from_ymd(detail::parse_int(text.substr(0, 4), "year"),
                        static_cast<unsigned>(detail::parse_int(text.substr(5, 2), "month")),
                        static_cast<unsigned>(detail::parse_int(text.substr(8, 2), "day")));
    }

    constexpr std::int64_t days_since_epoch() const { return days_; }

    std::chrono::year_month_day ymd() const {
        return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days_}}};
    }

    Weekday weekday() const {
        const std::chrono::weekday wd{std::chrono::sys_days{std::chrono::days{days_}}};
        return static_cast<Weekday>(wd.c_encoding());
    }

    std::string to_string() const {
        const auto d = ymd();
        return detail::pad(static_cast<int>(d.year()), 4) + "-" +
               detail::pad(static_cast<int>(static_cast<unsigned>(d.month())), 2) + "-" +
               detail::pad(static_cast<int>(static_cast<unsigned>(d.day())), 2);
    }

    constexpr Date operator+(std::int64_t days) const { return Date{days_ + days}; }
    constexpr Date operator-(std::int64_t days) const { return Date{days_ - days}; }
    constexpr std::int64_t operator-(Date other) const { return days_ - other.days_; }
    constexpr auto operator<=>(const Date&) const = default;

private:
    std::int64_t days_ = 0;
};

/// Wall-clock hour in a fixed offset (no DST), stored as whole hours since
/// 1970-01-01T00:00.
class Timestamp {
public:
    constexpr Timestamp() = default;
    constexpr explicit Timestamp(std::int64_t hours_since_epoch) : hours_(hours_since_epoch) {}

    static Timestamp from(Date date, int hour) {
        if (hour < 0 || hour > 23) {
            throw RangeError("hour " + std::to_string(hour) + " outside [0,23]");
        }
        return Timestamp{date.days_since_epoch() * 24 + hour};
    }

    static Timestamp from_ymdh(int year, unsigned month, unsigned day, int hour) {
        return from(Date::from_ymd(year, month, day), hour);
    }

    /// Parses `YYYY-MM-DDTHH:00` (also accepts `YYYY-MM-DDTHH`, and a space
    /// instead of `T`).
    static Timestamp parse(std::string_view text) {
        if (text.size() < 13 || (text[10] != 'T' && text[10] != ' ')) {
            throw ParseError("expected timestamp YYYY-MM-DDTHH:00, got '" + std::string(text) + "'");
        }
        const Date date = Date::parse(text.substr(0, 10));
        const int hour = detail::parse_int(text.substr(11, 2), "hour");
        if (text.size() > 13) {
            if (text.substr(13) != ":00" && text.substr(13) != ":00:00") {
                throw ParseError("timestamp '" + std::string(text) + "' is not on the hour");
            }
        }
        if (hour < 0 || hour > 23) {
            throw ParseError("hour out of range in '" + std::string(text) + "'");
        }
        return from(date, hour);
    }

    constexpr std::int64_t hours_since_epoch() const { return hours_; }

    Date date() const {
        return Date{hours_ >= 0 ? hours_ / 24 : -((-hours_ + 23) / 24)};
    }
    int hour() const { return static_cast<int>(hours_ - date().days_since_epoch() * 24); }
    Weekday weekday() const { return date().weekday(); }

    std::string to_string() const {
        return date().to_string() + "T" + detail::pad(hour(), 2) + ":00";
    }

    constexpr Timestamp operator+(std::int64_t hours) const { return Timestamp{hours_ + hours}; }
    constexpr Timestamp operator-(std::int64_t hours) const { return Timestamp{hours_ - hours}; }
    constexpr std::int64_t operator-(Timestamp other) const { return hours_ - other.hours_; }
    constexpr auto operator<=>(const Timestamp&) const = default;

private:
    std::int64_t hours_ = 0;
};

inline Weekday day_of_week(Timestamp ts) { return ts.weekday(); }
inline Weekday day_of_week(Date d) { return d.weekday(); }

inline Timestamp start_of(Date d) { return Timestamp{d.days_since_epoch() * 24}; }

// ---------------------------------------------------------------------------
// Series
// ---------------------------------------------------------------------------

namespace detail {

inline void require_finite(std::span<const double> values, const std::string& name) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw DataQualityError("non-finite value in '" + name + "' at position " +
                                   std::to_string(i));
        }
    }
}

} // namespace detail

/// Gapless hourly series: values[i] is observed at start + i hours.
class HourlySeries {
public:
    HourlySeries() = default;
    HourlySeries(std::string name, Timestamp start, std::vector<double> values)
        : name_(std::move(name)), start_(start), values_(std::move(values)) {
        detail::require_finite(values_, name_);
    }

    const std::string& name() const { return name_; }
    Timestamp start() const { return start_; }
    /// One past the last observed hour.
    Timestamp end() const { return start_ + static_cast<std::int64_t>(values_.size()); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    const std::vector<double>& values() const { return values_; }

    double at(Timestamp ts) const {
        if (ts < start_ || ts >= end()) {
            throw RangeError("'" + name_ + "' has no value at " + ts.to_string());
        }
        return values_[static_cast<std::size_t>(ts - start_)];
    }

    HourlySeries renamed(std::string name) const { return {std::move(name), start_, values_}; }

    bool operator==(const HourlySeries&) const = default;

private:
    std::string name_;
    Timestamp start_;
    std::vector<double> values_;
};

/// One value per calendar day, contiguous.
class DailySeries {
public:
    DailySeries() = default;
    DailySeries(std::string name, Date start_date, std::vector<double> values)
        : name_(std::move(name)), start_date_(start_date), values_(std::move(values)) {
        detail::require_finite(values_, name_);
    }

    const std::string& name() const { return name_; }
    Date start_date() const { return start_date_; }
    Date end_date() const { return start_date_ + static_cast<std::int64_t>(values_.size()); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    const std::vector<double>& values() const { return values_; }

    bool operator==(const DailySeries&) const = default;

private:
    std::string name_;
    Date start_date_;
    std::vector<double> values_;
};

/// Half-open sub-series [from, to).
inline HourlySeries slice(const HourlySeries& series, Timestamp from, Timestamp to) {
    if (from > to) {
        throw RangeError("slice lower bound " + from.to_string() + " is after upper bound " +
                         to.to_string());
    }
    if (from < series.start()) {
        throw RangeError("slice lower bound " + from.to_string() + " precedes series start " +
                         series.start().to_string());
    }
    if (to > series.end()) {
        throw RangeError("slice upper bound " + to.to_string() + " exceeds series end " +
                         series.end().to_string());
    }
    const auto first = series.values().begin() + (from - series.start());
    return {series.name(), from, std::vector<double>(first, first + (to - from))};
}

// ---------------------------------------------------------------------------
// Aligned dataset
// ---------------------------------------------------------------------------

enum class ChannelRole { Target, Exogenous };

struct Channel {
    std::string name;
    ChannelRole role = ChannelRole::Exogenous;
    std::vector<double> values;

    bool operator==(const Channel&) const = default;
};

/// Multi-channel hourly table sharing one strictly increasing time index.
///
/// Datasets produced by `align` are gapless. Row filters (weekend selection)
/// keep the ordering but may leave gaps; `is_contiguous()` tells them apart.
class AlignedDataset {
public:
    AlignedDataset() = default;
    AlignedDataset(std::vector<Timestamp> index, std::vector<Channel> channels)
        : index_(std::move(index)), channels_(std::move(channels)) {
        validate();
    }

    std::size_t rows() const { return index_.size(); }
    bool empty() const { return index_.empty(); }
    std::size_t channel_count() const { return channels_.size(); }
    const std::vector<Timestamp>& index() const { return index_; }
    const std::vector<Channel>& channels() const { return channels_; }

    std::vector<std::string> channel_names() const {
        std::vector<std::string> names;
        for (const auto& c : channels_) names.push_back(c.name);
        return names;
    }

    std::size_t target_column() const {
        for (std::size_t i = 0; i < channels_.size(); ++i) {
            if (channels_[i].role == ChannelRole::Target) return i;
        }
        throw StateError("dataset has no target channel");
    }
    const Channel& target() const { return channels_[target_column()]; }

    std::optional<std::size_t> column_of(std::string_view name) const {
        for (std::size_t i = 0; i < channels_.size(); ++i) {
            if (channels_[i].name == name) return i;
        }
        return std::nullopt;
    }

    const Channel& channel(std::string_view name) const {
        if (auto col = column_of(name)) return channels_[*col];
        throw ConfigError("dataset has no channel '" + std::string(name) + "'");
    }

    double value(std::size_t row, std::size_t column) const { return channels_[column].values[row]; }

    bool is_contiguous() const {
        for (std::size_t i = 1; i < index_.size(); ++i) {
            if (index_[i] - index_[i - 1] != 1) return false;
        }
        return true;
    }

    /// Row position of `ts`, if present.
    std::optional<std::size_t> position_of(Timestamp ts) const {
        auto it = std::lower_bound(index_.begin(), index_.end(), ts);
        if (it == index_.end() || *it != ts) return std::nullopt;
        return static_cast<std::size_t>(it - index_.begin());
    }

    /// Rows whose timestamp lies in [from, to).
    AlignedDataset restrict(Timestamp from, Timestamp to) const {
        const auto lo = std::lower_bound(index_.begin(), index_.end(), from) - index_.begin();
        const auto hi = std::lower_bound(index_.begin(), index_.end(), to) - index_.begin();
        std::vector<std::size_t> rows;
        for (auto i = lo; i < std::max(lo, hi); ++i) rows.push_back(static_cast<std::size_t>(i));
        return take_rows(rows);
    }

    AlignedDataset take_rows(std::span<const std::size_t> rows) const {
        std::vector<Timestamp> index;
        index.reserve(rows.size());
        for (auto r : rows) index.push_back(index_[r]);
        std::vector<Channel> channels;
        for (const auto& c : channels_) {
            Channel out{c.name, c.role, {}};
            out.values.reserve(rows.size());
            for (auto r : rows) out.values.push_back(c.values[r]);
            channels.push_back(std::move(out));
        }
        return {std::move(index), std::move(channels)};
    }

    /// Keeps the named channels in the given order. The target must be kept.
    AlignedDataset select(std::span<const std::string> names) const {
        std::vector<Channel> channels;
        for (const auto& n : names) channels.push_back(channel(n));
        return {index_, std::move(channels)};
    }

    /// Copy with one channel's values transformed row by row.
    template <typename Fn>
    AlignedDataset with_channel_values(std::size_t column, Fn&& fn) const {
        auto channels = channels_;
        for (std::size_t r = 0; r < index_.size(); ++r) {
            channels[column].values[r] = fn(index_[r], channels[column].values[r]);
        }
        return {index_, std::move(channels)};
    }

    Timestamp first() const { return index_.front(); }
    /// One past the last row.
    Timestamp end() const { return index_.back() + 1; }

    bool operator==(const AlignedDataset&) const = default;

private:
    void validate() const {
        std::size_t targets = 0;
        std::set<std::string> names;
        for (const auto& c : channels_) {
            if (c.values.size() != index_.size()) {
                throw ShapeError("channel '" + c.name + "' has " + std::to_string(c.values.size()) +
                                 " rows, index has " + std::to_string(index_.size()));
            }
            if (!names.insert(c.name).second) {
                throw ConfigError("duplicate channel name '" + c.name + "'");
            }
            detail::require_finite(c.values, c.name);
            if (c.role == ChannelRole::Target) ++targets;
        }
        if (!channels_.empty() && targets != 1) {
            throw ConfigError("dataset needs exactly one target channel, found " +
                              std::to_string(targets));
        }
        for (std::size_t i = 1; i < index_.size(); ++i) {
            if (index_[i] <= index_[i - 1]) {
                throw OrderingError("dataset index not strictly increasing at " +
                                    index_[i].to_string());
            }
        }
    }

    std::vector<Timestamp> index_;
    std::vector<Channel> channels_;
};

/// Joins hourly channels on the intersection of their ranges.
inline AlignedDataset align(std::span<const HourlySeries> channels, std::string_view target_name) {
    if (channels.empty()) throw ConfigError("align needs at least one channel");

    std::set<std::string> seen;
    bool has_target = false;
    for (const auto& s : channels) {
        if (!seen.insert(s.name()).second) {
            throw ConfigError("duplicate channel name '" + s.name() + "'");
        }
        has_target = has_target || s.name() == target_name;
    }
    if (!has_target) {
        throw ConfigError("target channel '" + std::string(target_name) + "' not among inputs");
    }

    Timestamp lo = channels.front().start();
    Timestamp hi = channels.front().end();
    for (const auto& s : channels) {
        lo = std::max(lo, s.start());
        hi = std::min(hi, s.end());
    }
    if (lo >= hi) {
        std::string msg = "channel ranges do not overlap:";
        for (const auto& s : channels) {
            msg += " " + s.name() + "=[" + s.start().to_string() + ", " + s.end().to_string() + ")";
        }
        throw AlignmentError(msg);
    }

    std::vector<Timestamp> index;
    index.reserve(static_cast<std::size_t>(hi - lo));
    for (Timestamp t = lo; t < hi; t = t + 1) index.push_back(t);

    std::vector<Channel> out;
    for (const auto& s : channels) {
        out.push_back(Channel{s.name(),
                              s.name() == target_name ? ChannelRole::Target : ChannelRole::Exogenous,
                              slice(s, lo, hi).values()});
    }
    return {std::move(index), std::move(out)};
}

inline AlignedDataset align(std::initializer_list<HourlySeries> channels,
                            std::string_view target_name) {
    return align(std::span<const HourlySeries>(channels.begin(), channels.size()), target_name);
}

} // namespace loadcast
