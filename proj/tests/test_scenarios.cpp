#include "loadcast/runner.hpp"
#include "loadcast/scenarios.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace loadcast;

namespace {

// MAPE written out directly, kept separate from the library code.
double mape_oracle(const std::vector<double>& a, const std::vector<double>& f) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(static_cast<long double>(a[i]) - f[i]) / std::fabs(static_cast<long double>(a[i]));
    return static_cast<double>(100.0L * s / a.size());
}

std::vector<Date> days_from(Date first, int n) {
    std::vector<Date> d;
    for (int i = 0; i < n; ++i) d.push_back(first + i);
    return d;
}

const Date kStay = Date::from_ymd(2020, 3, 22);

// Hourly load only: value = f(day, hour).
AlignedDataset load_only(Date first, int n_days, const std::function<double(int, int)>& f) {
    std::vector<double> v;
    for (int d = 0; d < n_days; ++d) {
        for (int h = 0; h < 24; ++h) v.push_back(f(d, h));
    }
    return align({HourlySeries("load_mw", start_of(first), v)}, "load_mw");
}

SynthConfig small_synth(std::uint64_t seed = 1) {
    SynthConfig c;
    c.seed = seed;
    c.n_days = 140;
    c.shift_day = 70;
    return c;
}

ScenarioConfig small_scenario(ScenarioKind kind, std::vector<FeatureSet> features = {FeatureSet::Weather}) {
    ScenarioConfig c;
    c.kind = kind;
    c.features = std::move(features);
    c.architecture = nn::Architecture::FCDNN;
    c.train.epochs = 3;
    c.train.fcdnn_hidden = {8};
    c.train.rnn_hidden = 4;
    return c;
}

} // namespace

TEST(Mape, HandExample) {
    const std::vector<double> a{100, 200, 400}, f{90, 220, 380};
    EXPECT_DOUBLE_EQ(mape(a, f), 100.0 / 3.0 * 0.25);
    EXPECT_NEAR(mape(a, f), 8.333333333333334, 1e-12);
    EXPECT_EQ(mape(a, a), 0.0);
}

TEST(Mape, ScaleInvariance) {
    const std::vector<double> a{1234, 987, 1500, 1720}, f{1200, 1000, 1490, 1800};
    for (double c : {1e-3, 0.5, 7.0, 1e6}) {
        std::vector<double> ca, cf;
        for (double v : a) ca.push_back(v * c);
        for (double v : f) cf.push_back(v * c);
        EXPECT_NEAR(mape(ca, cf), mape(a, f), 1e-12 * mape(a, f));
    }
}

TEST(Mape, MatchesOracleOnRandomPairs) {
    SplitMix64 rng(2024);
    for (int k = 0; k < 1000; ++k) {
        const auto n = static_cast<std::size_t>(1 + rng.below(200));
        std::vector<double> a(n), f(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(1.0, 30000.0);
            f[i] = a[i] + rng.gaussian() * 500.0;
        }
        const double want = mape_oracle(a, f);
        ASSERT_LE(std::abs(mape(a, f) - want), 1e-12 * std::max(want, 1e-300)) << k;
    }
}

TEST(Mape, NonNegativeAndZeroOnlyWhenEqual) {
    const std::vector<double> a{5, 6, 7};
    EXPECT_GT(mape(a, std::vector<double>{5, 6, 7.0000001}), 0.0);
}

TEST(Mape, ZeroActualNamesTimestamp) {
    const std::vector<double> a{100, 0, 50}, f{1, 2, 3};
    try {
        mape(a, f, Timestamp::parse("2020-03-22T05:00"));
        FAIL();
    } catch (const MetricError& e) {
        EXPECT_NE(std::string(e.what()).find("2020-03-22T06:00"), std::string::npos) << e.what();
    }
    EXPECT_THROW(mape(std::vector<double>{}, std::vector<double>{}), MetricError);
    EXPECT_THROW(mape(std::vector<double>{1, 2}, std::vector<double>{1}), MetricError);
}

TEST(SeasonalNaive, RepeatsDaySevenBack) {
    const auto ds = load_only(Date::from_ymd(2020, 1, 1), 20, [](int d, int h) { return 1000.0 * d + h; });
    const auto f = seasonal_naive(ds, Date::from_ymd(2020, 1, 15));
    for (int h = 0; h < 24; ++h) EXPECT_EQ(f[h], 1000.0 * 7 + h);
    try {
        seasonal_naive(ds, Date::from_ymd(2020, 1, 5));
        FAIL();
    } catch (const RangeError& e) {
        EXPECT_NE(std::string(e.what()).find("2019-12-29"), std::string::npos);
    }
}

TEST(SeasonalNaive, PeriodicAndConstantLoadArePerfect) {
    const auto periodic = load_only(Date::from_ymd(2020, 1, 1), 28, [](int d, int h) { return 500.0 + 30 * (d % 7) + h; });
    const auto constant = load_only(Date::from_ymd(2020, 1, 1), 28, [](int, int) { return 777.0; });
    for (int d = 7; d < 28; ++d) {
        const Date day = Date::from_ymd(2020, 1, 1) + d;
        EXPECT_EQ(mape(day_values(periodic, day), seasonal_naive(periodic, day)), 0.0);
        EXPECT_EQ(mape(day_values(constant, day), seasonal_naive(constant, day)), 0.0);
    }
}

TEST(SeasonalNaive, FirstPostShiftWeekdayIsWorseThanPreShiftWeekdays) {
    auto cfg = small_synth(3);
    cfg.noise_sd = 0.0;
    const auto b = generate_synthetic(cfg);
    const auto ds = synthetic_dataset(b);
    const Date shift = cfg.shift_date();
    Date first_post_weekday = shift;
    while (is_weekend(first_post_weekday.weekday())) first_post_weekday = first_post_weekday + 1;

    // Hour-by-hour oracle from the generator formulas: only the amplitude
    // change and the temperature difference separate the two days.
    const auto raw_temp = b.weather[0].values();
    const auto day_index = static_cast<std::size_t>(first_post_weekday - cfg.first_day());
    const auto actual = day_values(ds, first_post_weekday);
    const auto naive = seasonal_naive(ds, first_post_weekday);
    for (std::size_t h = 0; h < 24; ++h) {
        const double dt = raw_temp[day_index * 24 + h] - raw_temp[(day_index - 7) * 24 + h];
        const double expected = (cfg.post_amp() - cfg.weekday_amp) * diurnal(static_cast<int>(h)) + cfg.weather_coupling * dt;
        EXPECT_NEAR(actual[h] - naive[h], expected, 1e-9) << h;
    }

    double pre_sum = 0.0;
    int pre_n = 0;
    for (Date d = cfg.first_day() + 7; d < shift; d = d + 1) {
        if (is_weekend(d.weekday()) || is_weekend((d - 7).weekday())) continue;
        pre_sum += mape(day_values(ds, d), seasonal_naive(ds, d));
        ++pre_n;
    }
    ASSERT_GT(pre_n, 20);
    EXPECT_GT(mape(actual, naive), pre_sum / pre_n);
}

TEST(Report, AllPerfect) {
    std::vector<std::vector<double>> f(70, std::vector<double>(24, 1000.0));
    const auto r = assemble_report(days_from(kStay, 70), f, f);
    EXPECT_EQ(r.overall_mape, 0.0);
    ASSERT_EQ(r.daily_mape.size(), 70u);
    ASSERT_EQ(r.weekly_mape.size(), 10u);
    for (double v : r.daily_mape) EXPECT_EQ(v, 0.0);
    for (double v : r.weekly_mape) EXPECT_EQ(v, 0.0);
}

TEST(Report, OneBadDay) {
    std::vector<std::vector<double>> actual(70, std::vector<double>(24, 1000.0));
    auto forecast = actual;
    for (auto& v : forecast[23]) v = 1100.0;
    const auto r = assemble_report(days_from(kStay, 70), forecast, actual);
    EXPECT_NEAR(r.daily_mape[23], 10.0, 1e-12);
    EXPECT_NEAR(r.overall_mape, 10.0 / 70.0, 1e-12);
    EXPECT_NEAR(r.weekly_mape[3], 10.0 / 7.0, 1e-12);
    EXPECT_EQ(r.weekly_mape[2], 0.0);
}

TEST(Report, WeeklyMatchesOracleOverWeekPoints) {
    SplitMix64 rng(5);
    std::vector<std::vector<double>> actual(70, std::vector<double>(24)), forecast = actual;
    for (int d = 0; d < 70; ++d) {
        for (int h = 0; h < 24; ++h) {
            actual[d][h] = rng.uniform(8000, 20000);
            forecast[d][h] = actual[d][h] * (1 + 0.08 * rng.gaussian());
        }
    }
    const auto r = assemble_report(days_from(kStay, 70), forecast, actual);
    std::vector<double> all_a, all_f;
    for (int w = 0; w < 10; ++w) {
        std::vector<double> a, f;
        for (int d = 7 * w; d < 7 * w + 7; ++d) {
            a.insert(a.end(), actual[d].begin(), actual[d].end());
            f.insert(f.end(), forecast[d].begin(), forecast[d].end());
        }
        ASSERT_EQ(a.size(), 168u);
        EXPECT_NEAR(r.weekly_mape[w], mape_oracle(a, f), 1e-10);
        all_a.insert(all_a.end(), a.begin(), a.end());
        all_f.insert(all_f.end(), f.begin(), f.end());
    }
    EXPECT_NEAR(r.overall_mape, mape_oracle(all_a, all_f), 1e-10);
    // With equal-length days, pooled overall equals the mean of daily MAPEs.
    EXPECT_NEAR(r.overall_mape, std::accumulate(r.daily_mape.begin(), r.daily_mape.end(), 0.0) / 70.0, 1e-10);
}

TEST(Report, PartialLastWeek) {
    std::vector<std::vector<double>> a(10, std::vector<double>(24, 100.0)), f = a;
    for (auto& v : f[9]) v = 130.0;
    const auto r = assemble_report(days_from(kStay, 10), f, a);
    ASSERT_EQ(r.weekly_mape.size(), 2u);
    EXPECT_NEAR(r.weekly_mape[1], 10.0, 1e-12);
}

TEST(Report, ShapeErrors) {
    std::vector<std::vector<double>> ok(3, std::vector<double>(24, 1.0));
    EXPECT_THROW(assemble_report(days_from(kStay, 4), ok, ok), ReportError);
    EXPECT_THROW(assemble_report({}, {}, {}), ReportError);
    auto short_day = ok;
    short_day[1].pop_back();
    EXPECT_THROW(assemble_report(days_from(kStay, 3), short_day, ok), ReportError);
}

TEST(Report, JsonRoundTripAndConsistencyCheck) {
    SplitMix64 rng(6);
    std::vector<std::vector<double>> a(14, std::vector<double>(24)), f = a;
    for (int d = 0; d < 14; ++d) {
        for (int h = 0; h < 24; ++h) {
            a[d][h] = rng.uniform(9000, 12000);
            f[d][h] = a[d][h] + rng.gaussian() * 300;
        }
    }
    auto r = assemble_report(days_from(kStay, 14), f, a);
    r.scenario = "weekend";
    r.architecture = "GRU";
    r.features = {"weather"};
    r.seed = 4;
    r.fingerprint = "abc";
    r.training.push_back({"weekend", 40, 3, 0.25, 8});
    const auto text = serialize_report(r);
    const auto back = parse_report(text);
    EXPECT_EQ(back.days, r.days);
    EXPECT_EQ(back.forecasts, r.forecasts);
    EXPECT_EQ(back.actuals, r.actuals);
    EXPECT_EQ(back.daily_mape, r.daily_mape);
    EXPECT_EQ(back.overall_mape, r.overall_mape);
    EXPECT_EQ(back.architecture, "GRU");
    EXPECT_EQ(back.training.size(), 1u);
    EXPECT_EQ(serialize_report(back), text);

    auto j = nlohmann::json::parse(text);
    j["overall_mape"] = r.overall_mape + 1e-6;
    EXPECT_THROW(parse_report(j.dump()), ParseError);
    EXPECT_THROW(parse_report("{not json"), ParseError);
    j = nlohmann::json::parse(text);
    j["schema"] = "other/1";
    EXPECT_THROW(parse_report(j.dump()), ParseError);
}

TEST(Report, DailyCsv) {
    std::vector<std::vector<double>> a(2, std::vector<double>(24, 100.0)), f = a;
    for (auto& v : f[1]) v = 125.0;
    const auto csv = daily_mape_csv(assemble_report(days_from(kStay, 2), f, a));
    EXPECT_EQ(csv, "date,mape_pct\n2020-03-22,0\n2020-03-23,25\n");
}

TEST(Scenarios, KindNames) {
    EXPECT_EQ(scenario_kind_from("rolling"), ScenarioKind::Rolling);
    try {
        scenario_kind_from("monthly");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        for (const char* k : {"benchmark", "weekend", "rolling"}) EXPECT_NE(msg.find(k), std::string::npos);
    }
}

TEST(Scenarios, ConfigViolations) {
    auto c = small_scenario(ScenarioKind::Benchmark, {FeatureSet::Weather, FeatureSet::Covid});
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_scenario(ScenarioKind::Rolling, {FeatureSet::Covid});
    c.split.horizon_weeks = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_scenario(ScenarioKind::Weekend);
    c.warm_start = true;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_scenario(ScenarioKind::Rolling, {FeatureSet::Mobility});
    EXPECT_NO_THROW(c.validate());
}

TEST(Scenarios, RollingTrainingSetsRespectCutoff) {
    const auto ds = select_features(synthetic_dataset(generate_synthetic(small_synth())),
                                    std::vector<FeatureSet>{FeatureSet::Weather, FeatureSet::Mobility});
    SplitConfig split;
    split.stay_at_home = start_of(small_synth().shift_date());
    const auto weekend = weekend_windows(ds, split);
    for (int week = 1; week <= 9; ++week) {
        const auto ws = rolling_training_set(ds, split, week);
        const Timestamp cutoff = rolling_cutoff(split, week);
        EXPECT_EQ(cutoff, split.stay_at_home + 168 * week);
        EXPECT_EQ(ws.size(), weekend.size() + static_cast<std::size_t>(7 * week)) << week;
        for (std::size_t i = 0; i < ws.size(); ++i) {
            ASSERT_LT(ws.input_latest[i], cutoff);
            ASSERT_LE(start_of(ws.target_dates[i]) + 24, cutoff);
        }
    }
}

TEST(Scenarios, BenchmarkAndWeekendShareDays) {
    const auto ds = synthetic_dataset(generate_synthetic(small_synth()));
    auto cfg = small_scenario(ScenarioKind::Benchmark);
    cfg.split.stay_at_home = start_of(small_synth().shift_date());
    const auto bench = run_benchmark(ds, cfg);
    cfg.kind = ScenarioKind::Weekend;
    const auto weekend = run_weekend(ds, cfg);
    ASSERT_EQ(bench.days.size(), 70u);
    EXPECT_EQ(bench.days, weekend.days);
    EXPECT_EQ(bench.actuals, weekend.actuals);
    EXPECT_EQ(bench.days.front(), small_synth().shift_date());
    EXPECT_EQ(bench.scenario, "benchmark");
    EXPECT_EQ(weekend.scenario, "weekend");
    EXPECT_NE(bench.fingerprint, weekend.fingerprint);
    const auto naive = run_seasonal_naive(ds, cfg.split);
    EXPECT_EQ(naive.days, bench.days);
}

TEST(Scenarios, PreSelftestForecastsLastPreWeeks) {
    const auto ds = synthetic_dataset(generate_synthetic(small_synth()));
    auto cfg = small_scenario(ScenarioKind::Benchmark);
    cfg.split.stay_at_home = start_of(small_synth().shift_date());
    cfg.split.horizon_weeks = 4;
    const auto r = run_pre_selftest(ds, cfg);
    ASSERT_EQ(r.days.size(), 28u);
    EXPECT_EQ(r.days.back() + 1, small_synth().shift_date());
    EXPECT_EQ(r.period, "pre_selftest");
}

TEST(Scenarios, RollingReportShape) {
    const auto ds = synthetic_dataset(generate_synthetic(small_synth()));
    auto cfg = small_scenario(ScenarioKind::Rolling, {FeatureSet::Weather, FeatureSet::Covid});
    cfg.train.epochs = 1;
    cfg.split.stay_at_home = start_of(small_synth().shift_date());
    const auto r = run_rolling(ds, cfg);
    EXPECT_EQ(r.days.size(), 70u);
    EXPECT_EQ(r.feature_blind_weeks, std::vector<int>{1});
    ASSERT_EQ(r.training.size(), 10u);
    EXPECT_EQ(r.training[0].label, "weekend");
    EXPECT_EQ(r.training[9].label, "cutoff_week_9");
    EXPECT_GT(r.training[9].windows, r.training[1].windows);
    EXPECT_EQ(r.features, (std::vector<std::string>{"weather", "covid"}));
}

TEST(Scenarios, RepeatRunIsByteIdentical) {
    const auto ds = synthetic_dataset(generate_synthetic(small_synth()));
    auto cfg = small_scenario(ScenarioKind::Weekend);
    cfg.architecture = nn::Architecture::GRU;
    cfg.split.stay_at_home = start_of(small_synth().shift_date());
    cfg.split.horizon_weeks = 2;
    EXPECT_EQ(serialize_report(run_weekend(ds, cfg)), serialize_report(run_weekend(ds, cfg)));
}

TEST(Scenarios, SplitOutsideDataIsRangeError) {
    const auto ds = synthetic_dataset(generate_synthetic(small_synth()));
    auto cfg = small_scenario(ScenarioKind::Benchmark);
    cfg.split.stay_at_home = start_of(small_synth().shift_date()) + 24;  // 70 post days no longer fit
    EXPECT_THROW(run_benchmark(ds, cfg), RangeError);
}

// Without a regime shift the trained benchmark should be at least in the
// seasonal-naive baseline's league.
TEST(Scenarios, ZeroShiftBenchmarkWithinTwiceSeasonalNaive) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SynthConfig sc;
        sc.seed = seed;
        sc.post_shift_weekday_amp = sc.weekday_amp;
        const auto ds = synthetic_dataset(generate_synthetic(sc));
        ScenarioConfig cfg;
        cfg.architecture = nn::Architecture::FCDNN;
        cfg.train.seed = seed;
        cfg.train.epochs = 20;
        cfg.train.fcdnn_hidden = {32};
        cfg.split.stay_at_home = start_of(sc.shift_date());
        const double bench = run_benchmark(ds, cfg).overall_mape;
        const double naive = run_seasonal_naive(ds, cfg.split).overall_mape;
        EXPECT_LT(bench, 2.0 * naive) << "seed " << seed << ": " << bench << " vs naive " << naive;
    }
}
