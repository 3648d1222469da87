#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "thermocast/datapipe.hpp"
#include "thermocast/errors.hpp"

using namespace thermocast;
using std::chrono::days;

namespace {

Day date(const char* s) { return *parse_date(s); }

std::vector<double> iota_series(std::size_t n) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  return v;
}

}  // namespace

TEST(ParseCsv, WellFormedRowsInOrder) {
  const ParseReport r = parse_csv_text(
      "timestamp,temperature,humidity,condition\n"
      "2001-01-01T00:00,5.5,80,rain\n"
      "2001-01-01T01:00,6,,clear\n"
      "2001-01-01 02:00:00,,75,\n");
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.rows_skipped, 0u);
  EXPECT_EQ(r.records[0].temperature, 5.5);
  EXPECT_FALSE(r.records[2].temperature.has_value());
  EXPECT_EQ(r.records[0].numeric.at("humidity"), 80.0);
  EXPECT_FALSE(r.records[1].numeric.at("humidity").has_value());
  EXPECT_EQ(r.records[1].categorical.at("condition"), "clear");
  EXPECT_EQ(r.records[2].timestamp.seconds, 7200);
}

TEST(ParseCsv, MalformedRowIsSkippedAndReported) {
  const ParseReport r = parse_csv_text(
      "timestamp,temperature\n"
      "2001-01-01T00:00,5\n"
      "2001-13-01T00:00,5\n"
      "2001-01-02T00:00,7\n");
  EXPECT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.rows_skipped, 1u);
  EXPECT_NE(r.summary().find("1 row skipped"), std::string::npos);
  ASSERT_EQ(r.problems.size(), 1u);
  EXPECT_NE(r.problems[0].find("line 3"), std::string::npos);
}

TEST(ParseCsv, OtherSkipReasons) {
  const ParseReport r = parse_csv_text(
      "timestamp,temperature\n"
      "2001-01-01T00:00,abc\n"
      "2001-01-01T00:00,1,2\n"
      "2001-01-01T00:00,nan\n"
      "2001-01-01T00:00,1\n");
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.rows_skipped, 3u);
}

TEST(ParseCsv, ShuffledInputIsSorted) {
  std::vector<int> hours(48);
  std::iota(hours.begin(), hours.end(), 0);
  std::mt19937_64 rng(4);
  std::shuffle(hours.begin(), hours.end(), rng);
  std::string text = "temperature,timestamp\n";
  for (int h : hours) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d,2020-03-%02dT%02d:00\n", h, 1 + h / 24, h % 24);
    text += buf;
  }
  const ParseReport r = parse_csv_text(text);
  ASSERT_EQ(r.records.size(), 48u);
  for (std::size_t i = 0; i < 48; ++i) EXPECT_EQ(*r.records[i].temperature, static_cast<double>(i));
}

TEST(ParseCsv, MissingColumnIsSchemaError) {
  try {
    parse_csv_text("time,temperature\n2001-01-01,1\n");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.stage(), "parse_csv");
    EXPECT_NE(std::string(e.what()).find("timestamp"), std::string::npos);
  }
  EXPECT_THROW(parse_csv("/nonexistent/file.csv"), IoError);
}

TEST(Timestamps, CalendarRules) {
  EXPECT_TRUE(parse_timestamp("2016-02-29T12:00"));
  EXPECT_FALSE(parse_timestamp("2015-02-29T12:00"));
  EXPECT_FALSE(parse_timestamp("2016-02-10T25:00"));
  EXPECT_FALSE(parse_timestamp("2016-02-10X10:00"));
  const auto end = parse_timestamp("2016-02-28T24:00");
  ASSERT_TRUE(end);
  EXPECT_EQ(end->day, date("2016-02-29"));
  EXPECT_EQ(end->seconds, 0);
  EXPECT_EQ(format_date(date("2004-07-09")), "2004-07-09");
}

TEST(TemporalFeatures, Components) {
  auto feat = [](const char* ts) {
    WeatherRecord r;
    r.timestamp = *parse_timestamp(ts);
    return extract_temporal_features(r);
  };
  const auto a = feat("2001-01-01T00:00");
  EXPECT_EQ(a.year, 2001);
  EXPECT_EQ(a.month, 1u);
  EXPECT_EQ(a.day, 1u);
  const auto b = feat("2020-12-31T23:00");
  EXPECT_EQ(b.year, 2020);
  EXPECT_EQ(b.month, 12u);
  EXPECT_EQ(b.day, 31u);
  EXPECT_EQ(b.hour, 23);
  const auto c = feat("2016-02-29T06:00");
  EXPECT_EQ(c.month, 2u);
  EXPECT_EQ(c.day, 29u);
}

TEST(Impute, MeanOfPresentValues) {
  using O = std::optional<double>;
  EXPECT_EQ(impute_mean(std::vector<O>{1.0, std::nullopt, 3.0}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(impute_mean(std::vector<O>{4.0, 5.0}), (std::vector<double>{4, 5}));
  EXPECT_EQ(impute_mean(std::vector<O>{std::nullopt, 5.0}), (std::vector<double>{5, 5}));
  EXPECT_THROW(impute_mean(std::vector<O>{std::nullopt, std::nullopt}), DataError);
}

TEST(Impute, PreservesMeanOfPresentSubset) {
  std::mt19937_64 rng(2);
  std::vector<std::optional<double>> s;
  double total = 0.0;
  std::size_t present = 0;
  for (int i = 0; i < 200; ++i) {
    if (rng() % 3 == 0) {
      s.push_back(std::nullopt);
    } else {
      const double v = static_cast<double>(rng() % 1000) / 10.0;
      s.push_back(v);
      total += v;
      ++present;
    }
  }
  const std::vector<double> filled = impute_mean(s);
  const double m = std::accumulate(filled.begin(), filled.end(), 0.0) / filled.size();
  EXPECT_NEAR(m, total / present, 1e-12);
}

TEST(Resample, DailyAggregation) {
  std::string text = "timestamp,temperature\n";
  for (int h = 0; h < 24; ++h) text += "2010-05-01T" + std::string(h < 10 ? "0" : "") + std::to_string(h) + ":00," + std::to_string(h) + "\n";
  for (int h = 0; h < 24; ++h) text += "2010-05-03T" + std::string(h < 10 ? "0" : "") + std::to_string(h) + ":00,7\n";
  const ParseReport r = parse_csv_text(text);
  const DailySeries d = resample_daily(r.records);
  ASSERT_EQ(d.values.size(), 3u);
  EXPECT_EQ(d.first_day, date("2010-05-01"));
  EXPECT_EQ(*d.values[0], 11.5);
  EXPECT_FALSE(d.values[1].has_value());
  EXPECT_EQ(*d.values[2], 7.0);
  EXPECT_EQ(impute_mean(d.values)[1], (11.5 + 7.0) / 2);

  EXPECT_EQ(*resample_daily(r.records, Aggregation::Min).values[0], 0.0);
  EXPECT_EQ(*resample_daily(r.records, Aggregation::Max).values[0], 23.0);
  EXPECT_EQ(*resample_daily(r.records, Aggregation::Midrange).values[0], 11.5);
  EXPECT_THROW(resample_daily(std::vector<WeatherRecord>{}), DataError);
}

TEST(Resample, LengthIsCalendarSpan) {
  const ParseReport r = parse_csv_text("timestamp,temperature\n2012-02-27T10:00,1\n2012-03-02T10:00,2\n");
  EXPECT_EQ(resample_daily(r.records).values.size(), 5u);  // 27, 28, 29, 1, 2
}

TEST(Exclusions, DropRangesInclusive) {
  const auto ranges = parse_exclusions_text("# bad sensor\n2010-01-02,2010-01-03\n\n");
  ASSERT_EQ(ranges.size(), 1u);
  const ParseReport r = parse_csv_text(
      "timestamp,temperature\n2010-01-01T00:00,1\n2010-01-02T00:00,100\n2010-01-03T23:00,100\n2010-01-04T00:00,3\n");
  const auto kept = apply_exclusions(r.records, ranges);
  ASSERT_EQ(kept.size(), 2u);
  const DailySeries d = resample_daily(kept);
  EXPECT_EQ(d.values.size(), 4u);
  EXPECT_EQ(impute_mean(d.values), (std::vector<double>{1, 2, 2, 3}));
  EXPECT_THROW(parse_exclusions_text("2010-01-05,2010-01-01\n"), DataError);
  EXPECT_THROW(parse_exclusions_text("garbage\n"), DataError);
}

TEST(Scaler, EndpointsMidpointAndRoundTrip) {
  std::mt19937_64 rng(9);
  std::vector<double> x(1000);
  for (double& v : x) v = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 100.0;
  const ScalerParams p = fit_scaler(x);
  EXPECT_EQ(p.scale(p.min), -1.0);
  EXPECT_EQ(p.scale(p.max), 1.0);
  EXPECT_NEAR(p.scale((p.min + p.max) / 2), 0.0, 1e-15);
  const auto back = unscale(scale(x, p), p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(std::abs(back[i] - x[i]), 1e-12);
  EXPECT_GT(p.scale(p.max + 10), 1.0);  // not clipped
}

TEST(Scaler, ConstantSeriesRejected) {
  try {
    fit_scaler(std::vector<double>(10, 3.0));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.stage(), "fit_scaler");
  }
}

TEST(Windows, CountLawAndAlignment) {
  for (const std::size_t len : {31u, 100u, 1000u}) {
    const auto s = iota_series(len);
    const WindowedDataset w = make_windows(s, 30, 1, 1, date("2000-01-01"));
    ASSERT_EQ(w.size(), len - 30);
    EXPECT_EQ(w.inputs.shape(), (Shape{len - 30, 30, 1}));
    for (std::size_t i = 0; i < w.size(); ++i) {
      EXPECT_EQ(w.targets[i], s[i + 30]);
      EXPECT_EQ(w.inputs.at({i, 0, 0}), s[i]);
      EXPECT_EQ(w.inputs.at({i, 29, 0}), s[i + 29]);
    }
    EXPECT_EQ(w.target_date(0), date("2000-01-31"));
  }
  try {
    make_windows(iota_series(30));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.stage(), "make_windows");
    EXPECT_NE(std::string(e.what()).find("31"), std::string::npos);
  }
}

TEST(Windows, StrideAndHorizon) {
  const auto s = iota_series(50);
  const WindowedDataset w = make_windows(s, 10, 3, 5);
  EXPECT_EQ(w.size(), (50u - 13u) / 5u + 1u);
  EXPECT_EQ(w.targets[1], 5.0 + 10 + 3 - 1);
}

TEST(Split, ChronologicalFloorRule) {
  const WindowedDataset w = make_windows(iota_series(130));
  const auto [train, test] = chronological_split(w, 0.8);
  EXPECT_EQ(train.size(), 80u);
  EXPECT_EQ(test.size(), 20u);
  EXPECT_LT(train.target_index.back(), test.target_index.front());
  const auto [a, b] = chronological_split(make_windows(iota_series(32)), 0.5);
  EXPECT_EQ(a.size(), 1u);
  EXPECT_EQ(b.size(), 1u);
  EXPECT_THROW(chronological_split(make_windows(iota_series(32)), 0.4), ContractError);
  EXPECT_THROW(chronological_split(w, 1.0), ContractError);
}

TEST(Synth, DeterministicAndBounded) {
  EXPECT_EQ(synthesize_series(400, 1), synthesize_series(400, 1));
  EXPECT_NE(synthesize_series(400, 1), synthesize_series(400, 2));
  SynthParams wide;
  wide.noise_sd = 50;
  for (double v : synthesize_series(2000, 3, wide)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 100.0);
  }
  EXPECT_THROW(synthesize_series(30, 1), ContractError);
}

TEST(Synth, NoiselessSeriesIsPeriodic) {
  SynthParams p;
  p.noise_sd = 0;
  p.weekly_amplitude = 0;
  const auto s = synthesize_series(1461 * 2 + 10, 1, p);  // 4 * 365.25 = 1461
  for (std::size_t d = 0; d < 1461 + 10; ++d) EXPECT_NEAR(s[d], s[d + 1461], 1e-9);
}

TEST(Synth, LongRunMeanNearBase) {
  const auto s = synthesize_series(3653, 77);
  const double m = std::accumulate(s.begin(), s.end(), 0.0) / s.size();
  EXPECT_NEAR(m, SynthParams{}.base, 1.0);
}

TEST(Pipeline, ScalerFitOnTrainingDaysOnly) {
  // A spike late in the series must not influence the scaler.
  std::vector<double> s = synthesize_series(200, 5);
  s[195] = 99.0;
  const ParseReport r = parse_csv_text(series_to_csv(date("2001-01-01"), s));
  const PreparedData d = prepare_dataset(r.records, {});
  const ScalerParams want = fit_scaler(std::span(s).first(d.train_days));
  EXPECT_EQ(d.scaler.min, want.min);
  EXPECT_EQ(d.scaler.max, want.max);
  EXPECT_LT(d.scaler.max, 99.0);
  EXPECT_EQ(d.train.size() + d.test.size(), 170u);
  EXPECT_EQ(d.train.size(), 136u);
  // Last training target lies inside the fitted range of days.
  EXPECT_LT(d.train.target_index.back(), d.train_days);
  // The test split is transformed with the same statistics.
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    EXPECT_NEAR(d.test.targets[i], want.scale(s[d.test.target_index[i]]), 1e-15);
  }
  EXPECT_GT(*std::max_element(d.test.targets.data().begin(), d.test.targets.data().end()), 1.0);
}

TEST(Pipeline, StoredScalerIsReused) {
  const auto s = synthesize_series(120, 6);
  const ParseReport r = parse_csv_text(series_to_csv(date("2001-01-01"), s));
  const ScalerParams fixed{-10.0, 50.0};
  const PreparedData d = prepare_dataset(r.records, {}, fixed);
  EXPECT_EQ(d.scaler.min, -10.0);
  EXPECT_EQ(d.train.inputs[0], fixed.scale(s[0]));
}

TEST(Pipeline, ConstantDataNamesScalerStage) {
  const ParseReport r = parse_csv_text(series_to_csv(date("2001-01-01"), std::vector<double>(60, 12.0)));
  try {
    prepare_dataset(r.records, {});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.stage(), "fit_scaler");
  }
}

TEST(Aggregation, NamesRoundTrip) {
  for (const Aggregation a : {Aggregation::Mean, Aggregation::Min, Aggregation::Max, Aggregation::Midrange}) {
    EXPECT_EQ(parse_aggregation(to_string(a)), a);
  }
  EXPECT_FALSE(parse_aggregation("median"));
}
