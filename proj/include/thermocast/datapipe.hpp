#pragma once

// Weather-record ingestion and the preprocessing chain that turns hourly
// observations into scaled, windowed training data.

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "thermocast/tensor.hpp"

namespace thermocast {

using Day = std::chrono::sys_days;

struct Timestamp {
  Day day;
  int seconds = 0;  // since local midnight

  auto operator<=>(const Timestamp&) const = default;
};

/// Accepts YYYY-MM-DD, optionally followed by 'T' or ' ' and HH:MM[:SS].
/// Rejects impossible calendar dates.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::optional<Day> parse_date(std::string_view text);
std::string format_date(Day day);

struct WeatherRecord {
  Timestamp timestamp;
  std::optional<double> temperature;
  /// Other columns, split by whether every non-empty value is numeric.
  std::map<std::string, std::optional<double>> numeric;
  std::map<std::string, std::string> categorical;
};

struct CsvSchema {
  std::string timestamp_column = "timestamp";
  std::string temperature_column = "temperature";
};

struct ParseReport {
  std::vector<WeatherRecord> records;  // sorted by timestamp
  std::size_t rows_read = 0;
  std::size_t rows_skipped = 0;
  std::vector<std::string> problems;  // one line per skipped row

  std::string summary() const;
};

/// A row is skipped when its field count differs from the header, its
/// timestamp does not parse, or a non-empty temperature is not a finite
/// number. Empty fields are missing values.
ParseReport parse_csv_text(std::string_view text, const CsvSchema& schema = {});
ParseReport parse_csv(const std::string& path, const CsvSchema& schema = {});

struct TemporalFeatures {
  int year;
  unsigned month;
  unsigned day;
  int hour;
};

TemporalFeatures extract_temporal_features(const WeatherRecord& record);

/// Inclusive calendar range.
struct DateRange {
  Day first;
  Day last;
};

/// Lines of "start-date,end-date"; blank lines and lines starting with '#'
/// are ignored.
std::vector<DateRange> parse_exclusions_text(std::string_view text);
std::vector<DateRange> parse_exclusions(const std::string& path);
std::vector<WeatherRecord> apply_exclusions(std::vector<WeatherRecord> records, std::span<const DateRange> ranges);

/// Replaces every missing entry with the mean of the present ones.
std::vector<double> impute_mean(std::span<const std::optional<double>> series);

enum class Aggregation { Mean, Min, Max, Midrange };
std::optional<Aggregation> parse_aggregation(std::string_view name);
std::string_view to_string(Aggregation agg);

struct DailySeries {
  Day first_day;
  std::vector<std::optional<double>> values;  // one entry per calendar day
};

/// One value per calendar day from the first to the last record. Days with
/// no temperature observation are missing.
DailySeries resample_daily(std::span<const WeatherRecord> records, Aggregation agg = Aggregation::Mean);

/// Affine map of [min, max] onto [-1, 1].
struct ScalerParams {
  double min = 0.0;
  double max = 1.0;

  double scale(double x) const { return 2.0 * (x - min) / (max - min) - 1.0; }
  double unscale(double s) const { return (s + 1.0) * 0.5 * (max - min) + min; }
};

ScalerParams fit_scaler(std::span<const double> series);
std::vector<double> scale(std::span<const double> series, const ScalerParams& p);
std::vector<double> unscale(std::span<const double> scaled, const ScalerParams& p);

struct WindowedDataset {
  Tensor inputs;   // [N, window, 1]
  Tensor targets;  // [N, 1]
  std::vector<std::size_t> target_index;  // position of each target in the source series
  Day first_day{};
  std::size_t window = 0;

  std::size_t size() const { return target_index.size(); }
  Day target_date(std::size_t i) const { return first_day + std::chrono::days(target_index[i]); }
  /// Windows [begin, end) as a new dataset.
  WindowedDataset slice(std::size_t begin, std::size_t end) const;
};

/// Window i covers series[i*stride, i*stride + window) and targets
/// series[i*stride + window + horizon - 1].
WindowedDataset make_windows(std::span<const double> series, std::size_t window = 30, std::size_t horizon = 1,
                             std::size_t stride = 1, Day first_day = Day{});

/// First floor(N * train_fraction) windows train, the rest test.
std::pair<WindowedDataset, WindowedDataset> chronological_split(const WindowedDataset& data, double train_fraction);

struct SynthParams {
  double base = 20.0;
  double annual_amplitude = 10.0;
  double weekly_amplitude = 1.0;
  double noise_sd = 2.0;
  double lo = 0.0;
  double hi = 100.0;
};

/// base - annual*cos(2 pi d / 365.25) + weekly*sin(2 pi d / 7) + noise,
/// clamped to [lo, hi].
std::vector<double> synthesize_series(std::size_t days, std::uint64_t seed, const SynthParams& params = {});

/// Daily "timestamp,temperature" CSV text.
std::string series_to_csv(Day first_day, std::span<const double> values);

struct PipelineConfig {
  std::size_t window = 30;
  std::size_t horizon = 1;
  std::size_t stride = 1;
  double train_fraction = 0.8;
  Aggregation aggregation = Aggregation::Mean;
  std::vector<DateRange> exclusions;
};

struct PreparedData {
  Day first_day{};
  std::vector<double> series;  // daily, imputed, original units
  ScalerParams scaler;
  std::size_t train_days = 0;  // prefix of `series` the scaler was fit on
  WindowedDataset train;
  WindowedDataset test;
};

/// exclusions -> resample -> impute -> fit scaler on the training prefix ->
/// scale -> window -> split. Pass `scaler` to reuse stored statistics instead
/// of fitting.
PreparedData prepare_dataset(std::vector<WeatherRecord> records, const PipelineConfig& cfg,
                             const std::optional<ScalerParams>& scaler = std::nullopt);

}  // namespace thermocast
