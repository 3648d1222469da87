#include "thermocast/datapipe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "thermocast/errors.hpp"
#include "thermocast/io.hpp"

namespace thermocast {

namespace {

using namespace std::chrono;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

// Splits one CSV line; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

}  // namespace

std::optional<Day> parse_date(std::string_view text) {
  text = trim(text);
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d)) {
    return std::nullopt;
  }
  if (text.size() != 10) return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (m < 1 || d < 1 || !ymd.ok()) return std::nullopt;
  return Day{ymd};
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  text = trim(text);
  if (text.size() < 10) return std::nullopt;
  const auto day = parse_date(text.substr(0, 10));
  if (!day) return std::nullopt;
  Timestamp ts{*day, 0};
  if (text.size() == 10) return ts;
  if (text[10] != 'T' && text[10] != ' ') return std::nullopt;
  const std::string_view clock = text.substr(11);
  if (clock.size() != 5 && clock.size() != 8) return std::nullopt;
  int h = 0, mi = 0, s = 0;
  if (clock[2] != ':' || !parse_int(clock.substr(0, 2), h) || !parse_int(clock.substr(3, 2), mi)) {
    return std::nullopt;
  }
  if (clock.size() == 8 && (clock[5] != ':' || !parse_int(clock.substr(6, 2), s))) return std::nullopt;
  // 24:00 is accepted as the end of the day, as some station exports use it.
  const bool end_of_day = h == 24 && mi == 0 && s == 0;
  if (!end_of_day && (h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59)) return std::nullopt;
  if (end_of_day) {
    ts.day += days{1};
    return ts;
  }
  ts.seconds = h * 3600 + mi * 60 + s;
  return ts;
}

std::string format_date(Day d) {
  const year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string ParseReport::summary() const {
  return std::to_string(records.size()) + " records, " + std::to_string(rows_skipped) +
         (rows_skipped == 1 ? " row skipped" : " rows skipped");
}

ParseReport parse_csv_text(std::string_view text, const CsvSchema& schema) {
  const std::vector<std::string_view> lines = split_lines(text);
  std::size_t first = 0;
  while (first < lines.size() && trim(lines[first]).empty()) ++first;
  if (first == lines.size()) throw DataError("parse_csv", "no header row");

  const std::vector<std::string> header = split_csv_line(lines[first]);
  std::vector<std::string> names;
  for (const std::string& h : header) names.emplace_back(trim(h));
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DataError("parse_csv", "missing required column '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  };
  const std::size_t ts_col = column(schema.timestamp_column);
  const std::size_t temp_col = column(schema.temperature_column);

  ParseReport report;
  std::vector<std::vector<std::string>> extras;
  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    report.rows_read += 1;
    std::vector<std::string> fields = split_csv_line(lines[li]);
    auto skip = [&](const std::string& why) {
      report.rows_skipped += 1;
      report.problems.push_back("line " + std::to_string(li + 1) + ": " + why);
    };
    if (fields.size() != names.size()) {
      skip("expected " + std::to_string(names.size()) + " fields, found " + std::to_string(fields.size()));
      continue;
    }
    const auto ts = parse_timestamp(fields[ts_col]);
    if (!ts) {
      skip("unparseable timestamp '" + fields[ts_col] + "'");
      continue;
    }
    WeatherRecord rec;
    rec.timestamp = *ts;
    if (!trim(fields[temp_col]).empty()) {
      const auto t = parse_number(fields[temp_col]);
      if (!t || !std::isfinite(*t)) {
        skip("bad temperature '" + fields[temp_col] + "'");
        continue;
      }
      rec.temperature = t;
    }
    report.records.push_back(std::move(rec));
    extras.push_back(std::move(fields));
  }

  // Extra columns are numeric when every non-empty value parses.
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c == ts_col || c == temp_col) continue;
    bool numeric = true;
    for (const auto& row : extras) {
      if (!trim(row[c]).empty() && !parse_number(row[c])) {
        numeric = false;
        break;
      }
    }
    for (std::size_t r = 0; r < extras.size(); ++r) {
      if (numeric) {
        report.records[r].numeric[names[c]] = parse_number(extras[r][c]);
      } else {
        report.records[r].categorical[names[c]] = std::string(trim(extras[r][c]));
      }
    }
  }

  std::stable_sort(report.records.begin(), report.records.end(),
                   [](const WeatherRecord& a, const WeatherRecord& b) { return a.timestamp < b.timestamp; });
  return report;
}

ParseReport parse_csv(const std::string& path, const CsvSchema& schema) { return parse_csv_text(read_file(path), schema); }

TemporalFeatures extract_temporal_features(const WeatherRecord& record) {
  const year_month_day ymd{record.timestamp.day};
  return TemporalFeatures{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                          static_cast<unsigned>(ymd.day()), record.timestamp.seconds / 3600};
}

std::vector<DateRange> parse_exclusions_text(std::string_view text) {
  std::vector<DateRange> out;
  std::size_t line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t comma = line.find(',');
    const auto first = comma == std::string_view::npos ? std::nullopt : parse_date(line.substr(0, comma));
    const auto last = comma == std::string_view::npos ? std::nullopt : parse_date(line.substr(comma + 1));
    if (!first || !last || *last < *first) {
      throw DataError("exclusions", "line " + std::to_string(line_no) + ": expected start-date,end-date");
    }
    out.push_back(DateRange{*first, *last});
  }
  return out;
}

std::vector<DateRange> parse_exclusions(const std::string& path) { return parse_exclusions_text(read_file(path)); }

std::vector<WeatherRecord> apply_exclusions(std::vector<WeatherRecord> records, std::span<const DateRange> ranges) {
  std::erase_if(records, [&](const WeatherRecord& r) {
    return std::any_of(ranges.begin(), ranges.end(), [&](const DateRange& range) {
      return r.timestamp.day >= range.first && r.timestamp.day <= range.last;
    });
  });
  return records;
}

std::vector<double> impute_mean(std::span<const std::optional<double>> series) {
  double total = 0.0;
  std::size_t present = 0;
  for (const auto& v : series) {
    if (v) {
      total += *v;
      ++present;
    }
  }
  if (present == 0) throw DataError("impute_mean", "every value is missing");
  const double fill = total / static_cast<double>(present);
  std::vector<double> out;
  out.reserve(series.size());
  for (const auto& v : series) out.push_back(v ? *v : fill);
  return out;
}

std::optional<Aggregation> parse_aggregation(std::string_view name) {
  if (name == "mean") return Aggregation::Mean;
  if (name == "min") return Aggregation::Min;
  if (name == "max") return Aggregation::Max;
  if (name == "midrange") return Aggregation::Midrange;
  return std::nullopt;
}

std::string_view to_string(Aggregation agg) {
  switch (agg) {
    case Aggregation::Mean: return "mean";
    case Aggregation::Min: return "min";
    case Aggregation::Max: return "max";
    case Aggregation::Midrange: return "midrange";
  }
  return "mean";
}

DailySeries resample_daily(std::span<const WeatherRecord> records, Aggregation agg) {
  if (records.empty()) throw DataError("resample_daily", "no records");
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp < records[i - 1].timestamp) {
      throw ContractError("resample_daily: records are not sorted by timestamp");
    }
  }
  const Day first = records.front().timestamp.day;
  const Day last = records.back().timestamp.day;
  const std::size_t span_days = static_cast<std::size_t>((last - first).count()) + 1;

  struct Acc {
    double sum = 0.0, lo = 0.0, hi = 0.0;
    std::size_t n = 0;
  };
  std::vector<Acc> acc(span_days);
  for (const WeatherRecord& r : records) {
    if (!r.temperature) continue;
    Acc& a = acc[static_cast<std::size_t>((r.timestamp.day - first).count())];
    const double t = *r.temperature;
    if (a.n == 0) {
      a.lo = a.hi = t;
    } else {
      a.lo = std::min(a.lo, t);
      a.hi = std::max(a.hi, t);
    }
    a.sum += t;
    a.n += 1;
  }
  DailySeries out{first, {}};
  out.values.reserve(span_days);
  for (const Acc& a : acc) {
    if (a.n == 0) {
      out.values.emplace_back();
      continue;
    }
    switch (agg) {
      case Aggregation::Mean: out.values.emplace_back(a.sum / static_cast<double>(a.n)); break;
      case Aggregation::Min: out.values.emplace_back(a.lo); break;
      case Aggregation::Max: out.values.emplace_back(a.hi); break;
      case Aggregation::Midrange: out.values.emplace_back(0.5 * (a.lo + a.hi)); break;
    }
  }
  return out;
}

ScalerParams fit_scaler(std::span<const double> series) {
  if (series.empty()) throw DataError("fit_scaler", "empty series");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (!(*hi > *lo)) {
    throw DataError("fit_scaler", "series is constant (" + format_double(*lo) + "), cannot scale");
  }
  return ScalerParams{*lo, *hi};
}

std::vector<double> scale(std::span<const double> series, const ScalerParams& p) {
  std::vector<double> out(series.size());
  std::transform(series.begin(), series.end(), out.begin(), [&](double x) { return p.scale(x); });
  return out;
}

std::vector<double> unscale(std::span<const double> scaled, const ScalerParams& p) {
  std::vector<double> out(scaled.size());
  std::transform(scaled.begin(), scaled.end(), out.begin(), [&](double s) { return p.unscale(s); });
  return out;
}

WindowedDataset WindowedDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw ContractError("slice: invalid window range");
  const std::size_t n = end - begin;
  WindowedDataset out;
  out.window = window;
  out.first_day = first_day;
  std::vector<double> in(inputs.raw() + begin * window, inputs.raw() + end * window);
  out.inputs = Tensor({n, window, 1}, std::move(in));
  out.targets = Tensor({n, 1}, std::vector<double>(targets.raw() + begin, targets.raw() + end));
  out.target_index.assign(target_index.begin() + static_cast<std::ptrdiff_t>(begin),
                          target_index.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

WindowedDataset make_windows(std::span<const double> series, std::size_t window, std::size_t horizon,
                             std::size_t stride, Day first_day) {
  if (window == 0 || horizon == 0 || stride == 0) {
    throw ContractError("make_windows: window, horizon and stride must be positive");
  }
  const std::size_t needed = window + horizon;
  if (series.size() < needed) {
    throw DataError("make_windows", "series has " + std::to_string(series.size()) +
                                        " values; at least " + std::to_string(needed) + " are required");
  }
  const std::size_t n = (series.size() - needed) / stride + 1;
  WindowedDataset out;
  out.window = window;
  out.first_day = first_day;
  std::vector<double> in(n * window);
  std::vector<double> tg(n);
  out.target_index.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = i * stride;
    std::copy_n(series.begin() + static_cast<std::ptrdiff_t>(start), window, in.begin() + static_cast<std::ptrdiff_t>(i * window));
    out.target_index[i] = start + window + horizon - 1;
    tg[i] = series[out.target_index[i]];
  }
  out.inputs = Tensor({n, window, 1}, std::move(in));
  out.targets = Tensor({n, 1}, std::move(tg));
  return out;
}

std::pair<WindowedDataset, WindowedDataset> chronological_split(const WindowedDataset& data, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("chronological_split: train_fraction must be in (0, 1)");
  }
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
  if (n_train == 0 || n_train == n) {
    throw ContractError("chronological_split: fraction " + format_double(train_fraction) + " of " +
                        std::to_string(n) + " windows leaves one side empty");
  }
  return {data.slice(0, n_train), data.slice(n_train, n)};
}

std::vector<double> synthesize_series(std::size_t days, std::uint64_t seed, const SynthParams& p) {
  if (days < 31) throw ContractError("synthesize_series: need >= 31 days, got " + std::to_string(days));
  std::mt19937_64 rng(seed);
  auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> out(days);
  for (std::size_t d = 0; d < days; ++d) {
    const double x = static_cast<double>(d);
    double v = p.base - p.annual_amplitude * std::cos(two_pi * x / 365.25) +
               p.weekly_amplitude * std::sin(two_pi * x / 7.0);
    if (p.noise_sd > 0.0) {
      // Box-Muller, one normal per pair of uniforms.
      const double u1 = uniform();
      const double u2 = uniform();
      v += p.noise_sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }
    out[d] = std::clamp(v, p.lo, p.hi);
  }
  return out;
}

std::string series_to_csv(Day first_day, std::span<const double> values) {
  std::string out = "timestamp,temperature\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += format_date(first_day + days(i));
    out += ',';
    out += format_double(values[i]);
    out += '\n';
  }
  return out;
}

PreparedData prepare_dataset(std::vector<WeatherRecord> records, const PipelineConfig& cfg,
                             const std::optional<ScalerParams>& scaler) {
  if (!cfg.exclusions.empty()) records = apply_exclusions(std::move(records), cfg.exclusions);
  const DailySeries daily = resample_daily(records, cfg.aggregation);
  PreparedData out;
  out.first_day = daily.first_day;
  out.series = impute_mean(daily.values);

  const std::size_t needed = cfg.window + cfg.horizon;
  if (out.series.size() < needed) {
    throw DataError("make_windows", "series has " + std::to_string(out.series.size()) +
                                        " days; at least " + std::to_string(needed) + " are required");
  }
  const std::size_t windows = (out.series.size() - needed) / cfg.stride + 1;
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(windows) * cfg.train_fraction));
  if (n_train == 0 || n_train == windows) {
    throw DataError("chronological_split", "train fraction " + format_double(cfg.train_fraction) + " of " +
                                               std::to_string(windows) + " windows leaves one side empty");
  }
  // Days touched by training windows: inputs and targets up to the last one.
  out.train_days = (n_train - 1) * cfg.stride + cfg.window + cfg.horizon;
  out.scaler = scaler ? *scaler : fit_scaler(std::span(out.series).first(out.train_days));

  const std::vector<double> scaled = scale(out.series, out.scaler);
  const WindowedDataset all = make_windows(scaled, cfg.window, cfg.horizon, cfg.stride, out.first_day);
  std::tie(out.train, out.test) = chronological_split(all, cfg.train_fraction);
  return out;
}

}  // namespace thermocast
