#include "thermocast/config.hpp"

#include <charconv>

#include "thermocast/errors.hpp"
#include "thermocast/io.hpp"

namespace thermocast {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_value(std::string_view key, std::string_view v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ContractError("config: bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

struct Key {
  const char* name;
  void (*apply)(RunConfig&, std::string_view key, std::string_view value);
  std::string (*show)(const RunConfig&);
};

// clang-format off
const Key kKeys[] = {
  {"init_lr", [](RunConfig& c, auto k, auto v) { c.train.init_lr = parse_value<double>(k, v); },
              [](const RunConfig& c) { return format_double(c.train.init_lr); }},
  {"epochs", [](RunConfig& c, auto k, auto v) { c.train.epochs = parse_value<std::size_t>(k, v); },
             [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
  {"batch_size", [](RunConfig& c, auto k, auto v) { c.train.batch_size = parse_value<std::size_t>(k, v); },
                 [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
  {"patience", [](RunConfig& c, auto k, auto v) { c.train.patience = parse_value<std::size_t>(k, v); },
               [](const RunConfig& c) { return std::to_string(c.train.patience); }},
  {"min_delta", [](RunConfig& c, auto k, auto v) { c.train.min_delta = parse_value<double>(k, v); },
                [](const RunConfig& c) { return format_double(c.train.min_delta); }},
  {"seed", [](RunConfig& c, auto k, auto v) { c.train.seed = parse_value<std::uint64_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.train.seed); }},
  {"validation_fraction", [](RunConfig& c, auto k, auto v) { c.train.validation_fraction = parse_value<double>(k, v); },
                          [](const RunConfig& c) { return format_double(c.train.validation_fraction); }},
  {"clip_norm", [](RunConfig& c, auto k, auto v) { c.train.clip_norm = parse_value<double>(k, v); },
                [](const RunConfig& c) { return format_double(c.train.clip_norm); }},
  {"window", [](RunConfig& c, auto k, auto v) { c.model.window = c.pipeline.window = parse_value<std::size_t>(k, v); },
             [](const RunConfig& c) { return std::to_string(c.model.window); }},
  {"horizon", [](RunConfig& c, auto k, auto v) { c.pipeline.horizon = parse_value<std::size_t>(k, v); },
              [](const RunConfig& c) { return std::to_string(c.pipeline.horizon); }},
  {"stride", [](RunConfig& c, auto k, auto v) { c.pipeline.stride = parse_value<std::size_t>(k, v); },
             [](const RunConfig& c) { return std::to_string(c.pipeline.stride); }},
  {"train_fraction", [](RunConfig& c, auto k, auto v) { c.pipeline.train_fraction = parse_value<double>(k, v); },
                     [](const RunConfig& c) { return format_double(c.pipeline.train_fraction); }},
  {"aggregation", [](RunConfig& c, auto, auto v) {
                    const auto a = parse_aggregation(v);
                    if (!a) throw ContractError("config: aggregation must be mean, min, max or midrange");
                    c.pipeline.aggregation = *a; },
                  [](const RunConfig& c) { return std::string(to_string(c.pipeline.aggregation)); }},
  {"exclusions", [](RunConfig& c, auto, auto v) { c.exclusions_path = std::string(v); },
                 [](const RunConfig& c) { return c.exclusions_path; }},
  {"kernel_size", [](RunConfig& c, auto k, auto v) { c.model.kernel_size = parse_value<std::size_t>(k, v); },
                  [](const RunConfig& c) { return std::to_string(c.model.kernel_size); }},
  {"conv1_filters", [](RunConfig& c, auto k, auto v) { c.model.conv1_filters = parse_value<std::size_t>(k, v); },
                    [](const RunConfig& c) { return std::to_string(c.model.conv1_filters); }},
  {"conv2_filters", [](RunConfig& c, auto k, auto v) { c.model.conv2_filters = parse_value<std::size_t>(k, v); },
                    [](const RunConfig& c) { return std::to_string(c.model.conv2_filters); }},
  {"pool", [](RunConfig& c, auto k, auto v) { c.model.pool = parse_value<std::size_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.model.pool); }},
  {"lstm_units", [](RunConfig& c, auto k, auto v) { c.model.lstm_units = parse_value<std::size_t>(k, v); },
                 [](const RunConfig& c) { return std::to_string(c.model.lstm_units); }},
  {"bilstm_units", [](RunConfig& c, auto k, auto v) { c.model.bilstm_units = parse_value<std::size_t>(k, v); },
                   [](const RunConfig& c) { return std::to_string(c.model.bilstm_units); }},
  {"dense_units", [](RunConfig& c, auto k, auto v) { c.model.dense_units = parse_value<std::size_t>(k, v); },
                  [](const RunConfig& c) { return std::to_string(c.model.dense_units); }},
  {"dropout", [](RunConfig& c, auto k, auto v) { c.model.dropout_rate = parse_value<double>(k, v); },
              [](const RunConfig& c) { return format_double(c.model.dropout_rate); }},
  {"forget_bias", [](RunConfig& c, auto k, auto v) { c.model.forget_bias = parse_value<double>(k, v); },
                  [](const RunConfig& c) { return format_double(c.model.forget_bias); }},
  {"dense_activation", [](RunConfig& c, auto, auto v) {
                         if (v != "relu" && v != "linear") throw ContractError("config: dense_activation must be relu or linear");
                         c.model.dense_activation = v == "relu" ? Activation::Relu : Activation::Linear; },
                       [](const RunConfig& c) { return std::string(c.model.dense_activation == Activation::Relu ? "relu" : "linear"); }},
  {"reduction", [](RunConfig& c, auto, auto v) {
                  if (v != "last_step" && v != "mean") throw ContractError("config: reduction must be last_step or mean");
                  c.model.reduction = v == "last_step" ? SequenceReduction::LastStep : SequenceReduction::MeanOverTime; },
                [](const RunConfig& c) { return std::string(c.model.reduction == SequenceReduction::LastStep ? "last_step" : "mean"); }},
};
// clang-format on

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  for (const Key& k : kKeys) {
    if (key == k.name) {
      k.apply(*this, key, value);
      return;
    }
  }
  throw ContractError("config: unknown key '" + std::string(key) + "'");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const Key& k : kKeys) out += std::string(k.name) + " = " + k.show(*this) + "\n";
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Key& k : kKeys) out.emplace_back(k.name);
  return out;
}

RunConfig parse_config_text(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ContractError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    base.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  return parse_config_text(read_file(path), std::move(base));
}

}  // namespace thermocast
