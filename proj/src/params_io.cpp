#include "thermocast/params_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include <json.hpp>

#include "thermocast/errors.hpp"
#include "thermocast/io.hpp"

namespace thermocast {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'T', 'C', 'P', 'A', 'R', 'A', 'M', 'S'};

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
}

void append_u64(std::string& out, std::uint64_t v) {
  v = to_little(v);
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t read_u64(const char* p) {
  std::uint64_t v = 0;
  std::memcpy(&v, p, 8);
  return to_little(v);
}

std::string activation_name(Activation a) { return a == Activation::Relu ? "relu" : "linear"; }
std::string reduction_name(SequenceReduction r) { return r == SequenceReduction::LastStep ? "last_step" : "mean"; }

json config_to_json(const ModelConfig& c) {
  return json{{"window", c.window},
              {"kernel_size", c.kernel_size},
              {"conv1_filters", c.conv1_filters},
              {"conv2_filters", c.conv2_filters},
              {"pool", c.pool},
              {"lstm_units", c.lstm_units},
              {"bilstm_units", c.bilstm_units},
              {"dense_units", c.dense_units},
              {"dropout_rate", c.dropout_rate},
              {"forget_bias", c.forget_bias},
              {"dense_activation", activation_name(c.dense_activation)},
              {"reduction", reduction_name(c.reduction)}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.window = j.at("window").get<std::size_t>();
  c.kernel_size = j.at("kernel_size").get<std::size_t>();
  c.conv1_filters = j.at("conv1_filters").get<std::size_t>();
  c.conv2_filters = j.at("conv2_filters").get<std::size_t>();
  c.pool = j.at("pool").get<std::size_t>();
  c.lstm_units = j.at("lstm_units").get<std::size_t>();
  c.bilstm_units = j.at("bilstm_units").get<std::size_t>();
  c.dense_units = j.at("dense_units").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.forget_bias = j.at("forget_bias").get<double>();
  const std::string act = j.at("dense_activation").get<std::string>();
  if (act != "relu" && act != "linear") throw FormatError("unknown dense_activation '" + act + "'");
  c.dense_activation = act == "relu" ? Activation::Relu : Activation::Linear;
  const std::string red = j.at("reduction").get<std::string>();
  if (red != "last_step" && red != "mean") throw FormatError("unknown reduction '" + red + "'");
  c.reduction = red == "last_step" ? SequenceReduction::LastStep : SequenceReduction::MeanOverTime;
  return c;
}

struct ParsedFile {
  json header;
  std::string payload;
};

ParsedFile parse_file(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError(path + ": not a parameter file (bad magic or truncated)");
  }
  const std::uint64_t header_len = read_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw FormatError(path + ": truncated header");
  ParsedFile f;
  try {
    f.header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    throw FormatError(path + ": malformed header: " + e.what());
  }
  f.payload = bytes.substr(16 + header_len);
  try {
    const std::string fmt = f.header.at("format").get<std::string>();
    const int version = f.header.at("version").get<int>();
    if (fmt != "thermocast-params") throw FormatError(path + ": unknown format '" + fmt + "'");
    if (version != kParamsFormatVersion) {
      throw FormatError(path + ": format version " + std::to_string(version) + ", expected " +
                        std::to_string(kParamsFormatVersion));
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": incomplete header: " + e.what());
  }
  return f;
}

ParamsMetadata meta_from_json(const json& h) {
  ParamsMetadata meta;
  if (h.contains("scaler")) {
    meta.scaler = ScalerParams{h["scaler"].at("min").get<double>(), h["scaler"].at("max").get<double>()};
  }
  if (h.contains("pipeline")) {
    const json& j = h["pipeline"];
    PipelineConfig p;
    p.window = j.at("window").get<std::size_t>();
    p.horizon = j.at("horizon").get<std::size_t>();
    p.stride = j.at("stride").get<std::size_t>();
    p.train_fraction = j.at("train_fraction").get<double>();
    const auto agg = parse_aggregation(j.at("aggregation").get<std::string>());
    if (!agg) throw FormatError("unknown aggregation in header");
    p.aggregation = *agg;
    for (const json& r : j.at("exclusions")) {
      const auto first = parse_date(r.at(0).get<std::string>());
      const auto last = parse_date(r.at(1).get<std::string>());
      if (!first || !last) throw FormatError("bad exclusion range in header");
      p.exclusions.push_back({*first, *last});
    }
    meta.pipeline = p;
  }
  return meta;
}

// Copies the payload into `model`, checking names, shapes and total length.
void fill(Model& model, const ParsedFile& f, const std::string& path) {
  const json& tensors = f.header.at("tensors");
  auto& params = model.parameters();
  if (tensors.size() != params.size()) {
    throw FormatError(path + ": file holds " + std::to_string(tensors.size()) + " tensors, model has " +
                      std::to_string(params.size()));
  }
  std::size_t expected_bytes = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = tensors[i].at("name").get<std::string>();
    const Shape shape = tensors[i].at("shape").get<Shape>();
    if (name != params[i].name) {
      throw FormatError(path + ": tensor " + std::to_string(i) + " is '" + name + "', model expects '" +
                        params[i].name + "'");
    }
    if (shape != params[i].value.shape()) {
      throw FormatError(path + ": shape mismatch for " + name + ": file " + to_string(shape) + " vs model " +
                        to_string(params[i].value.shape()));
    }
    expected_bytes += numel(shape) * sizeof(double);
  }
  if (f.payload.size() != expected_bytes) {
    throw FormatError(path + ": payload has " + std::to_string(f.payload.size()) + " bytes, expected " +
                      std::to_string(expected_bytes) + " (truncated or corrupt)");
  }
  // Decode into copies first so a failure leaves the model untouched.
  std::vector<Tensor> decoded;
  const char* p = f.payload.data();
  for (const NamedTensor& t : params) {
    Tensor v(t.value.shape());
    for (double& d : v.data()) {
      const std::uint64_t bits = read_u64(p);
      d = std::bit_cast<double>(bits);
      p += 8;
    }
    decoded.push_back(std::move(v));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = std::move(decoded[i]);
}

}  // namespace

void save_params(const Model& model, const std::string& path, const ParamsMetadata& meta) {
  json header{{"format", "thermocast-params"},
              {"version", kParamsFormatVersion},
              {"seed", model.seed()},
              {"config", config_to_json(model.config())}};
  json tensors = json::array();
  for (const NamedTensor& t : model.parameters()) tensors.push_back({{"name", t.name}, {"shape", t.value.shape()}});
  header["tensors"] = std::move(tensors);
  if (meta.scaler) header["scaler"] = {{"min", meta.scaler->min}, {"max", meta.scaler->max}};
  if (meta.pipeline) {
    const PipelineConfig& p = *meta.pipeline;
    json ex = json::array();
    for (const DateRange& r : p.exclusions) ex.push_back({format_date(r.first), format_date(r.last)});
    header["pipeline"] = {{"window", p.window},
                          {"horizon", p.horizon},
                          {"stride", p.stride},
                          {"train_fraction", p.train_fraction},
                          {"aggregation", std::string(to_string(p.aggregation))},
                          {"exclusions", ex}};
  }
  const std::string text = header.dump();
  std::string out(kMagic, 8);
  append_u64(out, text.size());
  out += text;
  for (const NamedTensor& t : model.parameters()) {
    for (double d : t.value.data()) append_u64(out, std::bit_cast<std::uint64_t>(d));
  }
  write_file_atomic(path, out);
}

LoadedModel load_params(const std::string& path) {
  const ParsedFile f = parse_file(path);
  try {
    Model model = Model::build(config_from_json(f.header.at("config")), f.header.at("seed").get<std::uint64_t>());
    fill(model, f, path);
    return LoadedModel{std::move(model), meta_from_json(f.header)};
  } catch (const json::exception& e) {
    throw FormatError(path + ": incomplete header: " + e.what());
  }
}

ParamsMetadata load_params_into(Model& model, const std::string& path) {
  const ParsedFile f = parse_file(path);
  try {
    fill(model, f, path);
    return meta_from_json(f.header);
  } catch (const json::exception& e) {
    throw FormatError(path + ": incomplete header: " + e.what());
  }
}

}  // namespace thermocast
