#pragma once

// Parameter file: the 8 bytes "TCPARAMS", a little-endian uint64 header
// length, a JSON header (format version, seed, model configuration, optional
// pipeline settings and scaler, tensor names and shapes), then every tensor
// as raw little-endian doubles in build order.

#include <optional>
#include <string>

#include "thermocast/datapipe.hpp"
#include "thermocast/model.hpp"

namespace thermocast {

inline constexpr int kParamsFormatVersion = 1;

struct ParamsMetadata {
  std::optional<ScalerParams> scaler;
  std::optional<PipelineConfig> pipeline;
};

void save_params(const Model& model, const std::string& path, const ParamsMetadata& meta = {});

struct LoadedModel {
  Model model;
  ParamsMetadata meta;
};

/// Rebuilds the model described by the header and fills its parameters.
LoadedModel load_params(const std::string& path);

/// Fills an existing model; any tensor whose shape differs is a FormatError
/// naming that tensor.
ParamsMetadata load_params_into(Model& model, const std::string& path);

}  // namespace thermocast
