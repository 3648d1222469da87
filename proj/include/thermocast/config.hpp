#pragma once

// Flat "key = value" run configuration shared by the CLI commands.

#include <string>
#include <string_view>
#include <vector>

#include "thermocast/datapipe.hpp"
#include "thermocast/model.hpp"
#include "thermocast/optim.hpp"

namespace thermocast {

struct RunConfig {
  TrainConfig train;
  ModelConfig model;
  PipelineConfig pipeline;
  std::string exclusions_path;  // empty: none

  /// Applies one setting. Throws ContractError on an unknown key or a value
  /// that does not parse.
  void set(std::string_view key, std::string_view value);

  /// Every key with its effective value, one "key = value" per line, in a
  /// fixed order. Parsing this text reproduces the configuration.
  std::string to_text() const;

  static std::vector<std::string> keys();
};

/// Applies the settings in `text` over `base`. '#' starts a comment.
RunConfig parse_config_text(std::string_view text, RunConfig base = {});
RunConfig load_config_file(const std::string& path, RunConfig base = {});

}  // namespace thermocast
