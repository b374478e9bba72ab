#pragma once

#include <filesystem>
#include <string>

#include "anomkit/pipeline.hpp"

namespace anomkit {

/// Pretty-printed JSON with every field (sections: preprocess, dcae, ocsvm, cluster, metrics).
std::string config_to_json(const PipelineConfig& config);

/// Starts from default_config() of the given preset and overrides the keys present.
/// Unknown keys and mistyped values raise UsageError; out-of-range values ParameterError.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace anomkit
