#pragma once

#include "gridfuse/digital_map.hpp"
#include "gridfuse/ego_motion.hpp"
#include "gridfuse/extraction.hpp"
#include "gridfuse/fusion.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace gridfuse {

struct PipelineConfig {
  ExtractionConfig extraction;
  FusionConfig fusion;
  MapConfig map;
  KalmanNoise ego;
};

/// JSON view with angles in degrees (keys ending in _deg).
nlohmann::json config_to_json(const PipelineConfig& cfg);

/// Reads a full or partial config on top of `base`. Unknown keys and
/// invalid values raise ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j,
                                const PipelineConfig& base = {});

PipelineConfig load_config_file(const std::string& path,
                                const PipelineConfig& base = {});

/// Applies "section.key=value" to a config JSON. The key must already exist;
/// the value is parsed as JSON and falls back to a string.
void apply_override(nlohmann::json& cfg, const std::string& assignment);

PipelineConfig with_overrides(const PipelineConfig& base,
                              const std::vector<std::string>& overrides);

}  // namespace gridfuse
