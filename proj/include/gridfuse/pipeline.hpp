#pragma once

#include "gridfuse/config.hpp"
#include "gridfuse/evaluation.hpp"
#include "gridfuse/scenario.hpp"
#include "gridfuse/serialization.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gridfuse {

struct RunOptions {
  /// Shipped scenario name or path to a scenario file.
  std::string scenario;
  /// Artifact directory; empty writes nothing.
  std::string out_dir;
  /// Empty loads the shipped defaults.
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  /// Limit on grid frames.
  std::optional<std::size_t> frames;
};

struct RunHooks {
  /// Called for every processed envelope with the truth at its timestamp.
  std::function<void(const EnvelopeResult&, const TruthFrame&)> on_result;
  /// Called for every grid frame with the extracted objects in vehicle
  /// coordinates.
  std::function<void(const std::vector<GridObject>&, const RenderedGrid&)> on_grid;
};

struct RunSummary {
  EvalReport eval;
  ExtractionReport extraction;
  std::size_t grid_frames = 0;
  std::size_t track_frames = 0;
  std::size_t envelopes = 0;
  std::vector<Label> false_labels;
};

std::string default_config_path();

/// Loads the config (file plus overrides) the same way `run` does.
PipelineConfig resolve_config(const RunOptions& opts);

/// Loads the scenario, applies the seed override and runs it.
RunSummary run_scenario(const RunOptions& opts, const RunHooks& hooks = {});

/// Runs an already loaded world. Artifacts go to opts.out_dir when set.
RunSummary run_world(const SimWorld& world, const PipelineConfig& cfg,
                     const RunOptions& opts, const RunHooks& hooks = {});

/// Writes dogma.jsonl, tracks.jsonl, imu.jsonl and truth.jsonl for the
/// scenario into out_dir.
void export_streams(const RunOptions& opts, CellEncoding encoding);

enum class DumpFormat { text, jsonl, csv };

/// Renders one line of frames.jsonl. Throws InvalidArgument when the index
/// is out of range.
std::string inspect_frame(const std::string& frames_path, std::size_t index,
                          DumpFormat format);

}  // namespace gridfuse
