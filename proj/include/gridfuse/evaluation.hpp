#pragma once

#include "gridfuse/extraction.hpp"
#include "gridfuse/fusion.hpp"
#include "gridfuse/scenario.hpp"

#include <cstddef>
#include <map>
#include <vector>

namespace gridfuse {

struct FrameCounts {
  double timestamp = 0.0;
  std::size_t truth = 0;
  std::size_t matched = 0;
  std::size_t missed = 0;
  std::size_t false_count = 0;
};

struct EvalReport {
  std::vector<FrameCounts> frames;
  std::size_t matched = 0;
  std::size_t missed = 0;
  std::size_t false_count = 0;
  double rmse = 0.0;
  std::size_t label_switches = 0;
  std::size_t metas_created = 0;
  /// Candidates from injected false tracks, and how many were not rejected.
  std::size_t false_presented = 0;
  std::size_t false_accepted = 0;
  /// Grid candidates on an injected ghost, and how many were not rejected.
  std::size_t ghost_presented = 0;
  std::size_t ghost_accepted = 0;
  std::size_t rejected = 0;
};

/// Greedy nearest-neighbour pairs (a, b) with distance <= gate, closest
/// first; ties keep the lower indices first.
std::vector<std::pair<std::size_t, std::size_t>> greedy_match(
    const std::vector<std::vector<double>>& dist, double gate);

/// Scores the fused meta set against ground truth, one envelope at a time.
class FusionEvaluator {
 public:
  FusionEvaluator(const SimWorld& world, std::vector<Label> false_labels,
                  FusionConfig cfg, double gate = 2.0);

  void add(const EnvelopeResult& result, const TruthFrame& truth);
  EvalReport report() const;

 private:
  const SimWorld& world_;
  std::vector<Label> false_labels_;
  FusionConfig cfg_;
  double gate_;
  EvalReport report_;
  double sq_sum_ = 0.0;
  std::map<int, Label> last_label_;
};

struct ExtractionReport {
  /// Per ground-truth id: frames the object was expected, and detected.
  std::map<int, std::pair<std::size_t, std::size_t>> per_object;
  std::size_t frames = 0;
  std::size_t false_objects = 0;
  std::size_t label_switches = 0;
  std::size_t rmse_samples = 0;
  double rmse = 0.0;
  /// Lowest detected/expected ratio over all objects (1 when none expected).
  double worst_recall() const;
};

/// Scores vehicle-frame grid objects of one frame against the truth.
class ExtractionEvaluator {
 public:
  explicit ExtractionEvaluator(double gate = 2.0, double min_speed = 1.0,
                               std::size_t min_cells = 16);

  void add(const std::vector<GridObject>& objects, const TruthFrame& truth);
  ExtractionReport report() const;

 private:
  double gate_;
  double min_speed_;
  std::size_t min_cells_;
  ExtractionReport report_;
  double sq_sum_ = 0.0;
  std::map<int, Label> last_label_;
};

}  // namespace gridfuse
