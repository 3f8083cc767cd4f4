#pragma once

#include "gridfuse/dogma.hpp"
#include "gridfuse/geometry.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace gridfuse {

struct ExtractionConfig {
  double eps_m_occ = 0.3;
  double eps_p_occ = 0.8;
  double eps_v_c = 0.3;
  double eps_var_vx = 5.0;
  double eps_var_vy = 5.0;
  double eps_d0 = 9.0;
  double eps_pos = 1.2;
  double eps_vel = 1.0;
  double eps_ratio = 0.1;
  /// DBSCAN minPts, the point itself included.
  std::size_t min_cluster_cells = 4;
  double cv_gate = 2.0;
  double det_floor = kCovarianceDeterminantFloor;
};

/// Relative slack on the squared neighbor distances so that grid-aligned
/// cells exactly eps apart count as neighbors despite rounding.
inline constexpr double kNeighborTolerance = 1e-9;

struct CellCluster {
  /// Ascending cell indices.
  std::vector<std::size_t> member_indices;
  std::size_t validated_count = 0;
};

using Label = std::uint64_t;

struct GridObject {
  Vec2 ref_pos = Vec2::Zero();
  RefPoint ref_label = RefPoint::b;
  double speed = 0.0;
  double orientation = 0.0;
  OrientedBox bbox;
  Label label = 0;
  double timestamp = 0.0;
  std::size_t cell_count = 0;
};

/// Cells with m_occ > eps_m_occ, ascending.
std::vector<std::size_t> build_search_mask(const DogmaFrame& frame,
                                           const ExtractionConfig& cfg);

/// DBSCAN over the given cells. Two cells are neighbors when both their
/// position and their velocity distance are within eps. Cells are visited in
/// the given order, so clusters come out ordered by their first core cell.
std::vector<CellCluster> cluster_cells(const DogmaFrame& frame,
                                       const std::vector<std::size_t>& mask,
                                       const ExtractionConfig& cfg);

/// Search-mask cells that pass the occupancy, speed, variance and
/// zero-velocity Mahalanobis tests. Singular covariances fail.
std::vector<std::size_t> build_validation_mask(
    const DogmaFrame& frame, const std::vector<std::size_t>& mask,
    const ExtractionConfig& cfg);

/// Fills validated_count and keeps clusters whose validated ratio reaches
/// eps_ratio.
std::vector<CellCluster> validate_clusters(
    std::vector<CellCluster> clusters,
    const std::vector<std::size_t>& validation_mask,
    const ExtractionConfig& cfg);

/// One unlabeled object per cluster, in grid coordinates. Clusters without
/// a defined mean orientation are skipped.
std::vector<GridObject> create_objects(const std::vector<CellCluster>& clusters,
                                       const DogmaFrame& frame);

/// Advances an object with constant velocity along its orientation.
GridObject predict_cv(const GridObject& obj, double dt);

/// Matches current objects to CV-predicted previous ones and copies labels;
/// unmatched objects draw from `next_label`.
std::vector<GridObject> assign_labels(std::vector<GridObject> current,
                                      const std::vector<GridObject>& previous,
                                      double dt, const ExtractionConfig& cfg,
                                      Label& next_label);

/// Full pipeline on one frame, everything in grid coordinates.
std::vector<GridObject> extract(const DogmaFrame& frame,
                                const std::vector<GridObject>& previous,
                                const ExtractionConfig& cfg, Label& next_label);

/// Expresses an object given in the frame `pose` in that frame's parent.
GridObject transform_object(const GridObject& obj, const Pose2& pose);

/// Stateful extractor that keeps the last objects in a fixed world frame so
/// labels survive ego motion.
class GridExtractor {
 public:
  explicit GridExtractor(ExtractionConfig cfg = {}, Label first_label = 1);

  /// `grid_pose` is the pose of the grid frame in the world frame. Returns
  /// the labeled objects in world coordinates.
  std::vector<GridObject> process(const DogmaFrame& frame,
                                  const Pose2& grid_pose = {});

  const ExtractionConfig& config() const { return cfg_; }
  const std::vector<GridObject>& previous() const { return previous_; }

 private:
  ExtractionConfig cfg_;
  Label next_label_;
  std::vector<GridObject> previous_;
};

}  // namespace gridfuse
