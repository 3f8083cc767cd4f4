#pragma once

#include "gridfuse/geometry.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace gridfuse {

/// Stored per-cell payload of a DOGMa frame. Position is implied by the
/// cell index; the velocity covariance is kept as its three unique entries.
struct CellData {
  double m_occ = 0.0;
  double m_free = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double var_vx = 0.0;
  double cov_vxvy = 0.0;
  double var_vy = 0.0;

  friend bool operator==(const CellData&, const CellData&) = default;
};

/// One grid cell: Dempster-Shafer masses, position, velocity and velocity
/// covariance.
struct CellState {
  double m_occ = 0.0;
  double m_free = 0.0;
  Vec2 pos = Vec2::Zero();
  Vec2 vel = Vec2::Zero();
  Eigen::Matrix2d vel_cov = Eigen::Matrix2d::Zero();
};

/// Determinant floor below which a velocity covariance counts as singular.
inline constexpr double kCovarianceDeterminantFloor = 1e-12;

/// p(O) = 0.5 * m_occ + 0.5 * (1 - m_free).
double occupancy_probability(double m_occ, double m_free);
double occupancy_probability(const CellState& cell);

double cell_speed(const CellState& cell);

/// atan2(v_y, v_x); nullopt for a zero velocity.
std::optional<double> cell_orientation(const CellState& cell);

/// sqrt(v^T P^-1 v). nullopt when det(P) < det_floor: callers treat such a
/// cell as failing every test that needs the distance.
std::optional<double> zero_velocity_mahalanobis(
    const CellState& cell, double det_floor = kCovarianceDeterminantFloor);
std::optional<double> zero_velocity_mahalanobis(
    const CellData& cell, double det_floor = kCovarianceDeterminantFloor);

/// Checks the mass and covariance invariants (masses non-negative, sum at
/// most one, covariance symmetric PSD within `tolerance`).
bool satisfies_cell_invariants(const CellState& cell, double tolerance = 1e-12);

/// Dense row-major grid of cells. The grid spans [-W/2, W/2) x [-H/2, H/2)
/// in its own frame; cell (col, row) has its center at
/// (-W/2 + (col + 0.5) a, -H/2 + (row + 0.5) a). `ego_pose_in_grid` is the
/// pose of the vehicle in that frame.
class DogmaFrame {
 public:
  DogmaFrame(double width_m, double height_m, double cell_size,
             double timestamp, Pose2 ego_pose_in_grid = {});

  double width_m() const { return width_m_; }
  double height_m() const { return height_m_; }
  double cell_size() const { return cell_size_; }
  double timestamp() const { return timestamp_; }
  const Pose2& ego_pose_in_grid() const { return ego_pose_; }
  std::size_t cols() const { return cols_; }
  std::size_t rows() const { return rows_; }
  std::size_t size() const { return cells_.size(); }

  std::size_t index(std::size_t col, std::size_t row) const {
    return row * cols_ + col;
  }
  std::size_t col_of(std::size_t index) const { return index % cols_; }
  std::size_t row_of(std::size_t index) const { return index / cols_; }

  Vec2 cell_center(std::size_t index) const;
  /// Index of the cell containing p, if p lies on the grid.
  std::optional<std::size_t> index_at(const Vec2& p) const;

  const CellData& data(std::size_t index) const { return cells_[index]; }
  CellData& data(std::size_t index) { return cells_[index]; }
  std::span<const CellData> cells() const { return cells_; }
  std::span<CellData> cells() { return cells_; }

  /// Full cell state including the derived position.
  CellState cell(std::size_t index) const;

  friend bool operator==(const DogmaFrame&, const DogmaFrame&) = default;

 private:
  double width_m_;
  double height_m_;
  double cell_size_;
  double timestamp_;
  Pose2 ego_pose_;
  std::size_t cols_;
  std::size_t rows_;
  double origin_x_;
  double origin_y_;
  std::vector<CellData> cells_;
};

CellState to_cell_state(const CellData& data, const Vec2& pos);
CellData to_cell_data(const CellState& cell);

}  // namespace gridfuse
