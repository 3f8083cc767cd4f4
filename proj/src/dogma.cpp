#include "gridfuse/dogma.hpp"

#include "gridfuse/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace gridfuse {

double occupancy_probability(double m_occ, double m_free) {
  return 0.5 * m_occ + 0.5 * (1.0 - m_free);
}

double occupancy_probability(const CellState& cell) {
  return occupancy_probability(cell.m_occ, cell.m_free);
}

double cell_speed(const CellState& cell) {
  return std::hypot(cell.vel.x(), cell.vel.y());
}

std::optional<double> cell_orientation(const CellState& cell) {
  if (cell.vel.x() == 0.0 && cell.vel.y() == 0.0) {
    return std::nullopt;
  }
  return std::atan2(cell.vel.y(), cell.vel.x());
}

namespace {

std::optional<double> mahalanobis(double vx, double vy, double sxx, double sxy,
                                  double syy, double det_floor) {
  const double det = sxx * syy - sxy * sxy;
  if (!(det >= det_floor)) {
    return std::nullopt;
  }
  const double q = (syy * vx * vx - 2.0 * sxy * vx * vy + sxx * vy * vy) / det;
  return std::sqrt(std::max(q, 0.0));
}

}  // namespace

std::optional<double> zero_velocity_mahalanobis(const CellState& cell,
                                                double det_floor) {
  const double sxy = 0.5 * (cell.vel_cov(0, 1) + cell.vel_cov(1, 0));
  return mahalanobis(cell.vel.x(), cell.vel.y(), cell.vel_cov(0, 0), sxy,
                     cell.vel_cov(1, 1), det_floor);
}

std::optional<double> zero_velocity_mahalanobis(const CellData& cell,
                                                double det_floor) {
  return mahalanobis(cell.vx, cell.vy, cell.var_vx, cell.cov_vxvy, cell.var_vy,
                     det_floor);
}

bool satisfies_cell_invariants(const CellState& cell, double tolerance) {
  if (!(cell.m_occ >= 0.0) || !(cell.m_free >= 0.0) ||
      cell.m_occ + cell.m_free > 1.0 + tolerance) {
    return false;
  }
  const Eigen::Matrix2d& p = cell.vel_cov;
  if (!p.allFinite() || std::abs(p(0, 1) - p(1, 0)) > tolerance) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(p);
  return eig.eigenvalues().minCoeff() >= -tolerance;
}

DogmaFrame::DogmaFrame(double width_m, double height_m, double cell_size,
                       double timestamp, Pose2 ego_pose_in_grid)
    : width_m_(width_m),
      height_m_(height_m),
      cell_size_(cell_size),
      timestamp_(timestamp),
      ego_pose_(ego_pose_in_grid) {
  if (!(cell_size > 0.0) || !(width_m > 0.0) || !(height_m > 0.0)) {
    throw InvalidArgument("grid extent and cell size must be positive");
  }
  const double cols = width_m / cell_size;
  const double rows = height_m / cell_size;
  cols_ = static_cast<std::size_t>(std::llround(cols));
  rows_ = static_cast<std::size_t>(std::llround(rows));
  if (std::abs(cols - static_cast<double>(cols_)) > 1e-6 ||
      std::abs(rows - static_cast<double>(rows_)) > 1e-6) {
    throw InvalidArgument("grid extent must be an integral number of cells (" +
                          std::to_string(cols) + " x " + std::to_string(rows) +
                          ")");
  }
  origin_x_ = -0.5 * width_m;
  origin_y_ = -0.5 * height_m;
  cells_.assign(cols_ * rows_, CellData{});
}

Vec2 DogmaFrame::cell_center(std::size_t index) const {
  const auto col = static_cast<double>(col_of(index));
  const auto row = static_cast<double>(row_of(index));
  return {origin_x_ + (col + 0.5) * cell_size_,
          origin_y_ + (row + 0.5) * cell_size_};
}

std::optional<std::size_t> DogmaFrame::index_at(const Vec2& p) const {
  const double fc = std::floor((p.x() - origin_x_) / cell_size_);
  const double fr = std::floor((p.y() - origin_y_) / cell_size_);
  if (fc < 0.0 || fr < 0.0 || fc >= static_cast<double>(cols_) ||
      fr >= static_cast<double>(rows_)) {
    return std::nullopt;
  }
  return index(static_cast<std::size_t>(fc), static_cast<std::size_t>(fr));
}

CellState DogmaFrame::cell(std::size_t index) const {
  return to_cell_state(cells_[index], cell_center(index));
}

CellState to_cell_state(const CellData& d, const Vec2& pos) {
  CellState c;
  c.m_occ = d.m_occ;
  c.m_free = d.m_free;
  c.pos = pos;
  c.vel = {d.vx, d.vy};
  c.vel_cov << d.var_vx, d.cov_vxvy, d.cov_vxvy, d.var_vy;
  return c;
}

CellData to_cell_data(const CellState& c) {
  return {c.m_occ,          c.m_free,
          c.vel.x(),        c.vel.y(),
          c.vel_cov(0, 0),  0.5 * (c.vel_cov(0, 1) + c.vel_cov(1, 0)),
          c.vel_cov(1, 1)};
}

}  // namespace gridfuse
