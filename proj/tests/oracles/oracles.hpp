#pragma once

// Slow, independent reference implementations used as test oracles.

#include "gridfuse/dogma.hpp"
#include "gridfuse/ego_motion.hpp"
#include "gridfuse/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using gridfuse::Vec2;

// Textbook DBSCAN with an O(n^2) neighborhood scan. Seeds in input order;
// a border point belongs to the first cluster that reaches it.
inline std::vector<std::vector<std::size_t>> dbscan(
    const gridfuse::DogmaFrame& frame, const std::vector<std::size_t>& cells,
    double eps_pos, double eps_vel, std::size_t min_pts, double rel_tol) {
  const std::size_t n = cells.size();
  std::vector<std::vector<std::size_t>> nbr(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 pi = frame.cell_center(cells[i]);
    const auto& di = frame.data(cells[i]);
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 pj = frame.cell_center(cells[j]);
      const auto& dj = frame.data(cells[j]);
      const double dp = (pi - pj).squaredNorm();
      const double dv = (di.vx - dj.vx) * (di.vx - dj.vx) + (di.vy - dj.vy) * (di.vy - dj.vy);
      if (dp <= eps_pos * eps_pos * (1 + rel_tol) && dv <= eps_vel * eps_vel * (1 + rel_tol)) {
        nbr[i].push_back(j);
      }
    }
  }
  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    if (nbr[i].size() < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int c = static_cast<int>(clusters.size());
    clusters.emplace_back();
    label[i] = c;
    std::vector<std::size_t> seeds = nbr[i];
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const std::size_t q = seeds[s];
      if (label[q] == kNoise) label[q] = c;
      if (label[q] != kUnvisited) continue;
      label[q] = c;
      if (nbr[q].size() >= min_pts) {
        seeds.insert(seeds.end(), nbr[q].begin(), nbr[q].end());
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] >= 0) clusters[static_cast<std::size_t>(label[i])].push_back(cells[i]);
  }
  for (auto& c : clusters) std::sort(c.begin(), c.end());
  return clusters;
}

struct BruteAssignment {
  std::size_t count = 0;
  double cost = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

// Every partial injection rows -> cols over allowed entries: most pairs,
// then least cost, then lexicographically smallest pair list.
inline BruteAssignment assign(const std::vector<std::vector<double>>& cost,
                              const std::vector<std::vector<bool>>& allowed,
                              double tie_tol = 0.0) {
  const std::size_t rows = cost.size();
  const std::size_t cols = rows ? cost[0].size() : 0;
  BruteAssignment best;
  bool have = false;
  std::vector<std::pair<std::size_t, std::size_t>> cur;
  std::vector<bool> used(cols, false);
  std::function<void(std::size_t, double)> rec = [&](std::size_t r, double acc) {
    if (r == rows) {
      const bool better =
          !have || cur.size() > best.count ||
          (cur.size() == best.count &&
           (acc < best.cost - tie_tol ||
            (std::abs(acc - best.cost) <= tie_tol && cur < best.pairs)));
      if (better) {
        best = {cur.size(), acc, cur};
        have = true;
      }
      return;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[c] || !allowed[r][c]) continue;
      used[c] = true;
      cur.emplace_back(r, c);
      rec(r + 1, acc + cost[r][c]);
      cur.pop_back();
      used[c] = false;
    }
    rec(r + 1, acc);
  };
  rec(0, 0.0);
  return best;
}

// Classic fourth-order Runge-Kutta on the CTRA differential equations.
inline gridfuse::EgoState ctra_rk4(const gridfuse::EgoState& s0, double dt, int steps) {
  using State = Eigen::Matrix<double, 4, 1>;  // x, y, v, phi
  auto f = [&](const State& s) {
    State d;
    d << s[2] * std::cos(s[3]), s[2] * std::sin(s[3]), s0.a, s0.omega;
    return d;
  };
  State s;
  s << s0.x, s0.y, s0.v, s0.phi;
  const double h = dt / steps;
  for (int k = 0; k < steps; ++k) {
    const State k1 = f(s);
    const State k2 = f(s + 0.5 * h * k1);
    const State k3 = f(s + 0.5 * h * k2);
    const State k4 = f(s + h * k3);
    s += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  gridfuse::EgoState out = s0;
  out.x = s[0];
  out.y = s[1];
  out.v = s[2];
  out.phi = gridfuse::normalize_angle(s[3]);
  out.timestamp = s0.timestamp + dt;
  return out;
}

inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Recursive Ramer-Douglas-Peucker; the first farthest point wins ties.
inline void rdp(const std::vector<Vec2>& pts, std::size_t lo, std::size_t hi,
                double eps, std::set<std::size_t>& keep) {
  keep.insert(lo);
  keep.insert(hi);
  double worst = 0.0;
  std::size_t idx = lo;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    const double d = segment_distance(pts[i], pts[lo], pts[hi]);
    if (d > worst) {
      worst = d;
      idx = i;
    }
  }
  if (worst > eps) {
    rdp(pts, lo, idx, eps, keep);
    rdp(pts, idx, hi, eps, keep);
  }
}

inline std::vector<std::size_t> rdp(const std::vector<Vec2>& pts, double eps) {
  std::set<std::size_t> keep;
  rdp(pts, 0, pts.size() - 1, eps, keep);
  return {keep.begin(), keep.end()};
}

// Winding number of the polygon around p (nonzero means inside).
inline int winding_number(const Vec2& p, const std::vector<Vec2>& poly) {
  int wn = 0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    const double cross = (b.x() - a.x()) * (p.y() - a.y()) - (p.x() - a.x()) * (b.y() - a.y());
    if (a.y() <= p.y()) {
      if (b.y() > p.y() && cross > 0) ++wn;
    } else if (b.y() <= p.y() && cross < 0) {
      --wn;
    }
  }
  return wn;
}

// Standard-form Kalman update with an explicit inverse.
inline gridfuse::DynKalmanState kf_textbook(const gridfuse::DynKalmanState& kf,
                                            const gridfuse::ImuSample& z_in, double dt,
                                            const gridfuse::KalmanNoise& noise) {
  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  F(0, 1) = dt;
  Eigen::Matrix3d Q = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) Q(i, i) = noise.process[i] * dt;
  Eigen::Matrix3d R = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) R(i, i) = noise.measurement[i];
  const Eigen::Vector3d x = F * kf.mean;
  const Eigen::Matrix3d P = F * kf.cov * F.transpose() + Q;
  const Eigen::Matrix3d K = P * (P + R).inverse();
  const Eigen::Vector3d z(z_in.speed_meas, z_in.accel_meas, z_in.yawrate_meas);
  gridfuse::DynKalmanState out;
  out.mean = x + K * (z - x);
  out.cov = (Eigen::Matrix3d::Identity() - K) * P;
  return out;
}

}  // namespace oracle
