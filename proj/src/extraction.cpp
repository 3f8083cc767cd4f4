#include "gridfuse/extraction.hpp"

#include "gridfuse/assignment.hpp"
#include "gridfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridfuse {

std::vector<std::size_t> build_search_mask(const DogmaFrame& frame,
                                           const ExtractionConfig& cfg) {
  std::vector<std::size_t> out;
  const auto cells = frame.cells();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].m_occ > cfg.eps_m_occ) out.push_back(i);
  }
  return out;
}

namespace {

// Mask cells bucketed on a uniform grid with bucket size eps_pos. Buckets are
// stored contiguously (counting sort) with positions and velocities inline.
class NeighborIndex {
 public:
  NeighborIndex(const DogmaFrame& frame, const std::vector<std::size_t>& mask,
                const ExtractionConfig& cfg)
      : n_(mask.size()),
        eps_p2_(cfg.eps_pos * cfg.eps_pos * (1.0 + kNeighborTolerance)),
        eps_v2_(cfg.eps_vel * cfg.eps_vel * (1.0 + kNeighborTolerance)) {
    bucket_ = std::max(cfg.eps_pos, frame.cell_size());
    x0_ = -0.5 * frame.width_m();
    y0_ = -0.5 * frame.height_m();
    bx_ = static_cast<long>(std::ceil(frame.width_m() / bucket_)) + 1;
    by_ = static_cast<long>(std::ceil(frame.height_m() / bucket_)) + 1;

    pts_.resize(n_);
    std::vector<std::size_t> key(n_);
    start_.assign(static_cast<std::size_t>(bx_ * by_) + 1, 0);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i = mask[k];
      const Vec2 c = frame.cell_center(i);
      const CellData& d = frame.data(i);
      pts_[k] = {c.x(), c.y(), d.vx, d.vy};
      key[k] = bucket_of(c.x(), c.y());
      ++start_[key[k] + 1];
    }
    for (std::size_t b = 1; b < start_.size(); ++b) start_[b] += start_[b - 1];
    order_.resize(n_);
    packed_.resize(n_);
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t slot = fill[key[k]]++;
      order_[slot] = k;
      packed_[slot] = pts_[k];
    }
  }

  // Appends neighbors of mask position k (itself included) to out.
  void query(std::size_t k, std::vector<std::size_t>& out) const {
    out.clear();
    const Pt& p = pts_[k];
    const long cx = coord(p.x, x0_);
    const long cy = coord(p.y, y0_);
    for (long yy = std::max(0L, cy - 1); yy <= std::min(by_ - 1, cy + 1); ++yy) {
      for (long xx = std::max(0L, cx - 1); xx <= std::min(bx_ - 1, cx + 1);
           ++xx) {
        const std::size_t b = static_cast<std::size_t>(yy * bx_ + xx);
        for (std::size_t s = start_[b]; s < start_[b + 1]; ++s) {
          const Pt& q = packed_[s];
          const double dx = q.x - p.x;
          const double dy = q.y - p.y;
          if (dx * dx + dy * dy > eps_p2_) continue;
          const double dvx = q.vx - p.vx;
          const double dvy = q.vy - p.vy;
          if (dvx * dvx + dvy * dvy > eps_v2_) continue;
          out.push_back(order_[s]);
        }
      }
    }
  }

 private:
  struct Pt {
    double x, y, vx, vy;
  };

  long coord(double v, double v0) const {
    return static_cast<long>(std::floor((v - v0) / bucket_));
  }
  std::size_t bucket_of(double x, double y) const {
    const long cx = std::clamp(coord(x, x0_), 0L, bx_ - 1);
    const long cy = std::clamp(coord(y, y0_), 0L, by_ - 1);
    return static_cast<std::size_t>(cy * bx_ + cx);
  }

  std::size_t n_;
  double eps_p2_;
  double eps_v2_;
  double bucket_ = 1.0;
  double x0_ = 0.0;
  double y0_ = 0.0;
  long bx_ = 1;
  long by_ = 1;
  std::vector<Pt> pts_;
  std::vector<Pt> packed_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> start_;
};

}  // namespace

std::vector<CellCluster> cluster_cells(const DogmaFrame& frame,
                                       const std::vector<std::size_t>& mask,
                                       const ExtractionConfig& cfg) {
  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  const NeighborIndex index(frame, mask, cfg);
  std::vector<int> owner(mask.size(), kUnvisited);
  std::vector<CellCluster> clusters;
  std::vector<std::size_t> nbrs;
  std::vector<std::size_t> frontier;

  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (owner[k] != kUnvisited) continue;
    index.query(k, nbrs);
    if (nbrs.size() < cfg.min_cluster_cells) {
      owner[k] = kNoise;
      continue;
    }
    const int id = static_cast<int>(clusters.size());
    clusters.emplace_back();
    owner[k] = id;
    std::vector<std::size_t> members{k};
    frontier.assign(nbrs.begin(), nbrs.end());
    while (!frontier.empty()) {
      const std::size_t q = frontier.back();
      frontier.pop_back();
      if (owner[q] == kNoise) {
        owner[q] = id;
        members.push_back(q);
        continue;
      }
      if (owner[q] != kUnvisited) continue;
      owner[q] = id;
      members.push_back(q);
      index.query(q, nbrs);
      if (nbrs.size() >= cfg.min_cluster_cells) {
        for (std::size_t r : nbrs) {
          if (owner[r] < 0) frontier.push_back(r);
        }
      }
    }
    auto& out = clusters.back().member_indices;
    out.reserve(members.size());
    for (std::size_t m : members) out.push_back(mask[m]);
    std::sort(out.begin(), out.end());
  }
  return clusters;
}

std::vector<std::size_t> build_validation_mask(
    const DogmaFrame& frame, const std::vector<std::size_t>& mask,
    const ExtractionConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t i : mask) {
    const CellData& c = frame.data(i);
    if (occupancy_probability(c.m_occ, c.m_free) < cfg.eps_p_occ) continue;
    if (std::hypot(c.vx, c.vy) < cfg.eps_v_c) continue;
    if (c.var_vx > cfg.eps_var_vx || c.var_vy > cfg.eps_var_vy) continue;
    const auto d0 = zero_velocity_mahalanobis(c, cfg.det_floor);
    if (!d0 || *d0 < cfg.eps_d0) continue;
    out.push_back(i);
  }
  return out;
}

std::vector<CellCluster> validate_clusters(
    std::vector<CellCluster> clusters,
    const std::vector<std::size_t>& validation_mask,
    const ExtractionConfig& cfg) {
  std::vector<CellCluster> kept;
  for (auto& c : clusters) {
    if (c.member_indices.empty()) continue;
    std::size_t n = 0;
    for (std::size_t i : c.member_indices) {
      n += std::binary_search(validation_mask.begin(), validation_mask.end(), i)
               ? 1
               : 0;
    }
    c.validated_count = n;
    const double ratio =
        static_cast<double>(n) / static_cast<double>(c.member_indices.size());
    if (ratio >= cfg.eps_ratio) kept.push_back(std::move(c));
  }
  return kept;
}

std::vector<GridObject> create_objects(const std::vector<CellCluster>& clusters,
                                       const DogmaFrame& frame) {
  std::vector<GridObject> out;
  const Vec2 ego = frame.ego_pose_in_grid().position();
  const double half = 0.5 * frame.cell_size();
  for (const auto& cluster : clusters) {
    if (cluster.member_indices.empty()) continue;
    double sx = 0.0;
    double sy = 0.0;
    double speed_sum = 0.0;
    for (std::size_t i : cluster.member_indices) {
      const CellData& d = frame.data(i);
      const double s = std::hypot(d.vx, d.vy);
      speed_sum += s;
      if (s > 0.0) {
        sx += d.vx / s;
        sy += d.vy / s;
      }
    }
    if (sx == 0.0 && sy == 0.0) continue;
    const double heading = std::atan2(sy, sx);
    const Vec2 ax(std::cos(heading), std::sin(heading));
    const Vec2 ay(-ax.y(), ax.x());
    double lo_x = std::numeric_limits<double>::infinity();
    double hi_x = -lo_x;
    double lo_y = lo_x;
    double hi_y = -lo_x;
    for (std::size_t i : cluster.member_indices) {
      const Vec2 c = frame.cell_center(i);
      const double px = c.dot(ax);
      const double py = c.dot(ay);
      lo_x = std::min(lo_x, px);
      hi_x = std::max(hi_x, px);
      lo_y = std::min(lo_y, py);
      hi_y = std::max(hi_y, py);
    }
    lo_x -= half;
    hi_x += half;
    lo_y -= half;
    hi_y += half;

    GridObject obj;
    obj.orientation = heading;
    obj.speed = speed_sum / static_cast<double>(cluster.member_indices.size());
    obj.bbox.center = 0.5 * (lo_x + hi_x) * ax + 0.5 * (lo_y + hi_y) * ay;
    obj.bbox.heading = heading;
    obj.bbox.length = hi_x - lo_x;
    obj.bbox.width = hi_y - lo_y;
    obj.ref_label = nearest_ref_point(obj.bbox, ego);
    obj.ref_pos = obj.bbox.point(obj.ref_label);
    obj.timestamp = frame.timestamp();
    obj.cell_count = cluster.member_indices.size();
    out.push_back(obj);
  }
  return out;
}

GridObject predict_cv(const GridObject& obj, double dt) {
  GridObject out = obj;
  const Vec2 step =
      obj.speed * dt * Vec2(std::cos(obj.orientation), std::sin(obj.orientation));
  out.ref_pos += step;
  out.bbox.center += step;
  out.timestamp += dt;
  return out;
}

std::vector<GridObject> assign_labels(std::vector<GridObject> current,
                                      const std::vector<GridObject>& previous,
                                      double dt, const ExtractionConfig& cfg,
                                      Label& next_label) {
  if (!(dt >= 0.0)) throw InvalidArgument("assign_labels: dt must be >= 0");
  std::vector<GridObject> predicted;
  predicted.reserve(previous.size());
  for (const auto& p : previous) predicted.push_back(predict_cv(p, dt));

  CostMatrix m(current.size(), predicted.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    for (std::size_t j = 0; j < predicted.size(); ++j) {
      // Compare like with like: the predicted box at the current label.
      const Vec2 ref = predicted[j].ref_label == current[i].ref_label
                           ? predicted[j].ref_pos
                           : predicted[j].bbox.point(current[i].ref_label);
      const double d = (current[i].ref_pos - ref).norm();
      if (d > cfg.cv_gate) {
        m.forbid(i, j);
      } else {
        m.at(i, j) = d;
      }
    }
  }
  std::vector<bool> matched(current.size(), false);
  for (const auto& [i, j] : hungarian_assign(m).pairs) {
    current[i].label = predicted[j].label;
    matched[i] = true;
  }
  for (std::size_t i = 0; i < current.size(); ++i) {
    if (!matched[i]) current[i].label = next_label++;
  }
  return current;
}

std::vector<GridObject> extract(const DogmaFrame& frame,
                                const std::vector<GridObject>& previous,
                                const ExtractionConfig& cfg,
                                Label& next_label) {
  const auto search = build_search_mask(frame, cfg);
  auto clusters = cluster_cells(frame, search, cfg);
  const auto valid = build_validation_mask(frame, search, cfg);
  clusters = validate_clusters(std::move(clusters), valid, cfg);
  auto objects = create_objects(clusters, frame);
  const double dt =
      previous.empty()
          ? 0.0
          : std::max(0.0, frame.timestamp() - previous.front().timestamp);
  return assign_labels(std::move(objects), previous, dt, cfg, next_label);
}

GridObject transform_object(const GridObject& obj, const Pose2& pose) {
  GridObject out = obj;
  out.ref_pos = to_parent(pose, obj.ref_pos);
  out.bbox.center = to_parent(pose, obj.bbox.center);
  out.bbox.heading = normalize_angle(obj.bbox.heading + pose.phi);
  out.orientation = normalize_angle(obj.orientation + pose.phi);
  return out;
}

GridExtractor::GridExtractor(ExtractionConfig cfg, Label first_label)
    : cfg_(cfg), next_label_(first_label) {}

std::vector<GridObject> GridExtractor::process(const DogmaFrame& frame,
                                               const Pose2& grid_pose) {
  const auto search = build_search_mask(frame, cfg_);
  auto clusters = cluster_cells(frame, search, cfg_);
  const auto valid = build_validation_mask(frame, search, cfg_);
  clusters = validate_clusters(std::move(clusters), valid, cfg_);
  auto objects = create_objects(clusters, frame);
  for (auto& o : objects) o = transform_object(o, grid_pose);
  const double dt =
      previous_.empty()
          ? 0.0
          : std::max(0.0, frame.timestamp() - previous_.front().timestamp);
  previous_ = assign_labels(std::move(objects), previous_, dt, cfg_, next_label_);
  return previous_;
}

}  // namespace gridfuse
