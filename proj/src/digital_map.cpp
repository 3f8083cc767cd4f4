#include "gridfuse/digital_map.hpp"

#include "gridfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace gridfuse {

std::vector<std::size_t> end_point_fit(const std::vector<Vec2>& points,
                                       double max_deviation) {
  if (points.size() < 2) {
    throw InvalidArgument("end_point_fit: need at least two points");
  }
  if (!(max_deviation > 0.0)) {
    throw InvalidArgument("end_point_fit: max_deviation must be positive");
  }
  std::vector<bool> keep(points.size(), false);
  keep.front() = true;
  keep.back() = true;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, points.size() - 1}};
  while (!stack.empty()) {
    const auto [lo, hi] = stack.back();
    stack.pop_back();
    double worst = 0.0;
    std::size_t worst_i = lo;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const double d = point_segment_distance(points[i], points[lo], points[hi]);
      if (d > worst) {
        worst = d;
        worst_i = i;
      }
    }
    if (worst > max_deviation) {
      keep[worst_i] = true;
      stack.emplace_back(worst_i, hi);
      stack.emplace_back(lo, worst_i);
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) out.push_back(i);
  }
  return out;
}

std::vector<LaneRectangle> approximate_lane(const Lane& lane,
                                            double max_deviation,
                                            double default_width,
                                            int first_id) {
  if (lane.points.size() < 2) {
    throw InvalidArgument("lane " + std::to_string(lane.id) +
                          " has fewer than two points");
  }
  const auto kept = end_point_fit(lane.points, max_deviation);
  std::vector<LaneRectangle> out;
  int id = first_id;
  for (std::size_t k = 0; k + 1 < kept.size(); ++k) {
    const Vec2& a = lane.points[kept[k]];
    const Vec2& b = lane.points[kept[k + 1]];
    const Vec2 d = b - a;
    if (d.norm() == 0.0) continue;
    LaneRectangle r;
    r.id = id++;
    r.lane_id = lane.id;
    r.center = 0.5 * (a + b);
    r.heading = std::atan2(d.y(), d.x());
    r.length = d.norm();
    r.width = default_width;
    out.push_back(r);
  }
  return out;
}

void validate_building(const Building& building) {
  const auto& c = building.corners;
  const std::size_t n = c.size();
  if (n < 3) {
    throw InvalidArgument("building " + std::to_string(building.id) +
                          " has fewer than three corners");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(c[i], c[(i + 1) % n], c[j], c[(j + 1) % n])) {
        throw InvalidArgument("building " + std::to_string(building.id) +
                              " is self-intersecting");
      }
    }
  }
}

void validate_lane(const Lane& lane) {
  if (lane.points.size() < 2) {
    throw InvalidArgument("lane " + std::to_string(lane.id) +
                          " has fewer than two points");
  }
  std::vector<double> spacing;
  for (std::size_t i = 0; i + 1 < lane.points.size(); ++i) {
    spacing.push_back((lane.points[i + 1] - lane.points[i]).norm());
  }
  std::vector<double> sorted = spacing;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                   sorted.end());
  double median = sorted[sorted.size() / 2];
  if (sorted.size() % 2 == 0) {
    const double lower =
        *std::max_element(sorted.begin(), sorted.begin() + sorted.size() / 2);
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) {
    throw InvalidArgument("lane " + std::to_string(lane.id) +
                          " has zero point spacing");
  }
  for (double s : spacing) {
    if (std::abs(s - median) > 0.2 * median + 1e-9) {
      throw InvalidArgument("lane " + std::to_string(lane.id) +
                            " is not equidistant");
    }
  }
}

DigitalMap build_map(std::vector<Building> buildings, std::vector<Lane> lanes,
                     const MapConfig& cfg) {
  DigitalMap map;
  for (const auto& b : buildings) validate_building(b);
  for (const auto& l : lanes) validate_lane(l);
  map.buildings = std::move(buildings);
  map.lanes = std::move(lanes);
  for (const auto& l : map.lanes) {
    auto rects = approximate_lane(l, cfg.max_deviation, cfg.lane_width,
                                  static_cast<int>(map.rectangles.size()));
    map.rectangles.insert(map.rectangles.end(), rects.begin(), rects.end());
  }
  return map;
}

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& polygon,
                      double inset) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  double boundary = std::numeric_limits<double>::infinity();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[j];
    boundary = std::min(boundary, point_segment_distance(p, a, b));
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  if (inset > 0.0) return inside && boundary >= inset;
  return inside || boundary <= 1e-12;
}

bool point_in_building(const Vec2& p, const DigitalMap& map, double inset) {
  return std::any_of(map.buildings.begin(), map.buildings.end(),
                     [&](const Building& b) {
                       return point_in_polygon(p, b.corners, inset);
                     });
}

std::optional<RectangleMatch> associate_rectangle(const Vec2& p, double heading,
                                                  const DigitalMap& map,
                                                  double gate) {
  std::optional<RectangleMatch> best;
  for (const auto& r : map.rectangles) {
    const double d = r.box().distance(p);
    if (d > gate) continue;
    if (!best || d < best->distance ||
        (d == best->distance && r.id < best->rectangle.id)) {
      best = RectangleMatch{r, d, 0.0, 0.0};
    }
  }
  if (best) {
    const LaneRectangle& r = best->rectangle;
    best->lateral_offset = std::abs(to_local({r.center.x(), r.center.y(), r.heading}, p).y());
    const double dev = angle_distance(heading, r.heading);
    best->heading_deviation = dev > kPi / 2 ? kPi - dev : dev;
  }
  return best;
}

namespace {

template <typename PointFn, typename HeadingFn>
DigitalMap transform_map(const DigitalMap& map, MapFrame target, PointFn point,
                         HeadingFn heading) {
  DigitalMap out = map;
  out.frame = target;
  for (auto& b : out.buildings) {
    for (auto& c : b.corners) c = point(c);
  }
  for (auto& l : out.lanes) {
    for (auto& q : l.points) q = point(q);
  }
  for (auto& r : out.rectangles) {
    r.center = point(r.center);
    r.heading = heading(r.heading);
  }
  return out;
}

}  // namespace

DigitalMap map_to_ego(const DigitalMap& map, const FrameAnchor& anchor) {
  if (map.frame != MapFrame::global) {
    throw FrameMismatch("map_to_ego: map is not in the global frame");
  }
  return transform_map(
      map, MapFrame::ego,
      [&](const Vec2& q) {
        return global_to_ego({q.x(), q.y(), 0.0}, anchor).position();
      },
      [&](double h) { return global_to_ego({0.0, 0.0, h}, anchor).phi; });
}

DigitalMap map_to_global(const DigitalMap& map, const FrameAnchor& anchor) {
  if (map.frame != MapFrame::ego) {
    throw FrameMismatch("map_to_global: map is not in the ego frame");
  }
  return transform_map(
      map, MapFrame::global,
      [&](const Vec2& q) {
        const GlobalPose g = ego_to_global({q.x(), q.y(), 0.0}, anchor);
        return Vec2(g.utm_e, g.utm_n);
      },
      [&](double h) { return ego_to_global({0.0, 0.0, h}, anchor).phi; });
}

}  // namespace gridfuse
