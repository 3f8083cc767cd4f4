#pragma once

#include "gridfuse/ego_motion.hpp"
#include "gridfuse/geometry.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace gridfuse {

struct Building {
  int id = 0;
  std::vector<Vec2> corners;
};

/// Lane center line sampled at (roughly) equidistant points.
struct Lane {
  int id = 0;
  std::vector<Vec2> points;
};

struct LaneRectangle {
  int id = 0;
  int lane_id = 0;
  Vec2 center = Vec2::Zero();
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  OrientedBox box() const { return {center, heading, length, width}; }
};

enum class MapFrame { global, ego };

struct DigitalMap {
  std::vector<Building> buildings;
  std::vector<Lane> lanes;
  std::vector<LaneRectangle> rectangles;
  MapFrame frame = MapFrame::global;
};

struct MapConfig {
  double max_deviation = 0.3;
  double lane_width = 3.5;
};

/// Indices of the points kept by the recursive end-point fit, always
/// including the first and last point.
std::vector<std::size_t> end_point_fit(const std::vector<Vec2>& points,
                                       double max_deviation);

/// One rectangle per kept chord; ids count up from `first_id`.
std::vector<LaneRectangle> approximate_lane(const Lane& lane,
                                            double max_deviation,
                                            double default_width,
                                            int first_id = 0);

/// Throws InvalidArgument on fewer than three corners or a self-intersecting
/// outline.
void validate_building(const Building& building);
/// Throws InvalidArgument on fewer than two points or spacing outside 20% of
/// the median spacing.
void validate_lane(const Lane& lane);

/// Validates the inputs and derives the rectangles.
DigitalMap build_map(std::vector<Building> buildings, std::vector<Lane> lanes,
                     const MapConfig& cfg = {});

/// Even-odd containment, boundary inclusive. A positive inset additionally
/// requires the point to be at least `inset` from the outline.
bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& polygon,
                      double inset = 0.0);
bool point_in_building(const Vec2& p, const DigitalMap& map,
                       double inset = 0.0);

struct RectangleMatch {
  LaneRectangle rectangle;
  double distance = 0.0;
  double lateral_offset = 0.0;
  /// Angle between object and lane heading folded into [0, pi/2].
  double heading_deviation = 0.0;
};

/// Nearest rectangle by oriented-box distance; ties go to the lower id.
std::optional<RectangleMatch> associate_rectangle(const Vec2& p, double heading,
                                                  const DigitalMap& map,
                                                  double gate = 10.0);

/// Throws FrameMismatch when the map is not in the global frame.
DigitalMap map_to_ego(const DigitalMap& map, const FrameAnchor& anchor);
/// Throws FrameMismatch when the map is not in the ego frame.
DigitalMap map_to_global(const DigitalMap& map, const FrameAnchor& anchor);

}  // namespace gridfuse
