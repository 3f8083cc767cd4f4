#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace gridfuse {

using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
double normalize_angle(double angle);

/// Smallest absolute difference between two angles, in [0, pi].
double angle_distance(double a, double b);

Vec2 rotate(const Vec2& v, double angle);

/// Planar pose: position plus heading (rad).
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;

  Vec2 position() const { return {x, y}; }

  friend bool operator==(const Pose2&, const Pose2&) = default;
};

/// Expresses `local` (given in the frame of `frame`) in the parent frame.
Pose2 compose(const Pose2& frame, const Pose2& local);
/// Expresses a parent-frame pose in the frame of `frame`.
Pose2 relative(const Pose2& frame, const Pose2& pose);
Vec2 to_parent(const Pose2& frame, const Vec2& local);
Vec2 to_local(const Pose2& frame, const Vec2& parent);

/// Bounding-box anchor labels: back, back left, left, front left, front,
/// front right, right, back right.
enum class RefPoint : std::uint8_t { b, bl, l, fl, f, fr, r, br };

inline constexpr std::array<RefPoint, 8> kAllRefPoints{
    RefPoint::b, RefPoint::bl, RefPoint::l, RefPoint::fl,
    RefPoint::f, RefPoint::fr, RefPoint::r, RefPoint::br};

std::string_view to_string(RefPoint rp);
std::optional<RefPoint> ref_point_from_string(std::string_view name);

/// Offset of a reference point from the box center in units of
/// (length / 2, width / 2); x points forward, y to the left.
Vec2 ref_point_offset(RefPoint rp);

using BoxCorners = std::array<Vec2, 4>;

/// Oriented rectangle. Corner order is [back-left, front-left, front-right,
/// back-right].
struct OrientedBox {
  Vec2 center = Vec2::Zero();
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  BoxCorners corners() const;
  Vec2 point(RefPoint rp) const;
  /// Euclidean distance from p to the box (0 inside).
  double distance(const Vec2& p) const;
  bool contains(const Vec2& p, double tolerance = 0.0) const;

  /// Rebuilds a box from four corners; throws InvalidArgument when they do
  /// not form a rectangle (orthogonality within 1e-6 rad, opposite sides
  /// equal within 1e-6 relative).
  static OrientedBox from_corners(const BoxCorners& corners);
  /// Box whose reference point `rp` sits at `position`.
  static OrientedBox from_reference(const Vec2& position, RefPoint rp,
                                    double heading, double length,
                                    double width);
};

/// Reference point of `box` closest to `origin`; ties keep the earlier label
/// in kAllRefPoints order.
RefPoint nearest_ref_point(const OrientedBox& box, const Vec2& origin);

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

/// True when the closed segments [a,b] and [c,d] share a point.
bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c,
                        const Vec2& d);

}  // namespace gridfuse
