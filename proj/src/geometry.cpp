#include "gridfuse/geometry.hpp"

#include "gridfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridfuse {

double normalize_angle(double angle) {
  if (!std::isfinite(angle)) {
    return angle;
  }
  double a = std::remainder(angle, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) {
    a += 2.0 * kPi;
  }
  return a;
}

double angle_distance(double a, double b) {
  return std::abs(normalize_angle(a - b));
}

Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

Vec2 to_parent(const Pose2& frame, const Vec2& local) {
  return frame.position() + rotate(local, frame.phi);
}

Vec2 to_local(const Pose2& frame, const Vec2& parent) {
  return rotate(parent - frame.position(), -frame.phi);
}

Pose2 compose(const Pose2& frame, const Pose2& local) {
  const Vec2 p = to_parent(frame, local.position());
  return {p.x(), p.y(), normalize_angle(frame.phi + local.phi)};
}

Pose2 relative(const Pose2& frame, const Pose2& pose) {
  const Vec2 p = to_local(frame, pose.position());
  return {p.x(), p.y(), normalize_angle(pose.phi - frame.phi)};
}

std::string_view to_string(RefPoint rp) {
  switch (rp) {
    case RefPoint::b: return "b";
    case RefPoint::bl: return "bl";
    case RefPoint::l: return "l";
    case RefPoint::fl: return "fl";
    case RefPoint::f: return "f";
    case RefPoint::fr: return "fr";
    case RefPoint::r: return "r";
    case RefPoint::br: return "br";
  }
  return "?";
}

std::optional<RefPoint> ref_point_from_string(std::string_view name) {
  for (RefPoint rp : kAllRefPoints) {
    if (to_string(rp) == name) {
      return rp;
    }
  }
  return std::nullopt;
}

Vec2 ref_point_offset(RefPoint rp) {
  switch (rp) {
    case RefPoint::b: return {-1.0, 0.0};
    case RefPoint::bl: return {-1.0, 1.0};
    case RefPoint::l: return {0.0, 1.0};
    case RefPoint::fl: return {1.0, 1.0};
    case RefPoint::f: return {1.0, 0.0};
    case RefPoint::fr: return {1.0, -1.0};
    case RefPoint::r: return {0.0, -1.0};
    case RefPoint::br: return {-1.0, -1.0};
  }
  return {0.0, 0.0};
}

Vec2 OrientedBox::point(RefPoint rp) const {
  const Vec2 o = ref_point_offset(rp);
  return center + rotate({o.x() * 0.5 * length, o.y() * 0.5 * width}, heading);
}

BoxCorners OrientedBox::corners() const {
  return {point(RefPoint::bl), point(RefPoint::fl), point(RefPoint::fr),
          point(RefPoint::br)};
}

double OrientedBox::distance(const Vec2& p) const {
  const Vec2 local = rotate(p - center, -heading);
  const double dx = std::max(std::abs(local.x()) - 0.5 * length, 0.0);
  const double dy = std::max(std::abs(local.y()) - 0.5 * width, 0.0);
  return std::hypot(dx, dy);
}

bool OrientedBox::contains(const Vec2& p, double tolerance) const {
  const Vec2 local = rotate(p - center, -heading);
  return std::abs(local.x()) <= 0.5 * length + tolerance &&
         std::abs(local.y()) <= 0.5 * width + tolerance;
}

OrientedBox OrientedBox::from_corners(const BoxCorners& c) {
  const Vec2 side_len = c[1] - c[0];   // bl -> fl
  const Vec2 side_wid = c[0] - c[3];   // br -> bl
  const Vec2 opp_len = c[2] - c[3];    // br -> fr
  const Vec2 opp_wid = c[1] - c[2];    // fr -> fl
  const double length = side_len.norm();
  const double width = side_wid.norm();
  if (!(length > 0.0) || !(width > 0.0)) {
    throw InvalidArgument("bounding box has a degenerate side");
  }
  const double cos_angle = side_len.dot(side_wid) / (length * width);
  if (std::abs(std::asin(std::clamp(cos_angle, -1.0, 1.0))) > 1e-6) {
    throw InvalidArgument("bounding box corners are not orthogonal");
  }
  const double scale = std::max(length, width);
  if ((opp_len - side_len).norm() > 1e-6 * scale ||
      (opp_wid - side_wid).norm() > 1e-6 * scale) {
    throw InvalidArgument("bounding box corners do not form a rectangle");
  }
  OrientedBox box;
  box.center = 0.25 * (c[0] + c[1] + c[2] + c[3]);
  box.heading = std::atan2(side_len.y(), side_len.x());
  box.length = length;
  box.width = width;
  return box;
}

OrientedBox OrientedBox::from_reference(const Vec2& position, RefPoint rp,
                                        double heading, double length,
                                        double width) {
  const Vec2 o = ref_point_offset(rp);
  OrientedBox box;
  box.heading = normalize_angle(heading);
  box.length = length;
  box.width = width;
  box.center =
      position - rotate({o.x() * 0.5 * length, o.y() * 0.5 * width}, heading);
  return box;
}

RefPoint nearest_ref_point(const OrientedBox& box, const Vec2& origin) {
  RefPoint best = RefPoint::b;
  double best_d = std::numeric_limits<double>::infinity();
  for (RefPoint rp : kAllRefPoints) {
    const double d = (box.point(rp) - origin).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = rp;
    }
  }
  return best;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) {
    return (p - a).norm();
  }
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

bool on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
         std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c,
                        const Vec2& d) {
  const int d1 = sign(cross(c, d, a));
  const int d2 = sign(cross(c, d, b));
  const int d3 = sign(cross(a, b, c));
  const int d4 = sign(cross(a, b, d));
  if (d1 * d2 < 0 && d3 * d4 < 0) {
    return true;
  }
  return (d1 == 0 && on_segment(a, c, d)) || (d2 == 0 && on_segment(b, c, d)) ||
         (d3 == 0 && on_segment(c, a, b)) || (d4 == 0 && on_segment(d, a, b));
}

}  // namespace gridfuse
