#include "gridfuse/scenario.hpp"

#include "gridfuse/error.hpp"
#include "gridfuse/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace gridfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDeg = kPi / 180.0;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t tick) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(tick),
                    static_cast<std::uint32_t>(tick >> 32)};
  return std::mt19937_64(seq);
}

std::uint64_t time_tick(double t) {
  return static_cast<std::uint64_t>(std::llround(std::max(0.0, t) * 1e6));
}

}  // namespace

EgoState Trajectory::at(double t) const {
  EgoState s = start;
  double t0 = start.timestamp;
  const double target = std::max(t, t0);
  for (const auto& seg : segments) {
    s.a = seg.a;
    s.omega = seg.omega;
    if (target <= t0 + seg.duration) return ctra_predict(s, target - t0);
    s = ctra_predict(s, seg.duration);
    t0 += seg.duration;
  }
  s.a = 0.0;
  s.omega = 0.0;
  return ctra_predict(s, target - t0);
}

OrientedBox GroundTruthObject::box(double t) const {
  const EgoState s = trajectory.at(t);
  return {{s.x, s.y}, s.phi, length, width};
}

OrientedBox GhostInjector::box(double t) const {
  const EgoState s = trajectory.at(t);
  return {{s.x, s.y}, s.phi, length, width};
}

std::string_view to_string(TruthKind k) {
  switch (k) {
    case TruthKind::real: return "real";
    case TruthKind::ghost: return "ghost";
    case TruthKind::false_track: return "false_track";
  }
  return "real";
}

// ---------------------------------------------------------------- parsing

namespace {

Trajectory trajectory_from_json(const json& j, double t0) {
  Trajectory tr;
  tr.start.x = j.value("x", 0.0);
  tr.start.y = j.value("y", 0.0);
  tr.start.phi = normalize_angle(j.value("phi_deg", 0.0) * kDeg);
  tr.start.v = j.value("v", 0.0);
  tr.start.timestamp = t0;
  for (const auto& s : j.value("segments", json::array())) {
    CtraSegment seg;
    seg.duration = s.at("duration").get<double>();
    seg.a = s.value("a", 0.0);
    seg.omega = s.value("omega_deg", 0.0) * kDeg;
    if (!(seg.duration >= 0.0)) throw ScenarioError("segment duration must be >= 0");
    tr.segments.push_back(seg);
  }
  // Speeds must stay non-negative at every segment boundary.
  EgoState s = tr.start;
  for (const auto& seg : tr.segments) {
    s.a = seg.a;
    s.omega = seg.omega;
    s = ctra_predict(s, seg.duration);
    if (s.v < -1e-9) throw ScenarioError("trajectory speed becomes negative");
  }
  return tr;
}

ObjectClass class_from_json(const json& j, ObjectClass fallback) {
  if (!j.contains("class")) return fallback;
  const auto c = object_class_from_string(j.at("class").get<std::string>());
  if (!c) throw ScenarioError("unknown object class " + j.at("class").dump());
  return *c;
}

FieldOfView fov_from_json(const json& j) {
  FieldOfView fov;
  for (const auto& s : j) {
    fov.sectors.push_back({s.value("center_deg", 0.0) * kDeg,
                           s.at("half_angle_deg").get<double>() * kDeg,
                           s.at("max_range").get<double>()});
  }
  return fov;
}

OrientedBox box_spec(const json& j) {
  return {{j.at("x").get<double>(), j.at("y").get<double>()},
          normalize_angle(j.value("phi_deg", 0.0) * kDeg),
          j.at("length").get<double>(), j.at("width").get<double>()};
}

}  // namespace

ScenarioSpec scenario_from_json(const json& j, const std::string& base_dir) {
  try {
    ScenarioSpec s;
    s.name = j.value("name", "scenario");
    s.duration = j.at("duration").get<double>();
    s.seed = j.value("seed", std::uint64_t{1});
    if (!(s.duration > 0.0)) throw ScenarioError("duration must be positive");
    if (j.contains("map") && !j.at("map").is_null()) {
      fs::path p = j.at("map").get<std::string>();
      if (p.is_relative()) p = fs::path(base_dir) / p;
      s.map_path = p.lexically_normal().string();
    }
    if (j.contains("anchor")) {
      const auto& a = j.at("anchor");
      s.anchor = {a.at("utm_e").get<double>(), a.at("utm_n").get<double>(),
                  normalize_angle(a.value("phi_deg", 0.0) * kDeg)};
    }
    const json ego = j.value("ego", json::object());
    s.ego = trajectory_from_json(ego, 0.0);
    // The ego defines the origin of the ego-stationary frame.
    s.ego.start.x = s.ego.start.y = s.ego.start.phi = 0.0;

    const json g = j.value("grid", json::object());
    auto& gc = s.grid;
    gc.width_m = g.value("width_m", gc.width_m);
    gc.height_m = g.value("height_m", gc.height_m);
    gc.cell_size = g.value("cell_size", gc.cell_size);
    gc.period = g.value("period", gc.period);
    gc.object_m_occ = g.value("object_m_occ", gc.object_m_occ);
    gc.object_m_occ_sigma = g.value("object_m_occ_sigma", gc.object_m_occ_sigma);
    gc.object_vel_sigma = g.value("object_vel_sigma", gc.object_vel_sigma);
    gc.object_vel_var = g.value("object_vel_var", gc.object_vel_var);
    gc.static_m_occ_lo = g.value("static_m_occ_lo", gc.static_m_occ_lo);
    gc.static_m_occ_hi = g.value("static_m_occ_hi", gc.static_m_occ_hi);
    gc.static_vel_sigma = g.value("static_vel_sigma", gc.static_vel_sigma);
    gc.static_var_lo = g.value("static_var_lo", gc.static_var_lo);
    gc.static_var_hi = g.value("static_var_hi", gc.static_var_hi);
    gc.free_m_free = g.value("free_m_free", gc.free_m_free);
    gc.facade_band = g.value("facade_band", gc.facade_band);
    gc.occlusion = g.value("occlusion", gc.occlusion);
    if (g.contains("coverage")) gc.coverage = fov_from_json(g.at("coverage"));
    if (!(gc.period > 0.0)) throw ScenarioError("grid period must be positive");

    const json t = j.value("tracker", json::object());
    auto& tc = s.tracker;
    tc.period = t.value("period", tc.period);
    tc.p_detect = t.value("p_detect", tc.p_detect);
    tc.sigma_pos = t.value("sigma_pos", tc.sigma_pos);
    tc.sigma_v = t.value("sigma_v", tc.sigma_v);
    tc.sigma_phi = t.value("sigma_phi_deg", tc.sigma_phi / kDeg) * kDeg;
    tc.rho = t.value("rho", tc.rho);
    tc.existence_lo = t.value("existence_lo", tc.existence_lo);
    tc.existence_hi = t.value("existence_hi", tc.existence_hi);
    tc.q_pos = t.value("q_pos", tc.q_pos);
    tc.q_v = t.value("q_v", tc.q_v);
    tc.q_phi = t.value("q_phi", tc.q_phi);
    tc.drop_existence = t.value("drop_existence", tc.drop_existence);
    tc.first_label = t.value("first_label", tc.first_label);
    if (t.contains("fov")) tc.fov = fov_from_json(t.at("fov"));
    if (!(tc.period > 0.0)) throw ScenarioError("tracker period must be positive");
    if (tc.p_detect < 0.0 || tc.p_detect > 1.0) {
      throw ScenarioError("tracker p_detect must lie in [0, 1]");
    }

    const json imu = j.value("imu", json::object());
    s.imu.rate = imu.value("rate", s.imu.rate);
    s.imu.accel_sigma = imu.value("accel_sigma", s.imu.accel_sigma);
    s.imu.yawrate_sigma = imu.value("yawrate_sigma", s.imu.yawrate_sigma);
    s.imu.speed_sigma = imu.value("speed_sigma", s.imu.speed_sigma);

    for (const auto& o : j.value("objects", json::array())) {
      GroundTruthObject g_obj;
      g_obj.id = o.at("id").get<int>();
      g_obj.cls = class_from_json(o, ObjectClass::car);
      g_obj.length = o.value("length", g_obj.length);
      g_obj.width = o.value("width", g_obj.width);
      g_obj.t_start = o.value("t_start", 0.0);
      g_obj.t_end = o.value("t_end", 1e9);
      g_obj.tracked = o.value("tracked", true);
      g_obj.occluder = o.value("occluder", false);
      g_obj.trajectory = trajectory_from_json(o, g_obj.t_start);
      if (!(g_obj.length > 0.0 && g_obj.width > 0.0)) {
        throw ScenarioError("object extents must be positive");
      }
      s.objects.push_back(std::move(g_obj));
    }
    for (const auto& o : j.value("statics", json::array())) {
      s.statics.push_back({o.at("id").get<int>(), box_spec(o), o.value("occluder", false)});
    }
    const json inj = j.value("injectors", json::object());
    for (const auto& o : inj.value("false_tracks", json::array())) {
      FalseTrackInjector f;
      f.label = o.at("label").get<Label>();
      f.t_start = o.value("t_start", 0.0);
      f.t_end = o.value("t_end", 1e9);
      f.length = o.value("length", f.length);
      f.width = o.value("width", f.width);
      f.cls = class_from_json(o, ObjectClass::car);
      f.existence = o.value("existence", f.existence);
      f.trajectory = trajectory_from_json(o, f.t_start);
      s.false_tracks.push_back(std::move(f));
    }
    for (const auto& o : inj.value("grid_ghosts", json::array())) {
      GhostInjector gh;
      gh.id = o.at("id").get<int>();
      gh.t_start = o.value("t_start", 0.0);
      gh.t_end = o.value("t_end", 1e9);
      gh.length = o.value("length", gh.length);
      gh.width = o.value("width", gh.width);
      gh.trajectory = trajectory_from_json(o, gh.t_start);
      s.ghosts.push_back(std::move(gh));
    }
    return s;
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
}

std::string resolve_scenario_path(const std::string& name_or_path) {
  const fs::path direct(name_or_path);
  if (fs::is_regular_file(direct)) return direct.string();
  const fs::path shipped =
      fs::path(GRIDFUSE_DATA_DIR) / "scenarios" / (name_or_path + ".json");
  if (direct.extension().empty() && direct.parent_path().empty() &&
      fs::is_regular_file(shipped)) {
    return shipped.string();
  }
  throw ConfigError("scenario file not found: " + name_or_path);
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("scenario file " + path + ": " + e.what());
  }
  return scenario_from_json(j, fs::path(path).parent_path().string());
}

FrameAnchor scenario_anchor(const ScenarioSpec& spec) {
  FrameAnchor a;
  a.global.utm_e = spec.anchor.utm_e;
  a.global.utm_n = spec.anchor.utm_n;
  a.global.phi_gc = spec.anchor.phi;
  return a;
}

SimWorld::SimWorld(ScenarioSpec s, const MapConfig& map_cfg) : spec(std::move(s)) {
  DigitalMap global;
  if (!spec.map_path.empty()) global = load_map_file(spec.map_path, map_cfg);
  map_ego = map_to_ego(global, scenario_anchor(spec));
  const DogmaFrame probe(spec.grid.width_m, spec.grid.height_m,
                         spec.grid.cell_size, 0.0);
  coverage.resize(probe.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    coverage[i] = spec.grid.coverage.contains({}, probe.cell_center(i)) ? 1 : 0;
  }
}

// -------------------------------------------------------------- occlusion

namespace {

struct Occluder {
  OrientedBox box;
  double min_range = 0.0;
  double bearing = 0.0;
  double half_span = 0.0;
};

Occluder make_occluder(const OrientedBox& box) {
  Occluder o;
  o.box = box;
  o.min_range = box.distance(Vec2::Zero());
  o.bearing = std::atan2(box.center.y(), box.center.x());
  for (const auto& c : box.corners()) {
    o.half_span = std::max(o.half_span,
                           angle_distance(std::atan2(c.y(), c.x()), o.bearing));
  }
  return o;
}

// True when the segment from the origin to p passes through the box while p
// itself lies outside it.
bool shadows(const Occluder& o, const Vec2& p) {
  if (o.min_range <= 0.0) return false;
  if (p.norm() <= o.min_range) return false;
  if (angle_distance(std::atan2(p.y(), p.x()), o.bearing) > o.half_span + 1e-12) {
    return false;
  }
  if (o.box.contains(p)) return false;
  const Pose2 frame{o.box.center.x(), o.box.center.y(), o.box.heading};
  const Vec2 a = to_local(frame, Vec2::Zero());
  const Vec2 d = to_local(frame, p) - a;
  double t0 = 0.0;
  double t1 = 1.0;
  const double half[2] = {0.5 * o.box.length, 0.5 * o.box.width};
  for (int k = 0; k < 2; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (std::abs(a[k]) > half[k]) return false;
      continue;
    }
    double ta = (-half[k] - a[k]) / d[k];
    double tb = (half[k] - a[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

bool shadowed(const std::vector<Occluder>& occ, const Vec2& p) {
  return std::any_of(occ.begin(), occ.end(),
                     [&](const Occluder& o) { return shadows(o, p); });
}

OrientedBox to_vehicle(const OrientedBox& b, const Pose2& ego) {
  return {to_local(ego, b.center), normalize_angle(b.heading - ego.phi),
          b.length, b.width};
}

// Vehicle-frame occluders at time t; `skip_object` excludes one object.
std::vector<OrientedBox> occluder_boxes(const ScenarioSpec& spec, double t,
                                        const Pose2& ego, int skip_object) {
  std::vector<OrientedBox> out;
  for (const auto& s : spec.statics) {
    if (s.occluder) out.push_back(to_vehicle(s.box, ego));
  }
  for (const auto& o : spec.objects) {
    if (o.occluder && o.exists(t) && o.id != skip_object) {
      out.push_back(to_vehicle(o.box(t), ego));
    }
  }
  return out;
}

bool clipped(const OrientedBox& b, const GridSimConfig& g) {
  for (const auto& c : b.corners()) {
    if (std::abs(c.x()) > 0.5 * g.width_m || std::abs(c.y()) > 0.5 * g.height_m) {
      return true;
    }
  }
  return false;
}

}  // namespace

double visible_fraction(const OrientedBox& box,
                        const std::vector<OrientedBox>& occluders) {
  std::vector<Occluder> occ;
  for (const auto& b : occluders) occ.push_back(make_occluder(b));
  constexpr int kNx = 5;
  constexpr int kNy = 3;
  int visible = 0;
  const Pose2 frame{box.center.x(), box.center.y(), box.heading};
  for (int ix = 0; ix < kNx; ++ix) {
    for (int iy = 0; iy < kNy; ++iy) {
      const Vec2 local((ix / double(kNx - 1) - 0.5) * box.length * 0.9,
                       (iy / double(kNy - 1) - 0.5) * box.width * 0.9);
      if (!shadowed(occ, to_parent(frame, local))) ++visible;
    }
  }
  return visible / double(kNx * kNy);
}

Pose2 ego_truth_pose(const ScenarioSpec& spec, double t) {
  return spec.ego.at(t).pose();
}

TruthFrame truth_at(const SimWorld& world, double t) {
  const ScenarioSpec& spec = world.spec;
  TruthFrame tf;
  tf.timestamp = t;
  tf.ego = ego_truth_pose(spec, t);
  for (const auto& o : spec.objects) {
    if (!o.exists(t)) continue;
    const EgoState s = o.trajectory.at(t);
    TruthObject to;
    to.id = o.id;
    to.kind = TruthKind::real;
    to.cls = o.cls;
    to.box_world = o.box(t);
    to.box_vehicle = to_vehicle(to.box_world, tf.ego);
    to.speed = s.v;
    to.heading_world = s.phi;
    to.visible_fraction = spec.grid.occlusion
                              ? visible_fraction(to.box_vehicle,
                                                 occluder_boxes(spec, t, tf.ego, o.id))
                              : 1.0;
    to.clipped = clipped(to.box_vehicle, spec.grid);
    tf.objects.push_back(to);
  }
  for (const auto& g : spec.ghosts) {
    if (t < g.t_start || t > g.t_end) continue;
    const EgoState s = g.trajectory.at(t);
    TruthObject to;
    to.id = g.id;
    to.kind = TruthKind::ghost;
    to.box_world = g.box(t);
    to.box_vehicle = to_vehicle(to.box_world, tf.ego);
    to.speed = s.v;
    to.heading_world = s.phi;
    to.clipped = clipped(to.box_vehicle, spec.grid);
    tf.objects.push_back(to);
  }
  for (const auto& f : spec.false_tracks) {
    if (t < f.t_start || t > f.t_end) continue;
    const EgoState s = f.trajectory.at(t);
    TruthObject to;
    to.id = static_cast<int>(f.label);
    to.kind = TruthKind::false_track;
    to.cls = f.cls;
    to.box_world = {{s.x, s.y}, s.phi, f.length, f.width};
    to.box_vehicle = to_vehicle(to.box_world, tf.ego);
    to.speed = s.v;
    to.heading_world = s.phi;
    to.track_label = f.label;
    tf.objects.push_back(to);
  }
  return tf;
}

// -------------------------------------------------------------- rendering

RenderedGrid render_dogma_frame(const SimWorld& world, double t) {
  const ScenarioSpec& spec = world.spec;
  const GridSimConfig& g = spec.grid;
  if (t < -1e-9 || t > spec.duration + 1e-9) {
    throw ScenarioError("render time " + std::to_string(t) + " outside scenario");
  }
  auto rng = make_rng(spec.seed, 1, time_tick(t));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RenderedGrid out{DogmaFrame(g.width_m, g.height_m, g.cell_size, t), truth_at(world, t)};
  DogmaFrame& frame = out.frame;
  const Pose2& ego = out.truth.ego;

  std::vector<Occluder> occ;
  if (g.occlusion) {
    for (const auto& b : occluder_boxes(spec, t, ego, -1)) occ.push_back(make_occluder(b));
  }
  auto hidden = [&](const Vec2& c) { return !occ.empty() && shadowed(occ, c); };

  const CellData unknown{};
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (world.coverage[i] && !hidden(frame.cell_center(i))) {
      frame.data(i).m_free = g.free_m_free;
    }
  }

  auto write_static = [&](std::size_t i) {
    CellData& c = frame.data(i);
    if (!world.coverage[i] || hidden(frame.cell_center(i))) {
      c = unknown;
      return;
    }
    c.m_occ = g.static_m_occ_lo + (g.static_m_occ_hi - g.static_m_occ_lo) * unit(rng);
    c.m_free = 0.0;
    c.vx = g.static_vel_sigma * normal(rng);
    c.vy = g.static_vel_sigma * normal(rng);
    c.var_vx = g.static_var_lo + (g.static_var_hi - g.static_var_lo) * unit(rng);
    c.var_vy = g.static_var_lo + (g.static_var_hi - g.static_var_lo) * unit(rng);
    c.cov_vxvy = 0.0;
  };

  // Visits cells whose centers fall inside the box (vehicle frame).
  auto for_cells_in = [&](const OrientedBox& box, auto&& fn) {
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const auto& c : box.corners()) {
      lo_x = std::min(lo_x, c.x());
      hi_x = std::max(hi_x, c.x());
      lo_y = std::min(lo_y, c.y());
      hi_y = std::max(hi_y, c.y());
    }
    const double a = g.cell_size;
    const auto col = [&](double x) {
      return static_cast<long>(std::floor((x + 0.5 * g.width_m) / a));
    };
    const auto row = [&](double y) {
      return static_cast<long>(std::floor((y + 0.5 * g.height_m) / a));
    };
    const long c0 = std::max(0L, col(lo_x));
    const long c1 = std::min(static_cast<long>(frame.cols()) - 1, col(hi_x));
    const long r0 = std::max(0L, row(lo_y));
    const long r1 = std::min(static_cast<long>(frame.rows()) - 1, row(hi_y));
    for (long r = r0; r <= r1; ++r) {
      for (long c = c0; c <= c1; ++c) {
        const std::size_t i = frame.index(static_cast<std::size_t>(c),
                                          static_cast<std::size_t>(r));
        if (box.contains(frame.cell_center(i))) fn(i);
      }
    }
  };

  // Buildings: unknown interior behind a static facade band.
  for (const auto& b : world.map_ego.buildings) {
    std::vector<Vec2> poly;
    for (const auto& c : b.corners) poly.push_back(to_local(ego, c));
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const auto& c : poly) {
      lo_x = std::min(lo_x, c.x());
      hi_x = std::max(hi_x, c.x());
      lo_y = std::min(lo_y, c.y());
      hi_y = std::max(hi_y, c.y());
    }
    const Vec2 ctr(0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y));
    const OrientedBox aabb{ctr, 0.0, hi_x - lo_x, hi_y - lo_y};
    for_cells_in(aabb, [&](std::size_t i) {
      const Vec2 p = frame.cell_center(i);
      if (!point_in_polygon(p, poly)) return;
      if (point_in_polygon(p, poly, g.facade_band)) {
        frame.data(i) = unknown;
      } else {
        write_static(i);
      }
    });
  }

  for (const auto& s : spec.statics) {
    for_cells_in(to_vehicle(s.box, ego), write_static);
  }

  auto write_moving = [&](const OrientedBox& world_box, double v, double omega,
                          std::size_t& count) {
    const Vec2 dir(std::cos(world_box.heading), std::sin(world_box.heading));
    for_cells_in(to_vehicle(world_box, ego), [&](std::size_t i) {
      const Vec2 p = frame.cell_center(i);
      if (!world.coverage[i] || hidden(p)) return;
      const Vec2 r = to_parent(ego, p) - world_box.center;
      const Vec2 vel_world = v * dir + omega * Vec2(-r.y(), r.x());
      const Vec2 vel = rotate(vel_world, -ego.phi);
      CellData& c = frame.data(i);
      c.m_occ = std::clamp(g.object_m_occ + g.object_m_occ_sigma * normal(rng),
                           0.65, 0.98);
      c.m_free = 0.0;
      c.vx = vel.x() + g.object_vel_sigma * normal(rng);
      c.vy = vel.y() + g.object_vel_sigma * normal(rng);
      c.var_vx = g.object_vel_var;
      c.var_vy = g.object_vel_var;
      c.cov_vxvy = 0.0;
      ++count;
    });
  };

  std::size_t k = 0;
  for (const auto& o : spec.objects) {
    if (!o.exists(t)) continue;
    const EgoState s = o.trajectory.at(t);
    write_moving(o.box(t), s.v, s.omega, out.truth.objects[k].cell_count);
    ++k;
  }
  for (const auto& gh : spec.ghosts) {
    if (t < gh.t_start || t > gh.t_end) continue;
    const EgoState s = gh.trajectory.at(t);
    write_moving(gh.box(t), s.v, s.omega, out.truth.objects[k].cell_count);
    ++k;
  }
  return out;
}

// ------------------------------------------------------------------ tracks

TrackState transform_track(const TrackState& t, const Pose2& pose) {
  TrackState out = t;
  out.ref_pos = to_parent(pose, t.ref_pos);
  out.bbox.center = to_parent(pose, t.bbox.center);
  out.bbox.heading = normalize_angle(t.bbox.heading + pose.phi);
  out.phi = normalize_angle(t.phi + pose.phi);
  // Position block rotates with the frame.
  Eigen::Matrix<double, 6, 6> rot = Eigen::Matrix<double, 6, 6>::Identity();
  rot.topLeftCorner<2, 2>() << std::cos(pose.phi), -std::sin(pose.phi),
      std::sin(pose.phi), std::cos(pose.phi);
  out.cov = rot * t.cov * rot.transpose();
  return out;
}

TrackSource::TrackSource(const SimWorld& world)
    : world_(world), tracks_(world.spec.objects.size()),
      next_label_(world.spec.tracker.first_label) {
  for (const auto& f : world.spec.false_tracks) false_labels_.push_back(f.label);
}

std::optional<Label> TrackSource::label_of(int object_id) const {
  const auto& objs = world_.spec.objects;
  for (std::size_t k = 0; k < objs.size(); ++k) {
    if (objs[k].id == object_id && tracks_[k].active) return tracks_[k].label;
  }
  return std::nullopt;
}

std::vector<TrackState> TrackSource::next(double t) {
  if (last_t_ && !(t > *last_t_)) {
    throw InvalidArgument("TrackSource::next: time must increase");
  }
  const ScenarioSpec& spec = world_.spec;
  const TrackerSimConfig& tc = spec.tracker;
  auto rng = make_rng(spec.seed, 2, frame_++);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Pose2 ego = ego_truth_pose(spec, t);
  const Eigen::Vector4d sigma(tc.sigma_pos, tc.sigma_pos, tc.sigma_v, tc.sigma_phi);

  auto base_cov = [&] {
    TrackCovariance c = TrackCovariance::Zero();
    c.diagonal() << tc.sigma_pos * tc.sigma_pos, tc.sigma_pos * tc.sigma_pos,
        tc.sigma_v * tc.sigma_v, 0.5, tc.sigma_phi * tc.sigma_phi, 0.01;
    return c;
  };

  auto emit = [&](const EgoState& est, double length, double width, const TrackCovariance& cov,
                  double existence, ObjectClass cls, Label label) {
    const OrientedBox world_box{{est.x, est.y}, est.phi, length, width};
    TrackState tr;
    tr.bbox = to_vehicle(world_box, ego);
    tr.ref_label = nearest_ref_point(tr.bbox, Vec2::Zero());
    tr.ref_pos = tr.bbox.point(tr.ref_label);
    tr.v = est.v;
    tr.a = est.a;
    tr.phi = tr.bbox.heading;
    tr.omega = est.omega;
    TrackState rotated;
    rotated.cov = cov;
    tr.cov = transform_track(rotated, {0.0, 0.0, -ego.phi}).cov;
    tr.existence = existence;
    tr.cls = cls;
    tr.label = label;
    tr.timestamp = t;
    return tr;
  };

  std::vector<TrackState> out;
  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    const GroundTruthObject& o = spec.objects[k];
    ObjectTrack& tr = tracks_[k];
    // Draws happen for every object so that the stream does not depend on
    // which branch earlier objects took.
    const double u_detect = unit(rng);
    const double u_exist = unit(rng);
    Eigen::Vector4d n;
    for (int i = 0; i < 4; ++i) n[i] = normal(rng);

    if (!o.tracked || !o.exists(t)) {
      tr.active = false;
      continue;
    }
    const OrientedBox vbox = to_vehicle(o.box(t), ego);
    if (!tc.fov.contains({}, vbox.center)) {
      tr.active = false;
      continue;
    }
    const double vis = spec.grid.occlusion
                           ? visible_fraction(vbox, occluder_boxes(spec, t, ego, o.id))
                           : 1.0;
    const double pd = tc.p_detect * vis;
    const bool detected = u_detect < pd;
    const EgoState truth = o.trajectory.at(t);
    if (detected) {
      if (!tr.active) {
        tr.active = true;
        tr.label = next_label_++;
        tr.noise = sigma.cwiseProduct(n);
      } else {
        const double c = std::sqrt(1.0 - tc.rho * tc.rho);
        tr.noise = tc.rho * tr.noise + c * sigma.cwiseProduct(n);
      }
      tr.estimate = truth;
      tr.estimate.x += tr.noise[0];
      tr.estimate.y += tr.noise[1];
      tr.estimate.v = std::max(0.0, truth.v + tr.noise[2]);
      tr.estimate.phi = normalize_angle(truth.phi + tr.noise[3]);
      tr.existence = tc.existence_lo + (tc.existence_hi - tc.existence_lo) * u_exist;
      tr.cov = base_cov();
    } else if (tr.active) {
      const double dt = t - tr.last_t;
      EgoState pred = tr.estimate;
      pred.a = 0.0;
      pred.omega = 0.0;
      tr.estimate = ctra_predict(pred, dt);
      TrackCovariance q = TrackCovariance::Zero();
      q.diagonal() << tc.q_pos, tc.q_pos, tc.q_v, 0.5, tc.q_phi, 0.01;
      tr.cov += q * dt;
      tr.existence = tr.existence * (1.0 - pd) / (1.0 - tr.existence * pd);
      if (tr.existence <= tc.drop_existence) {
        tr.active = false;
        continue;
      }
    } else {
      continue;
    }
    tr.last_t = t;
    out.push_back(emit(tr.estimate, o.length, o.width, tr.cov, tr.existence, o.cls,
                       tr.label));
  }
  for (const auto& f : spec.false_tracks) {
    if (t < f.t_start || t > f.t_end) continue;
    out.push_back(emit(f.trajectory.at(t), f.length, f.width, base_cov(), f.existence,
                       f.cls, f.label));
  }
  std::sort(out.begin(), out.end(),
            [](const TrackState& a, const TrackState& b) { return a.label < b.label; });
  last_t_ = t;
  return out;
}

std::vector<ImuSample> imu_stream(const ScenarioSpec& spec) {
  auto rng = make_rng(spec.seed, 3, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ImuSample> out;
  const auto n = static_cast<std::size_t>(std::floor(spec.duration * spec.imu.rate + 1e-9));
  for (std::size_t k = 1; k <= n; ++k) {
    const double t = static_cast<double>(k) / spec.imu.rate;
    const EgoState s = spec.ego.at(t);
    out.push_back({s.a + spec.imu.accel_sigma * normal(rng),
                   s.omega + spec.imu.yawrate_sigma * normal(rng),
                   s.v + spec.imu.speed_sigma * normal(rng), t});
  }
  return out;
}

}  // namespace gridfuse
