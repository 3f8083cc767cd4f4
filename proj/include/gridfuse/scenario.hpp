#pragma once

#include "gridfuse/digital_map.hpp"
#include "gridfuse/dogma.hpp"
#include "gridfuse/ego_motion.hpp"
#include "gridfuse/fusion.hpp"
#include "gridfuse/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gridfuse {

struct CtraSegment {
  double duration = 0.0;
  double a = 0.0;
  double omega = 0.0;
};

/// Piecewise CTRA motion. After the last segment the object keeps its
/// velocity with zero acceleration and turn rate.
struct Trajectory {
  EgoState start;
  std::vector<CtraSegment> segments;

  /// State at absolute time t >= start.timestamp.
  EgoState at(double t) const;
};

struct GroundTruthObject {
  int id = 0;
  ObjectClass cls = ObjectClass::car;
  double length = 4.5;
  double width = 1.8;
  double t_start = 0.0;
  double t_end = 1e9;
  Trajectory trajectory;
  bool tracked = true;
  /// Casts shadows in the grid and for the tracker.
  bool occluder = false;

  bool exists(double t) const { return t >= t_start && t <= t_end; }
  OrientedBox box(double t) const;
};

struct StaticObstacle {
  int id = 0;
  OrientedBox box;
  bool occluder = false;
};

struct FalseTrackInjector {
  Label label = 0;
  double t_start = 0.0;
  double t_end = 1e9;
  Trajectory trajectory;
  double length = 4.5;
  double width = 1.8;
  ObjectClass cls = ObjectClass::car;
  double existence = 0.9;
};

struct GhostInjector {
  int id = 0;
  double t_start = 0.0;
  double t_end = 1e9;
  Trajectory trajectory;
  double length = 2.0;
  double width = 1.0;

  OrientedBox box(double t) const;
};

struct GridSimConfig {
  double width_m = 120.0;
  double height_m = 120.0;
  double cell_size = 0.15;
  double period = 0.1;
  double object_m_occ = 0.85;
  double object_m_occ_sigma = 0.05;
  double object_vel_sigma = 0.1;
  double object_vel_var = 0.01;
  double static_m_occ_lo = 0.6;
  double static_m_occ_hi = 0.9;
  double static_vel_sigma = 0.2;
  double static_var_lo = 6.0;
  double static_var_hi = 20.0;
  double free_m_free = 0.8;
  double facade_band = 0.45;
  FieldOfView coverage{{{0.0, kPi, 40.0}, {0.0, 50.0 * kPi / 180.0, 100.0}}};
  bool occlusion = true;
};

struct TrackerSimConfig {
  double period = 0.08;
  double p_detect = 0.95;
  double sigma_pos = 0.3;
  double sigma_v = 0.3;
  double sigma_phi = 2.0 * kPi / 180.0;
  double rho = 0.8;
  double existence_lo = 0.8;
  double existence_hi = 0.99;
  double q_pos = 1.0;
  double q_v = 8.0;
  double q_phi = 0.05;
  double drop_existence = 0.2;
  Label first_label = 100;
  FieldOfView fov{{{0.0, 60.0 * kPi / 180.0, 100.0}}};
};

struct ImuSimConfig {
  double rate = 50.0;
  double accel_sigma = 0.05;
  double yawrate_sigma = 0.002;
  double speed_sigma = 0.05;
};

struct ScenarioSpec {
  std::string name;
  double duration = 10.0;
  std::uint64_t seed = 1;
  /// Absolute path of the map file, empty for no map.
  std::string map_path;
  /// Global pose of the ego at t = 0 (the ego-stationary origin).
  GlobalPose anchor;
  Trajectory ego;
  GridSimConfig grid;
  TrackerSimConfig tracker;
  ImuSimConfig imu;
  std::vector<GroundTruthObject> objects;
  std::vector<StaticObstacle> statics;
  std::vector<FalseTrackInjector> false_tracks;
  std::vector<GhostInjector> ghosts;
};

/// `base_dir` resolves a relative map path.
ScenarioSpec scenario_from_json(const nlohmann::json& j,
                                const std::string& base_dir);
ScenarioSpec load_scenario(const std::string& path);
/// Accepts a path or the name of a shipped scenario. Throws ConfigError
/// naming the path when nothing is found.
std::string resolve_scenario_path(const std::string& name_or_path);

FrameAnchor scenario_anchor(const ScenarioSpec& spec);

/// Scenario plus its map in ego-stationary coordinates.
struct SimWorld {
  ScenarioSpec spec;
  DigitalMap map_ego;
  /// Per cell: inside the grid sensors' coverage (vehicle frame).
  std::vector<std::uint8_t> coverage;

  explicit SimWorld(ScenarioSpec s, const MapConfig& map_cfg = {});
};

enum class TruthKind { real, ghost, false_track };
std::string_view to_string(TruthKind k);

struct TruthObject {
  int id = 0;
  TruthKind kind = TruthKind::real;
  ObjectClass cls = ObjectClass::unknown;
  OrientedBox box_world;
  OrientedBox box_vehicle;
  double speed = 0.0;
  double heading_world = 0.0;
  /// Fraction of the footprint visible from the sensor origin.
  double visible_fraction = 1.0;
  std::size_t cell_count = 0;
  /// Footprint reaches past the grid border.
  bool clipped = false;
  std::optional<Label> track_label;
};

struct TruthFrame {
  double timestamp = 0.0;
  Pose2 ego;
  std::vector<TruthObject> objects;
};

struct RenderedGrid {
  DogmaFrame frame;
  TruthFrame truth;
};

/// Synthesizes the DOGMa cells at time t in the vehicle frame. Pure in
/// (world, t). Throws ScenarioError for t outside [0, duration].
RenderedGrid render_dogma_frame(const SimWorld& world, double t);

/// Deterministic stand-in for a multi-object tracker. Calls must come in
/// increasing time order.
class TrackSource {
 public:
  explicit TrackSource(const SimWorld& world);

  /// Tracks at time t in vehicle coordinates.
  std::vector<TrackState> next(double t);
  /// Labels of injected tracks without a real object behind them.
  const std::vector<Label>& false_labels() const { return false_labels_; }
  /// Track label currently attached to a ground-truth object, if any.
  std::optional<Label> label_of(int object_id) const;

 private:
  struct ObjectTrack {
    bool active = false;
    Label label = 0;
    double existence = 0.0;
    double last_t = 0.0;
    Eigen::Vector4d noise = Eigen::Vector4d::Zero();
    EgoState estimate;
    TrackCovariance cov = TrackCovariance::Zero();
  };

  const SimWorld& world_;
  std::vector<ObjectTrack> tracks_;
  std::vector<Label> false_labels_;
  Label next_label_;
  std::uint64_t frame_ = 0;
  std::optional<double> last_t_;
};

/// Ground-truth ego pose in the ego-stationary frame.
Pose2 ego_truth_pose(const ScenarioSpec& spec, double t);

/// IMU samples at the configured rate over (0, duration].
std::vector<ImuSample> imu_stream(const ScenarioSpec& spec);

TrackState transform_track(const TrackState& t, const Pose2& pose);

/// Fraction of sample points of `box` (vehicle frame) not shadowed by the
/// given occluders as seen from the origin.
double visible_fraction(const OrientedBox& box,
                        const std::vector<OrientedBox>& occluders);

/// Truth at time t in the world and vehicle frames (no cell rendering).
TruthFrame truth_at(const SimWorld& world, double t);

}  // namespace gridfuse
