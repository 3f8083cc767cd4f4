#pragma once

#include "gridfuse/digital_map.hpp"
#include "gridfuse/extraction.hpp"
#include "gridfuse/geometry.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridfuse {

enum class ObjectClass : std::uint8_t {
  unknown,
  car,
  truck,
  bus,
  motorcycle,
  bicycle,
  pedestrian
};

std::string_view to_string(ObjectClass c);
std::optional<ObjectClass> object_class_from_string(std::string_view name);
/// Classes whose pose is checked against the lanes.
bool is_vehicle(ObjectClass c);

/// Track covariance, state order (x, y, v, a, phi, omega).
using TrackCovariance = Eigen::Matrix<double, 6, 6>;

struct TrackState {
  Vec2 ref_pos = Vec2::Zero();
  RefPoint ref_label = RefPoint::b;
  double v = 0.0;
  double a = 0.0;
  double phi = 0.0;
  double omega = 0.0;
  OrientedBox bbox;
  TrackCovariance cov = TrackCovariance::Identity();
  double existence = 0.5;
  ObjectClass cls = ObjectClass::unknown;
  Label label = 0;
  double timestamp = 0.0;
};

enum class Module : std::uint8_t { grid, tracker };
std::string_view to_string(Module m);

/// Module-independent view of one incoming object.
struct Candidate {
  Module module = Module::grid;
  Label source_label = 0;
  Vec2 ref_pos = Vec2::Zero();
  RefPoint ref_label = RefPoint::b;
  double speed = 0.0;
  double heading = 0.0;
  OrientedBox bbox;
  ObjectClass cls = ObjectClass::unknown;
  double timestamp = 0.0;
  std::optional<GridObject> grid;
  std::optional<TrackState> track;

  Vec2 velocity() const;
};

Candidate make_candidate(const GridObject& obj);
Candidate make_candidate(const TrackState& track);

struct MetaObject {
  Vec2 ref_pos = Vec2::Zero();
  RefPoint ref_label = RefPoint::b;
  double v = 0.0;
  double phi = 0.0;
  OrientedBox bbox;
  ObjectClass cls = ObjectClass::unknown;
  Label label = 0;
  /// Confidence of the accepted state.
  double eta = 0.5;
  /// Confidence of the latest candidate evaluated against this object,
  /// accepted or not.
  double last_candidate_eta = 0.5;
  std::optional<GridObject> last_grid;
  std::optional<double> t_grid;
  std::optional<TrackState> last_track;
  std::optional<double> t_track;
  double last_update = 0.0;
  std::size_t grid_hits = 0;
  std::size_t track_hits = 0;
  std::optional<Label> grid_label;
  std::optional<Label> track_label;
  /// Sequence numbers of the envelopes that last updated the object.
  std::optional<std::uint64_t> grid_envelope;
  std::optional<std::uint64_t> track_envelope;

  Vec2 velocity() const;
};

/// Angular sector around the vehicle's forward axis.
struct FovSector {
  double center = 0.0;
  double half_angle = kPi;
  double max_range = 40.0;
};

struct FieldOfView {
  std::vector<FovSector> sectors;
  /// `ego` is the vehicle pose in the frame of `p`.
  bool contains(const Pose2& ego, const Vec2& p) const;
};

struct FusionConfig {
  double eta_min = 0.35;
  double max_accel = 6.0;
  double max_speed = 60.0;
  double jump_gate = 1.0;
  double physics_min_dt = 0.1;
  double neutral_physics = 0.5;
  double stale_timeout = 0.5;
  double confirm_bonus_high = 1.5;
  double confirm_bonus_low = 0.6;
  double cov_scale = 10.0;
  double existence_scale = 3.0;
  double building_penalty = 0.05;
  double building_inset = 0.5;
  double heading_sigma = 30.0 * kPi / 180.0;
  double offset_sigma = 3.0;
  double lane_neutral = 0.8;
  double lane_gate = 10.0;
  double association_gate = 3.0;
  double label_sanity_factor = 3.0;
  double lateness_bound = 0.5;
  double extent_smoothing = 0.5;
  FieldOfView fov_tracker{{{0.0, 60.0 * kPi / 180.0, 100.0}}};
  FieldOfView fov_grid{{{0.0, kPi, 40.0}, {0.0, 50.0 * kPi / 180.0, 60.0}}};
};

inline constexpr double kEtaFloor = 1e-6;
inline constexpr double kEtaCeil = 1.0 - 1e-6;
double clamp_eta(double x);

/// Physical plausibility of `cand` relative to a reference state `ref`
/// observed dt seconds earlier. Throws InvalidArgument for dt <= 0.
double physical_confidence(const Candidate& cand, const MetaObject& ref,
                           double dt, const FusionConfig& cfg);

/// Confirmation evidence from the other module.
enum class Confirmation { confirmed, silent, outside_fov };
std::string_view to_string(Confirmation c);

/// Module factor before cross-module confirmation: existence and covariance
/// for tracks, persistence for grid objects.
double module_base_confidence(const Candidate& cand, std::size_t grid_hits,
                              const FusionConfig& cfg);
double module_confidence(const Candidate& cand, std::size_t grid_hits,
                         Confirmation confirmation, const FusionConfig& cfg);

/// Building and lane factor. `cls` is the class used for the lane term.
/// Throws FrameMismatch unless the map is in the ego frame.
double map_confidence(const Candidate& cand, ObjectClass cls,
                      const DigitalMap& map, const FusionConfig& cfg);

double combined_confidence(double eta_p, double eta_e, double eta_m);

struct MetaAssociation {
  /// (candidate index, meta index) pairs.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  /// Candidates bound by label whose distance exceeded the sanity gate.
  std::vector<std::size_t> label_conflicts;
  std::vector<std::size_t> unmatched_candidates;
  std::vector<std::size_t> unmatched_metas;
};

/// Meta object advanced with constant velocity.
MetaObject predict_meta(const MetaObject& meta, double dt);

/// Distance between a candidate's reference point and the same point on the
/// CV-predicted meta box.
double reference_distance(const Candidate& cand, const MetaObject& meta);

/// Known source labels associate directly (subject to the sanity gate); the
/// rest are matched by the Hungarian method on reference-point distance.
/// Metas bound to a label of the same module that is absent from
/// `candidates` take part in the matching, so relabeled sources rebind.
MetaAssociation associate_to_meta(const std::vector<Candidate>& candidates,
                                  const std::vector<MetaObject>& metas,
                                  const FusionConfig& cfg);

/// Overwrites pose and speed, smooths the extent according to the
/// candidate's reference point and records provenance. Throws
/// InvalidArgument when eta < eta_min.
MetaObject update_meta(const MetaObject& meta, const Candidate& cand,
                       double eta, const FusionConfig& cfg,
                       std::optional<std::uint64_t> envelope = std::nullopt);

std::optional<MetaObject> create_meta(const Candidate& cand, double eta,
                                      Label label, const FusionConfig& cfg,
                                      std::optional<std::uint64_t> envelope =
                                          std::nullopt);

std::vector<MetaObject> prune_stale(std::vector<MetaObject> metas, double now,
                                    const FusionConfig& cfg);

/// All objects of one module at one sample time, in ego-stationary
/// coordinates. `ego_pose` is the vehicle pose at that time.
struct SampleEnvelope {
  Module module = Module::grid;
  double timestamp = 0.0;
  Pose2 ego_pose;
  std::vector<GridObject> grid;
  std::vector<TrackState> tracks;
};

enum class Action { created, updated, rejected };
std::string_view to_string(Action a);

struct ConfidenceRecord {
  std::uint64_t envelope = 0;
  double timestamp = 0.0;
  Module module = Module::grid;
  Label source_label = 0;
  Vec2 position = Vec2::Zero();
  double eta_p = 0.0;
  double eta_e = 0.0;
  double eta_m = 0.0;
  double eta = 0.0;
  Confirmation confirmation = Confirmation::outside_fov;
  Action action = Action::rejected;
  std::optional<Label> meta_label;
  /// Empty unless the candidate was rejected for a reason other than its
  /// confidence ("duplicate", "label_conflict").
  std::string reason;
};

struct EnvelopeResult {
  std::uint64_t envelope = 0;
  double timestamp = 0.0;
  Module module = Module::grid;
  std::vector<ConfidenceRecord> records;
  /// Meta set after processing, ascending label.
  std::vector<MetaObject> metas;
};

/// Single-owner fusion state: waiting queue, meta set and module
/// bookkeeping. Envelopes are processed strictly one at a time.
class FusionEngine {
 public:
  FusionEngine(FusionConfig cfg, DigitalMap map_in_ego, Label first_label = 1);

  /// Inserts by timestamp, stable for ties. Throws OutOfOrderSample when the
  /// envelope is older than the watermark by more than the lateness bound,
  /// InvalidArgument when payload and module disagree.
  void enqueue(SampleEnvelope envelope);

  std::size_t pending() const { return queue_.size(); }

  /// Processes the oldest queued envelope.
  std::optional<EnvelopeResult> process_next();
  /// Processes queued envelopes with timestamp <= t.
  std::vector<EnvelopeResult> process_until(double t);
  std::vector<EnvelopeResult> drain();

  /// Processes one envelope immediately, bypassing the queue.
  EnvelopeResult process_envelope(const SampleEnvelope& envelope);

  const std::vector<MetaObject>& metas() const { return metas_; }
  const FusionConfig& config() const { return cfg_; }
  const DigitalMap& map() const { return map_; }
  std::optional<double> watermark() const { return watermark_; }

 private:
  struct Queued {
    std::uint64_t seq;
    SampleEnvelope envelope;
  };
  struct LatestEnvelope {
    std::uint64_t seq = 0;
    double timestamp = 0.0;
    std::vector<Candidate> candidates;
  };

  EnvelopeResult process(std::uint64_t seq, const SampleEnvelope& envelope);
  Confirmation confirmation_for(const Candidate& cand, const MetaObject* meta,
                                const Pose2& ego) const;
  double physics_for(const Candidate& cand, const MetaObject* meta) const;

  FusionConfig cfg_;
  DigitalMap map_;
  Label next_label_;
  std::uint64_t next_seq_ = 0;
  std::deque<Queued> queue_;
  std::optional<double> watermark_;
  std::vector<MetaObject> metas_;
  std::optional<LatestEnvelope> latest_grid_;
  std::optional<LatestEnvelope> latest_tracker_;
  /// Grid label -> (consecutive envelopes seen, seq of last sighting).
  std::map<Label, std::pair<std::size_t, std::uint64_t>> grid_persistence_;
};

}  // namespace gridfuse
