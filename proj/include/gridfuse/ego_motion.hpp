#pragma once

#include "gridfuse/geometry.hpp"

#include <Eigen/Core>

#include <optional>

namespace gridfuse {

/// Ego state in the ego-stationary frame: position, speed, acceleration,
/// heading and turn rate.
struct EgoState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double a = 0.0;
  double phi = 0.0;
  double omega = 0.0;
  double timestamp = 0.0;

  Pose2 pose() const { return {x, y, phi}; }
};

/// Ego state in planar UTM coordinates.
struct GlobalEgoState {
  double utm_e = 0.0;
  double utm_n = 0.0;
  double v = 0.0;
  double a = 0.0;
  double phi_gc = 0.0;
  double omega = 0.0;
  double timestamp = 0.0;
};

struct ImuSample {
  double accel_meas = 0.0;
  double yawrate_meas = 0.0;
  double speed_meas = 0.0;
  double timestamp = 0.0;
};

/// Linear Kalman estimate over (v, a, omega).
struct DynKalmanState {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d cov = Eigen::Matrix3d::Identity();
};

/// Diagonal noise densities for the dynamic-state filter. Process noise is
/// a rate (variance per second) and may contain zeros; measurement noise is
/// a variance and must be strictly positive.
struct KalmanNoise {
  Eigen::Vector3d process{0.5, 0.5, 0.05};
  Eigen::Vector3d measurement{0.1, 0.2, 0.01};
};

/// Closed-form constant turn rate and acceleration propagation.
/// Throws InvalidArgument for negative dt.
EgoState ctra_predict(const EgoState& state, double dt);

/// One predict/update cycle of the dynamic-state filter with direct
/// observation of (speed, acceleration, yaw rate).
DynKalmanState kf_predict_update(const DynKalmanState& kf,
                                 const ImuSample& sample, double dt,
                                 const KalmanNoise& noise = {});

struct GlobalPose {
  double utm_e = 0.0;
  double utm_n = 0.0;
  double phi = 0.0;
};

/// Simultaneous global and ego-stationary views of the same instant; defines
/// the rigid transform between the two frames.
struct FrameAnchor {
  GlobalEgoState global;
  EgoState ego;
};

Pose2 global_to_ego(const GlobalPose& p, const FrameAnchor& anchor);
GlobalPose ego_to_global(const Pose2& p, const FrameAnchor& anchor);

/// Dead-reckoning estimator: the filter tracks (v, a, omega) from IMU
/// samples; pose is integrated with the CTRA model. Starts at x = y = phi = 0.
class EgoMotionEstimator {
 public:
  explicit EgoMotionEstimator(KalmanNoise noise = {}, double start_time = 0.0,
                              double initial_speed = 0.0);

  /// Feeds one sample; timestamps must be strictly increasing and not
  /// before the start time.
  void ingest(const ImuSample& sample);

  const EgoState& state() const { return state_; }
  const DynKalmanState& filter() const { return kf_; }

  /// Current estimate propagated to time t (t >= state().timestamp).
  EgoState state_at(double t) const;

 private:
  KalmanNoise noise_;
  DynKalmanState kf_;
  EgoState state_;
  std::optional<double> last_sample_time_;
};

}  // namespace gridfuse
