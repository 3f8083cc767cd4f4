#include "gridfuse/ego_motion.hpp"

#include "gridfuse/error.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <complex>

namespace gridfuse {

namespace {

using cplx = std::complex<double>;

// For z = i*omega*dt:
//   f(z) = integral_0^1 e^{zs} ds        = (e^z - 1) / z
//   g(z) = integral_0^1 s e^{zs} ds      = (e^z (z - 1) + 1) / z^2
// Small |z| uses the power series, which is exact at z = 0 and avoids the
// cancellation of the closed forms.
void ctra_kernels(double theta, cplx& f, cplx& g) {
  const cplx z(0.0, theta);
  if (std::abs(theta) < 0.5) {
    cplx term(1.0, 0.0);  // z^k / k!
    f = 0.0;
    g = 0.0;
    for (int k = 0; k < 24; ++k) {
      f += term / static_cast<double>(k + 1);
      g += term / static_cast<double>(k + 2);
      term *= z / static_cast<double>(k + 1);
    }
    return;
  }
  const cplx ez = std::exp(z);
  f = (ez - 1.0) / z;
  g = (ez * (z - 1.0) + 1.0) / (z * z);
}

}  // namespace

EgoState ctra_predict(const EgoState& s, double dt) {
  if (!(dt >= 0.0)) {
    throw InvalidArgument("ctra_predict: dt must be non-negative");
  }
  cplx f;
  cplx g;
  ctra_kernels(s.omega * dt, f, g);
  const cplx heading = std::polar(1.0, s.phi);
  const cplx disp = heading * (s.v * dt * f + s.a * dt * dt * g);

  EgoState out = s;
  out.x = s.x + disp.real();
  out.y = s.y + disp.imag();
  out.v = s.v + s.a * dt;
  out.phi = normalize_angle(s.phi + s.omega * dt);
  out.timestamp = s.timestamp + dt;
  return out;
}

DynKalmanState kf_predict_update(const DynKalmanState& kf,
                                 const ImuSample& sample, double dt,
                                 const KalmanNoise& noise) {
  if (!(dt >= 0.0)) {
    throw InvalidArgument("kf_predict_update: dt must be non-negative");
  }
  if ((noise.process.array() < 0.0).any() ||
      !(noise.measurement.array() > 0.0).all()) {
    throw InvalidArgument(
        "kf_predict_update: process noise must be >= 0 and measurement noise "
        "> 0");
  }
  if (!kf.cov.isApprox(kf.cov.transpose(), 1e-9) ||
      kf.cov.llt().info() != Eigen::Success) {
    throw InvalidArgument("kf_predict_update: covariance not positive-definite");
  }

  Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
  f(0, 1) = dt;
  const Eigen::Matrix3d q = (noise.process * dt).asDiagonal();
  const Eigen::Vector3d mean_pred = f * kf.mean;
  const Eigen::Matrix3d cov_pred = f * kf.cov * f.transpose() + q;

  const Eigen::Matrix3d r = noise.measurement.asDiagonal();
  const Eigen::Vector3d z(sample.speed_meas, sample.accel_meas,
                          sample.yawrate_meas);
  const Eigen::Matrix3d s = cov_pred + r;
  const Eigen::Matrix3d k = s.llt().solve(cov_pred).transpose();
  const Eigen::Matrix3d i_kh = Eigen::Matrix3d::Identity() - k;

  DynKalmanState out;
  out.mean = mean_pred + k * (z - mean_pred);
  // Joseph form keeps the posterior symmetric positive-definite.
  out.cov = i_kh * cov_pred * i_kh.transpose() + k * r * k.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

Pose2 global_to_ego(const GlobalPose& p, const FrameAnchor& anchor) {
  const double dphi = anchor.ego.phi - anchor.global.phi_gc;
  const Vec2 d(p.utm_e - anchor.global.utm_e, p.utm_n - anchor.global.utm_n);
  const Vec2 e = Vec2(anchor.ego.x, anchor.ego.y) + rotate(d, dphi);
  return {e.x(), e.y(), normalize_angle(p.phi + dphi)};
}

GlobalPose ego_to_global(const Pose2& p, const FrameAnchor& anchor) {
  const double dphi = anchor.ego.phi - anchor.global.phi_gc;
  const Vec2 d(p.x - anchor.ego.x, p.y - anchor.ego.y);
  const Vec2 g = rotate(d, -dphi);
  return {anchor.global.utm_e + g.x(), anchor.global.utm_n + g.y(),
          normalize_angle(p.phi - dphi)};
}

EgoMotionEstimator::EgoMotionEstimator(KalmanNoise noise, double start_time,
                                       double initial_speed)
    : noise_(noise) {
  state_.timestamp = start_time;
  state_.v = initial_speed;
  kf_.mean = Eigen::Vector3d(initial_speed, 0.0, 0.0);
  kf_.cov = Eigen::Vector3d(1.0, 1.0, 0.1).asDiagonal();
}

void EgoMotionEstimator::ingest(const ImuSample& sample) {
  if (last_sample_time_ && !(sample.timestamp > *last_sample_time_)) {
    throw InvalidArgument("IMU timestamps must be strictly increasing");
  }
  if (sample.timestamp < state_.timestamp) {
    throw InvalidArgument("IMU sample precedes the estimator start time");
  }
  const double dt = sample.timestamp - state_.timestamp;
  // Pose advances with the dynamics valid over the interval, then the
  // filter refreshes (v, a, omega) at the new instant.
  EgoState next = ctra_predict(state_, dt);
  kf_ = kf_predict_update(kf_, sample, dt, noise_);
  next.v = kf_.mean(0);
  next.a = kf_.mean(1);
  next.omega = kf_.mean(2);
  next.timestamp = sample.timestamp;
  state_ = next;
  last_sample_time_ = sample.timestamp;
}

EgoState EgoMotionEstimator::state_at(double t) const {
  return ctra_predict(state_, t - state_.timestamp);
}

}  // namespace gridfuse
