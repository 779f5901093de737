#pragma once

// Linear Kalman filtering with constant-velocity models: KF3D over {x, y, z, dx, dy, dz} in world
// meters and KF2D over {x, y, s, a, dx, dy, da} in pixels (s = width/height, a = area).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "mono3dt/config.hpp"
#include "mono3dt/errors.hpp"
#include "mono3dt/geometry.hpp"

namespace mono3dt {

template <int N>
struct GaussianState {
  Eigen::Matrix<double, N, 1> mean = Eigen::Matrix<double, N, 1>::Zero();
  Eigen::Matrix<double, N, N> cov = Eigen::Matrix<double, N, N>::Identity();
};

template <int N>
GaussianState<N> kf_predict(const GaussianState<N>& s, const Eigen::Matrix<double, N, N>& transition,
                            const Eigen::Matrix<double, N, N>& process_noise) {
  GaussianState<N> out;
  out.mean = transition * s.mean;
  out.cov = transition * s.cov * transition.transpose() + process_noise;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

/// Measurement update in Joseph form, which keeps the covariance symmetric PSD.
template <int N, int M>
GaussianState<N> kf_update(const GaussianState<N>& s, const Eigen::Matrix<double, M, 1>& z,
                           const Eigen::Matrix<double, M, N>& obs, const Eigen::Matrix<double, M, M>& meas_noise) {
  const Eigen::Matrix<double, M, M> innov_cov = obs * s.cov * obs.transpose() + meas_noise;
  const Eigen::LLT<Eigen::Matrix<double, M, M>> llt(innov_cov);
  if (llt.info() != Eigen::Success || !(innov_cov.diagonal().minCoeff() > 0.0)) throw SingularInnovation();
  const Eigen::Matrix<double, N, M> gain = llt.solve(obs * s.cov.transpose()).transpose();
  GaussianState<N> out;
  out.mean = s.mean + gain * (z - obs * s.mean);
  const Eigen::Matrix<double, N, N> ikh = Eigen::Matrix<double, N, N>::Identity() - gain * obs;
  out.cov = ikh * s.cov * ikh.transpose() + gain * meas_noise * gain.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

// ---------------------------------------------------------------------------

using KF3DState = GaussianState<6>;

inline double kf3d_measurement_sigma(double depth, const KalmanNoise& n) {
  return std::max(n.min_measurement_sigma, n.depth_sigma_per_meter * std::abs(depth));
}

inline KF3DState kf3d_init(const Vec3& position, double depth, const KalmanNoise& n) {
  KF3DState s;
  s.mean.head<3>() = position;
  const double sigma = kf3d_measurement_sigma(depth, n);
  s.cov.setZero();
  s.cov.diagonal().head<3>().setConstant(sigma * sigma);
  s.cov.diagonal().tail<3>().setConstant(n.initial_velocity_var);
  return s;
}

inline KF3DState kf_predict(const KF3DState& s, const KalmanNoise& n) {
  Eigen::Matrix<double, 6, 6> f = Eigen::Matrix<double, 6, 6>::Identity();
  f.topRightCorner<3, 3>().setIdentity();
  Eigen::Matrix<double, 6, 6> q = Eigen::Matrix<double, 6, 6>::Zero();
  q.diagonal().head<3>().setConstant(n.position_process_var);
  q.diagonal().tail<3>().setConstant(n.velocity_process_var);
  return kf_predict<6>(s, f, q);
}

inline KF3DState kf_update(const KF3DState& s, const Vec3& observed, double depth, const KalmanNoise& n) {
  Eigen::Matrix<double, 3, 6> h = Eigen::Matrix<double, 3, 6>::Zero();
  h.leftCols<3>().setIdentity();
  const double sigma = kf3d_measurement_sigma(depth, n);
  const Eigen::Matrix3d r = Eigen::Matrix3d::Identity() * sigma * sigma;
  return kf_update<6, 3>(s, observed, h, r);
}

// ---------------------------------------------------------------------------

using KF2DState = GaussianState<7>;

inline Eigen::Vector4d kf2d_measurement(const Box2D& b) {
  const double w = std::max(b.width(), 1e-3);
  const double h = std::max(b.height(), 1e-3);
  return {0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max), w / h, w * h};
}

inline Box2D kf2d_box(const KF2DState& s) {
  const double ratio = std::max(s.mean(2), 1e-3);
  const double area = std::max(s.mean(3), 1e-3);
  const double w = std::sqrt(area * ratio);
  const double h = std::sqrt(area / ratio);
  return {s.mean(0) - 0.5 * w, s.mean(1) - 0.5 * h, s.mean(0) + 0.5 * w, s.mean(1) + 0.5 * h};
}

namespace detail {
inline Eigen::Matrix4d kf2d_meas_noise(double area, const KalmanNoise& n) {
  Eigen::Matrix4d r = Eigen::Matrix4d::Zero();
  const double sp = n.pixel_measurement_sigma;
  r(0, 0) = r(1, 1) = sp * sp;
  r(2, 2) = 0.01;
  const double sa = std::max(0.05 * std::abs(area), 1.0);
  r(3, 3) = sa * sa;
  return r;
}
}  // namespace detail

inline KF2DState kf2d_init(const Box2D& b, const KalmanNoise& n) {
  KF2DState s;
  s.mean.setZero();
  s.mean.head<4>() = kf2d_measurement(b);
  s.cov.setZero();
  s.cov.topLeftCorner<4, 4>() = detail::kf2d_meas_noise(s.mean(3), n);
  s.cov(4, 4) = s.cov(5, 5) = 100.0;
  const double sa = std::max(0.1 * s.mean(3), 1.0);
  s.cov(6, 6) = sa * sa;
  return s;
}

inline KF2DState kf_predict(const KF2DState& s, const KalmanNoise& n) {
  Eigen::Matrix<double, 7, 7> f = Eigen::Matrix<double, 7, 7>::Identity();
  f(0, 4) = f(1, 5) = f(3, 6) = 1.0;
  Eigen::Matrix<double, 7, 7> q = Eigen::Matrix<double, 7, 7>::Zero();
  q(0, 0) = q(1, 1) = n.pixel_process_var;
  q(2, 2) = 1e-4;
  const double sa = std::max(0.01 * std::abs(s.mean(3)), 1.0);
  q(3, 3) = sa * sa;
  q(4, 4) = q(5, 5) = n.pixel_process_var;
  q(6, 6) = sa * sa;
  return kf_predict<7>(s, f, q);
}

inline KF2DState kf_update(const KF2DState& s, const Box2D& observed, const KalmanNoise& n) {
  Eigen::Matrix<double, 4, 7> h = Eigen::Matrix<double, 4, 7>::Zero();
  h.leftCols<4>().setIdentity();
  const Eigen::Vector4d z = kf2d_measurement(observed);
  return kf_update<7, 4>(s, z, h, detail::kf2d_meas_noise(z(3), n));
}

}  // namespace mono3dt
