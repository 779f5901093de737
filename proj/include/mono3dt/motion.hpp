#pragma once

// Per-tracklet motion estimation in world coordinates. Each backend predicts a location one frame
// ahead; after association the tracker either updates it with an observation, lets it coast
// (occluded), or holds it in place (lost).

#include <optional>
#include <stdexcept>

#include "mono3dt/config.hpp"
#include "mono3dt/errors.hpp"
#include "mono3dt/geometry.hpp"
#include "mono3dt/kalman.hpp"
#include "mono3dt/lstm.hpp"
#include "mono3dt/types.hpp"

namespace mono3dt {

/// s + alpha (s* - s) with alpha = 1 - a_deep, applied to location, heading (short arc), size and
/// appearance. Velocity and the image-space fields are kept from `prev`.
inline ObjectState blend_update(const ObjectState& prev, const ObjectState& obs, double a_deep) {
  if (!(a_deep >= 0.0 && a_deep <= 1.0)) throw InvalidArgument("a_deep must lie in [0, 1]");
  const double alpha = 1.0 - a_deep;
  ObjectState s = prev;
  s.position = prev.position + alpha * (obs.position - prev.position);
  s.yaw = normalize_angle(prev.yaw + alpha * angle_diff(obs.yaw, prev.yaw));
  s.dims = prev.dims + alpha * (obs.dims - prev.dims);
  if (prev.appearance.size() == obs.appearance.size())
    s.appearance = prev.appearance + alpha * (obs.appearance - prev.appearance);
  else
    s.appearance = obs.appearance;
  return s;
}

class MotionEstimator {
 public:
  MotionEstimator() = default;

  static MotionEstimator start(MotionBackend backend, const ObjectState& obs, const Box2D& det_box,
                               const KalmanNoise& noise, const LstmWeights* weights) {
    MotionEstimator m;
    m.backend_ = backend;
    m.noise_ = noise;
    switch (backend) {
      case MotionBackend::none: break;
      case MotionBackend::kf2d: m.kf2d_ = kf2d_init(det_box, noise); break;
      case MotionBackend::kf3d: m.kf3d_ = kf3d_init(obs.position, obs.depth, noise); break;
      case MotionBackend::lstm:
        if (!weights) throw InvalidArgument("lstm motion backend requires weights");
        m.weights_ = weights;
        m.lstm_ = LstmMotionState::init(obs.position, weights->hidden);
        break;
    }
    return m;
  }

  MotionBackend backend() const { return backend_; }

  /// Location one frame ahead of `current`. Stores the predicted estimator state until the
  /// tracker calls update, coast or hold.
  Vec3 predict(const Vec3& current) {
    pending_ = true;
    switch (backend_) {
      case MotionBackend::none: predicted_ = current; break;
      case MotionBackend::kf2d:
        kf2d_pred_ = kf_predict(kf2d_, noise_);
        predicted_ = current;
        break;
      case MotionBackend::kf3d:
        kf3d_pred_ = kf_predict(kf3d_, noise_);
        predicted_ = kf3d_pred_.mean.head<3>();
        break;
      case MotionBackend::lstm:
        lstm_pred_ = lstm_;
        predicted_ = plstm_predict(lstm_pred_, *weights_, lstm_.refined);
        break;
    }
    return predicted_;
  }

  /// Image box predicted by the 2D filter; only the kf2d backend has one.
  std::optional<Box2D> predicted_box2d() const {
    if (backend_ != MotionBackend::kf2d || !pending_) return std::nullopt;
    return kf2d_box(kf2d_pred_);
  }

  /// Commits the prediction corrected by an observation; returns the new location. `blended` is
  /// the appearance-weighted location used by backends that do not filter in 3D.
  Vec3 update(const Vec3& observed, double depth, const Vec3& blended, const Box2D& det_box) {
    require_pending();
    pending_ = false;
    switch (backend_) {
      case MotionBackend::none: return blended;
      case MotionBackend::kf2d: kf2d_ = kf_update(kf2d_pred_, det_box, noise_); return blended;
      case MotionBackend::kf3d:
        kf3d_ = kf_update(kf3d_pred_, observed, depth, noise_);
        return kf3d_.mean.head<3>();
      case MotionBackend::lstm: {
        const Vec3 refined = ulstm_update(lstm_pred_, *weights_, predicted_, observed);
        lstm_ = lstm_pred_;
        return refined;
      }
    }
    return blended;
  }

  /// No observation but the object is believed hidden: keep moving along the prediction. The
  /// recurrent state and velocity history of the lstm backend are left untouched, so repeated
  /// coasting extrapolates linearly.
  Vec3 coast() {
    require_pending();
    pending_ = false;
    switch (backend_) {
      case MotionBackend::none: break;
      case MotionBackend::kf2d: kf2d_ = kf2d_pred_; break;
      case MotionBackend::kf3d: kf3d_ = kf3d_pred_; break;
      case MotionBackend::lstm: lstm_.refined = predicted_; break;
    }
    return predicted_;
  }

  /// Discards the prediction.
  void hold() {
    require_pending();
    pending_ = false;
  }

  /// Current velocity estimate for the filtering backends.
  std::optional<Vec3> velocity() const {
    if (backend_ == MotionBackend::kf3d) return Vec3(kf3d_.mean.tail<3>());
    return std::nullopt;
  }

  const KF3DState& kf3d() const { return kf3d_; }
  const KF2DState& kf2d() const { return kf2d_; }
  const LstmMotionState& lstm() const { return lstm_; }

 private:
  void require_pending() const {
    if (!pending_) throw std::logic_error("motion estimator has no pending prediction");
  }

  MotionBackend backend_ = MotionBackend::none;
  KalmanNoise noise_;
  const LstmWeights* weights_ = nullptr;
  KF3DState kf3d_, kf3d_pred_;
  KF2DState kf2d_, kf2d_pred_;
  LstmMotionState lstm_, lstm_pred_;
  Vec3 predicted_ = Vec3::Zero();
  bool pending_ = false;
};

/// A tracklet state as seen from one camera frame.
struct PredictedView {
  ObjectState state;
  Box2D box2d;
  bool outside_view = false;  // behind the camera or entirely off-image
};

/// Fills center projection, depth and the projected box of `s` under `cam`. `box_override`
/// replaces the projected box when a 2D motion model supplies one.
inline PredictedView view_state(const ObjectState& s, const CameraFrame& cam,
                                const std::optional<Box2D>& box_override = std::nullopt) {
  PredictedView v;
  v.state = s;
  const Vec3 pc = cam.pose.to_camera(s.position);
  if (pc.z() <= kMinCameraZ) {
    v.state.depth = pc.z();
    v.outside_view = true;
    return v;
  }
  const Projection p = project_point(s.position, cam);
  v.state.center_proj = p.pixel;
  v.state.depth = p.depth;
  try {
    v.box2d = box_override ? clip_to_image(*box_override, cam.intrinsics) : project_box(s.box(), cam);
  } catch (const BoxBehindCamera&) {
    v.outside_view = true;
    return v;
  }
  if (!(v.box2d.area() > 0.0)) v.outside_view = true;
  return v;
}

/// Advances the tracklet's motion model one frame and re-projects the prediction through the
/// current camera.
inline PredictedView predict_tracklet(MotionEstimator& motion, const ObjectState& current, const CameraFrame& cam) {
  ObjectState s = current;
  s.position = motion.predict(current.position);
  return view_state(s, cam, motion.predicted_box2d());
}

}  // namespace mono3dt
