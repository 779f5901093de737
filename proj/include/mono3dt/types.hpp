#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mono3dt/geometry.hpp"

namespace mono3dt {

using Vector = Eigen::VectorXd;

/// Per-frame object state: world location, heading, size, appearance and velocity, plus the
/// image-space center projection and camera depth for the frame it was observed or predicted in.
struct ObjectState {
  Vec3 position = Vec3::Zero();  // meters, world
  double yaw = 0.0;              // radians, world
  Vec3 dims = Vec3::Ones();      // (l, w, h) meters
  Vector appearance;
  Vec3 velocity = Vec3::Zero();  // meters per frame
  Vec2 center_proj = Vec2::Zero();
  double depth = 0.0;

  Box3D box() const { return {position, dims, yaw}; }
};

struct DetectionRecord {
  int frame_index = 0;
  Box2D box2d;
  Vec2 center_proj = Vec2::Zero();
  double depth = 1.0;
  double yaw_local = 0.0;
  Vec3 dims = Vec3::Ones();
  Vector appearance;
  double score = 1.0;

  bool operator==(const DetectionRecord& o) const {
    return frame_index == o.frame_index && box2d == o.box2d && center_proj == o.center_proj && depth == o.depth &&
           yaw_local == o.yaw_local && dims == o.dims && appearance.size() == o.appearance.size() &&
           appearance == o.appearance && score == o.score;
  }
};

/// World-frame state decoded from a detection under the given camera.
inline ObjectState decode_detection(const DetectionRecord& det, const CameraFrame& frame) {
  ObjectState s;
  s.position = backproject(det.center_proj, det.depth, frame);
  const double heading = alpha_to_theta(det.yaw_local, det.center_proj.x(), frame.intrinsics);
  s.yaw = world_yaw_from_camera(heading, frame.pose);
  s.dims = det.dims;
  s.appearance = det.appearance;
  s.center_proj = det.center_proj;
  s.depth = det.depth;
  return s;
}

enum class TrackStatus : std::uint8_t { birth, tracked, occluded, lost, dead };

inline std::string_view to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::birth: return "birth";
    case TrackStatus::tracked: return "tracked";
    case TrackStatus::occluded: return "occluded";
    case TrackStatus::lost: return "lost";
    case TrackStatus::dead: return "dead";
  }
  return "unknown";
}

struct TrackRecord {
  int frame_index = 0;
  int track_id = 0;
  Box3D box;
  Vec3 velocity = Vec3::Zero();
  Box2D box2d;
  TrackStatus status = TrackStatus::tracked;

  bool operator==(const TrackRecord&) const = default;
};

struct SequenceInput {
  CameraIntrinsics intrinsics;
  int first_frame = 0;
  std::vector<CameraPose> poses;                        // index = frame - first_frame
  std::vector<std::vector<DetectionRecord>> detections;  // same indexing

  std::size_t frame_count() const { return poses.size(); }
  CameraFrame camera(std::size_t i) const { return {intrinsics, poses.at(i)}; }
};

}  // namespace mono3dt
