#pragma once

// Camera model, box primitives and overlap measures.
//
// Conventions used throughout the library:
//   * world frame: right-handed, +z up, ground plane z = 0; yaw rotates +x toward +y.
//   * camera frame: +x right, +y down, +z forward (optical axis).
//   * CameraPose maps world to camera: X_cam = R * X_world + t.
//   * angles are radians; Box3D yaw is kept in [0, 2*pi).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "mono3dt/errors.hpp"

namespace mono3dt {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kMinCameraZ = 1e-6;

/// Maps any finite angle into [0, 2*pi).
inline double normalize_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // fmod of a value a hair below a multiple of 2*pi can round up to exactly 2*pi.
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

/// Maps any finite angle into (-pi, pi].
inline double wrap_to_pi(double a) {
  double r = normalize_angle(a);
  if (r > kPi) r -= kTwoPi;
  return r;
}

/// Signed shortest rotation taking `from` onto `to`.
inline double angle_diff(double to, double from) { return wrap_to_pi(to - from); }

struct CameraIntrinsics {
  double focal_x = 1000.0;
  double focal_y = 1000.0;
  double principal_x = 960.0;
  double principal_y = 540.0;
  double image_width = 1920.0;
  double image_height = 1080.0;

  void validate() const {
    if (!(focal_x > 0.0) || !(focal_y > 0.0)) throw InvalidArgument("focal lengths must be positive");
    if (!(image_width > 0.0) || !(image_height > 0.0)) throw InvalidArgument("image size must be positive");
    if (principal_x < 0.0 || principal_x > image_width || principal_y < 0.0 || principal_y > image_height)
      throw InvalidArgument("principal point outside the image");
  }

  double diagonal() const { return std::hypot(image_width, image_height); }

  bool operator==(const CameraIntrinsics&) const = default;
};

struct CameraPose {
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();

  void validate() const {
    const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
    if (err.cwiseAbs().maxCoeff() > 1e-9) throw InvalidArgument("rotation is not orthonormal");
    if (rotation.determinant() < 0.0) throw InvalidArgument("rotation has negative determinant");
  }

  /// Camera optical center in world coordinates.
  Vec3 center() const { return -rotation.transpose() * translation; }

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 to_world(const Vec3& cam) const { return rotation.transpose() * (cam - translation); }

  /// Level camera at `position` looking along world heading `heading`.
  static CameraPose level(const Vec3& position, double heading) {
    const Vec3 forward(std::cos(heading), std::sin(heading), 0.0);
    const Vec3 right(std::sin(heading), -std::cos(heading), 0.0);
    const Vec3 down(0.0, 0.0, -1.0);
    CameraPose p;
    p.rotation.row(0) = right.transpose();
    p.rotation.row(1) = down.transpose();
    p.rotation.row(2) = forward.transpose();
    p.translation = -p.rotation * position;
    return p;
  }

  bool operator==(const CameraPose& o) const { return rotation == o.rotation && translation == o.translation; }
};

/// Intrinsics plus the pose for one timestamp.
struct CameraFrame {
  CameraIntrinsics intrinsics;
  CameraPose pose;
};

struct Box2D {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  Vec2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
  bool valid() const { return x_min <= x_max && y_min <= y_max; }

  bool operator==(const Box2D&) const = default;
};

inline Box2D intersect(const Box2D& a, const Box2D& b) {
  Box2D r{std::max(a.x_min, b.x_min), std::max(a.y_min, b.y_min), std::min(a.x_max, b.x_max),
          std::min(a.y_max, b.y_max)};
  if (r.x_min > r.x_max) r.x_max = r.x_min;
  if (r.y_min > r.y_max) r.y_max = r.y_min;
  return r;
}

inline double intersection_area(const Box2D& a, const Box2D& b) { return intersect(a, b).area(); }

inline double iou_2d(const Box2D& a, const Box2D& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Oriented box in world coordinates. Dimensions are (length along heading, width, height).
class Box3D {
 public:
  Vec3 center = Vec3::Zero();
  Vec3 dims = Vec3::Ones();

  Box3D() = default;
  Box3D(const Vec3& c, const Vec3& d, double yaw) : center(c), dims(d), yaw_(normalize_angle(yaw)) {}

  double yaw() const { return yaw_; }
  void set_yaw(double yaw) { yaw_ = normalize_angle(yaw); }

  double length() const { return dims.x(); }
  double width() const { return dims.y(); }
  double height() const { return dims.z(); }
  double volume() const { return dims.x() * dims.y() * dims.z(); }
  bool valid() const { return dims.x() > 0.0 && dims.y() > 0.0 && dims.z() > 0.0; }

  bool operator==(const Box3D& o) const { return center == o.center && dims == o.dims && yaw_ == o.yaw_; }

 private:
  double yaw_ = 0.0;
};

struct Projection {
  Vec2 pixel;
  double depth;
};

inline Projection project_point(const Vec3& world, const CameraFrame& frame) {
  const Vec3 cam = frame.pose.to_camera(world);
  if (!(cam.z() > kMinCameraZ)) throw PointBehindCamera();
  const auto& k = frame.intrinsics;
  return {{k.focal_x * cam.x() / cam.z() + k.principal_x, k.focal_y * cam.y() / cam.z() + k.principal_y},
          cam.z()};
}

inline Vec3 backproject(const Vec2& pixel, double depth, const CameraFrame& frame) {
  if (!(depth > 0.0)) throw NonPositiveDepth();
  const auto& k = frame.intrinsics;
  const Vec3 cam((pixel.x() - k.principal_x) / k.focal_x * depth, (pixel.y() - k.principal_y) / k.focal_y * depth,
                 depth);
  return frame.pose.to_world(cam);
}

/// Camera-frame depth of a world point (may be negative).
inline double camera_depth(const Vec3& world, const CameraPose& pose) { return pose.to_camera(world).z(); }

// Observation angle <-> camera-frame heading. x_hat is measured from the horizontal image center.
inline double alpha_to_theta(double theta_local, double x_c, const CameraIntrinsics& k) {
  const double x_hat = x_c - 0.5 * k.image_width;
  return normalize_angle(theta_local + std::atan(x_hat / k.focal_x));
}

inline double theta_to_alpha(double theta, double x_c, const CameraIntrinsics& k) {
  const double x_hat = x_c - 0.5 * k.image_width;
  return normalize_angle(theta - std::atan(x_hat / k.focal_x));
}

// Camera-frame heading is measured in the camera x-z plane from +z toward +x. These two
// conversions are exact inverses for level cameras (camera y axis parallel to world -z).
inline double camera_heading_from_world(double yaw, const CameraPose& pose) {
  const Vec3 dir = pose.rotation * Vec3(std::cos(yaw), std::sin(yaw), 0.0);
  return normalize_angle(std::atan2(dir.x(), dir.z()));
}

inline double world_yaw_from_camera(double theta, const CameraPose& pose) {
  const Vec3 dir = pose.rotation.transpose() * Vec3(std::sin(theta), 0.0, std::cos(theta));
  return normalize_angle(std::atan2(dir.y(), dir.x()));
}

/// Corner order: bit 0 selects -/+ length, bit 1 -/+ width, bit 2 -/+ height.
inline std::array<Vec3, 8> box3d_corners(const Box3D& b) {
  const double c = std::cos(b.yaw());
  const double s = std::sin(b.yaw());
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const double ol = ((i & 1) ? 0.5 : -0.5) * b.length();
    const double ow = ((i & 2) ? 0.5 : -0.5) * b.width();
    const double oh = ((i & 4) ? 0.5 : -0.5) * b.height();
    out[i] = b.center + Vec3(c * ol - s * ow, s * ol + c * ow, oh);
  }
  return out;
}

inline Box2D clip_to_image(Box2D b, const CameraIntrinsics& k) {
  b.x_min = std::clamp(b.x_min, 0.0, k.image_width);
  b.x_max = std::clamp(b.x_max, 0.0, k.image_width);
  b.y_min = std::clamp(b.y_min, 0.0, k.image_height);
  b.y_max = std::clamp(b.y_max, 0.0, k.image_height);
  return b;
}

/// Axis-aligned hull of the corners in front of the camera, clipped to the image. Boxes that
/// straddle the image plane are truncated rather than rejected.
inline Box2D project_box(const Box3D& b, const CameraFrame& frame) {
  const auto corners = box3d_corners(b);
  const auto& k = frame.intrinsics;
  bool any = false;
  Box2D hull{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : corners) {
    const Vec3 cam = frame.pose.to_camera(p);
    if (!(cam.z() > kMinCameraZ)) continue;
    any = true;
    const double u = k.focal_x * cam.x() / cam.z() + k.principal_x;
    const double v = k.focal_y * cam.y() / cam.z() + k.principal_y;
    hull.x_min = std::min(hull.x_min, u);
    hull.x_max = std::max(hull.x_max, u);
    hull.y_min = std::min(hull.y_min, v);
    hull.y_max = std::max(hull.y_max, v);
  }
  if (!any) throw BoxBehindCamera();
  return clip_to_image(hull, k);
}

// ---------------------------------------------------------------------------
// Bird's-eye-view overlap of oriented boxes.

using Polygon2 = std::vector<Vec2>;

/// BEV footprint, counter-clockwise.
inline std::array<Vec2, 4> bev_rectangle(const Box3D& b) {
  const double c = std::cos(b.yaw());
  const double s = std::sin(b.yaw());
  const double hl = 0.5 * b.length();
  const double hw = 0.5 * b.width();
  const std::array<Vec2, 4> local{Vec2(hl, hw), Vec2(-hl, hw), Vec2(-hl, -hw), Vec2(hl, -hw)};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = Vec2(b.center.x() + c * local[i].x() - s * local[i].y(),
                  b.center.y() + s * local[i].x() + c * local[i].y());
  }
  return out;
}

inline double polygon_area(const Polygon2& poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    acc += a.x() * b.y() - a.y() * b.x();
  }
  return 0.5 * std::abs(acc);
}

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Keeps the part of `subject` on the left of the directed edge e0->e1.
inline Polygon2 clip_half_plane(const Polygon2& subject, const Vec2& e0, const Vec2& e1) {
  constexpr double kTol = 1e-12;
  Polygon2 out;
  if (subject.empty()) return out;
  const Vec2 edge = e1 - e0;
  auto side = [&](const Vec2& p) { return cross2(edge, p - e0); };
  for (std::size_t i = 0; i < subject.size(); ++i) {
    const Vec2& cur = subject[i];
    const Vec2& nxt = subject[(i + 1) % subject.size()];
    const double sc = side(cur);
    const double sn = side(nxt);
    const bool cur_in = sc >= -kTol;
    const bool nxt_in = sn >= -kTol;
    if (cur_in) out.push_back(cur);
    if (cur_in != nxt_in) {
      const double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

}  // namespace detail

/// Area of the intersection of two convex counter-clockwise polygons.
inline double convex_intersection_area(const Polygon2& a, const Polygon2& b) {
  Polygon2 poly = a;
  for (std::size_t i = 0; i < b.size() && !poly.empty(); ++i) {
    poly = detail::clip_half_plane(poly, b[i], b[(i + 1) % b.size()]);
  }
  return polygon_area(poly);
}

inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto ra = bev_rectangle(a);
  const auto rb = bev_rectangle(b);
  const double area = convex_intersection_area(Polygon2(ra.begin(), ra.end()), Polygon2(rb.begin(), rb.end()));
  return std::clamp(area, 0.0, std::min(a.length() * a.width(), b.length() * b.width()));
}

inline double iou_3d(const Box3D& a, const Box3D& b) {
  if (a == b) return a.valid() ? 1.0 : 0.0;
  const double z_lo = std::max(a.center.z() - 0.5 * a.height(), b.center.z() - 0.5 * b.height());
  const double z_hi = std::min(a.center.z() + 0.5 * a.height(), b.center.z() + 0.5 * b.height());
  const double dz = z_hi - z_lo;
  if (dz <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * dz;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace mono3dt
