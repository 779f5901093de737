#pragma once

// Synthetic driving scenarios: a flat world with lanes, vehicles under constant-velocity /
// constant-turn-rate kinematics (optionally with an oscillating speed), an ego camera, and noisy
// monocular detections with box-based occlusion.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mono3dt/association.hpp"
#include "mono3dt/errors.hpp"
#include "mono3dt/geometry.hpp"
#include "mono3dt/io.hpp"
#include "mono3dt/lstm.hpp"
#include "mono3dt/types.hpp"

namespace mono3dt {

enum class EgoPath : std::uint8_t { fixed, straight, turning };
enum class Preset : std::uint8_t { open_road, crossing_occlusion, reappearance, dense };

inline std::string_view to_string(EgoPath e) {
  switch (e) {
    case EgoPath::fixed: return "static";
    case EgoPath::straight: return "straight";
    case EgoPath::turning: return "turning";
  }
  return "unknown";
}

inline std::optional<EgoPath> parse_ego_path(std::string_view s) {
  if (s == "static") return EgoPath::fixed;
  if (s == "straight") return EgoPath::straight;
  if (s == "turning") return EgoPath::turning;
  return std::nullopt;
}

inline std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::open_road: return "open_road";
    case Preset::crossing_occlusion: return "crossing_occlusion";
    case Preset::reappearance: return "reappearance";
    case Preset::dense: return "dense";
  }
  return "unknown";
}

inline std::optional<Preset> parse_preset(std::string_view s) {
  if (s == "open_road") return Preset::open_road;
  if (s == "crossing_occlusion") return Preset::crossing_occlusion;
  if (s == "reappearance") return Preset::reappearance;
  if (s == "dense") return Preset::dense;
  return std::nullopt;
}

struct SensorNoise {
  double pixel_sigma = 2.0;            // box corners and projected center, px
  double depth_sigma_per_meter = 0.05; // depth sigma = k * depth
  double yaw_sigma = 0.05;             // rad
  double dim_sigma = 0.05;             // m
  double appearance_sigma = 0.02;
  double score_sigma = 0.05;
  double dropout = 0.05;               // probability a detectable object is missed

  static SensorNoise none() { return {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}; }
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  int frames = 100;
  Preset preset = Preset::open_road;
  std::optional<int> n_vehicles;        // preset default when absent
  std::optional<EgoPath> ego_path;      // preset default when absent
  double ego_speed = 1.0;               // m/frame
  double ego_yaw_rate = 0.01;           // rad/frame, turning path
  double speed_min = 0.6;               // m/frame, vehicle base speed range
  double speed_max = 1.4;
  double yaw_rate_max = 0.0;            // rad/frame, |yaw rate| drawn from [0, max]
  double accel_amplitude = 0.0;         // m/frame, amplitude of the speed oscillation
  double accel_period_min = 20.0;       // frames
  double accel_period_max = 60.0;
  double spawn_radius = 120.0;          // m
  int appearance_dim = 16;
  double appearance_scale = 0.1;        // per-identity embedding spread
  double camera_height = 1.65;          // m
  double min_box_area = 256.0;          // px^2, smaller boxes are not detected
  double drop_cover = 0.95;             // cover fraction at which a vehicle is not detected
  double max_truncation = 0.5;          // fraction of the projected box outside the image
  int min_run_before_gap = 5;           // frames a vehicle is seen before it may vanish and return
  int max_attempts = 64;                // world redraws allowed to satisfy min_run_before_gap
  SensorNoise noise;
  CameraIntrinsics intrinsics;

  void validate() const {
    if (frames < 1) throw OutOfRangeValue("frames must be at least 1");
    if (n_vehicles && *n_vehicles < 0) throw OutOfRangeValue("n_vehicles must be non-negative");
    const auto& n = noise;
    if (n.pixel_sigma < 0 || n.depth_sigma_per_meter < 0 || n.yaw_sigma < 0 || n.dim_sigma < 0 ||
        n.appearance_sigma < 0 || n.score_sigma < 0)
      throw OutOfRangeValue("noise sigmas must be non-negative");
    if (!(n.dropout >= 0.0 && n.dropout < 1.0)) throw OutOfRangeValue("dropout must lie in [0, 1)");
    if (!(speed_min >= 0.0 && speed_min <= speed_max)) throw OutOfRangeValue("invalid speed range");
    if (yaw_rate_max < 0.0 || accel_amplitude < 0.0) throw OutOfRangeValue("kinematic ranges must be non-negative");
    if (!(accel_period_min > 0.0 && accel_period_min <= accel_period_max)) throw OutOfRangeValue("invalid accel period");
    if (!(spawn_radius > 0.0)) throw OutOfRangeValue("spawn_radius must be positive");
    if (appearance_dim < 1) throw OutOfRangeValue("appearance_dim must be positive");
    if (!(drop_cover > 0.0 && drop_cover <= 1.0)) throw OutOfRangeValue("drop_cover must lie in (0, 1]");
    if (!(max_truncation >= 0.0 && max_truncation <= 1.0)) throw OutOfRangeValue("max_truncation must lie in [0, 1]");
    if (min_run_before_gap < 0 || max_attempts < 1) throw OutOfRangeValue("invalid redraw settings");
    intrinsics.validate();
  }
};

struct VehicleTruth {
  int id = 0;
  Vec3 dims = Vec3::Ones();
  Vector appearance;
  std::vector<Vec3> position;  // per frame, world
  std::vector<double> yaw;
  std::vector<Vec3> velocity;  // position[t + 1] - position[t]
};

struct WorldTruth {
  CameraIntrinsics intrinsics;
  int first_frame = 0;
  std::vector<CameraPose> poses;
  std::vector<VehicleTruth> vehicles;

  int frame_count() const { return static_cast<int>(poses.size()); }
  CameraFrame camera(int t) const { return {intrinsics, poses.at(static_cast<std::size_t>(t))}; }
  Box3D box(const VehicleTruth& v, int t) const {
    return {v.position[static_cast<std::size_t>(t)], v.dims, v.yaw[static_cast<std::size_t>(t)]};
  }
};

namespace sim_detail {

struct Motion {
  double speed = 1.0;
  double yaw_rate = 0.0;
  double accel_amplitude = 0.0;
  double accel_period = 40.0;
  double accel_phase = 0.0;
};

struct Spawn {
  Vec3 dims;
  Vec2 xy;  // world ground position
  double yaw = 0.0;
  Motion motion;
};

inline Vec3 car_dims(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {4.2 + 0.3 * u(rng), 1.8 + 0.1 * u(rng), 1.5 + 0.1 * u(rng)};
}

inline Vec3 truck_dims(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {10.0 + 1.5 * u(rng), 2.5 + 0.05 * u(rng), 3.2 + 0.2 * u(rng)};
}

inline Vec3 random_dims(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < 0.15 ? truck_dims(rng) : car_dims(rng);
}

inline Motion random_motion(std::mt19937_64& rng, const ScenarioConfig& c, double base_speed) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Motion m;
  m.speed = base_speed;
  m.yaw_rate = c.yaw_rate_max * (2.0 * u(rng) - 1.0);
  m.accel_amplitude = c.accel_amplitude * (0.5 + 0.5 * u(rng));
  m.accel_period = c.accel_period_min + (c.accel_period_max - c.accel_period_min) * u(rng);
  m.accel_phase = kTwoPi * u(rng);
  return m;
}

inline std::vector<CameraPose> ego_poses(const ScenarioConfig& c, EgoPath path) {
  std::vector<CameraPose> poses;
  Vec3 pos(0.0, 0.0, c.camera_height);
  double heading = 0.0;
  for (int t = 0; t < c.frames; ++t) {
    poses.push_back(CameraPose::level(pos, heading));
    if (path == EgoPath::fixed) continue;
    pos += c.ego_speed * Vec3(std::cos(heading), std::sin(heading), 0.0);
    if (path == EgoPath::turning) heading += c.ego_yaw_rate;
  }
  return poses;
}

/// Vehicles on parallel lanes (world y = lane offset), placed along x with at least `gap` meters
/// between same-lane centers.
struct LaneSpec {
  double y;
  double direction;  // +1 along +x, -1 oncoming
  double base_speed;
};

inline std::vector<Spawn> lane_traffic(std::mt19937_64& rng, const ScenarioConfig& c, const std::vector<LaneSpec>& lanes,
                                       int count, double x_min, double x_max, double gap) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> taken(lanes.size());
  std::vector<Spawn> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count && attempts < 2000 * std::max(count, 1)) {
    ++attempts;
    const auto li = static_cast<std::size_t>(u(rng) * static_cast<double>(lanes.size())) % lanes.size();
    const double x = x_min + (x_max - x_min) * u(rng);
    if (std::hypot(x, lanes[li].y) > c.spawn_radius) continue;
    bool ok = true;
    for (const double o : taken[li]) ok = ok && std::abs(o - x) >= gap;
    if (!ok) continue;
    taken[li].push_back(x);
    Spawn s;
    s.dims = random_dims(rng);
    s.xy = {x, lanes[li].y};
    s.yaw = lanes[li].direction > 0 ? 0.0 : kPi;
    s.motion = random_motion(rng, c, lanes[li].base_speed + 0.03 * (2.0 * u(rng) - 1.0));
    s.motion.yaw_rate = 0.0;
    out.push_back(s);
  }
  return out;
}

inline VehicleTruth integrate(const Spawn& s, int frames) {
  VehicleTruth v;
  v.dims = s.dims;
  Vec3 p(s.xy.x(), s.xy.y(), 0.5 * s.dims.z());
  double yaw = s.yaw;
  for (int t = 0; t <= frames; ++t) {
    const auto& m = s.motion;
    const double speed =
        std::max(0.0, m.speed + m.accel_amplitude * std::sin(kTwoPi * t / m.accel_period + m.accel_phase));
    const Vec3 step = speed * Vec3(std::cos(yaw), std::sin(yaw), 0.0);
    if (t < frames) {
      v.position.push_back(p);
      v.yaw.push_back(normalize_angle(yaw));
      v.velocity.push_back(step);
    }
    p += step;
    yaw += m.yaw_rate;
  }
  return v;
}

}  // namespace sim_detail

/// Fraction of `target` hidden behind `occluder` as seen from `cam` (box rule, occluder assumed
/// nearer).
inline double box_cover(const Box3D& target, const Box3D& occluder, const CameraFrame& cam) {
  const Box2D a = project_box(target, cam);
  const Box2D b = project_box(occluder, cam);
  return a.area() > 0.0 ? intersection_area(a, b) / a.area() : 0.0;
}

namespace sim_detail {

/// Crossing preset: a parked truck broadside to the camera and a car crossing behind it. The car
/// speed is chosen so that exactly `occluded_frames` frames have cover >= drop_cover.
inline std::vector<Spawn> crossing_scene(std::mt19937_64& rng, const ScenarioConfig& c, const CameraPose& pose,
                                         int occluded_frames) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const CameraFrame cam{c.intrinsics, pose};
  Spawn truck;
  truck.dims = truck_dims(rng);
  truck.xy = {14.0 + 3.0 * u(rng), 0.0};
  truck.yaw = kPi / 2.0;
  truck.motion.speed = 0.0;
  Spawn car;
  car.dims = car_dims(rng);
  const double car_x = truck.xy.x() + 8.0 + 6.0 * u(rng);
  const double dir = u(rng) < 0.5 ? 1.0 : -1.0;
  car.yaw = dir > 0 ? kPi / 2.0 : -kPi / 2.0;

  const Box3D tb({truck.xy.x(), truck.xy.y(), 0.5 * truck.dims.z()}, truck.dims, truck.yaw);
  auto cover_at = [&](double y) {
    return box_cover(Box3D({car_x, y, 0.5 * car.dims.z()}, car.dims, car.yaw), tb, cam);
  };
  // Interval [lo, hi] of lateral positions with cover >= drop_cover, by bisection from y = 0.
  if (cover_at(0.0) < c.drop_cover) throw InvalidArgument("crossing scene does not occlude");
  auto edge = [&](double sign) {
    double in = 0.0, out = sign * 40.0;
    for (int i = 0; i < 100; ++i) {
      const double mid = 0.5 * (in + out);
      (cover_at(mid) >= c.drop_cover ? in : out) = mid;
    }
    return in;
  };
  const double lo = edge(-1.0), hi = edge(1.0);
  const double width = hi - lo;
  // Frames k = 0..n-1 fall inside when the first inside sample sits a quarter step past the edge.
  const double speed = width / (static_cast<double>(occluded_frames) - 0.5);
  const int enter = std::max(1, c.frames / 2 - occluded_frames / 2);
  const double y_enter = dir > 0 ? lo + 0.25 * speed : hi - 0.25 * speed;
  car.xy = {car_x, y_enter - dir * speed * enter};
  car.motion.speed = speed;
  return {truck, car};
}

/// Reappearance preset: the ego drives straight; a truck in the adjacent lane overtakes and hides a
/// car two lanes over for well under max_lost_age frames, after which the car reappears.
inline std::vector<Spawn> reappearance_scene(std::mt19937_64& rng, const ScenarioConfig& c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double v = c.ego_speed;
  Spawn car;
  car.dims = car_dims(rng);
  car.xy = {32.0 + 6.0 * u(rng), 7.5};
  car.motion.speed = v;
  Spawn truck;
  truck.dims = truck_dims(rng);
  // Sight line to the car crosses the truck lane at x = car_x * 3.75 / 7.5.
  const double cross = car.xy.x() * 0.5;
  const double rel = 1.2 + 0.2 * u(rng);
  truck.xy = {cross - rel * 0.3 * c.frames, 3.75};
  truck.motion.speed = v + rel;
  return {car, truck};
}

}  // namespace sim_detail

struct VisibilityInfo {
  int vehicle_id = 0;
  bool in_view = false;      // some corner in front of the camera and a non-empty clipped box
  bool detectable = false;   // would produce a detection without dropout
  bool detected = false;
  bool hidden = false;       // in view but covered by at least drop_cover
  double cover = 0.0;        // by nearer vehicles
  double truncation = 1.0;   // fraction of the unclipped projection outside the image
  Box2D box2d;               // exact clipped hull
  double depth = 0.0;        // camera depth of the center
};

namespace sim_detail {
/// 1 - clipped / unclipped projected area; 1 when the box straddles the image plane.
inline double truncation(const Box3D& b, const CameraFrame& cam) {
  Box2D hull{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : box3d_corners(b)) {
    const Vec3 pc = cam.pose.to_camera(p);
    if (!(pc.z() > kMinCameraZ)) return 1.0;
    const Projection q = project_point(p, cam);
    hull.x_min = std::min(hull.x_min, q.pixel.x());
    hull.x_max = std::max(hull.x_max, q.pixel.x());
    hull.y_min = std::min(hull.y_min, q.pixel.y());
    hull.y_max = std::max(hull.y_max, q.pixel.y());
  }
  const double full = hull.area();
  return full > 0.0 ? 1.0 - clip_to_image(hull, cam.intrinsics).area() / full : 1.0;
}
}  // namespace sim_detail

/// Geometric visibility of every vehicle at frame t. A vehicle is detectable when its center is at
/// least 1 m in front of the camera, its clipped box covers at least min_box_area pixels, at most
/// max_truncation of its projection falls outside the image and less than drop_cover of the box is
/// hidden by nearer vehicles.
inline std::vector<VisibilityInfo> frame_visibility(const WorldTruth& w, const ScenarioConfig& c, int t) {
  const CameraFrame cam = w.camera(t);
  std::vector<VisibilityInfo> vis(w.vehicles.size());
  std::vector<OverlapCandidate> cands(w.vehicles.size());
  for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
    const auto& v = w.vehicles[i];
    auto& vi = vis[i];
    vi.vehicle_id = v.id;
    const Box3D b = w.box(v, t);
    vi.depth = camera_depth(b.center, cam.pose);
    vi.truncation = sim_detail::truncation(b, cam);
    try {
      vi.box2d = project_box(b, cam);
      vi.in_view = vi.box2d.area() > 0.0;
    } catch (const BoxBehindCamera&) {
      vi.in_view = false;
    }
    cands[i] = {vi.box2d, vi.depth, b.dims, vi.in_view};
  }
  const std::vector<double> cover = detect_occlusions(cands);
  for (std::size_t i = 0; i < vis.size(); ++i) {
    auto& vi = vis[i];
    vi.cover = cover[i];
    vi.hidden = vi.in_view && vi.cover >= c.drop_cover;
    vi.detectable = vi.in_view && !vi.hidden && vi.depth >= 1.0 && vi.box2d.area() >= c.min_box_area &&
                    vi.truncation <= c.max_truncation;
  }
  return vis;
}

namespace sim_detail {
/// True when no vehicle vanishes and later returns after fewer than `min_run` detectable frames.
inline bool runs_well_posed(const WorldTruth& w, const ScenarioConfig& c, int min_run) {
  if (min_run <= 1) return true;
  std::vector<std::vector<char>> seen(w.vehicles.size(), std::vector<char>(static_cast<std::size_t>(w.frame_count())));
  for (int t = 0; t < w.frame_count(); ++t) {
    const auto vis = frame_visibility(w, c, t);
    for (std::size_t i = 0; i < vis.size(); ++i) seen[i][static_cast<std::size_t>(t)] = vis[i].detectable;
  }
  for (const auto& s : seen) {
    int run = 0;
    bool gap_after_short = false;
    for (std::size_t t = 0; t < s.size(); ++t) {
      if (s[t]) {
        if (gap_after_short) return false;
        ++run;
      } else if (run > 0) {
        if (run < min_run) gap_after_short = true;
        run = 0;
      }
    }
  }
  return true;
}
}  // namespace sim_detail

/// Deterministic in the config. Worlds in which a vehicle is hidden and reappears after being seen
/// for fewer than min_run_before_gap frames are redrawn.
inline WorldTruth generate_world(const ScenarioConfig& c);

namespace sim_detail {
inline WorldTruth generate_world_once(const ScenarioConfig& c, std::uint64_t attempt) {
  std::mt19937_64 rng(c.seed * 0x9E3779B97F4A7C15ull + 1 + attempt * 0xBF58476D1CE4E5B9ull);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  WorldTruth w;
  w.intrinsics = c.intrinsics;
  std::vector<Spawn> spawns;
  EgoPath path = EgoPath::straight;
  switch (c.preset) {
    case Preset::open_road: {
      path = c.ego_path.value_or(EgoPath::straight);
      const double ego_v = path == EgoPath::fixed ? 0.0 : c.ego_speed;
      std::vector<LaneSpec> lanes;
      for (const double y : {-3.75, 0.0, 3.75}) {
        const double base = std::clamp(ego_v + (u(rng) - 0.5) * 0.4, c.speed_min, c.speed_max);
        lanes.push_back({y, 1.0, base});
      }
      spawns = lane_traffic(rng, c, lanes, c.n_vehicles.value_or(8), 12.0, 90.0, 20.0);
      break;
    }
    case Preset::dense: {
      path = c.ego_path.value_or(EgoPath::straight);
      const double ego_v = path == EgoPath::fixed ? 0.0 : c.ego_speed;
      std::vector<LaneSpec> lanes;
      for (const double y : {0.0, 3.75, 7.5}) {
        const double base = std::clamp(ego_v + (u(rng) - 0.5) * 0.4, c.speed_min, c.speed_max);
        lanes.push_back({y, 1.0, base});
      }
      for (const double y : {-3.75, -7.5}) lanes.push_back({y, -1.0, c.speed_min + (c.speed_max - c.speed_min) * u(rng)});
      spawns = lane_traffic(rng, c, lanes, c.n_vehicles.value_or(30), 8.0, c.spawn_radius, 20.0);
      break;
    }
    case Preset::crossing_occlusion: {
      path = EgoPath::fixed;
      const auto poses = ego_poses(c, path);
      spawns = crossing_scene(rng, c, poses.front(), 8);
      break;
    }
    case Preset::reappearance: {
      path = EgoPath::straight;
      spawns = reappearance_scene(rng, c);
      break;
    }
  }
  // Traffic placed relative to the ego start is kept in world coordinates.
  w.poses = ego_poses(c, path);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int id = 0;
  for (const auto& s : spawns) {
    VehicleTruth v = integrate(s, c.frames);
    v.id = id++;
    v.appearance.resize(c.appearance_dim);
    for (Eigen::Index k = 0; k < v.appearance.size(); ++k) v.appearance(k) = c.appearance_scale * gauss(rng);
    w.vehicles.push_back(std::move(v));
  }
  return w;
}
}  // namespace sim_detail

inline WorldTruth generate_world(const ScenarioConfig& c) {
  c.validate();
  WorldTruth w;
  for (int attempt = 0; attempt < c.max_attempts; ++attempt) {
    w = sim_detail::generate_world_once(c, static_cast<std::uint64_t>(attempt));
    if (sim_detail::runs_well_posed(w, c, c.min_run_before_gap)) break;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderedScenario {
  std::vector<std::vector<DetectionRecord>> detections;  // per frame
  std::vector<std::vector<VisibilityInfo>> visibility;   // per frame, per vehicle
  std::vector<std::vector<int>> detection_vehicle;       // per frame, vehicle id of each detection
};

/// Noisy detections of every detectable vehicle (see frame_visibility).
inline RenderedScenario render_detections(const WorldTruth& w, const ScenarioConfig& c) {
  c.validate();
  std::mt19937_64 rng(c.seed * 0xD1B54A32D192ED03ull + 7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const auto& n = c.noise;
  RenderedScenario out;
  const int frames = w.frame_count();
  for (int t = 0; t < frames; ++t) {
    const CameraFrame cam = w.camera(t);
    std::vector<VisibilityInfo> vis = frame_visibility(w, c, t);
    std::vector<DetectionRecord> dets;
    std::vector<int> owners;
    for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
      const auto& v = w.vehicles[i];
      auto& vi = vis[i];
      // Noise is drawn for every vehicle and frame so that visibility never shifts the stream.
      std::array<double, 4> box_noise{};
      for (auto& e : box_noise) e = gauss(rng);
      const Vec2 c_noise(gauss(rng), gauss(rng));
      const double d_noise = gauss(rng), yaw_noise = gauss(rng), score_noise = gauss(rng);
      const Vec3 dim_noise(gauss(rng), gauss(rng), gauss(rng));
      Vector app_noise(v.appearance.size());
      for (Eigen::Index k = 0; k < app_noise.size(); ++k) app_noise(k) = gauss(rng);
      const bool dropped = uni(rng) < n.dropout;
      if (!vi.detectable || dropped) continue;
      vi.detected = true;

      const Box3D b = w.box(v, t);
      const Projection p = project_point(b.center, cam);
      DetectionRecord d;
      d.frame_index = w.first_frame + t;
      Box2D bx{vi.box2d.x_min + n.pixel_sigma * box_noise[0], vi.box2d.y_min + n.pixel_sigma * box_noise[1],
               vi.box2d.x_max + n.pixel_sigma * box_noise[2], vi.box2d.y_max + n.pixel_sigma * box_noise[3]};
      if (bx.x_min > bx.x_max) std::swap(bx.x_min, bx.x_max);
      if (bx.y_min > bx.y_max) std::swap(bx.y_min, bx.y_max);
      d.box2d = clip_to_image(bx, c.intrinsics);
      d.center_proj = p.pixel + n.pixel_sigma * c_noise;
      d.depth = std::max(0.5, p.depth * (1.0 + n.depth_sigma_per_meter * d_noise));
      const double heading = camera_heading_from_world(b.yaw(), cam.pose);
      d.yaw_local = normalize_angle(theta_to_alpha(heading, p.pixel.x(), c.intrinsics) + n.yaw_sigma * yaw_noise);
      d.dims = (b.dims + n.dim_sigma * dim_noise).cwiseMax(0.1);
      d.appearance = v.appearance + n.appearance_sigma * app_noise;
      d.score = std::clamp(1.0 - 0.5 * vi.cover + n.score_sigma * score_noise, 0.0, 1.0);
      dets.push_back(std::move(d));
      owners.push_back(v.id);
    }
    out.detections.push_back(std::move(dets));
    out.detection_vehicle.push_back(std::move(owners));
    out.visibility.push_back(std::move(vis));
  }
  return out;
}

/// Ground-truth records for every vehicle and frame: "tracked" when detectable, "occluded" when in
/// view but hidden behind nearer vehicles, "lost" otherwise.
inline std::vector<TrackRecord> ground_truth_records(const WorldTruth& w, const RenderedScenario& r) {
  std::vector<TrackRecord> out;
  for (int t = 0; t < w.frame_count(); ++t) {
    for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
      const auto& v = w.vehicles[i];
      const auto& vi = r.visibility[static_cast<std::size_t>(t)][i];
      TrackRecord rec;
      rec.frame_index = w.first_frame + t;
      rec.track_id = v.id;
      rec.box = w.box(v, t);
      rec.velocity = v.velocity[static_cast<std::size_t>(t)];
      rec.box2d = vi.in_view ? vi.box2d : Box2D{};
      rec.status = vi.detectable ? TrackStatus::tracked : vi.hidden ? TrackStatus::occluded : TrackStatus::lost;
      out.push_back(rec);
    }
  }
  return out;
}

inline SequenceInput to_sequence(const WorldTruth& w, const RenderedScenario& r) {
  SequenceInput s;
  s.intrinsics = w.intrinsics;
  s.first_frame = w.first_frame;
  s.poses = w.poses;
  s.detections = r.detections;
  return s;
}

struct ScenarioFiles {
  std::filesystem::path detections, poses, gt_tracks;
};

inline ScenarioFiles write_scenario(const WorldTruth& w, const RenderedScenario& r, const std::filesystem::path& dir) {
  ScenarioFiles f{dir / "detections.jsonl", dir / "poses.json", dir / "gt_tracks.jsonl"};
  std::vector<DetectionRecord> all;
  for (const auto& frame : r.detections) all.insert(all.end(), frame.begin(), frame.end());
  write_detections(all, f.detections);
  write_poses({w.intrinsics, w.first_frame, w.poses}, f.poses);
  write_tracks(ground_truth_records(w, r), f.gt_tracks);
  return f;
}

/// Per-vehicle runs of consecutive detected frames as (truth, decoded observation) pairs, for
/// motion-model training. Runs shorter than `min_length` are skipped.
inline std::vector<MotionTrajectory> motion_trajectories(const WorldTruth& w, const RenderedScenario& r,
                                                         std::size_t min_length = 10) {
  std::vector<MotionTrajectory> out;
  for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
    MotionTrajectory cur;
    auto flush = [&] {
      if (cur.truth.size() >= min_length) out.push_back(cur);
      cur = {};
    };
    for (int t = 0; t < w.frame_count(); ++t) {
      const auto& owners = r.detection_vehicle[static_cast<std::size_t>(t)];
      const auto it = std::find(owners.begin(), owners.end(), w.vehicles[i].id);
      if (it == owners.end()) {
        flush();
        continue;
      }
      const auto& d = r.detections[static_cast<std::size_t>(t)][static_cast<std::size_t>(it - owners.begin())];
      cur.truth.push_back(w.vehicles[i].position[static_cast<std::size_t>(t)]);
      cur.observed.push_back(backproject(d.center_proj, d.depth, w.camera(t)));
    }
    flush();
  }
  return out;
}

}  // namespace mono3dt
