#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "mono3dt/errors.hpp"

namespace mono3dt {

enum class MotionBackend : std::uint8_t { none, kf2d, kf3d, lstm };

inline std::string_view to_string(MotionBackend b) {
  switch (b) {
    case MotionBackend::none: return "none";
    case MotionBackend::kf2d: return "kf2d";
    case MotionBackend::kf3d: return "kf3d";
    case MotionBackend::lstm: return "lstm";
  }
  return "unknown";
}

inline std::optional<MotionBackend> parse_motion_backend(std::string_view s) {
  if (s == "none") return MotionBackend::none;
  if (s == "kf2d") return MotionBackend::kf2d;
  if (s == "kf3d") return MotionBackend::kf3d;
  if (s == "lstm") return MotionBackend::lstm;
  return std::nullopt;
}

struct KalmanNoise {
  double velocity_process_var = 0.01;    // m^2 / frame^2 on velocity terms
  double position_process_var = 1e-4;    // m^2 on position terms
  double depth_sigma_per_meter = 0.05;   // measurement sigma = k * depth
  double min_measurement_sigma = 0.05;   // m, floor for near objects
  double initial_velocity_var = 4.0;     // m^2 / frame^2
  // 2D filter, pixel units
  double pixel_measurement_sigma = 4.0;
  double pixel_process_var = 1.0;
};

/// Association weights, thresholds and lifecycle policy. Defaults are the Deep+3D setting.
struct TrackerConfig {
  double w_deep = 0.3;
  double w_2d = 0.0;
  double w_3d = 0.7;
  double occlusion_cover_threshold = 0.7;
  int max_lost_age = 20;
  double range_min = 0.15;  // camera depth, meters
  double range_max = 100.0;
  double ord_tie_meters = 1.0;
  MotionBackend motion_backend = MotionBackend::kf3d;
  double affinity_accept_threshold = 0.3;

  // Ablation switches.
  bool depth_ordering = true;   // depth filter + depth-ordered overlap for the 3D term
  bool occlusion_aware = true;  // separate occluded state; off = every miss is lost

  KalmanNoise kalman;

  double weight_sum() const { return w_deep + w_2d + w_3d; }

  void validate() const {
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw OutOfRangeValue(std::string(name) + " must lie in [0, 1]");
    };
    unit(w_deep, "w_deep");
    unit(w_2d, "w_2d");
    unit(w_3d, "w_3d");
    if (!(weight_sum() > 0.0)) throw OutOfRangeValue("affinity weights must not all be zero");
    unit(occlusion_cover_threshold, "occlusion_cover_threshold");
    unit(affinity_accept_threshold, "affinity_accept_threshold");
    if (max_lost_age < 0) throw OutOfRangeValue("max_lost_age must be non-negative");
    if (!(range_min < range_max)) throw OutOfRangeValue("range_min must be below range_max");
    if (!(ord_tie_meters >= 0.0)) throw OutOfRangeValue("ord_tie_meters must be non-negative");
    if (!(kalman.velocity_process_var >= 0.0) || !(kalman.position_process_var >= 0.0) ||
        !(kalman.depth_sigma_per_meter >= 0.0) || !(kalman.min_measurement_sigma > 0.0) ||
        !(kalman.initial_velocity_var > 0.0) || !(kalman.pixel_measurement_sigma > 0.0) ||
        !(kalman.pixel_process_var >= 0.0))
      throw OutOfRangeValue("kalman noise parameters out of range");
  }
};

}  // namespace mono3dt
