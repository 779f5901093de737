#pragma once

// Tracklet-detection affinities, depth-ordered overlap, occlusion cover and the assignment step.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mono3dt/assignment.hpp"
#include "mono3dt/config.hpp"
#include "mono3dt/geometry.hpp"
#include "mono3dt/region.hpp"
#include "mono3dt/types.hpp"

namespace mono3dt {

/// exp(-||a - b||_1)
inline double affinity_deep(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw LengthMismatch(a.size(), b.size());
  return std::exp(-(a - b).cwiseAbs().sum());
}

/// Concatenated, unit-scaled feature [f_app, D/10, c/diag, yaw/pi, depth/range_max]. The yaw entry
/// is unwrapped to lie within pi of `reference_yaw` so that two headings compare along the short arc.
inline Vector deep_features(const ObjectState& s, const CameraIntrinsics& k, const TrackerConfig& cfg,
                            double reference_yaw) {
  const auto n = s.appearance.size();
  Vector f(n + 7);
  f.head(n) = s.appearance;
  f.segment<3>(n) = s.dims / 10.0;
  f.segment<2>(n + 3) = s.center_proj / k.diagonal();
  f(n + 5) = (reference_yaw + angle_diff(s.yaw, reference_yaw)) / kPi;
  f(n + 6) = s.depth / cfg.range_max;
  return f;
}

inline double affinity_2d(const Box2D& track_box, const Box2D& det_box) { return iou_2d(track_box, det_box); }

/// Loose reachability bound on the depth gap between a tracklet and a detection: the summed
/// length + width of both objects.
inline bool depth_filter(double track_depth, const Vec3& track_dims, double det_depth, const Vec3& det_dims) {
  const double bound = track_dims.x() + track_dims.y() + det_dims.x() + det_dims.y();
  return std::abs(track_depth - det_depth) < bound;
}

/// Projected box of a tracklet or detection plus what the depth reasoning needs.
struct OverlapCandidate {
  Box2D box;
  double depth = 0.0;
  Vec3 dims = Vec3::Ones();
  bool visible = true;
};

/// For one detection of interest, the overlap of each tracklet's non-occluded region with the
/// detection box. Tracklets are layered by their depth distance to the detection. A tracklet loses
/// the pixels of tracklets that sit in a strictly nearer layer and are also in front of it as seen
/// from the camera (gaps within ord_tie_meters share a layer). Tracklets rejected by the depth
/// filter, or not visible, get 0 and kept = false.
inline std::vector<double> depth_order_overlap(std::span<const OverlapCandidate> tracks, const OverlapCandidate& det,
                                               const TrackerConfig& cfg, std::vector<char>* kept_out = nullptr) {
  const std::size_t n = tracks.size();
  std::vector<double> out(n, 0.0);
  std::vector<char> kept(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    kept[i] = tracks[i].visible && (!cfg.depth_ordering ||
                                    depth_filter(tracks[i].depth, tracks[i].dims, det.depth, det.dims));
  }
  if (!cfg.depth_ordering) {
    for (std::size_t i = 0; i < n; ++i)
      if (kept[i]) out[i] = iou_2d(tracks[i].box, det.box);
  } else {
    std::vector<double> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = std::abs(tracks[i].depth - det.depth);
    std::vector<Box2D> occluders;
    for (std::size_t i = 0; i < n; ++i) {
      if (!kept[i]) continue;
      occluders.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && kept[j] && order[j] < order[i] - cfg.ord_tie_meters && tracks[j].depth < tracks[i].depth)
          occluders.push_back(tracks[j].box);
      }
      const Box2D& own = tracks[i].box;
      const double free_area = own.area() - covered_area(own, occluders);
      const Box2D own_det = intersect(own, det.box);
      const double inter = std::max(0.0, own_det.area() - covered_area(own_det, occluders));
      const double uni = free_area + det.box.area() - inter;
      out[i] = uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
    }
  }
  if (kept_out) *kept_out = std::move(kept);
  return out;
}

/// Fraction of each visible tracklet's box covered by the union of boxes of tracklets strictly
/// nearer to the camera.
inline std::vector<double> detect_occlusions(std::span<const OverlapCandidate> tracks) {
  std::vector<double> cover(tracks.size(), 0.0);
  std::vector<Box2D> nearer;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (!tracks[i].visible) continue;
    const double area = tracks[i].box.area();
    if (area <= 0.0) continue;
    nearer.clear();
    for (std::size_t j = 0; j < tracks.size(); ++j) {
      if (j != i && tracks[j].visible && tracks[j].depth < tracks[i].depth) nearer.push_back(tracks[j].box);
    }
    cover[i] = std::clamp(covered_area(tracks[i].box, nearer) / area, 0.0, 1.0);
  }
  return cover;
}

/// Weighted sum normalized by the weight total.
inline double compose_affinity(double a_deep, double a_2d, double a_3d, const TrackerConfig& cfg) {
  const double sum = cfg.weight_sum();
  const double a = (cfg.w_deep * a_deep + cfg.w_2d * a_2d + cfg.w_3d * a_3d) / sum;
  return std::clamp(a, 0.0, 1.0);
}

struct AffinityMatrix {
  Eigen::MatrixXd values;  // tracklets x detections
  BoolMatrix kept;

  AffinityMatrix() = default;
  AffinityMatrix(Eigen::Index tracks, Eigen::Index dets)
      : values(Eigen::MatrixXd::Zero(tracks, dets)), kept(BoolMatrix::Constant(tracks, dets, true)) {}
};

struct MatchResult {
  std::vector<std::pair<int, int>> matches;  // (tracklet, detection)
  std::vector<int> unmatched_tracks;
  std::vector<int> unmatched_detections;
  double total_affinity = 0.0;  // of the optimal matching, before thresholding
};

/// Maximum-total-affinity matching over kept entries; matched pairs below the accept threshold are
/// returned to the unmatched sets.
inline MatchResult solve_assignment(const AffinityMatrix& m, double accept_threshold) {
  const Assignment a = max_weight_assignment(m.values, &m.kept);
  MatchResult r;
  r.total_affinity = a.total;
  r.unmatched_tracks = a.unmatched_rows;
  r.unmatched_detections = a.unmatched_cols;
  for (const auto& [t, d] : a.pairs) {
    if (m.values(t, d) < accept_threshold) {
      r.unmatched_tracks.push_back(t);
      r.unmatched_detections.push_back(d);
    } else {
      r.matches.emplace_back(t, d);
    }
  }
  std::sort(r.unmatched_tracks.begin(), r.unmatched_tracks.end());
  std::sort(r.unmatched_detections.begin(), r.unmatched_detections.end());
  return r;
}

}  // namespace mono3dt
