#pragma once

// Online tracker: per frame, predict every tracklet, associate with the detections, then run the
// occlusion-aware lifecycle.

#include <algorithm>
#include <memory>
#include <vector>

#include "mono3dt/association.hpp"
#include "mono3dt/config.hpp"
#include "mono3dt/lstm.hpp"
#include "mono3dt/motion.hpp"
#include "mono3dt/types.hpp"

namespace mono3dt {

inline constexpr std::size_t kTrackletHistory = 5;

struct Tracklet {
  int id = 0;
  ObjectState state;
  TrackStatus status = TrackStatus::birth;
  int age_since_match = 0;
  int occluded_frames = 0;  // occluded frames since the last match
  std::vector<Vec3> velocity_history;  // oldest first, at most kTrackletHistory
  MotionEstimator motion;
  PredictedView view;  // prediction for the current frame
};

/// Per-frame association details, for inspection and tests.
struct FrameDiagnostics {
  AffinityMatrix affinity;
  MatchResult matching;
  std::vector<int> track_ids;            // row ids of `affinity`
  std::vector<int> detection_indices;    // columns -> index into the frame's detections
  std::vector<double> unmatched_cover;   // per unmatched track (same order as matching.unmatched_tracks)
};

class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg, std::shared_ptr<const LstmWeights> weights = nullptr)
      : cfg_(cfg), weights_(std::move(weights)) {
    cfg_.validate();
    if (cfg_.motion_backend == MotionBackend::lstm && !weights_)
      throw InvalidArgument("lstm motion backend requires weights");
  }

  const TrackerConfig& config() const { return cfg_; }
  const std::vector<Tracklet>& tracklets() const { return tracks_; }
  const FrameDiagnostics& last_diagnostics() const { return diag_; }
  int next_id() const { return next_id_; }

  /// Processes one frame and returns a record for every live tracklet, sorted by id.
  std::vector<TrackRecord> step(int frame_index, const std::vector<DetectionRecord>& dets, const CameraFrame& cam) {
    // Prediction.
    for (auto& t : tracks_) t.view = predict_tracklet(t.motion, t.state, cam);

    // Detections inside the tracking range.
    std::vector<int> det_idx;
    std::vector<ObjectState> obs;
    std::vector<Box2D> det_proj;  // projection of the decoded 3D box
    for (std::size_t j = 0; j < dets.size(); ++j) {
      const auto& d = dets[j];
      if (!(d.depth > 0.0) || d.depth < cfg_.range_min || d.depth > cfg_.range_max) continue;
      det_idx.push_back(static_cast<int>(j));
      obs.push_back(decode_detection(d, cam));
      const PredictedView v = view_state(obs.back(), cam);
      det_proj.push_back(v.outside_view ? d.box2d : v.box2d);
    }

    // Affinities.
    const auto nt = static_cast<Eigen::Index>(tracks_.size());
    const auto nd = static_cast<Eigen::Index>(det_idx.size());
    diag_ = FrameDiagnostics{};
    diag_.affinity = AffinityMatrix(nt, nd);
    diag_.detection_indices = det_idx;
    std::vector<OverlapCandidate> cands(tracks_.size());
    for (std::size_t i = 0; i < tracks_.size(); ++i) {
      const auto& v = tracks_[i].view;
      cands[i] = {v.box2d, v.state.depth, v.state.dims, !v.outside_view};
      diag_.track_ids.push_back(tracks_[i].id);
    }
    Eigen::MatrixXd a_deep = Eigen::MatrixXd::Zero(nt, nd);
    std::vector<char> kept;
    for (Eigen::Index j = 0; j < nd; ++j) {
      const auto& d = dets[det_idx[j]];
      const OverlapCandidate dc{det_proj[static_cast<std::size_t>(j)], d.depth, d.dims, true};
      const std::vector<double> a3 = depth_order_overlap(cands, dc, cfg_, &kept);
      for (Eigen::Index i = 0; i < nt; ++i) {
        const auto& t = tracks_[i];
        diag_.affinity.kept(i, j) = kept[i] != 0;
        if (!kept[i]) continue;
        const double ref = t.view.state.yaw;
        const double ad = affinity_deep(deep_features(t.view.state, cam.intrinsics, cfg_, ref),
                                        deep_features(obs[j], cam.intrinsics, cfg_, ref));
        a_deep(i, j) = ad;
        diag_.affinity.values(i, j) = compose_affinity(ad, affinity_2d(t.view.box2d, d.box2d), a3[i], cfg_);
      }
    }
    diag_.matching = solve_assignment(diag_.affinity, cfg_.affinity_accept_threshold);

    // Matched tracklets.
    for (const auto& [i, j] : diag_.matching.matches) {
      auto& t = tracks_[i];
      const auto& d = dets[det_idx[j]];
      const Vec3 previous = t.state.position;
      const ObjectState blended = blend_update(t.view.state, obs[j], a_deep(i, j));
      t.state = blended;
      t.state.position = t.motion.update(obs[j].position, obs[j].depth, blended.position, d.box2d);
      const auto v = t.motion.velocity();
      t.state.velocity = v ? *v : Vec3(t.state.position - previous);
      push_velocity(t);
      t.status = TrackStatus::tracked;
      t.age_since_match = 0;
      t.occluded_frames = 0;
    }

    // Unmatched tracklets: hidden behind an observed nearer object, or lost.
    std::vector<OverlapCandidate> occ(1);
    for (const int j : det_idx) occ.push_back({dets[j].box2d, dets[j].depth, dets[j].dims, true});
    for (const int i : diag_.matching.unmatched_tracks) {
      auto& t = tracks_[i];
      double cover = 0.0;
      if (!t.view.outside_view) {
        occ[0] = {t.view.box2d, t.view.state.depth, t.view.state.dims, true};
        cover = detect_occlusions(occ)[0];
      }
      diag_.unmatched_cover.push_back(cover);
      if (cfg_.occlusion_aware && cover >= cfg_.occlusion_cover_threshold) {
        t.state.position = t.motion.coast();
        t.status = TrackStatus::occluded;
        ++t.occluded_frames;
      } else {
        t.motion.hold();
        t.status = TrackStatus::lost;
        ++t.age_since_match;
      }
    }

    // Births.
    for (const int j : diag_.matching.unmatched_detections) {
      Tracklet t;
      t.id = next_id_++;
      t.state = obs[j];
      t.status = TrackStatus::birth;
      t.motion = MotionEstimator::start(cfg_.motion_backend, obs[j], dets[det_idx[j]].box2d, cfg_.kalman,
                                        weights_.get());
      tracks_.push_back(std::move(t));
    }

    // Deaths and output.
    std::vector<TrackRecord> out;
    std::vector<Tracklet> alive;
    alive.reserve(tracks_.size());
    for (auto& t : tracks_) {
      // Matched and newborn tracklets come from in-range detections.
      const bool observed = t.status == TrackStatus::tracked || t.status == TrackStatus::birth;
      const double depth = camera_depth(t.state.position, cam.pose);
      // Occlusion freezes the age, but no tracklet outlives max_lost_age unmatched frames.
      const bool expired = !observed && t.age_since_match + t.occluded_frames > cfg_.max_lost_age;
      if (expired || (!observed && (depth < cfg_.range_min || depth > cfg_.range_max))) continue;
      const PredictedView v = view_state(t.state, cam);
      t.state.center_proj = v.state.center_proj;
      t.state.depth = v.state.depth;
      TrackRecord r;
      r.frame_index = frame_index;
      r.track_id = t.id;
      r.box = t.state.box();
      r.velocity = t.state.velocity;
      r.box2d = v.outside_view ? Box2D{} : v.box2d;
      r.status = t.status == TrackStatus::birth ? TrackStatus::tracked : t.status;
      out.push_back(r);
      if (t.status == TrackStatus::birth) t.status = TrackStatus::tracked;
      alive.push_back(std::move(t));
    }
    tracks_ = std::move(alive);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.track_id < b.track_id; });
    return out;
  }

 private:
  static void push_velocity(Tracklet& t) {
    t.velocity_history.push_back(t.state.velocity);
    if (t.velocity_history.size() > kTrackletHistory) t.velocity_history.erase(t.velocity_history.begin());
  }

  TrackerConfig cfg_;
  std::shared_ptr<const LstmWeights> weights_;
  std::vector<Tracklet> tracks_;
  FrameDiagnostics diag_;
  int next_id_ = 0;
};

/// Runs the tracker over a whole sequence; records are ordered by (frame, id).
inline std::vector<TrackRecord> track_sequence(const SequenceInput& seq, const TrackerConfig& cfg,
                                               std::shared_ptr<const LstmWeights> weights = nullptr) {
  Tracker tracker(cfg, std::move(weights));
  std::vector<TrackRecord> out;
  for (std::size_t i = 0; i < seq.frame_count(); ++i) {
    const int frame = seq.first_frame + static_cast<int>(i);
    static const std::vector<DetectionRecord> kNone;
    const auto& dets = i < seq.detections.size() ? seq.detections[i] : kNone;
    auto recs = tracker.step(frame, dets, seq.camera(i));
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

}  // namespace mono3dt
