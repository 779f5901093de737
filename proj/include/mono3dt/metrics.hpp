#pragma once

// Tracking and 3D estimation metrics: CLEAR MOT, object-level depth metrics, orientation /
// dimension / center scores and 3D-IoU average precision.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mono3dt/assignment.hpp"
#include "mono3dt/errors.hpp"
#include "mono3dt/geometry.hpp"
#include "mono3dt/types.hpp"

namespace mono3dt {

enum class EvalMode : std::uint8_t { image2d, bev3d };

inline std::string_view to_string(EvalMode m) { return m == EvalMode::image2d ? "2d" : "3d"; }

struct MatchGate {
  EvalMode mode = EvalMode::bev3d;
  double min_iou_2d = 0.5;        // image2d
  double max_center_dist = 2.0;   // bev3d, meters on the ground plane

  double bev_distance(const TrackRecord& a, const TrackRecord& b) const {
    return (a.box.center.head<2>() - b.box.center.head<2>()).norm();
  }
  bool passes(const TrackRecord& gt, const TrackRecord& pd) const {
    return mode == EvalMode::image2d ? iou_2d(gt.box2d, pd.box2d) >= min_iou_2d
                                     : bev_distance(gt, pd) <= max_center_dist;
  }
  /// Larger is better; only meaningful for pairs that pass.
  double similarity(const TrackRecord& gt, const TrackRecord& pd) const {
    return mode == EvalMode::image2d ? iou_2d(gt.box2d, pd.box2d) : max_center_dist - bev_distance(gt, pd);
  }
  /// Overlap averaged into MOTP.
  double overlap(const TrackRecord& gt, const TrackRecord& pd) const {
    return mode == EvalMode::image2d ? iou_2d(gt.box2d, pd.box2d) : iou_3d(gt.box, pd.box);
  }
};

struct MatchPair {
  int gt_id = 0;
  int pred_id = 0;
  std::size_t gt_index = 0;
  std::size_t pred_index = 0;
  double overlap = 0.0;
};

struct FrameMatching {
  std::vector<MatchPair> pairs;
  std::vector<int> gt_ids;              // every gt id present in the frame
  std::vector<std::size_t> unmatched_gt;    // indices into the frame's gt list
  std::vector<std::size_t> unmatched_pred;  // indices into the frame's prediction list
  int fp() const { return static_cast<int>(unmatched_pred.size()); }
  int fn() const { return static_cast<int>(unmatched_gt.size()); }
};

/// CLEAR correspondence for one frame: correspondences from the previous frame (gt id -> pred id)
/// are kept while they pass the gate; the remaining objects are matched to maximize first the
/// number of matches and then the summed similarity.
inline FrameMatching match_frame(std::span<const TrackRecord> gt, std::span<const TrackRecord> pred,
                                 const std::unordered_map<int, int>& previous, const MatchGate& gate) {
  FrameMatching fm;
  std::vector<char> gt_used(gt.size(), 0), pd_used(pred.size(), 0);
  for (const auto& g : gt) fm.gt_ids.push_back(g.track_id);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto it = previous.find(gt[i].track_id);
    if (it == previous.end()) continue;
    for (std::size_t j = 0; j < pred.size(); ++j) {
      if (pd_used[j] || pred[j].track_id != it->second) continue;
      if (gate.passes(gt[i], pred[j])) {
        gt_used[i] = pd_used[j] = 1;
        fm.pairs.push_back({gt[i].track_id, pred[j].track_id, i, j, gate.overlap(gt[i], pred[j])});
      }
      break;
    }
  }
  std::vector<std::size_t> gi, pj;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (!gt_used[i]) gi.push_back(i);
  for (std::size_t j = 0; j < pred.size(); ++j)
    if (!pd_used[j]) pj.push_back(j);
  if (!gi.empty() && !pj.empty()) {
    const auto r = static_cast<Eigen::Index>(gi.size());
    const auto c = static_cast<Eigen::Index>(pj.size());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(r, c);
    BoolMatrix allowed = BoolMatrix::Constant(r, c, false);
    // A bonus larger than any achievable similarity sum makes cardinality dominate.
    const double max_sim = gate.mode == EvalMode::image2d ? 1.0 : gate.max_center_dist;
    const double bonus = 2.0 * static_cast<double>(std::min(r, c) + 1) * std::max(max_sim, 1.0);
    for (Eigen::Index a = 0; a < r; ++a) {
      for (Eigen::Index b = 0; b < c; ++b) {
        if (!gate.passes(gt[gi[a]], pred[pj[b]])) continue;
        allowed(a, b) = true;
        w(a, b) = bonus + std::max(0.0, gate.similarity(gt[gi[a]], pred[pj[b]]));
      }
    }
    for (const auto& [a, b] : max_weight_assignment(w, &allowed).pairs) {
      const std::size_t i = gi[a], j = pj[b];
      gt_used[i] = pd_used[j] = 1;
      fm.pairs.push_back({gt[i].track_id, pred[j].track_id, i, j, gate.overlap(gt[i], pred[j])});
    }
  }
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (!gt_used[i]) fm.unmatched_gt.push_back(i);
  for (std::size_t j = 0; j < pred.size(); ++j)
    if (!pd_used[j]) fm.unmatched_pred.push_back(j);
  std::sort(fm.pairs.begin(), fm.pairs.end(), [](const auto& a, const auto& b) { return a.gt_id < b.gt_id; });
  return fm;
}

/// Raw CLEAR counts; the rates are derived so that reports from several sequences add up.
struct ClearReport {
  long gt_total = 0;
  long matches = 0;
  long fp = 0;
  long fn = 0;
  long mm = 0;
  long frag = 0;
  double overlap_sum = 0.0;
  long gt_tracks = 0;
  long mostly_tracked = 0;
  long mostly_lost = 0;

  double mota() const {
    if (gt_total == 0) return fp == 0 ? 1.0 : -static_cast<double>(fp);
    return 1.0 - static_cast<double>(fp + fn + mm) / static_cast<double>(gt_total);
  }
  double motp() const { return matches > 0 ? overlap_sum / static_cast<double>(matches) : 0.0; }
  double mt() const { return gt_tracks > 0 ? static_cast<double>(mostly_tracked) / static_cast<double>(gt_tracks) : 0.0; }
  double ml() const { return gt_tracks > 0 ? static_cast<double>(mostly_lost) / static_cast<double>(gt_tracks) : 0.0; }

  ClearReport& operator+=(const ClearReport& o) {
    gt_total += o.gt_total;
    matches += o.matches;
    fp += o.fp;
    fn += o.fn;
    mm += o.mm;
    frag += o.frag;
    overlap_sum += o.overlap_sum;
    gt_tracks += o.gt_tracks;
    mostly_tracked += o.mostly_tracked;
    mostly_lost += o.mostly_lost;
    return *this;
  }
};

/// Accumulates CLEAR statistics over frames in order.
///   MM:   a gt track is matched to a prediction id different from the one it was last matched to
///         (also across frames where it was unmatched).
///   FRAG: the prediction id covering a gt track changes between two consecutive frames in which
///         the gt track is present (including resuming after a miss), provided it is covered now
///         and was covered at some earlier frame.
///   MT/ML: fraction of gt tracks covered in >= 80% / <= 20% of the frames where they are present.
class ClearAccumulator {
 public:
  void add(const FrameMatching& fm) {
    r_.gt_total += static_cast<long>(fm.gt_ids.size());
    r_.fp += fm.fp();
    r_.fn += fm.fn();
    r_.matches += static_cast<long>(fm.pairs.size());
    std::unordered_map<int, int> now;
    for (const auto& p : fm.pairs) {
      r_.overlap_sum += p.overlap;
      now[p.gt_id] = p.pred_id;
      auto it = last_matched_.find(p.gt_id);
      if (it != last_matched_.end() && it->second != p.pred_id) ++r_.mm;
      last_matched_[p.gt_id] = p.pred_id;
    }
    for (const int g : fm.gt_ids) {
      auto& st = tracks_[g];
      ++st.present;
      const auto it = now.find(g);
      const int cur = it == now.end() ? -1 : it->second;
      if (cur >= 0) ++st.covered;
      if (st.seen && cur >= 0 && cur != st.previous && st.ever_covered) ++r_.frag;
      st.seen = true;
      st.previous = cur;
      if (cur >= 0) st.ever_covered = true;
    }
    current_ = now;
  }

  /// Correspondences of the last frame, for match_frame.
  const std::unordered_map<int, int>& previous() const { return current_; }

  ClearReport report() const {
    ClearReport r = r_;
    r.gt_tracks = static_cast<long>(tracks_.size());
    for (const auto& [id, st] : tracks_) {
      const double ratio = static_cast<double>(st.covered) / static_cast<double>(st.present);
      if (ratio >= 0.8) ++r.mostly_tracked;
      if (ratio <= 0.2) ++r.mostly_lost;
    }
    return r;
  }

 private:
  struct TrackStats {
    long present = 0;
    long covered = 0;
    int previous = -1;
    bool seen = false;
    bool ever_covered = false;
  };
  ClearReport r_;
  std::unordered_map<int, int> last_matched_;
  std::unordered_map<int, int> current_;
  std::map<int, TrackStats> tracks_;
};

/// CLEAR report for a sequence of per-frame matchings.
inline ClearReport compute_clear(std::span<const FrameMatching> frames) {
  ClearAccumulator acc;
  for (const auto& f : frames) acc.add(f);
  return acc.report();
}

// ---------------------------------------------------------------------------
// 3D estimation scores on matched pairs.

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;  // max(y/y*, y*/y) < 1.25
  double delta2 = 0.0;  // < 1.25^2
  double delta3 = 0.0;  // < 1.25^3
};

inline DepthMetrics depth_metrics(std::span<const double> gt, std::span<const double> pred) {
  if (gt.size() != pred.size()) throw LengthMismatch(gt.size(), pred.size());
  if (gt.empty()) throw EmptyInput("depth_metrics");
  DepthMetrics m;
  double se = 0.0, sel = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double g = gt[i], p = pred[i];
    if (!(g > 0.0) || !(p > 0.0)) throw NonPositiveDepth();
    const double d = p - g;
    m.abs_rel += std::abs(d) / g;
    m.sq_rel += d * d / g;
    se += d * d;
    const double dl = std::log(p) - std::log(g);
    sel += dl * dl;
    const double ratio = std::max(p / g, g / p);
    m.delta1 += ratio < 1.25 ? 1.0 : 0.0;
    m.delta2 += ratio < 1.25 * 1.25 ? 1.0 : 0.0;
    m.delta3 += ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(gt.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(se / n);
  m.rmse_log = std::sqrt(sel / n);
  m.delta1 /= n;
  m.delta2 /= n;
  m.delta3 /= n;
  return m;
}

/// Mean of (1 + cos(dtheta)) / 2.
inline double orientation_score(std::span<const double> gt_yaws, std::span<const double> pred_yaws) {
  if (gt_yaws.size() != pred_yaws.size()) throw LengthMismatch(gt_yaws.size(), pred_yaws.size());
  if (gt_yaws.empty()) throw EmptyInput("orientation_score");
  double acc = 0.0;
  for (std::size_t i = 0; i < gt_yaws.size(); ++i) acc += 0.5 * (1.0 + std::cos(gt_yaws[i] - pred_yaws[i]));
  return acc / static_cast<double>(gt_yaws.size());
}

/// Mean of min(V_pred / V_gt, V_gt / V_pred).
inline double dimension_score(std::span<const Vec3> gt_dims, std::span<const Vec3> pred_dims) {
  if (gt_dims.size() != pred_dims.size()) throw LengthMismatch(gt_dims.size(), pred_dims.size());
  if (gt_dims.empty()) throw EmptyInput("dimension_score");
  double acc = 0.0;
  for (std::size_t i = 0; i < gt_dims.size(); ++i) {
    const double vg = gt_dims[i].prod(), vp = pred_dims[i].prod();
    if (!(vg > 0.0) || !(vp > 0.0)) throw InvalidArgument("dimensions must be positive");
    acc += std::min(vp / vg, vg / vp);
  }
  return acc / static_cast<double>(gt_dims.size());
}

/// Mean of (1 + cos a) / 2, where a is the length of the center offset normalized by the predicted
/// box size, ((x_gt - x_pd) / w_pd, (y_gt - y_pd) / h_pd), capped at pi.
inline double center_score(std::span<const Vec2> gt_centers, std::span<const Box2D> pred_boxes,
                           std::span<const Vec2> pred_centers) {
  if (gt_centers.size() != pred_centers.size()) throw LengthMismatch(gt_centers.size(), pred_centers.size());
  if (gt_centers.size() != pred_boxes.size()) throw LengthMismatch(gt_centers.size(), pred_boxes.size());
  if (gt_centers.empty()) throw EmptyInput("center_score");
  double acc = 0.0;
  for (std::size_t i = 0; i < gt_centers.size(); ++i) {
    const double w = pred_boxes[i].width(), h = pred_boxes[i].height();
    if (!(w > 0.0) || !(h > 0.0)) throw DegenerateBox();
    const Vec2 d = gt_centers[i] - pred_centers[i];
    const double a = std::min(Vec2(d.x() / w, d.y() / h).norm(), kPi);
    acc += 0.5 * (1.0 + std::cos(a));
  }
  return acc / static_cast<double>(gt_centers.size());
}

// ---------------------------------------------------------------------------
// Average precision on 3D IoU.

struct ScoredBox {
  int frame_index = 0;
  Box3D box;
  double score = 1.0;
};

/// 11-point interpolated AP. Predictions are visited in decreasing score (ties keep input order);
/// each takes the unmatched gt box of its frame with the highest IoU if that reaches the threshold.
inline double ap_3d(std::span<const ScoredBox> gt, std::span<const ScoredBox> pred, double iou_threshold) {
  if (gt.empty() || pred.empty()) return 0.0;
  std::map<int, std::vector<std::size_t>> gt_by_frame;
  for (std::size_t i = 0; i < gt.size(); ++i) gt_by_frame[gt[i].frame_index].push_back(i);
  std::vector<std::size_t> order(pred.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pred[a].score > pred[b].score; });
  std::vector<char> used(gt.size(), 0);
  std::vector<double> precision, recall;
  long tp = 0, fp = 0;
  for (const std::size_t k : order) {
    const auto& p = pred[k];
    double best = -1.0;
    std::size_t best_i = 0;
    if (const auto it = gt_by_frame.find(p.frame_index); it != gt_by_frame.end()) {
      for (const std::size_t i : it->second) {
        if (used[i]) continue;
        const double iou = iou_3d(gt[i].box, p.box);
        if (iou > best) {
          best = iou;
          best_i = i;
        }
      }
    }
    if (best >= iou_threshold) {
      used[best_i] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gt.size()));
  }
  double ap = 0.0;
  for (int r = 0; r <= 10; ++r) {
    const double level = r / 10.0;
    double best = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i)
      if (recall[i] >= level - 1e-12) best = std::max(best, precision[i]);
    ap += best / 11.0;
  }
  return ap;
}

// ---------------------------------------------------------------------------
// Sequence evaluation.

struct EvalOptions {
  MatchGate gate;
  std::optional<double> max_range;         // camera depth cutoff, needs poses
  const std::vector<CameraPose>* poses = nullptr;
  int first_frame = 0;
  CameraIntrinsics intrinsics;
  std::vector<double> ap_thresholds{0.25, 0.5, 0.7};
};

struct EvalReport {
  ClearReport clear;
  std::optional<DepthMetrics> depth;
  std::optional<double> os, ds, cs;
  std::vector<std::pair<double, double>> ap;  // (threshold, AP)
  long pairs = 0;
  std::optional<double> position_rmse;  // 3D center error over matched pairs, m
};

namespace metrics_detail {
inline std::map<int, std::vector<TrackRecord>> by_frame(std::span<const TrackRecord> recs, const EvalOptions& o) {
  std::map<int, std::vector<TrackRecord>> out;
  for (const auto& r : recs) {
    if (r.status != TrackStatus::tracked) continue;
    if (o.max_range) {
      if (!o.poses) throw InvalidArgument("range filtering needs camera poses");
      const int idx = r.frame_index - o.first_frame;
      if (idx < 0 || idx >= static_cast<int>(o.poses->size()))
        throw FrameGapError("record at frame " + std::to_string(r.frame_index) + " has no pose");
      const double d = camera_depth(r.box.center, (*o.poses)[static_cast<std::size_t>(idx)]);
      if (d > *o.max_range) continue;
    }
    out[r.frame_index].push_back(r);
  }
  return out;
}
}  // namespace metrics_detail

/// Evaluates predictions against ground truth; only records with status "tracked" take part.
/// Depth and center scores need poses and are skipped without them.
inline EvalReport evaluate_tracks(std::span<const TrackRecord> gt, std::span<const TrackRecord> pred,
                                  const EvalOptions& opt) {
  const auto g = metrics_detail::by_frame(gt, opt);
  const auto p = metrics_detail::by_frame(pred, opt);
  std::vector<int> frames;
  for (const auto& [f, v] : g) frames.push_back(f);
  for (const auto& [f, v] : p) frames.push_back(f);
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());

  EvalReport rep;
  ClearAccumulator acc;
  std::vector<double> gd, pd, gy, py;
  std::vector<Vec3> gdim, pdim;
  std::vector<Vec2> gc, pc;
  std::vector<Box2D> pb;
  std::vector<ScoredBox> gs, ps;
  double sq_err = 0.0;
  static const std::vector<TrackRecord> kNone;
  for (const int f : frames) {
    const auto gi = g.find(f);
    const auto pi = p.find(f);
    const auto& gv = gi == g.end() ? kNone : gi->second;
    const auto& pv = pi == p.end() ? kNone : pi->second;
    const FrameMatching fm = match_frame(gv, pv, acc.previous(), opt.gate);
    acc.add(fm);
    for (const auto& r : gv) gs.push_back({f, r.box, 1.0});
    for (const auto& r : pv) ps.push_back({f, r.box, 1.0});
    const CameraPose* pose = nullptr;
    if (opt.poses) {
      const int idx = f - opt.first_frame;
      if (idx >= 0 && idx < static_cast<int>(opt.poses->size())) pose = &(*opt.poses)[static_cast<std::size_t>(idx)];
    }
    for (const auto& m : fm.pairs) {
      const auto& a = gv[m.gt_index];
      const auto& b = pv[m.pred_index];
      gy.push_back(a.box.yaw());
      py.push_back(b.box.yaw());
      gdim.push_back(a.box.dims);
      pdim.push_back(b.box.dims);
      sq_err += (a.box.center - b.box.center).squaredNorm();
      if (!pose) continue;
      const CameraFrame cam{opt.intrinsics, *pose};
      const double da = camera_depth(a.box.center, *pose), db = camera_depth(b.box.center, *pose);
      if (da > kMinCameraZ && db > kMinCameraZ) {
        gd.push_back(da);
        pd.push_back(db);
        if (b.box2d.width() > 0.0 && b.box2d.height() > 0.0) {
          gc.push_back(project_point(a.box.center, cam).pixel);
          pc.push_back(project_point(b.box.center, cam).pixel);
          pb.push_back(b.box2d);
        }
      }
    }
  }
  rep.clear = acc.report();
  rep.pairs = static_cast<long>(gy.size());
  if (!gy.empty()) {
    rep.os = orientation_score(gy, py);
    rep.ds = dimension_score(gdim, pdim);
    rep.position_rmse = std::sqrt(sq_err / static_cast<double>(gy.size()));
  }
  if (!gd.empty()) rep.depth = depth_metrics(gd, pd);
  if (!gc.empty()) rep.cs = center_score(gc, pb, pc);
  for (const double t : opt.ap_thresholds) rep.ap.emplace_back(t, ap_3d(gs, ps, t));
  return rep;
}

}  // namespace mono3dt
