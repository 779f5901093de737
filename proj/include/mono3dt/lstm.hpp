#pragma once

// Recurrent motion model: a prediction LSTM that rolls a location forward from the recent velocity
// history, and an updating LSTM that fuses the prediction with a monocular observation.
//
// Per frame, for each tracklet:
//   predict: run the prediction cell over the 5-entry velocity history (oldest first), starting
//            from its stored state; velocity = mlp(h); P~ = P_prev + velocity.
//   update:  x = [E(P~ - P_prev), E(P^ - P_prev)]; one step of the updating cell;
//            gain = mlp(h); P_bar = P~ + gain * (P^ - P~); push P_bar - P_prev into the history.
//
// Everything is written for column-batched matrices so that tracking (batch 1) and training share
// the exact same forward code. The backward pass is hand-written and checked against finite
// differences in the tests.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

#include "mono3dt/errors.hpp"
#include "mono3dt/geometry.hpp"

namespace mono3dt {

using Mat = Eigen::MatrixXd;

inline constexpr int kVelocityHistory = 5;

struct LstmWeights {
  static constexpr std::size_t kTensorCount = 16;
  static constexpr std::array<std::string_view, kTensorCount> kNames{
      "vel_embed_w", "vel_embed_b", "loc_embed_w", "loc_embed_b", "pred_gates_w", "pred_gates_b",
      "pred_out1_w", "pred_out1_b", "pred_out2_w", "pred_out2_b", "upd_gates_w",  "upd_gates_b",
      "upd_out1_w",  "upd_out1_b",  "upd_out2_w",  "upd_out2_b"};

  int embed = 64;
  int hidden = 128;

  Mat vel_embed_w, vel_embed_b;    // E x 3, E x 1
  Mat loc_embed_w, loc_embed_b;    // E x 3, E x 1
  Mat pred_gates_w, pred_gates_b;  // 4H x (E + H), 4H x 1; gate order i, f, g, o
  Mat pred_out1_w, pred_out1_b;    // E x H, E x 1
  Mat pred_out2_w, pred_out2_b;    // 3 x E, 3 x 1
  Mat upd_gates_w, upd_gates_b;    // 4H x (2E + H), 4H x 1
  Mat upd_out1_w, upd_out1_b;
  Mat upd_out2_w, upd_out2_b;

  std::array<Mat*, kTensorCount> tensors() {
    return {&vel_embed_w, &vel_embed_b, &loc_embed_w, &loc_embed_b, &pred_gates_w, &pred_gates_b,
            &pred_out1_w, &pred_out1_b, &pred_out2_w, &pred_out2_b, &upd_gates_w,  &upd_gates_b,
            &upd_out1_w,  &upd_out1_b,  &upd_out2_w,  &upd_out2_b};
  }
  std::array<const Mat*, kTensorCount> tensors() const {
    return {&vel_embed_w, &vel_embed_b, &loc_embed_w, &loc_embed_b, &pred_gates_w, &pred_gates_b,
            &pred_out1_w, &pred_out1_b, &pred_out2_w, &pred_out2_b, &upd_gates_w,  &upd_gates_b,
            &upd_out1_w,  &upd_out1_b,  &upd_out2_w,  &upd_out2_b};
  }

  static std::array<std::pair<int, int>, kTensorCount> shapes(int e, int h) {
    return {{{e, 3}, {e, 1}, {e, 3}, {e, 1}, {4 * h, e + h}, {4 * h, 1}, {e, h}, {e, 1}, {3, e}, {3, 1},
             {4 * h, 2 * e + h}, {4 * h, 1}, {e, h}, {e, 1}, {3, e}, {3, 1}}};
  }

  static LstmWeights zeros(int embed_dim = 64, int hidden_dim = 128) {
    LstmWeights w;
    w.embed = embed_dim;
    w.hidden = hidden_dim;
    const auto sh = shapes(embed_dim, hidden_dim);
    auto ts = w.tensors();
    for (std::size_t i = 0; i < kTensorCount; ++i) *ts[i] = Mat::Zero(sh[i].first, sh[i].second);
    return w;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer, deterministic in `seed`.
  static LstmWeights random(std::uint64_t seed, int embed_dim = 64, int hidden_dim = 128) {
    LstmWeights w = zeros(embed_dim, hidden_dim);
    std::mt19937_64 rng(seed);
    auto fill = [&](Mat& m, int fan_in) {
      const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-k, k);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    };
    fill(w.vel_embed_w, 3);
    fill(w.vel_embed_b, 3);
    fill(w.loc_embed_w, 3);
    fill(w.loc_embed_b, 3);
    fill(w.pred_gates_w, hidden_dim);
    fill(w.pred_gates_b, hidden_dim);
    fill(w.pred_out1_w, hidden_dim);
    fill(w.pred_out1_b, hidden_dim);
    fill(w.pred_out2_w, embed_dim);
    fill(w.pred_out2_b, embed_dim);
    fill(w.upd_gates_w, hidden_dim);
    fill(w.upd_gates_b, hidden_dim);
    fill(w.upd_out1_w, hidden_dim);
    fill(w.upd_out1_b, hidden_dim);
    fill(w.upd_out2_w, embed_dim);
    fill(w.upd_out2_b, embed_dim);
    return w;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Mat* t : tensors()) n += static_cast<std::size_t>(t->size());
    return n;
  }

  bool all_finite() const {
    for (const Mat* t : tensors())
      if (!t->allFinite()) return false;
    return true;
  }

  bool operator==(const LstmWeights& o) const {
    if (embed != o.embed || hidden != o.hidden) return false;
    const auto a = tensors();
    const auto b = o.tensors();
    for (std::size_t i = 0; i < kTensorCount; ++i)
      if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols() || *a[i] != *b[i]) return false;
    return true;
  }
};

/// Per-tracklet recurrent state.
struct LstmMotionState {
  std::array<Vec3, kVelocityHistory> velocity_history{};  // oldest first
  Eigen::VectorXd pred_h, pred_c, upd_h, upd_c;
  Vec3 refined = Vec3::Zero();  // last refined location

  static LstmMotionState init(const Vec3& location, int hidden) {
    LstmMotionState s;
    for (auto& v : s.velocity_history) v.setZero();
    s.pred_h = Eigen::VectorXd::Zero(hidden);
    s.pred_c = Eigen::VectorXd::Zero(hidden);
    s.upd_h = Eigen::VectorXd::Zero(hidden);
    s.upd_c = Eigen::VectorXd::Zero(hidden);
    s.refined = location;
    return s;
  }

  bool finite() const {
    return pred_h.allFinite() && pred_c.allFinite() && upd_h.allFinite() && upd_c.allFinite();
  }
};

namespace lstm_detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct CellCache {
  Mat xh;  // [x; h_prev]
  Mat i, f, g, o;
  Mat c_prev, tanh_c;
};

/// One LSTM step on column-batched inputs; updates h and c in place.
inline void cell_forward(const Mat& w, const Mat& b, const Mat& x, Mat& h, Mat& c, CellCache* cache) {
  const Eigen::Index hd = h.rows();
  const Eigen::Index batch = x.cols();
  Mat xh(x.rows() + hd, batch);
  xh.topRows(x.rows()) = x;
  xh.bottomRows(hd) = h;
  Mat z = w * xh;
  z.colwise() += b.col(0);
  Mat i = z.topRows(hd).unaryExpr(&sigmoid);
  Mat f = z.middleRows(hd, hd).unaryExpr(&sigmoid);
  Mat g = z.middleRows(2 * hd, hd).array().tanh().matrix();
  Mat o = z.bottomRows(hd).unaryExpr(&sigmoid);
  Mat c_new = f.cwiseProduct(c) + i.cwiseProduct(g);
  Mat tanh_c = c_new.array().tanh().matrix();
  h = o.cwiseProduct(tanh_c);
  if (cache) {
    cache->xh = std::move(xh);
    cache->c_prev = c;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->tanh_c = tanh_c;
  }
  c = std::move(c_new);
}

/// Backward of cell_forward. `dh`, `dc` hold gradients w.r.t. the step outputs and are replaced
/// with gradients w.r.t. h_prev, c_prev. Returns the gradient w.r.t. x.
inline Mat cell_backward(const Mat& w, const CellCache& k, Mat& dh, Mat& dc, Mat& dw, Mat& db) {
  const Eigen::Index hd = dh.rows();
  const Eigen::Index xd = k.xh.rows() - hd;
  const Mat d_o = dh.cwiseProduct(k.tanh_c);
  const Mat dct =
      dc + dh.cwiseProduct(k.o).cwiseProduct((1.0 - k.tanh_c.array().square()).matrix());
  Mat dz(4 * hd, dh.cols());
  dz.topRows(hd) = dct.cwiseProduct(k.g).cwiseProduct(k.i.cwiseProduct((1.0 - k.i.array()).matrix()));
  dz.middleRows(hd, hd) =
      dct.cwiseProduct(k.c_prev).cwiseProduct(k.f.cwiseProduct((1.0 - k.f.array()).matrix()));
  dz.middleRows(2 * hd, hd) = dct.cwiseProduct(k.i).cwiseProduct((1.0 - k.g.array().square()).matrix());
  dz.bottomRows(hd) = d_o.cwiseProduct(k.o.cwiseProduct((1.0 - k.o.array()).matrix()));
  dw.noalias() += dz * k.xh.transpose();
  db += dz.rowwise().sum();
  const Mat dxh = w.transpose() * dz;
  dc = dct.cwiseProduct(k.f);
  dh = dxh.bottomRows(hd);
  return dxh.topRows(xd);
}

struct MlpCache {
  Mat in, act;
};

/// y = W2 tanh(W1 x + b1) + b2
inline Mat mlp_forward(const Mat& w1, const Mat& b1, const Mat& w2, const Mat& b2, const Mat& x, MlpCache* cache) {
  Mat pre = w1 * x;
  pre.colwise() += b1.col(0);
  Mat act = pre.array().tanh().matrix();
  Mat y = w2 * act;
  y.colwise() += b2.col(0);
  if (cache) {
    cache->in = x;
    cache->act = std::move(act);
  }
  return y;
}

inline Mat mlp_backward(const Mat& w1, const Mat& w2, const MlpCache& k, const Mat& dy, Mat& dw1, Mat& db1,
                        Mat& dw2, Mat& db2) {
  dw2.noalias() += dy * k.act.transpose();
  db2 += dy.rowwise().sum();
  const Mat dpre = (w2.transpose() * dy).cwiseProduct((1.0 - k.act.array().square()).matrix());
  dw1.noalias() += dpre * k.in.transpose();
  db1 += dpre.rowwise().sum();
  return w1.transpose() * dpre;
}

inline Mat affine(const Mat& w, const Mat& b, const Mat& x) {
  Mat y = w * x;
  y.colwise() += b.col(0);
  return y;
}

/// Recurrent state for a batch of tracklets; columns are batch entries.
struct BatchState {
  std::array<Mat, kVelocityHistory> history;  // 3 x B each, oldest first
  Mat pred_h, pred_c, upd_h, upd_c;           // H x B
  Mat refined;                                // 3 x B

  static BatchState zeros(int hidden, Eigen::Index batch, const Mat& start) {
    BatchState s;
    for (auto& h : s.history) h = Mat::Zero(3, batch);
    s.pred_h = Mat::Zero(hidden, batch);
    s.pred_c = Mat::Zero(hidden, batch);
    s.upd_h = Mat::Zero(hidden, batch);
    s.upd_c = Mat::Zero(hidden, batch);
    s.refined = start;
    return s;
  }
};

struct PredictCache {
  std::array<CellCache, kVelocityHistory> cells;
  std::array<Mat, kVelocityHistory> history;
  MlpCache out;
};

struct UpdateCache {
  Mat rel_pred, rel_obs;  // P~ - P_prev, P^ - P_prev
  CellCache cell;
  MlpCache out;
  Mat gain, innovation;  // innovation = P^ - P~
};

/// Returns the predicted velocity; advances the prediction cell.
inline Mat predict_velocity(const LstmWeights& w, BatchState& s, PredictCache* cache) {
  for (int k = 0; k < kVelocityHistory; ++k) {
    const Mat x = affine(w.vel_embed_w, w.vel_embed_b, s.history[k]);
    cell_forward(w.pred_gates_w, w.pred_gates_b, x, s.pred_h, s.pred_c, cache ? &cache->cells[k] : nullptr);
    if (cache) cache->history[k] = s.history[k];
  }
  return mlp_forward(w.pred_out1_w, w.pred_out1_b, w.pred_out2_w, w.pred_out2_b, s.pred_h,
                     cache ? &cache->out : nullptr);
}

/// Fuses prediction and observation; advances the updating cell, the history and `refined`.
inline Mat update_location(const LstmWeights& w, BatchState& s, const Mat& predicted, const Mat& observed,
                           UpdateCache* cache) {
  const Eigen::Index e = w.embed;
  const Mat rel_pred = predicted - s.refined;
  const Mat rel_obs = observed - s.refined;
  Mat x(2 * e, predicted.cols());
  x.topRows(e) = affine(w.loc_embed_w, w.loc_embed_b, rel_pred);
  x.bottomRows(e) = affine(w.loc_embed_w, w.loc_embed_b, rel_obs);
  cell_forward(w.upd_gates_w, w.upd_gates_b, x, s.upd_h, s.upd_c, cache ? &cache->cell : nullptr);
  const Mat gain = mlp_forward(w.upd_out1_w, w.upd_out1_b, w.upd_out2_w, w.upd_out2_b, s.upd_h,
                               cache ? &cache->out : nullptr);
  const Mat innovation = observed - predicted;
  Mat refined = predicted + gain.cwiseProduct(innovation);
  for (int k = 0; k + 1 < kVelocityHistory; ++k) s.history[k] = s.history[k + 1];
  s.history[kVelocityHistory - 1] = refined - s.refined;
  if (cache) {
    cache->rel_pred = rel_pred;
    cache->rel_obs = rel_obs;
    cache->gain = gain;
    cache->innovation = innovation;
  }
  s.refined = refined;
  return refined;
}

}  // namespace lstm_detail

// ---------------------------------------------------------------------------
// Single-tracklet interface.

namespace lstm_detail {
inline BatchState to_batch(const LstmMotionState& s) {
  BatchState b;
  for (int k = 0; k < kVelocityHistory; ++k) b.history[k] = s.velocity_history[k];
  b.pred_h = s.pred_h;
  b.pred_c = s.pred_c;
  b.upd_h = s.upd_h;
  b.upd_c = s.upd_c;
  b.refined = s.refined;
  return b;
}

inline void from_batch(const BatchState& b, LstmMotionState& s) {
  for (int k = 0; k < kVelocityHistory; ++k) s.velocity_history[k] = b.history[k].col(0);
  s.pred_h = b.pred_h.col(0);
  s.pred_c = b.pred_c.col(0);
  s.upd_h = b.upd_h.col(0);
  s.upd_c = b.upd_c.col(0);
  s.refined = b.refined.col(0);
}
}  // namespace lstm_detail

/// P~ = P_prev + predicted velocity. Advances the prediction hidden state.
inline Vec3 plstm_predict(LstmMotionState& state, const LstmWeights& w, const Vec3& previous) {
  lstm_detail::BatchState b = lstm_detail::to_batch(state);
  const Mat vel = lstm_detail::predict_velocity(w, b, nullptr);
  lstm_detail::from_batch(b, state);
  return previous + Vec3(vel.col(0));
}

/// Refined location from the prediction and the observation; pushes the new velocity.
inline Vec3 ulstm_update(LstmMotionState& state, const LstmWeights& w, const Vec3& predicted, const Vec3& observed) {
  lstm_detail::BatchState b = lstm_detail::to_batch(state);
  const Mat refined = lstm_detail::update_location(w, b, Mat(predicted), Mat(observed), nullptr);
  lstm_detail::from_batch(b, state);
  return Vec3(refined.col(0));
}

// ---------------------------------------------------------------------------
// Training.

/// One ground-truth track with its per-frame monocular observations (world meters).
struct MotionTrajectory {
  std::vector<Vec3> truth;
  std::vector<Vec3> observed;
};

enum class LinearMotionTarget : std::uint8_t {
  consecutive,   // compare refined velocity with the previous refined velocity
  ground_truth,  // compare refined velocity with the ground-truth velocity
};

struct LstmTrainConfig {
  int steps = 2000;
  int batch = 8;
  int window = 10;
  double learning_rate = 1e-3;
  double final_lr_fraction = 1.0;  // cosine decay of the step size down to this fraction
  double momentum = 0.9;
  double clip_norm = 5.0;
  double linear_weight = 1.0;
  LinearMotionTarget linear_target = LinearMotionTarget::consecutive;
  std::uint64_t seed = 0;
  int log_every = 0;  // 0 disables the loss curve
};

struct LstmTrainResult {
  LstmWeights weights;
  double final_loss = 0.0;  // full-dataset loss after the last step
  std::vector<std::pair<int, double>> loss_curve;
};

/// A batch of windows: truth[t], observed[t] are 3 x B.
struct WindowBatch {
  std::vector<Mat> truth;
  std::vector<Mat> observed;
};

namespace lstm_detail {

constexpr double kCosEps = 1e-8;

inline double sgn(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

struct Forward {
  std::vector<PredictCache> pred;
  std::vector<UpdateCache> upd;
  std::vector<Mat> predicted;  // P~_t
  std::vector<Mat> refined;    // P_bar_t, t = 0..T
};

inline double window_loss(const LstmWeights& w, const WindowBatch& wb, const LstmTrainConfig& cfg, Forward* fwd) {
  const int len = static_cast<int>(wb.truth.size());
  const Eigen::Index batch = wb.truth.front().cols();
  BatchState s = BatchState::zeros(w.hidden, batch, wb.observed[0]);
  Forward local;
  Forward& f = fwd ? *fwd : local;
  f.pred.assign(len, {});
  f.upd.assign(len, {});
  f.predicted.assign(len, Mat());
  f.refined.assign(len, Mat());
  f.refined[0] = s.refined;
  const bool keep = fwd != nullptr;
  for (int t = 1; t < len; ++t) {
    const Mat prev = s.refined;
    const Mat vel = predict_velocity(w, s, keep ? &f.pred[t] : nullptr);
    f.predicted[t] = prev + vel;
    f.refined[t] = update_location(w, s, f.predicted[t], wb.observed[t], keep ? &f.upd[t] : nullptr);
  }
  const double nb = static_cast<double>(batch);
  const double steps = static_cast<double>(len - 1);
  double loc = 0.0;
  for (int t = 1; t < len; ++t) {
    loc += (f.predicted[t] - wb.truth[t]).cwiseAbs().sum();
    loc += (f.refined[t] - wb.truth[t]).cwiseAbs().sum();
  }
  loc /= nb * steps;
  double lin = 0.0;
  const int first = cfg.linear_target == LinearMotionTarget::consecutive ? 2 : 1;
  const double lin_terms = static_cast<double>(len - first);
  if (cfg.linear_weight != 0.0 && lin_terms > 0) {
    for (int t = first; t < len; ++t) {
      const Mat v = f.refined[t] - f.refined[t - 1];
      const Mat ref = cfg.linear_target == LinearMotionTarget::consecutive ? Mat(f.refined[t - 1] - f.refined[t - 2])
                                                                           : Mat(wb.truth[t] - wb.truth[t - 1]);
      for (Eigen::Index b = 0; b < batch; ++b) {
        const Vec3 a = v.col(b);
        const Vec3 r = ref.col(b);
        const double na = std::sqrt(a.squaredNorm() + kCosEps);
        const double nr = std::sqrt(r.squaredNorm() + kCosEps);
        lin += (1.0 - a.dot(r) / (na * nr)) + (a - r).cwiseAbs().sum();
      }
    }
    lin *= cfg.linear_weight / (nb * lin_terms);
  }
  return loc + lin;
}

/// Gradient of window_loss w.r.t. every weight tensor (accumulated into `grad`).
inline double window_gradient(const LstmWeights& w, const WindowBatch& wb, const LstmTrainConfig& cfg,
                              LstmWeights& grad) {
  Forward f;
  const double loss = window_loss(w, wb, cfg, &f);
  const int len = static_cast<int>(wb.truth.size());
  const Eigen::Index batch = wb.truth.front().cols();
  const double nb = static_cast<double>(batch);
  const double steps = static_cast<double>(len - 1);

  std::vector<Mat> d_refined(len, Mat::Zero(3, batch));
  std::vector<Mat> d_vel(len, Mat::Zero(3, batch));  // v_t = refined_t - refined_{t-1}
  std::vector<Mat> d_predicted(len, Mat::Zero(3, batch));

  // Loss gradients.
  const double loc_scale = 1.0 / (nb * steps);
  for (int t = 1; t < len; ++t) {
    d_predicted[t] = (f.predicted[t] - wb.truth[t]).unaryExpr(&sgn) * loc_scale;
    d_refined[t] = (f.refined[t] - wb.truth[t]).unaryExpr(&sgn) * loc_scale;
  }
  const int first = cfg.linear_target == LinearMotionTarget::consecutive ? 2 : 1;
  const double lin_terms = static_cast<double>(len - first);
  if (cfg.linear_weight != 0.0 && lin_terms > 0) {
    const double scale = cfg.linear_weight / (nb * lin_terms);
    for (int t = first; t < len; ++t) {
      const bool consecutive = cfg.linear_target == LinearMotionTarget::consecutive;
      const Mat v = f.refined[t] - f.refined[t - 1];
      const Mat ref = consecutive ? Mat(f.refined[t - 1] - f.refined[t - 2]) : Mat(wb.truth[t] - wb.truth[t - 1]);
      for (Eigen::Index b = 0; b < batch; ++b) {
        const Vec3 a = v.col(b);
        const Vec3 r = ref.col(b);
        const double na = std::sqrt(a.squaredNorm() + kCosEps);
        const double nr = std::sqrt(r.squaredNorm() + kCosEps);
        const double dot = a.dot(r);
        const Vec3 dcos_da = r / (na * nr) - dot * a / (na * na * na * nr);
        const Vec3 dcos_dr = a / (na * nr) - dot * r / (na * nr * nr * nr);
        const Vec3 dl1 = (a - r).unaryExpr(&sgn);
        d_vel[t].col(b) += scale * (-dcos_da + dl1);
        if (consecutive) d_vel[t - 1].col(b) += scale * (-dcos_dr - dl1);
      }
    }
  }

  Mat dh_p = Mat::Zero(w.hidden, batch), dc_p = Mat::Zero(w.hidden, batch);
  Mat dh_u = Mat::Zero(w.hidden, batch), dc_u = Mat::Zero(w.hidden, batch);

  for (int t = len - 1; t >= 1; --t) {
    // v_t is final once every later frame has been processed.
    d_refined[t] += d_vel[t];
    d_refined[t - 1] -= d_vel[t];

    // refined = predicted + gain * innovation, innovation = observed - predicted
    const UpdateCache& uc = f.upd[t];
    const Mat& dr = d_refined[t];
    d_predicted[t] += dr.cwiseProduct((1.0 - uc.gain.array()).matrix());
    const Mat d_gain = dr.cwiseProduct(uc.innovation);
    const Mat dh_gain =
        mlp_backward(w.upd_out1_w, w.upd_out2_w, uc.out, d_gain, grad.upd_out1_w, grad.upd_out1_b, grad.upd_out2_w,
                     grad.upd_out2_b);
    dh_u += dh_gain;
    const Mat dx = cell_backward(w.upd_gates_w, uc.cell, dh_u, dc_u, grad.upd_gates_w, grad.upd_gates_b);
    const Eigen::Index e = w.embed;
    const Mat dx1 = dx.topRows(e);
    const Mat dx2 = dx.bottomRows(e);
    grad.loc_embed_w.noalias() += dx1 * uc.rel_pred.transpose() + dx2 * uc.rel_obs.transpose();
    grad.loc_embed_b += dx1.rowwise().sum() + dx2.rowwise().sum();
    const Mat d_rel_pred = w.loc_embed_w.transpose() * dx1;
    const Mat d_rel_obs = w.loc_embed_w.transpose() * dx2;
    d_predicted[t] += d_rel_pred;
    d_refined[t - 1] -= d_rel_pred + d_rel_obs;

    // predicted = refined_{t-1} + mlp(h_pred)
    const PredictCache& pc = f.pred[t];
    d_refined[t - 1] += d_predicted[t];
    dh_p += mlp_backward(w.pred_out1_w, w.pred_out2_w, pc.out, d_predicted[t], grad.pred_out1_w, grad.pred_out1_b,
                         grad.pred_out2_w, grad.pred_out2_b);
    for (int k = kVelocityHistory - 1; k >= 0; --k) {
      const Mat dxk = cell_backward(w.pred_gates_w, pc.cells[k], dh_p, dc_p, grad.pred_gates_w, grad.pred_gates_b);
      grad.vel_embed_w.noalias() += dxk * pc.history[k].transpose();
      grad.vel_embed_b += dxk.rowwise().sum();
      // history[k] at frame t holds v_{t - 5 + k}; entries before the first update are constants.
      const int src = t - kVelocityHistory + k;
      if (src >= 1) d_vel[src] += w.vel_embed_w.transpose() * dxk;
    }
  }
  return loss;
}

}  // namespace lstm_detail

/// Mean loss over the batch of windows.
inline double lstm_window_loss(const LstmWeights& w, const WindowBatch& wb, const LstmTrainConfig& cfg) {
  return lstm_detail::window_loss(w, wb, cfg, nullptr);
}

/// Loss and its gradient for one batch of windows.
inline double lstm_window_gradient(const LstmWeights& w, const WindowBatch& wb, const LstmTrainConfig& cfg,
                                   LstmWeights& grad) {
  grad = LstmWeights::zeros(w.embed, w.hidden);
  return lstm_detail::window_gradient(w, wb, cfg, grad);
}

namespace lstm_detail {

struct WindowIndex {
  std::size_t trajectory;
  std::size_t start;
};

inline std::vector<WindowIndex> enumerate_windows(const std::vector<MotionTrajectory>& data, int window) {
  std::vector<WindowIndex> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t n = std::min(data[i].truth.size(), data[i].observed.size());
    if (n < static_cast<std::size_t>(window)) continue;
    for (std::size_t s = 0; s + window <= n; ++s) out.push_back({i, s});
  }
  return out;
}

inline WindowBatch gather(const std::vector<MotionTrajectory>& data, const std::vector<WindowIndex>& idx,
                          int window) {
  WindowBatch wb;
  const auto batch = static_cast<Eigen::Index>(idx.size());
  wb.truth.assign(window, Mat(3, batch));
  wb.observed.assign(window, Mat(3, batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& tr = data[idx[b].trajectory];
    for (int t = 0; t < window; ++t) {
      wb.truth[t].col(b) = tr.truth[idx[b].start + t];
      wb.observed[t].col(b) = tr.observed[idx[b].start + t];
    }
  }
  return wb;
}

}  // namespace lstm_detail

/// Mean loss over every window of the dataset (stride 1), evaluated in chunks.
inline double lstm_dataset_loss(const LstmWeights& w, const std::vector<MotionTrajectory>& data,
                                const LstmTrainConfig& cfg) {
  const auto all = lstm_detail::enumerate_windows(data, cfg.window);
  if (all.empty()) throw InvalidArgument("dataset has no complete window");
  constexpr std::size_t kChunk = 256;
  double acc = 0.0;
  for (std::size_t i = 0; i < all.size(); i += kChunk) {
    const std::vector<lstm_detail::WindowIndex> part(all.begin() + i, all.begin() + std::min(all.size(), i + kChunk));
    acc += lstm_window_loss(w, lstm_detail::gather(data, part, cfg.window), cfg) * static_cast<double>(part.size());
  }
  return acc / static_cast<double>(all.size());
}

/// Momentum gradient descent with gradient-norm clipping over random windows of the dataset.
inline LstmTrainResult train_lstm(const std::vector<MotionTrajectory>& data, const LstmTrainConfig& cfg,
                                  const LstmWeights& init) {
  if (data.empty()) throw InvalidArgument("training dataset is empty");
  if (cfg.window < 3 || cfg.batch < 1 || cfg.steps < 0 || !(cfg.final_lr_fraction >= 0.0 && cfg.final_lr_fraction <= 1.0))
    throw InvalidArgument("invalid training configuration");
  const auto windows = lstm_detail::enumerate_windows(data, cfg.window);
  if (windows.empty()) throw InvalidArgument("no trajectory is as long as the training window");

  LstmTrainResult result;
  result.weights = init;
  LstmWeights velocity = LstmWeights::zeros(init.embed, init.hidden);
  LstmWeights grad;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, windows.size() - 1);
  std::vector<lstm_detail::WindowIndex> idx(static_cast<std::size_t>(cfg.batch));

  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& i : idx) i = windows[pick(rng)];
    const double loss =
        lstm_window_gradient(result.weights, lstm_detail::gather(data, idx, cfg.window), cfg, grad);
    if (!std::isfinite(loss)) throw DivergedTraining(static_cast<std::size_t>(step));

    double norm2 = 0.0;
    for (const Mat* g : std::as_const(grad).tensors()) norm2 += g->squaredNorm();
    const double norm = std::sqrt(norm2);
    const double clip = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

    const double phase = cfg.steps > 1 ? static_cast<double>(step) / (cfg.steps - 1) : 0.0;
    const double lr = cfg.learning_rate * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 *
                                                                        (1.0 + std::cos(std::numbers::pi * phase)));
    auto ws = result.weights.tensors();
    auto vs = velocity.tensors();
    auto gs = grad.tensors();
    for (std::size_t k = 0; k < LstmWeights::kTensorCount; ++k) {
      *vs[k] = cfg.momentum * *vs[k] + clip * *gs[k];
      *ws[k] -= lr * *vs[k];
    }
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps))
      result.loss_curve.emplace_back(step, loss);
  }
  result.final_loss = lstm_dataset_loss(result.weights, data, cfg);
  if (!std::isfinite(result.final_loss) || !result.weights.all_finite())
    throw DivergedTraining(static_cast<std::size_t>(cfg.steps));
  return result;
}

}  // namespace mono3dt
