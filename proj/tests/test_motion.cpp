#include <gtest/gtest.h>

#include <random>

#include "mono3dt/motion.hpp"
#include "oracles.hpp"

using namespace mono3dt;

// ---------------------------------------------------------------------------
// Kalman filters

TEST(Kalman, ScalarGain) {
  GaussianState<1> s;
  s.mean << 2.0;
  s.cov << 3.0;
  const double r = 1.5;
  Eigen::Matrix<double, 1, 1> z, h, rr;
  z << 5.0;
  h << 1.0;
  rr << r;
  const auto out = kf_update<1, 1>(s, z, h, rr);
  const double k = 3.0 / (3.0 + r);
  EXPECT_NEAR(out.mean(0), 2.0 + k * 3.0, 1e-12);
  EXPECT_NEAR(out.cov(0, 0), (1 - k) * 3.0, 1e-12);
}

TEST(Kalman, SingularInnovationThrows) {
  GaussianState<1> s;
  s.cov << 0.0;
  Eigen::Matrix<double, 1, 1> z, h, rr;
  z << 1.0;
  h << 1.0;
  rr << 0.0;
  EXPECT_THROW((kf_update<1, 1>(s, z, h, rr)), SingularInnovation);
}

TEST(Kalman, NoiselessConstantVelocityConverges) {
  KalmanNoise n;
  n.velocity_process_var = 0.0;
  n.position_process_var = 0.0;
  n.depth_sigma_per_meter = 0.0;
  n.min_measurement_sigma = 1e-9;
  const Vec3 v(0.7, -0.2, 0.0);
  Vec3 p(10, 5, 0.75);
  KF3DState s = kf3d_init(p, 20.0, n);
  for (int t = 0; t < 10; ++t) {
    p += v;
    s = kf_update(kf_predict(s, n), p, 20.0, n);
  }
  EXPECT_LT((s.mean.head<3>() - p).norm(), 1e-6);
  EXPECT_LT((s.mean.tail<3>() - v).norm(), 1e-6);
}

TEST(Kalman, ZeroVelocityPredictionKeepsPosition) {
  KalmanNoise n;
  KF3DState s = kf3d_init(Vec3(1, 2, 3), 10.0, n);
  EXPECT_EQ(kf_predict(s, n).mean.head<3>(), Vec3(1, 2, 3));
}

template <int N>
double min_eigenvalue(const Eigen::Matrix<double, N, N>& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>>(m).eigenvalues().minCoeff();
}

TEST(Kalman, CovarianceStaysPsd) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  KalmanNoise n;
  KF3DState s3 = kf3d_init(Vec3::Zero(), 30.0, n);
  KF2DState s2 = kf2d_init({100, 100, 180, 150}, n);
  for (int t = 0; t < 300; ++t) {
    s3 = kf_predict(s3, n);
    if (t % 3) s3 = kf_update(s3, Vec3(g(rng), g(rng), g(rng)) * 5.0, 5.0 + 50.0 * std::abs(g(rng)), n);
    s2 = kf_predict(s2, n);
    const double x = 100 + 10 * g(rng), y = 100 + 10 * g(rng);
    if (t % 4) s2 = kf_update(s2, Box2D{x, y, x + 80 + 5 * g(rng), y + 50 + 5 * g(rng)}, n);
    EXPECT_LT((s3.cov - s3.cov.transpose()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_GE(min_eigenvalue(s3.cov), -1e-9);
    EXPECT_GE(min_eigenvalue(s2.cov), -1e-9);
  }
}

// ---------------------------------------------------------------------------
// Blend update

namespace {
ObjectState state_at(const Vec3& p, double yaw) {
  ObjectState s;
  s.position = p;
  s.yaw = yaw;
  s.dims = Vec3(4, 2, 1.5);
  s.appearance = Vector::Zero(4);
  return s;
}
}  // namespace

TEST(Blend, Endpoints) {
  ObjectState prev = state_at(Vec3(0, 0, 0), 0.2), obs = state_at(Vec3(1, 2, 0), 1.0);
  obs.dims = Vec3(5, 2.2, 1.6);
  obs.appearance = Vector::Ones(4);
  const auto same = blend_update(prev, obs, 1.0);
  EXPECT_EQ(same.position, prev.position);
  EXPECT_EQ(same.yaw, prev.yaw);
  EXPECT_EQ(same.dims, prev.dims);
  EXPECT_EQ(same.appearance, prev.appearance);
  const auto full = blend_update(prev, obs, 0.0);
  EXPECT_TRUE(full.position.isApprox(obs.position));
  EXPECT_NEAR(full.yaw, obs.yaw, 1e-12);
  EXPECT_TRUE(full.dims.isApprox(obs.dims));
  EXPECT_TRUE(full.appearance.isApprox(obs.appearance));
}

TEST(Blend, PartialStep) {
  const auto s = blend_update(state_at(Vec3::Zero(), 0.0), state_at(Vec3(1, 0, 0), 0.0), 0.6);
  EXPECT_NEAR(s.position.x(), 0.4, 1e-12);
  EXPECT_EQ(s.position.y(), 0.0);
  EXPECT_THROW(blend_update(state_at(Vec3::Zero(), 0), state_at(Vec3::Zero(), 0), 1.5), InvalidArgument);
}

TEST(Blend, ShortArc) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double a = kTwoPi * u(rng), b = kTwoPi * u(rng), ad = u(rng);
    const auto s = blend_update(state_at(Vec3::Zero(), a), state_at(Vec3::Zero(), b), ad);
    EXPECT_LE(std::abs(angle_diff(s.yaw, a)), kPi * (1 - ad) + 1e-9);
    EXPECT_LE(std::abs(angle_diff(s.yaw, a)), std::abs(angle_diff(b, a)) + 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Prediction in world coordinates

TEST(Prediction, StaticObjectMovingCamera) {
  ObjectState s = state_at(Vec3(40, 2, 0.75), 0.0);
  for (const auto backend : {MotionBackend::none, MotionBackend::kf3d}) {
    auto m = MotionEstimator::start(backend, s, {}, {}, nullptr);
    for (int t = 0; t < 10; ++t) {
      CameraFrame cam;
      cam.pose = CameraPose::level(Vec3(t * 1.0, 0.3 * t, 1.65), 0.02 * t);
      const PredictedView v = predict_tracklet(m, s, cam);
      EXPECT_LT((v.state.position - s.position).norm(), 1e-12);
      const auto p = project_point(s.position, cam);
      EXPECT_LT((v.state.center_proj - p.pixel).norm(), 1e-9);
      EXPECT_NEAR(v.state.depth, p.depth, 1e-9);
      m.update(s.position, v.state.depth, s.position, v.box2d);
    }
  }
}

TEST(Prediction, IndependentOfCameraPose) {
  ObjectState s = state_at(Vec3(30, 0, 0.75), 0.0);
  auto a = MotionEstimator::start(MotionBackend::kf3d, s, {}, {}, nullptr);
  auto b = a;
  Vec3 p = s.position;
  for (int t = 0; t < 8; ++t) {
    CameraFrame c1, c2;
    c2.pose = CameraPose::level(Vec3(-5.0 * t, 3, 1.65), 0.1 * t);
    const auto va = predict_tracklet(a, s, c1);
    const auto vb = predict_tracklet(b, s, c2);
    EXPECT_EQ(va.state.position, vb.state.position);
    p += Vec3(1, 0, 0);
    s.position = a.update(p, 30.0, p, {});
    b.update(p, 30.0, p, {});
  }
}

TEST(Prediction, Kf3dBeatsNoneOnConstantVelocity) {
  std::mt19937_64 rng(4);
  CameraFrame cam;
  cam.pose = CameraPose::level(Vec3(0, 0, 1.65), 0.0);
  double err_none = 0.0, err_kf = 0.0;
  for (int run = 0; run < 10; ++run) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec3 truth(30, -8, 0.75);
    const Vec3 vel(0.0, 0.8, 0.0);
    ObjectState s = state_at(truth, 0.0);
    auto none = MotionEstimator::start(MotionBackend::none, s, {}, {}, nullptr);
    auto kf = MotionEstimator::start(MotionBackend::kf3d, s, {}, {}, nullptr);
    ObjectState sn = s, sk = s;
    for (int t = 1; t < 20; ++t) {
      truth += vel;
      const auto target = project_point(truth, cam).pixel;
      const auto vn = predict_tracklet(none, sn, cam);
      const auto vk = predict_tracklet(kf, sk, cam);
      if (t >= 5) {
        err_none += (vn.state.center_proj - target).norm();
        err_kf += (vk.state.center_proj - target).norm();
      }
      const double d = camera_depth(truth, cam.pose);
      const Vec3 obs = truth + Vec3(0.05 * d * g(rng), 0.2 * g(rng), 0.0);
      sn.position = none.update(obs, d, obs, {});
      sk.position = kf.update(obs, d, obs, {});
    }
  }
  EXPECT_LT(err_kf, err_none);
}

TEST(Prediction, CoastingExtrapolates) {
  KalmanNoise n;
  ObjectState s = state_at(Vec3(20, 0, 0.75), 0.0);
  auto m = MotionEstimator::start(MotionBackend::kf3d, s, {}, n, nullptr);
  Vec3 p = s.position;
  for (int t = 0; t < 20; ++t) {
    m.predict(p);
    p += Vec3(1, 0, 0);
    m.update(p, 20.0, p, {});
  }
  Vec3 last = m.kf3d().mean.head<3>();
  for (int t = 0; t < 8; ++t) {
    m.predict(last);
    const Vec3 next = m.coast();
    EXPECT_NEAR((next - last).x(), 1.0, 0.05);
    last = next;
  }
  EXPECT_THROW(m.coast(), std::logic_error);
}

// ---------------------------------------------------------------------------
// LSTM

namespace {

using Mat = Eigen::MatrixXd;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop LSTM step, gate order i, f, g, o over the input [x; h].
void ref_cell(const Mat& w, const Mat& b, const std::vector<double>& x, std::vector<double>& h,
              std::vector<double>& c) {
  const std::size_t hd = h.size();
  std::vector<double> in(x);
  in.insert(in.end(), h.begin(), h.end());
  std::vector<double> z(4 * hd);
  for (std::size_t r = 0; r < 4 * hd; ++r) {
    double acc = b(static_cast<Eigen::Index>(r), 0);
    for (std::size_t k = 0; k < in.size(); ++k) acc += w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) * in[k];
    z[r] = acc;
  }
  for (std::size_t j = 0; j < hd; ++j) {
    const double i = sig(z[j]), f = sig(z[hd + j]), g = std::tanh(z[2 * hd + j]), o = sig(z[3 * hd + j]);
    c[j] = f * c[j] + i * g;
    h[j] = o * std::tanh(c[j]);
  }
}

std::vector<double> ref_affine(const Mat& w, const Mat& b, const std::vector<double>& x) {
  std::vector<double> y(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    double acc = b(r, 0);
    for (Eigen::Index k = 0; k < w.cols(); ++k) acc += w(r, k) * x[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(r)] = acc;
  }
  return y;
}

std::vector<double> ref_mlp(const Mat& w1, const Mat& b1, const Mat& w2, const Mat& b2, const std::vector<double>& x) {
  auto a = ref_affine(w1, b1, x);
  for (auto& v : a) v = std::tanh(v);
  return ref_affine(w2, b2, a);
}

struct RefState {
  std::vector<std::vector<double>> history;
  std::vector<double> ph, pc, uh, uc;
  std::vector<double> refined;
};

std::vector<double> ref_predict(RefState& s, const LstmWeights& w, const std::vector<double>& prev) {
  for (const auto& v : s.history) ref_cell(w.pred_gates_w, w.pred_gates_b, ref_affine(w.vel_embed_w, w.vel_embed_b, v), s.ph, s.pc);
  const auto vel = ref_mlp(w.pred_out1_w, w.pred_out1_b, w.pred_out2_w, w.pred_out2_b, s.ph);
  return {prev[0] + vel[0], prev[1] + vel[1], prev[2] + vel[2]};
}

std::vector<double> ref_update(RefState& s, const LstmWeights& w, const std::vector<double>& pred,
                               const std::vector<double>& obs) {
  std::vector<double> rp(3), ro(3);
  for (int k = 0; k < 3; ++k) {
    rp[k] = pred[k] - s.refined[k];
    ro[k] = obs[k] - s.refined[k];
  }
  auto x = ref_affine(w.loc_embed_w, w.loc_embed_b, rp);
  const auto xo = ref_affine(w.loc_embed_w, w.loc_embed_b, ro);
  x.insert(x.end(), xo.begin(), xo.end());
  ref_cell(w.upd_gates_w, w.upd_gates_b, x, s.uh, s.uc);
  const auto gain = ref_mlp(w.upd_out1_w, w.upd_out1_b, w.upd_out2_w, w.upd_out2_b, s.uh);
  std::vector<double> out(3), vel(3);
  for (int k = 0; k < 3; ++k) {
    out[k] = pred[k] + gain[k] * (obs[k] - pred[k]);
    vel[k] = out[k] - s.refined[k];
  }
  s.history.erase(s.history.begin());
  s.history.push_back(vel);
  s.refined = out;
  return out;
}

}  // namespace

TEST(Lstm, ZeroWeightsAreNeutral) {
  const auto w = LstmWeights::zeros();
  auto s = LstmMotionState::init(Vec3(1, 2, 3), w.hidden);
  const Vec3 pred = plstm_predict(s, w, Vec3(1, 2, 3));
  EXPECT_EQ(pred, Vec3(1, 2, 3));
  EXPECT_EQ(ulstm_update(s, w, Vec3(2, 2, 3), Vec3(5, 0, 0)), Vec3(2, 2, 3));
}

TEST(Lstm, MatchesReferenceForward) {
  for (const auto& [e, h] : {std::pair{8, 6}, std::pair{64, 128}}) {
    const auto w = LstmWeights::random(42, e, h);
    auto s = LstmMotionState::init(Vec3(3, 1, 0.7), h);
    RefState r{std::vector<std::vector<double>>(kVelocityHistory, std::vector<double>(3, 0.0)),
               std::vector<double>(h, 0.0), std::vector<double>(h, 0.0), std::vector<double>(h, 0.0),
               std::vector<double>(h, 0.0), {3, 1, 0.7}};
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    Vec3 prev(3, 1, 0.7);
    for (int t = 0; t < 12; ++t) {
      const Vec3 pred = plstm_predict(s, w, prev);
      const auto rpred = ref_predict(r, w, {prev.x(), prev.y(), prev.z()});
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(pred(k), rpred[static_cast<std::size_t>(k)], 1e-10);
      const Vec3 obs = prev + Vec3(1 + 0.3 * g(rng), 0.3 * g(rng), 0.05 * g(rng));
      const Vec3 ref = ulstm_update(s, w, pred, obs);
      const auto rref = ref_update(r, w, rpred, {obs.x(), obs.y(), obs.z()});
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(ref(k), rref[static_cast<std::size_t>(k)], 1e-10);
      prev = ref;
    }
  }
}

TEST(Lstm, DeterministicForward) {
  const auto w = LstmWeights::random(3);
  auto a = LstmMotionState::init(Vec3::Zero(), w.hidden), b = a;
  for (int t = 0; t < 5; ++t) {
    const Vec3 pa = plstm_predict(a, w, Vec3(t, 0, 0)), pb = plstm_predict(b, w, Vec3(t, 0, 0));
    EXPECT_EQ(pa, pb);
    EXPECT_EQ(ulstm_update(a, w, pa, Vec3(t + 1, 0, 0)), ulstm_update(b, w, pb, Vec3(t + 1, 0, 0)));
  }
  EXPECT_EQ(a.pred_h, b.pred_h);
  EXPECT_EQ(a.upd_c, b.upd_c);
}

namespace {

WindowBatch random_batch(std::uint64_t seed, int window, int batch) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  WindowBatch wb;
  Mat pos(3, batch), vel(3, batch);
  for (int b = 0; b < batch; ++b) {
    pos.col(b) = Vec3(g(rng), g(rng), 0.1 * g(rng)) * 3.0;
    vel.col(b) = Vec3(1 + 0.3 * g(rng), 0.3 * g(rng), 0.02 * g(rng));
  }
  for (int t = 0; t < window; ++t) {
    Mat obs = pos;
    for (int b = 0; b < batch; ++b) obs.col(b) += Vec3(g(rng), g(rng), g(rng)) * 0.3;
    wb.truth.push_back(pos);
    wb.observed.push_back(obs);
    pos += vel;
  }
  return wb;
}

// Largest relative deviation between analytic and central-difference gradients over every entry.
double gradient_check(const LstmTrainConfig& cfg, std::uint64_t seed) {
  const auto w = LstmWeights::random(seed, 4, 5);
  const auto wb = random_batch(seed + 1, 6, 2);
  LstmWeights grad;
  lstm_window_gradient(w, wb, cfg, grad);
  double worst = 0.0;
  const double eps = 1e-5;
  auto probe = w;
  auto ps = probe.tensors();
  const auto gs = std::as_const(grad).tensors();
  for (std::size_t k = 0; k < LstmWeights::kTensorCount; ++k) {
    for (Eigen::Index i = 0; i < ps[k]->size(); ++i) {
      double& x = ps[k]->data()[i];
      const double keep = x;
      x = keep + eps;
      const double up = lstm_window_loss(probe, wb, cfg);
      x = keep - eps;
      const double down = lstm_window_loss(probe, wb, cfg);
      x = keep;
      const double num = (up - down) / (2 * eps);
      const double ana = gs[k]->data()[i];
      const double scale = std::max({std::abs(num), std::abs(ana), 1e-6});
      worst = std::max(worst, std::abs(num - ana) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST(LstmTraining, GradientMatchesFiniteDifferences) {
  LstmTrainConfig cfg;
  EXPECT_LT(gradient_check(cfg, 10), 1e-4);
  cfg.linear_target = LinearMotionTarget::ground_truth;
  EXPECT_LT(gradient_check(cfg, 20), 1e-4);
  cfg.linear_weight = 0.0;
  EXPECT_LT(gradient_check(cfg, 30), 1e-4);
}

TEST(LstmTraining, EmptyDatasetThrows) {
  EXPECT_THROW(train_lstm({}, LstmTrainConfig{}, LstmWeights::random(1, 4, 5)), InvalidArgument);
  MotionTrajectory short_one;
  short_one.truth = short_one.observed = {Vec3::Zero(), Vec3::Ones()};
  EXPECT_THROW(train_lstm({short_one}, LstmTrainConfig{}, LstmWeights::random(1, 4, 5)), InvalidArgument);
}

TEST(LstmTraining, DeterministicInSeed) {
  std::vector<MotionTrajectory> data(1);
  for (int t = 0; t < 15; ++t) {
    data[0].truth.push_back(Vec3(t, 0.5 * t, 0));
    data[0].observed.push_back(Vec3(t + 0.1 * std::sin(t), 0.5 * t, 0));
  }
  LstmTrainConfig cfg;
  cfg.steps = 20;
  cfg.batch = 2;
  const auto a = train_lstm(data, cfg, LstmWeights::random(2, 8, 8));
  const auto b = train_lstm(data, cfg, LstmWeights::random(2, 8, 8));
  EXPECT_TRUE(a.weights == b.weights);
  EXPECT_EQ(a.final_loss, b.final_loss);
}

namespace {

// Noiseless constant-velocity tracks with assorted speeds and headings.
std::vector<MotionTrajectory> constant_velocity_tracks(std::uint64_t seed, int count, int length) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MotionTrajectory> out(static_cast<std::size_t>(count));
  for (auto& tr : out) {
    const double heading = kTwoPi * u(rng), speed = 0.5 + u(rng);
    const Vec3 v(speed * std::cos(heading), speed * std::sin(heading), 0.0);
    Vec3 p(100 * u(rng), 100 * u(rng), 0.75);
    for (int t = 0; t < length; ++t) {
      tr.truth.push_back(p);
      tr.observed.push_back(p);
      p += v;
    }
  }
  return out;
}

struct TrainedConstantVelocity : ::testing::Test {
  static const LstmWeights& weights() {
    static const LstmWeights w = [] {
      LstmTrainConfig cfg;
      cfg.steps = 1500;
      cfg.learning_rate = 3e-3;
      cfg.batch = 8;
      cfg.final_lr_fraction = 0.01;
      cfg.linear_target = LinearMotionTarget::ground_truth;
      cfg.seed = 3;
      return train_lstm(constant_velocity_tracks(1, 64, 20), cfg, LstmWeights::random(5, 16, 32)).weights;
    }();
    return w;
  }
};

}  // namespace

TEST_F(TrainedConstantVelocity, OneStepPredictionError) {
  const auto& w = weights();
  double se = 0.0;
  long n = 0;
  for (const auto& tr : constant_velocity_tracks(77, 30, 20)) {
    auto s = LstmMotionState::init(tr.observed[0], w.hidden);
    Vec3 cur = tr.observed[0];
    for (std::size_t t = 1; t < tr.truth.size(); ++t) {
      const Vec3 pred = plstm_predict(s, w, cur);
      // The first steps carry no velocity history.
      if (t >= 4) {
        se += (pred - tr.truth[t]).squaredNorm();
        ++n;
      }
      cur = ulstm_update(s, w, pred, tr.observed[t]);
    }
  }
  EXPECT_LT(std::sqrt(se / static_cast<double>(n)), 0.05);
}

TEST_F(TrainedConstantVelocity, CorrectionGrowsWithDisagreement) {
  const auto& w = weights();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int seed = 0; seed < 100; ++seed) {
    const auto tr = constant_velocity_tracks(1000 + static_cast<std::uint64_t>(seed), 1, 8)[0];
    auto s = LstmMotionState::init(tr.observed[0], w.hidden);
    Vec3 cur = tr.observed[0];
    for (std::size_t t = 1; t + 1 < tr.truth.size(); ++t) cur = ulstm_update(s, w, plstm_predict(s, w, cur), tr.observed[t]);
    auto agree = s, disagree = s;
    const Vec3 pred = plstm_predict(agree, w, cur);
    plstm_predict(disagree, w, cur);
    Vec3 dir(g(rng), g(rng), 0.0);
    dir.normalize();
    const double c_agree = (ulstm_update(agree, w, pred, pred) - pred).norm();
    const double c_disagree = (ulstm_update(disagree, w, pred, pred + dir) - pred).norm();
    EXPECT_LE(c_agree, c_disagree);
  }
}
