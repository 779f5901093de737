// mono3dt: simulate, track, evaluate, train-motion, demo.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mono3dt/mono3dt.hpp"

namespace fs = std::filesystem;
using namespace mono3dt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("mono3dt");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("MONO3DT_LOG")) {
    const std::string v = env;
    if (v == "error") spdlog::set_level(spdlog::level::err);
    else if (v == "info") spdlog::set_level(spdlog::level::info);
    else if (v == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("ignoring MONO3DT_LOG={}, expected error, info or debug", v);
  }
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

struct Manifest {
  Json doc = Json::object();
  Json timings = Json::object();

  Manifest(const std::string& command, int argc, char** argv) {
    doc["command"] = command;
    Json args = Json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    doc["argv"] = args;
    doc["format_version"] = kFormatVersion;
  }
  void stage(const std::string& name, double seconds) { timings[name] = seconds; }
  void write(const fs::path& path) {
    doc["timings_s"] = timings;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
    out << doc.dump(2) << '\n';
  }
};

fs::path manifest_for_file(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

Json scenario_json(const ScenarioConfig& c) {
  const auto& n = c.noise;
  Json j{{"seed", c.seed},
         {"frames", c.frames},
         {"preset", std::string(to_string(c.preset))},
         {"ego_speed", c.ego_speed},
         {"ego_yaw_rate", c.ego_yaw_rate},
         {"speed_min", c.speed_min},
         {"speed_max", c.speed_max},
         {"yaw_rate_max", c.yaw_rate_max},
         {"accel_amplitude", c.accel_amplitude},
         {"spawn_radius", c.spawn_radius},
         {"appearance_dim", c.appearance_dim},
         {"min_box_area", c.min_box_area},
         {"drop_cover", c.drop_cover},
         {"max_truncation", c.max_truncation},
         {"min_run_before_gap", c.min_run_before_gap},
         {"noise",
          {{"pixel_sigma", n.pixel_sigma},
           {"depth_sigma_per_meter", n.depth_sigma_per_meter},
           {"yaw_sigma", n.yaw_sigma},
           {"dim_sigma", n.dim_sigma},
           {"appearance_sigma", n.appearance_sigma},
           {"score_sigma", n.score_sigma},
           {"dropout", n.dropout}}},
         {"intrinsics", intrinsics_to_json(c.intrinsics)}};
  j["n_vehicles"] = c.n_vehicles ? Json(*c.n_vehicles) : Json(nullptr);
  j["ego_path"] = c.ego_path ? Json(std::string(to_string(*c.ego_path))) : Json(nullptr);
  return j;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex m;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int k = 1; k < std::min(jobs, n); ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Options shared by simulate, train-motion and demo.

struct ScenarioFlags {
  std::string preset = "open_road";
  std::uint64_t seed = 0;
  int frames = 100;
  int vehicles = -1;
  std::string ego_path;
  std::string noise = "default";
  double depth_sigma = -1.0;
  double accel = 0.0;
  double yaw_rate = 0.0;

  void add(CLI::App& app) {
    app.add_option("--preset", preset, "open_road, crossing_occlusion, reappearance or dense")
        ->check(CLI::IsMember({"open_road", "crossing_occlusion", "reappearance", "dense"}))
        ->capture_default_str();
    app.add_option("--seed", seed, "random seed")->capture_default_str();
    app.add_option("--frames", frames, "sequence length")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--vehicles", vehicles, "vehicle count (preset default when omitted)");
    app.add_option("--ego-path", ego_path, "fixed, straight or turning")
        ->check(CLI::IsMember({"fixed", "straight", "turning"}));
    app.add_option("--noise", noise, "detection noise: default or none")
        ->check(CLI::IsMember({"default", "none"}))
        ->capture_default_str();
    app.add_option("--depth-sigma", depth_sigma, "depth noise per meter of depth");
    app.add_option("--accel", accel, "speed oscillation amplitude, m/frame")->capture_default_str();
    app.add_option("--yaw-rate", yaw_rate, "maximum yaw rate, rad/frame")->capture_default_str();
  }

  ScenarioConfig config(std::uint64_t seed_value) const {
    ScenarioConfig c;
    c.seed = seed_value;
    c.frames = frames;
    c.preset = *parse_preset(preset);
    if (vehicles >= 0) c.n_vehicles = vehicles;
    if (!ego_path.empty()) c.ego_path = parse_ego_path(ego_path);
    if (noise == "none") c.noise = SensorNoise::none();
    if (depth_sigma >= 0.0) c.noise.depth_sigma_per_meter = depth_sigma;
    c.accel_amplitude = accel;
    c.yaw_rate_max = yaw_rate;
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// simulate

struct SimulateCmd {
  ScenarioFlags scen;
  int count = 1;
  int jobs = 1;
  std::string out;

  void add(CLI::App& app) {
    scen.add(app);
    app.add_option("--count", count, "number of consecutive seeds")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--out", out, "output directory")->required();
  }

  int run(int argc, char** argv) {
    parallel_for(count, jobs, [&](int i) {
      const std::uint64_t seed = scen.seed + static_cast<std::uint64_t>(i);
      const fs::path dir = count == 1 ? fs::path(out) : fs::path(out) / ("seed_" + std::to_string(seed));
      Manifest m("simulate", argc, argv);
      Stopwatch sw;
      const ScenarioConfig c = scen.config(seed);
      const WorldTruth w = generate_world(c);
      m.stage("generate", sw.lap());
      const RenderedScenario r = render_detections(w, c);
      m.stage("render", sw.lap());
      fs::create_directories(dir);
      const ScenarioFiles f = write_scenario(w, r, dir);
      m.stage("write", sw.lap());
      m.doc["seed"] = seed;
      m.doc["config"] = scenario_json(c);
      m.doc["outputs"] = {f.detections.string(), f.poses.string(), f.gt_tracks.string()};
      m.write(dir / "manifest.json");
      spdlog::info("seed {}: {} vehicles, {} frames -> {}", seed, w.vehicles.size(), w.frame_count(), dir.string());
    });
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// track

struct TrackCmd {
  std::string detections, poses, calib, config, motion, weights, out;

  void add(CLI::App& app) {
    app.add_option("--detections", detections, "detections.jsonl")->required()->check(CLI::ExistingFile);
    app.add_option("--poses", poses, "poses.json")->required()->check(CLI::ExistingFile);
    app.add_option("--calib", calib, "calibration JSON overriding the pose file intrinsics")->check(CLI::ExistingFile);
    app.add_option("--config", config, "tracker configuration JSON")->check(CLI::ExistingFile);
    app.add_option("--motion", motion, "motion model")->check(CLI::IsMember({"none", "kf2d", "kf3d", "lstm"}));
    app.add_option("--weights", weights, "LSTM weights file");
    app.add_option("--out", out, "output tracks.jsonl")->required();
  }

  int run(int argc, char** argv) {
    Manifest m("track", argc, argv);
    Stopwatch sw;
    TrackerConfig cfg;
    try {
      if (!config.empty()) cfg = load_config(config);
      if (!motion.empty()) cfg.motion_backend = *parse_motion_backend(motion);
      cfg.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    std::shared_ptr<const LstmWeights> w;
    if (cfg.motion_backend == MotionBackend::lstm) {
      if (weights.empty()) throw UsageError("--motion lstm requires --weights");
      w = std::make_shared<const LstmWeights>(load_lstm_weights(weights));
    }
    const SequenceInput seq =
        load_sequence(detections, poses, calib.empty() ? std::nullopt : std::optional<fs::path>(calib));
    m.stage("load", sw.lap());
    const std::vector<TrackRecord> tracks = track_sequence(seq, cfg, w);
    const double t_track = sw.lap();
    m.stage("tracking", t_track);
    write_tracks(tracks, out);
    m.stage("write", sw.lap());
    m.doc["config"] = config_to_json(cfg);
    m.doc["inputs"] = {{"detections", detections}, {"poses", poses}, {"calib", calib}, {"config", config},
                       {"weights", weights}};
    m.doc["outputs"] = {out};
    m.doc["frames"] = seq.frame_count();
    m.write(manifest_for_file(out));
    spdlog::info("{} frames, {} records, {:.3f} ms/frame", seq.frame_count(), tracks.size(),
                 seq.frame_count() ? 1e3 * t_track / static_cast<double>(seq.frame_count()) : 0.0);
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// evaluate

Json report_json(const EvalReport& r) {
  const auto& c = r.clear;
  Json j{{"mota", c.mota()}, {"motp", c.motp()}, {"gt", c.gt_total}, {"matches", c.matches}, {"fp", c.fp},
         {"fn", c.fn},       {"mm", c.mm},       {"frag", c.frag},   {"mt", c.mt()},         {"ml", c.ml()}};
  auto opt = [&](const char* key, const std::optional<double>& v) { j[key] = v ? Json(*v) : Json(nullptr); };
  opt("os", r.os);
  opt("ds", r.ds);
  opt("cs", r.cs);
  opt("position_rmse", r.position_rmse);
  if (r.depth) {
    const auto& d = *r.depth;
    j["depth"] = {{"abs_rel", d.abs_rel}, {"sq_rel", d.sq_rel}, {"rmse", d.rmse}, {"rmse_log", d.rmse_log},
                  {"delta1", d.delta1}, {"delta2", d.delta2}, {"delta3", d.delta3}};
  }
  return j;
}

std::string report_text(const std::string& label, const EvalReport& r) {
  const auto& c = r.clear;
  std::ostringstream s;
  s << label << ": MOTA " << c.mota() << "  MOTP " << c.motp() << "  FP " << c.fp << "  FN " << c.fn << "  MM "
    << c.mm << "  FRAG " << c.frag << "  MT " << c.mt() << "  ML " << c.ml();
  if (r.position_rmse) s << "  RMSE " << *r.position_rmse << " m";
  return s.str();
}

struct EvaluateCmd {
  std::string gt, pred, mode = "3d", ranges, poses, out;

  void add(CLI::App& app) {
    app.add_option("--gt", gt, "ground-truth tracks.jsonl")->required()->check(CLI::ExistingFile);
    app.add_option("--pred", pred, "predicted tracks.jsonl")->required()->check(CLI::ExistingFile);
    app.add_option("--mode", mode, "2d or 3d matching")->check(CLI::IsMember({"2d", "3d"}))->capture_default_str();
    app.add_option("--ranges", ranges, "comma-separated depth cutoffs in meters, e.g. 30,50,100");
    app.add_option("--poses", poses, "poses.json, needed for range cutoffs and depth scores")
        ->check(CLI::ExistingFile);
    app.add_option("--out", out, "JSON report path");
  }

  std::vector<double> parse_ranges() const {
    std::vector<double> r;
    std::stringstream ss(ranges);
    for (std::string tok; std::getline(ss, tok, ',');) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !(v > 0.0)) throw UsageError("bad range '" + tok + "'");
      r.push_back(v);
    }
    return r;
  }

  int run(int argc, char** argv) {
    Manifest m("evaluate", argc, argv);
    Stopwatch sw;
    const std::vector<double> cutoffs = parse_ranges();
    if (!cutoffs.empty() && poses.empty()) throw UsageError("--ranges needs --poses");
    const auto g = load_tracks(gt);
    const auto p = load_tracks(pred);
    std::optional<PoseFile> pf;
    if (!poses.empty()) pf = load_poses(poses);
    m.stage("load", sw.lap());

    EvalOptions opt;
    opt.gate.mode = mode == "2d" ? EvalMode::image2d : EvalMode::bev3d;
    if (pf) {
      opt.poses = &pf->poses;
      opt.first_frame = pf->first_frame;
      opt.intrinsics = pf->intrinsics;
    }
    Json doc{{"mode", mode}, {"ranges", Json::array()}};
    auto one = [&](const std::string& label, std::optional<double> cutoff) {
      opt.max_range = cutoff;
      const EvalReport r = evaluate_tracks(g, p, opt);
      Json j = report_json(r);
      j["range"] = cutoff ? Json(*cutoff) : Json("all");
      doc["ranges"].push_back(j);
      std::cout << report_text(label, r) << '\n';
    };
    one("all", std::nullopt);
    for (const double c : cutoffs) one("<=" + fmt::format("{:g}", c) + "m", c);
    m.stage("evaluate", sw.lap());
    if (!out.empty()) {
      const fs::path op(out);
      if (op.has_parent_path()) fs::create_directories(op.parent_path());
      std::ofstream f(op, std::ios::trunc);
      if (!f) throw IoError("cannot write '" + out + "'");
      f << doc.dump(2) << '\n';
      m.doc["outputs"] = {out};
      m.doc["inputs"] = {{"gt", gt}, {"pred", pred}, {"poses", poses}};
      m.write(manifest_for_file(op));
    }
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// train-motion

struct TrainCmd {
  ScenarioFlags scen;
  int scenarios = 20;
  int epochs = 0;
  int steps = 0;
  int jobs = 1;
  LstmTrainConfig tc;
  int embed = 64;
  int hidden = 128;
  std::string target = "ground_truth";
  std::string out;

  void add(CLI::App& app) {
    scen.accel = 0.3;
    scen.yaw_rate = 0.005;
    tc.window = 20;
    scen.add(app);
    app.add_option("--scenarios", scenarios, "training scenarios (consecutive seeds)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    auto* ep = app.add_option("--epochs", epochs, "passes over the training windows")->check(CLI::PositiveNumber);
    app.add_option("--steps", steps, "optimizer steps (instead of --epochs)")->check(CLI::PositiveNumber)->excludes(ep);
    app.add_option("--batch", tc.batch, "windows per step")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--window", tc.window, "frames per training window")->check(CLI::Range(3, 1000))->capture_default_str();
    app.add_option("--lr", tc.learning_rate, "learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--lr-final", tc.final_lr_fraction, "final learning-rate fraction of the cosine decay")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--linear-target", target, "ground_truth or consecutive")
        ->check(CLI::IsMember({"ground_truth", "consecutive"}))
        ->capture_default_str();
    app.add_option("--embed", embed, "embedding width")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--hidden", hidden, "LSTM hidden width")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--jobs", jobs, "worker threads for scenario generation")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--out", out, "output weights file")->required();
  }

  int run(int argc, char** argv) {
    if (epochs == 0 && steps == 0) throw UsageError("one of --epochs or --steps must be positive");
    Manifest m("train-motion", argc, argv);
    Stopwatch sw;
    std::vector<std::vector<MotionTrajectory>> per(static_cast<std::size_t>(scenarios));
    scen.config(scen.seed);  // validate before spawning workers
    parallel_for(scenarios, jobs, [&](int i) {
      const ScenarioConfig c = scen.config(scen.seed + static_cast<std::uint64_t>(i));
      const WorldTruth w = generate_world(c);
      per[static_cast<std::size_t>(i)] = motion_trajectories(w, render_detections(w, c));
    });
    std::vector<MotionTrajectory> data;
    for (auto& v : per) data.insert(data.end(), v.begin(), v.end());
    m.stage("simulate", sw.lap());
    const auto windows = lstm_detail::enumerate_windows(data, tc.window);
    if (windows.empty()) throw UsageError("no simulated trajectory is as long as --window");

    tc.linear_target = target == "consecutive" ? LinearMotionTarget::consecutive : LinearMotionTarget::ground_truth;
    tc.seed = scen.seed;
    const int per_epoch = static_cast<int>((windows.size() + static_cast<std::size_t>(tc.batch) - 1) /
                                           static_cast<std::size_t>(tc.batch));
    tc.steps = steps > 0 ? steps : epochs * per_epoch;
    tc.log_every = std::max(1, tc.steps / 200);
    spdlog::info("{} trajectories, {} windows, {} steps", data.size(), windows.size(), tc.steps);
    const LstmTrainResult res = train_lstm(data, tc, LstmWeights::random(scen.seed, embed, hidden));
    m.stage("train", sw.lap());

    save_lstm_weights(res.weights, out);
    const fs::path curve(out + ".loss.csv");
    std::ofstream csv(curve, std::ios::trunc);
    if (!csv) throw IoError("cannot write '" + curve.string() + "'");
    csv << "step,loss\n";
    for (const auto& [s, l] : res.loss_curve) csv << s << ',' << fmt::format("{:.9g}", l) << '\n';
    csv << "final," << fmt::format("{:.9g}", res.final_loss) << '\n';
    csv.close();
    m.stage("write", sw.lap());

    m.doc["seed"] = scen.seed;
    m.doc["config"] = {{"scenario", scenario_json(scen.config(scen.seed))},
                       {"scenarios", scenarios},
                       {"trajectories", data.size()},
                       {"steps", tc.steps},
                       {"batch", tc.batch},
                       {"window", tc.window},
                       {"learning_rate", tc.learning_rate},
                       {"final_lr_fraction", tc.final_lr_fraction},
                       {"momentum", tc.momentum},
                       {"clip_norm", tc.clip_norm},
                       {"linear_target", target},
                       {"embed", embed},
                       {"hidden", hidden}};
    m.doc["final_loss"] = res.final_loss;
    m.doc["outputs"] = {out, curve.string()};
    m.write(manifest_for_file(out));
    std::cout << "final loss " << fmt::format("{:.6g}", res.final_loss) << '\n';
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// demo

struct DemoCmd {
  ScenarioFlags scen;
  int count = 1;
  int jobs = 1;
  std::string motion = "kf3d";
  std::string weights;
  std::string out;

  void add(CLI::App& app) {
    scen.preset = "crossing_occlusion";
    scen.add(app);
    app.add_option("--count", count, "number of consecutive seeds")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--motion", motion, "motion model")
        ->check(CLI::IsMember({"none", "kf2d", "kf3d", "lstm"}))
        ->capture_default_str();
    app.add_option("--weights", weights, "LSTM weights file");
    app.add_option("--out", out, "output directory")->required();
  }

  int run(int argc, char** argv) {
    TrackerConfig cfg;
    cfg.motion_backend = *parse_motion_backend(motion);
    std::shared_ptr<const LstmWeights> w;
    if (cfg.motion_backend == MotionBackend::lstm) {
      if (weights.empty()) throw UsageError("--motion lstm requires --weights");
      w = std::make_shared<const LstmWeights>(load_lstm_weights(weights));
    }
    scen.config(scen.seed);
    std::vector<std::string> lines(static_cast<std::size_t>(count));
    std::vector<ClearReport> clear(static_cast<std::size_t>(count));
    parallel_for(count, jobs, [&](int i) {
      const std::uint64_t seed = scen.seed + static_cast<std::uint64_t>(i);
      const fs::path dir = count == 1 ? fs::path(out) : fs::path(out) / ("seed_" + std::to_string(seed));
      Manifest m("demo", argc, argv);
      Stopwatch sw;
      const ScenarioConfig c = scen.config(seed);
      const WorldTruth world = generate_world(c);
      const RenderedScenario r = render_detections(world, c);
      fs::create_directories(dir);
      const ScenarioFiles f = write_scenario(world, r, dir);
      m.stage("simulate", sw.lap());
      const auto tracks = track_sequence(to_sequence(world, r), cfg, w);
      m.stage("tracking", sw.lap());
      write_tracks(tracks, dir / "tracks.jsonl");
      EvalOptions opt;
      opt.poses = &world.poses;
      opt.intrinsics = world.intrinsics;
      const EvalReport rep = evaluate_tracks(ground_truth_records(world, r), tracks, opt);
      m.stage("evaluate", sw.lap());
      m.doc["seed"] = seed;
      m.doc["config"] = {{"scenario", scenario_json(c)}, {"tracker", config_to_json(cfg)}};
      m.doc["report"] = report_json(rep);
      m.doc["outputs"] = {f.detections.string(), f.poses.string(), f.gt_tracks.string(),
                          (dir / "tracks.jsonl").string()};
      m.write(dir / "manifest.json");
      lines[static_cast<std::size_t>(i)] = report_text("seed " + std::to_string(seed), rep);
      clear[static_cast<std::size_t>(i)] = rep.clear;
    });
    ClearReport total;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::cout << lines[i] << '\n';
      total += clear[i];
    }
    if (count > 1)
      std::cout << "total: MOTA " << total.mota() << "  FP " << total.fp << "  FN " << total.fn << "  MM " << total.mm
                << '\n';
    return kExitOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Monocular 3D vehicle tracking on simulated or recorded detections"};
  app.require_subcommand(1);
  SimulateCmd sim;
  TrackCmd trk;
  EvaluateCmd ev;
  TrainCmd tr;
  DemoCmd demo;
  auto* c_sim = app.add_subcommand("simulate", "generate a synthetic scenario");
  auto* c_trk = app.add_subcommand("track", "run the tracker on a detection file");
  auto* c_ev = app.add_subcommand("evaluate", "score predicted tracks against ground truth");
  auto* c_tr = app.add_subcommand("train-motion", "train the LSTM motion model on simulated traffic");
  auto* c_demo = app.add_subcommand("demo", "simulate, track and evaluate in one go");
  sim.add(*c_sim);
  trk.add(*c_trk);
  ev.add(*c_ev);
  tr.add(*c_tr);
  demo.add(*c_demo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_sim->parsed()) return sim.run(argc, argv);
    if (c_trk->parsed()) return trk.run(argc, argv);
    if (c_ev->parsed()) return ev.run(argc, argv);
    if (c_tr->parsed()) return tr.run(argc, argv);
    if (c_demo->parsed()) return demo.run(argc, argv);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const FormatVersionError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const OutOfRangeValue& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const UnknownKey& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
