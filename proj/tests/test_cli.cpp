#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "mono3dt/io.hpp"

#ifndef MONO3DT_CLI_PATH
#error "MONO3DT_CLI_PATH must name the mono3dt executable"
#endif

using namespace mono3dt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CliTest : ::testing::Test {
  fs::path dir;
  std::string out;  // stdout of the last run

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("mono3dt_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  int run(const std::string& args) {
    const fs::path log = dir / "stdout.txt";
    const std::string cmd = "MONO3DT_LOG=error '" + std::string(MONO3DT_CLI_PATH) + "' " + args + " > '" +
                            log.string() + "' 2> '" + (dir / "stderr.txt").string() + "'";
    const int status = std::system(cmd.c_str());
    out = slurp(log);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string p(const std::string& name) const { return "'" + (dir / name).string() + "'"; }

  Json report(const std::string& name) const {
    std::ifstream in(dir / name);
    return Json::parse(in);
  }

  // MM total from the demo's summary line.
  long demo_mm() const {
    std::smatch m;
    const std::regex re("total: .* MM ([0-9]+)");
    EXPECT_TRUE(std::regex_search(out, m, re)) << out;
    return m.empty() ? -1 : std::stol(m[1]);
  }
};

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("simulate --frames 0 --out " + p("s")), 2);
  EXPECT_EQ(run("simulate --preset nowhere --out " + p("s")), 2);
  EXPECT_EQ(run("train-motion --epochs 0 --out " + p("w.json")), 2);
  EXPECT_EQ(run("track --detections " + p("missing.jsonl") + " --poses " + p("missing.json") + " --out " + p("t.jsonl")), 2);
}

TEST_F(CliTest, SimulateWritesFilesDeterministically) {
  ASSERT_EQ(run("simulate --preset crossing_occlusion --seed 7 --frames 100 --out " + p("a")), 0);
  ASSERT_EQ(run("simulate --preset crossing_occlusion --seed 7 --frames 100 --out " + p("b")), 0);
  for (const char* f : {"detections.jsonl", "poses.json", "gt_tracks.jsonl", "manifest.json"}) EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  for (const char* f : {"detections.jsonl", "poses.json", "gt_tracks.jsonl"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  const auto manifest = report("a/manifest.json");
  EXPECT_EQ(manifest["command"], "simulate");
  EXPECT_EQ(manifest["config"]["preset"], "crossing_occlusion");
  ASSERT_EQ(run("simulate --preset crossing_occlusion --seed 8 --frames 100 --out " + p("c")), 0);
  EXPECT_NE(slurp(dir / "a" / "detections.jsonl"), slurp(dir / "c" / "detections.jsonl"));
}

TEST_F(CliTest, NoiselessTrackingIsPerfect) {
  ASSERT_EQ(run("simulate --preset open_road --seed 2 --frames 80 --noise none --out " + p("s")), 0);
  ASSERT_EQ(run("track --detections " + p("s/detections.jsonl") + " --poses " + p("s/poses.json") +
                " --motion kf3d --out " + p("t.jsonl")),
            0);
  EXPECT_TRUE(fs::exists(dir / "t.jsonl.manifest.json"));
  ASSERT_EQ(run("evaluate --gt " + p("s/gt_tracks.jsonl") + " --pred " + p("t.jsonl") + " --out " + p("r.json")), 0);
  const auto r = report("r.json")["ranges"][0];
  EXPECT_EQ(r["mota"], 1.0);
  EXPECT_EQ(r["mm"], 0);
}

TEST_F(CliTest, TrackIsDeterministicAndCausal) {
  ASSERT_EQ(run("simulate --preset dense --seed 4 --frames 60 --out " + p("s")), 0);
  const std::string in = " --detections " + p("s/detections.jsonl") + " --poses " + p("s/poses.json");
  ASSERT_EQ(run("track" + in + " --out " + p("t1.jsonl")), 0);
  ASSERT_EQ(run("track" + in + " --out " + p("t2.jsonl")), 0);
  EXPECT_EQ(slurp(dir / "t1.jsonl"), slurp(dir / "t2.jsonl"));

  // Cut both inputs to the first 25 frames.
  const int k = 25;
  std::vector<DetectionRecord> dets;
  for (auto& d : load_detections(dir / "s/detections.jsonl"))
    if (d.frame_index < k) dets.push_back(d);
  write_detections(dets, dir / "cut_d.jsonl");
  auto pf = load_poses(dir / "s/poses.json");
  pf.poses.resize(k);
  write_poses(pf, dir / "cut_p.json");
  ASSERT_EQ(run("track --detections " + p("cut_d.jsonl") + " --poses " + p("cut_p.json") + " --out " + p("cut_t.jsonl")), 0);
  std::vector<TrackRecord> head;
  for (const auto& r : load_tracks(dir / "t1.jsonl"))
    if (r.frame_index < k) head.push_back(r);
  EXPECT_EQ(load_tracks(dir / "cut_t.jsonl"), head);
}

TEST_F(CliTest, TrackInputErrors) {
  ASSERT_EQ(run("simulate --preset open_road --seed 1 --frames 10 --out " + p("s")), 0);
  const std::string in = " --detections " + p("s/detections.jsonl") + " --poses " + p("s/poses.json");
  EXPECT_EQ(run("track" + in + " --motion lstm --out " + p("t.jsonl")), 2);
  std::ofstream(dir / "v9.jsonl") << "{\"format_version\":9,\"kind\":\"detections\"}\n";
  EXPECT_EQ(run("track --detections " + p("v9.jsonl") + " --poses " + p("s/poses.json") + " --out " + p("t.jsonl")), 2);
  std::ofstream(dir / "bad.json") << "{\"w_3d\": 2}";
  EXPECT_EQ(run("track" + in + " --config " + p("bad.json") + " --out " + p("t.jsonl")), 2);
  std::ofstream(dir / "unknown.json") << "{\"speed\": 2}";
  EXPECT_EQ(run("track" + in + " --config " + p("unknown.json") + " --out " + p("t.jsonl")), 2);
  std::ofstream(dir / "broken.jsonl") << "{\"format_version\":1,\"kind\":\"detections\"}\n{\"frame\":\n";
  EXPECT_EQ(run("track --detections " + p("broken.jsonl") + " --poses " + p("s/poses.json") + " --out " + p("t.jsonl")), 1);
}

TEST_F(CliTest, EvaluateSelfAndEmpty) {
  ASSERT_EQ(run("simulate --preset dense --seed 3 --frames 40 --out " + p("s")), 0);
  ASSERT_EQ(run("evaluate --gt " + p("s/gt_tracks.jsonl") + " --pred " + p("s/gt_tracks.jsonl") + " --ranges 30,50,100 --poses " +
                p("s/poses.json") + " --out " + p("self.json")),
            0);
  const auto self = report("self.json")["ranges"];
  ASSERT_EQ(self.size(), 4u);
  for (const auto& r : self) EXPECT_EQ(r["mota"], 1.0) << r["range"];
  EXPECT_NE(out.find("<=30m:"), std::string::npos);

  write_tracks({}, dir / "empty.jsonl");
  ASSERT_EQ(run("evaluate --gt " + p("s/gt_tracks.jsonl") + " --pred " + p("empty.jsonl") + " --out " + p("e.json")), 0);
  const auto e = report("e.json")["ranges"][0];
  EXPECT_EQ(e["fp"], 0);
  EXPECT_EQ(e["fn"], e["gt"]);
  EXPECT_LE(e["mota"].get<double>(), 0.0);
  EXPECT_EQ(e["mota"].get<double>(), 1.0 - e["fn"].get<double>() / e["gt"].get<double>());

  EXPECT_EQ(run("evaluate --gt " + p("s/gt_tracks.jsonl") + " --pred " + p("empty.jsonl") + " --ranges 30"), 2);
}

TEST_F(CliTest, EvaluateMicroCase) {
  auto rec = [](int f, int id, double x) {
    TrackRecord r;
    r.frame_index = f;
    r.track_id = id;
    r.box = Box3D(Vec3(x, 0, 0.75), Vec3(4, 2, 1.5), 0.0);
    return r;
  };
  std::vector<TrackRecord> gt, pred;
  for (int f = 0; f < 2; ++f)
    for (int i = 0; i < 5; ++i) gt.push_back(rec(f, i, 10.0 * i));
  for (int i = 0; i < 5; ++i) pred.push_back(rec(0, 100 + i, 10.0 * i));
  pred.push_back(rec(1, 200, 10.0));
  for (int i = 2; i < 5; ++i) pred.push_back(rec(1, 100 + i, 10.0 * i));
  pred.push_back(rec(1, 300, 500.0));
  write_tracks(gt, dir / "gt.jsonl");
  write_tracks(pred, dir / "pred.jsonl");
  ASSERT_EQ(run("evaluate --gt " + p("gt.jsonl") + " --pred " + p("pred.jsonl") + " --out " + p("r.json")), 0);
  EXPECT_NEAR(report("r.json")["ranges"][0]["mota"].get<double>(), 0.7, 1e-12);
}

TEST_F(CliTest, TrainMotionDeterministic) {
  const std::string args = "train-motion --scenarios 2 --frames 30 --steps 20 --embed 8 --hidden 8 --seed 5 --out ";
  ASSERT_EQ(run(args + p("w1.json")), 0);
  ASSERT_EQ(run(args + p("w2.json")), 0);
  EXPECT_EQ(slurp(dir / "w1.json"), slurp(dir / "w2.json"));
  EXPECT_TRUE(fs::exists(dir / "w1.json.loss.csv"));
  EXPECT_NO_THROW(load_lstm_weights(dir / "w1.json"));
  ASSERT_EQ(run("simulate --preset open_road --seed 1 --frames 30 --out " + p("s")), 0);
  EXPECT_EQ(run("track --detections " + p("s/detections.jsonl") + " --poses " + p("s/poses.json") +
                " --motion lstm --weights " + p("w1.json") + " --out " + p("t.jsonl")),
            0);
}

TEST_F(CliTest, TrainMotionOverfitsOneTrajectory) {
  ASSERT_EQ(run("train-motion --scenarios 1 --vehicles 1 --frames 10 --noise none --accel 0 --yaw-rate 0 --window 10 "
                "--batch 1 --steps 2000 --lr-final 0.01 --seed 3 --out " +
                p("w.json")),
            0);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(out, m, std::regex("final loss ([-+.0-9eE]+)"))) << out;
  EXPECT_LT(std::stod(m[1]), 1e-3);
}

TEST_F(CliTest, Kf3dReducesMismatchesOnCrossing) {
  ASSERT_EQ(run("demo --preset crossing_occlusion --seed 0 --count 10 --motion none --out " + p("none")), 0);
  const long none = demo_mm();
  ASSERT_EQ(run("demo --preset crossing_occlusion --seed 0 --count 10 --motion kf3d --out " + p("kf3d")), 0);
  const long kf3d = demo_mm();
  EXPECT_LT(kf3d, none);
}
