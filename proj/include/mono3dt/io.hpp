#pragma once

// File formats. Detections and tracks are JSON Lines whose first line is a header object
// {"format_version": 1, "kind": ...}; poses, calibration, configuration and LSTM weights are single
// JSON documents. Lengths are meters, angles radians, image quantities pixels.

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mono3dt/config.hpp"
#include "mono3dt/errors.hpp"
#include "mono3dt/geometry.hpp"
#include "mono3dt/lstm.hpp"
#include "mono3dt/types.hpp"

namespace mono3dt {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

namespace io_detail {

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& p) {
  out.flush();
  if (!out) throw IoError("failed writing '" + p.string() + "'");
}

inline Json header(std::string_view kind) { return Json{{"format_version", kFormatVersion}, {"kind", kind}}; }

inline void check_header(const Json& j, std::string_view kind, const std::string& file) {
  if (!j.is_object() || !j.contains("format_version"))
    throw FormatVersionError(file + ": missing format_version header");
  const Json& v = j.at("format_version");
  if (!v.is_number_integer() || v.get<int>() != kFormatVersion)
    throw FormatVersionError(file + ": unsupported format_version " + v.dump());
  if (j.contains("kind") && j.at("kind") != kind)
    throw FormatVersionError(file + ": expected kind '" + std::string(kind) + "', found " + j.at("kind").dump());
}

template <int N>
Json vec(const Eigen::Matrix<double, N, 1>& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json box(const Box2D& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) throw InvalidArgument("record is not an object");
  const auto it = j.find(key);
  if (it == j.end()) throw InvalidArgument(std::string("missing field '") + key + "'");
  return *it;
}

inline double num(const Json& j) {
  if (!j.is_number()) throw InvalidArgument("expected a number, found " + j.dump());
  return j.get<double>();
}

template <int N>
Eigen::Matrix<double, N, 1> fixed(const Json& j, const char* key) {
  const Json& a = field(j, key);
  if (!a.is_array() || a.size() != N)
    throw InvalidArgument(std::string("field '") + key + "' must be an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = num(a[i]);
  return v;
}

inline Eigen::VectorXd dynamic(const Json& j, const char* key) {
  const Json& a = field(j, key);
  if (!a.is_array()) throw InvalidArgument(std::string("field '") + key + "' must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = num(a[i]);
  return v;
}

inline Box2D box_field(const Json& j, const char* key) {
  const Eigen::Vector4d v = fixed<4>(j, key);
  return {v(0), v(1), v(2), v(3)};
}

inline int integer(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number_integer()) throw InvalidArgument(std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

/// Calls `fn(json, line_number)` for each non-blank record line after the header.
template <class Fn>
void read_jsonl(const std::filesystem::path& path, std::string_view kind, Fn&& fn) {
  auto in = open_in(path);
  const std::string file = path.string();
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw ParseError(file, lineno, e.what());
    }
    if (!have_header) {
      check_header(j, kind, file);
      have_header = true;
      continue;
    }
    try {
      fn(j, lineno);
    } catch (const InvalidArgument& e) {
      throw ParseError(file, lineno, e.what());
    } catch (const Json::exception& e) {
      throw ParseError(file, lineno, e.what());
    }
  }
  if (!have_header) throw FormatVersionError(file + ": missing format_version header");
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Detections

inline Json detection_to_json(const DetectionRecord& d) {
  using namespace io_detail;
  return Json{{"frame", d.frame_index},        {"box2d", box(d.box2d)},   {"c", vec<2>(d.center_proj)},
              {"depth_m", d.depth},            {"yaw_local_rad", d.yaw_local}, {"dim_m", vec<3>(d.dims)},
              {"app", vec(d.appearance)},      {"score", d.score}};
}

inline DetectionRecord detection_from_json(const Json& j) {
  using namespace io_detail;
  DetectionRecord d;
  d.frame_index = integer(j, "frame");
  d.box2d = box_field(j, "box2d");
  d.center_proj = fixed<2>(j, "c");
  d.depth = num(field(j, "depth_m"));
  d.yaw_local = num(field(j, "yaw_local_rad"));
  d.dims = fixed<3>(j, "dim_m");
  d.appearance = j.contains("app") ? dynamic(j, "app") : Eigen::VectorXd();
  d.score = j.contains("score") ? num(j.at("score")) : 1.0;
  if (!(d.depth > 0.0)) throw InvalidArgument("depth_m must be positive");
  if (!(d.score >= 0.0 && d.score <= 1.0)) throw InvalidArgument("score must lie in [0, 1]");
  if (!d.box2d.valid()) throw InvalidArgument("box2d must satisfy x0 <= x1 and y0 <= y1");
  return d;
}

inline void write_detections(const std::vector<DetectionRecord>& dets, const std::filesystem::path& path) {
  auto out = io_detail::open_out(path);
  out << io_detail::header("detections").dump() << '\n';
  for (const auto& d : dets) out << detection_to_json(d).dump() << '\n';
  io_detail::finish(out, path);
}

/// Records in file order. Appearance length must be constant.
inline std::vector<DetectionRecord> load_detections(const std::filesystem::path& path) {
  std::vector<DetectionRecord> out;
  std::optional<Eigen::Index> app_len;
  io_detail::read_jsonl(path, "detections", [&](const Json& j, std::size_t lineno) {
    DetectionRecord d = detection_from_json(j);
    if (!app_len) app_len = d.appearance.size();
    if (d.appearance.size() != *app_len)
      throw DimensionMismatch(path.string() + ":" + std::to_string(lineno) + ": appearance length " +
                              std::to_string(d.appearance.size()) + " differs from " + std::to_string(*app_len));
    out.push_back(std::move(d));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Poses and calibration

inline Json intrinsics_to_json(const CameraIntrinsics& k) {
  return Json{{"fx_px", k.focal_x},        {"fy_px", k.focal_y},         {"cx_px", k.principal_x},
              {"cy_px", k.principal_y},    {"width_px", k.image_width},  {"height_px", k.image_height}};
}

inline CameraIntrinsics intrinsics_from_json(const Json& j) {
  using namespace io_detail;
  CameraIntrinsics k;
  k.focal_x = num(field(j, "fx_px"));
  k.focal_y = num(field(j, "fy_px"));
  k.principal_x = num(field(j, "cx_px"));
  k.principal_y = num(field(j, "cy_px"));
  k.image_width = num(field(j, "width_px"));
  k.image_height = num(field(j, "height_px"));
  k.validate();
  return k;
}

struct PoseFile {
  CameraIntrinsics intrinsics;
  int first_frame = 0;
  std::vector<CameraPose> poses;
};

inline void write_poses(const PoseFile& pf, const std::filesystem::path& path) {
  Json frames = Json::array();
  for (std::size_t i = 0; i < pf.poses.size(); ++i) {
    const auto& p = pf.poses[i];
    Json r = Json::array();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) r.push_back(p.rotation(a, b));
    frames.push_back(Json{{"frame", pf.first_frame + static_cast<int>(i)},
                          {"rotation", r},
                          {"translation_m", io_detail::vec<3>(p.translation)}});
  }
  const Json doc{{"format_version", kFormatVersion}, {"intrinsics", intrinsics_to_json(pf.intrinsics)}, {"frames", frames}};
  auto out = io_detail::open_out(path);
  out << doc.dump(1) << '\n';
  io_detail::finish(out, path);
}

namespace io_detail {
inline Json read_document(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    // Byte offset -> line number.
    const std::string text = ss.str();
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + upto, '\n'));
    throw ParseError(path.string(), line, e.what());
  }
}
}  // namespace io_detail

/// Frames must be contiguous and increasing.
inline PoseFile load_poses(const std::filesystem::path& path) {
  using namespace io_detail;
  const Json doc = read_document(path);
  check_header(doc, "poses", path.string());
  PoseFile pf;
  try {
    pf.intrinsics = intrinsics_from_json(field(doc, "intrinsics"));
    const Json& frames = field(doc, "frames");
    if (!frames.is_array()) throw InvalidArgument("'frames' must be an array");
    std::vector<std::pair<int, CameraPose>> rows;
    for (const Json& f : frames) {
      CameraPose p;
      const Json& r = field(f, "rotation");
      if (!r.is_array() || r.size() != 9) throw InvalidArgument("rotation must have 9 entries");
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) p.rotation(a, b) = num(r[static_cast<std::size_t>(3 * a + b)]);
      p.translation = fixed<3>(f, "translation_m");
      p.validate();
      rows.emplace_back(integer(f, "frame"), p);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].first == rows[i - 1].first)
        throw InvalidArgument("duplicate pose for frame " + std::to_string(rows[i].first));
      if (rows[i].first != rows[i - 1].first + 1)
        throw FrameGapError(path.string() + ": poses jump from frame " + std::to_string(rows[i - 1].first) + " to " +
                            std::to_string(rows[i].first));
    }
    pf.first_frame = rows.empty() ? 0 : rows.front().first;
    for (auto& r : rows) pf.poses.push_back(r.second);
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string(), 0, e.what());
  } catch (const Json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return pf;
}

/// Calibration: {"format_version":1,"intrinsics":{...}} or the intrinsics object itself.
inline CameraIntrinsics load_calibration(const std::filesystem::path& path) {
  const Json doc = io_detail::read_document(path);
  try {
    if (doc.contains("format_version")) io_detail::check_header(doc, "calibration", path.string());
    return intrinsics_from_json(doc.contains("intrinsics") ? doc.at("intrinsics") : doc);
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

/// Frame-aligned detections and poses. The pose file defines the frame range; detections outside it
/// raise FrameGapError. A calibration file, when given, overrides the pose file's intrinsics.
inline SequenceInput load_sequence(const std::filesystem::path& detections_path, const std::filesystem::path& poses_path,
                                   const std::optional<std::filesystem::path>& calib_path = std::nullopt) {
  const PoseFile pf = load_poses(poses_path);
  SequenceInput seq;
  seq.intrinsics = calib_path ? load_calibration(*calib_path) : pf.intrinsics;
  seq.first_frame = pf.first_frame;
  seq.poses = pf.poses;
  seq.detections.assign(pf.poses.size(), {});
  for (auto& d : load_detections(detections_path)) {
    const int idx = d.frame_index - pf.first_frame;
    if (idx < 0 || idx >= static_cast<int>(pf.poses.size()))
      throw FrameGapError(detections_path.string() + ": detection frame " + std::to_string(d.frame_index) +
                          " has no pose");
    seq.detections[static_cast<std::size_t>(idx)].push_back(std::move(d));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Tracks

inline std::optional<TrackStatus> parse_track_status(std::string_view s) {
  if (s == "birth") return TrackStatus::birth;
  if (s == "tracked") return TrackStatus::tracked;
  if (s == "occluded") return TrackStatus::occluded;
  if (s == "lost") return TrackStatus::lost;
  if (s == "dead") return TrackStatus::dead;
  return std::nullopt;
}

inline Json track_to_json(const TrackRecord& r) {
  using namespace io_detail;
  return Json{{"frame", r.frame_index},          {"id", r.track_id},
              {"P_m", vec<3>(r.box.center)},      {"yaw_rad", r.box.yaw()},
              {"dim_m", vec<3>(r.box.dims)},      {"vel_mpf", vec<3>(r.velocity)},
              {"box2d", box(r.box2d)},            {"status", std::string(to_string(r.status))}};
}

inline TrackRecord track_from_json(const Json& j) {
  using namespace io_detail;
  TrackRecord r;
  r.frame_index = integer(j, "frame");
  r.track_id = integer(j, "id");
  if (r.track_id < 0) throw InvalidArgument("track id must be non-negative");
  r.box = Box3D(fixed<3>(j, "P_m"), fixed<3>(j, "dim_m"), num(field(j, "yaw_rad")));
  r.velocity = fixed<3>(j, "vel_mpf");
  r.box2d = box_field(j, "box2d");
  const Json& s = field(j, "status");
  if (!s.is_string()) throw InvalidArgument("status must be a string");
  const auto st = parse_track_status(s.get<std::string>());
  if (!st) throw InvalidArgument("unknown status '" + s.get<std::string>() + "'");
  r.status = *st;
  return r;
}

inline void sort_tracks(std::vector<TrackRecord>& recs) {
  std::stable_sort(recs.begin(), recs.end(), [](const TrackRecord& a, const TrackRecord& b) {
    return a.frame_index != b.frame_index ? a.frame_index < b.frame_index : a.track_id < b.track_id;
  });
}

/// Writes records sorted by (frame, id).
inline void write_tracks(std::vector<TrackRecord> recs, const std::filesystem::path& path) {
  sort_tracks(recs);
  auto out = io_detail::open_out(path);
  out << io_detail::header("tracks").dump() << '\n';
  for (const auto& r : recs) out << track_to_json(r).dump() << '\n';
  io_detail::finish(out, path);
}

inline std::vector<TrackRecord> load_tracks(const std::filesystem::path& path) {
  std::vector<TrackRecord> out;
  io_detail::read_jsonl(path, "tracks", [&](const Json& j, std::size_t) { out.push_back(track_from_json(j)); });
  sort_tracks(out);
  return out;
}

// ---------------------------------------------------------------------------
// Tracker configuration

inline Json config_to_json(const TrackerConfig& c) {
  const auto& k = c.kalman;
  return Json{{"w_deep", c.w_deep},
              {"w_2d", c.w_2d},
              {"w_3d", c.w_3d},
              {"occlusion_cover_threshold", c.occlusion_cover_threshold},
              {"max_lost_age", c.max_lost_age},
              {"range_min", c.range_min},
              {"range_max", c.range_max},
              {"ord_tie_meters", c.ord_tie_meters},
              {"motion_backend", std::string(to_string(c.motion_backend))},
              {"affinity_accept_threshold", c.affinity_accept_threshold},
              {"depth_ordering", c.depth_ordering},
              {"occlusion_aware", c.occlusion_aware},
              {"kalman",
               {{"velocity_process_var", k.velocity_process_var},
                {"position_process_var", k.position_process_var},
                {"depth_sigma_per_meter", k.depth_sigma_per_meter},
                {"min_measurement_sigma", k.min_measurement_sigma},
                {"initial_velocity_var", k.initial_velocity_var},
                {"pixel_measurement_sigma", k.pixel_measurement_sigma},
                {"pixel_process_var", k.pixel_process_var}}}};
}

/// Applies the keys of `j` on top of `base`. Unknown keys raise UnknownKey, wrong types
/// InvalidArgument, and the result is validated.
inline TrackerConfig config_from_json(const Json& j, TrackerConfig base = {}) {
  if (j.is_null()) return base;
  if (!j.is_object()) throw InvalidArgument("configuration must be a JSON object");
  auto number = [](const Json& v, const std::string& key) {
    if (!v.is_number()) throw InvalidArgument("'" + key + "' must be a number");
    return v.get<double>();
  };
  auto boolean = [](const Json& v, const std::string& key) {
    if (!v.is_boolean()) throw InvalidArgument("'" + key + "' must be true or false");
    return v.get<bool>();
  };
  const std::map<std::string, double*> reals{{"w_deep", &base.w_deep},
                                             {"w_2d", &base.w_2d},
                                             {"w_3d", &base.w_3d},
                                             {"occlusion_cover_threshold", &base.occlusion_cover_threshold},
                                             {"range_min", &base.range_min},
                                             {"range_max", &base.range_max},
                                             {"ord_tie_meters", &base.ord_tie_meters},
                                             {"affinity_accept_threshold", &base.affinity_accept_threshold}};
  auto& k = base.kalman;
  const std::map<std::string, double*> kalman{{"velocity_process_var", &k.velocity_process_var},
                                              {"position_process_var", &k.position_process_var},
                                              {"depth_sigma_per_meter", &k.depth_sigma_per_meter},
                                              {"min_measurement_sigma", &k.min_measurement_sigma},
                                              {"initial_velocity_var", &k.initial_velocity_var},
                                              {"pixel_measurement_sigma", &k.pixel_measurement_sigma},
                                              {"pixel_process_var", &k.pixel_process_var}};
  for (const auto& [key, v] : j.items()) {
    if (key == "format_version") continue;
    if (auto it = reals.find(key); it != reals.end()) {
      *it->second = number(v, key);
    } else if (key == "max_lost_age" || key == "max_age") {
      if (!v.is_number_integer()) throw InvalidArgument("'" + key + "' must be an integer");
      base.max_lost_age = v.get<int>();
    } else if (key == "motion_backend") {
      const auto b = v.is_string() ? parse_motion_backend(v.get<std::string>()) : std::nullopt;
      if (!b) throw OutOfRangeValue("motion_backend must be one of none, kf2d, kf3d, lstm");
      base.motion_backend = *b;
    } else if (key == "depth_ordering") {
      base.depth_ordering = boolean(v, key);
    } else if (key == "occlusion_aware") {
      base.occlusion_aware = boolean(v, key);
    } else if (key == "kalman") {
      if (!v.is_object()) throw InvalidArgument("'kalman' must be an object");
      for (const auto& [kk, kv] : v.items()) {
        const auto it = kalman.find(kk);
        if (it == kalman.end()) throw UnknownKey("kalman." + kk);
        *it->second = number(kv, kk);
      }
    } else {
      throw UnknownKey(key);
    }
  }
  base.validate();
  return base;
}

/// An empty or whitespace-only file yields the defaults.
inline TrackerConfig load_config(const std::filesystem::path& path) {
  auto in = io_detail::open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
  const Json doc = io_detail::read_document(path);
  try {
    return config_from_json(doc);
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

// ---------------------------------------------------------------------------
// LSTM weights: {"format_version":1,"kind":"lstm_weights","embed":E,"hidden":H,
//                "tensors":{name:{"rows":r,"cols":c,"data":[row-major]}}}

inline Json lstm_weights_to_json(const LstmWeights& w) {
  Json tensors = Json::object();
  const auto ts = w.tensors();
  for (std::size_t i = 0; i < LstmWeights::kTensorCount; ++i) {
    const Mat& m = *ts[i];
    Json data = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    tensors[std::string(LstmWeights::kNames[i])] = Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  }
  return Json{{"format_version", kFormatVersion},
              {"kind", "lstm_weights"},
              {"embed", w.embed},
              {"hidden", w.hidden},
              {"tensors", tensors}};
}

inline LstmWeights lstm_weights_from_json(const Json& j, const std::string& file = "<json>") {
  using namespace io_detail;
  check_header(j, "lstm_weights", file);
  try {
    LstmWeights w = LstmWeights::zeros(integer(j, "embed"), integer(j, "hidden"));
    if (w.embed <= 0 || w.hidden <= 0) throw InvalidArgument("embed and hidden must be positive");
    const Json& tensors = field(j, "tensors");
    auto ts = w.tensors();
    for (std::size_t i = 0; i < LstmWeights::kTensorCount; ++i) {
      const std::string name(LstmWeights::kNames[i]);
      const Json& t = field(tensors, name.c_str());
      Mat& m = *ts[i];
      if (integer(t, "rows") != m.rows() || integer(t, "cols") != m.cols())
        throw DimensionMismatch(file + ": tensor '" + name + "' has the wrong shape");
      const Json& data = field(t, "data");
      if (!data.is_array() || data.size() != static_cast<std::size_t>(m.size()))
        throw DimensionMismatch(file + ": tensor '" + name + "' has the wrong element count");
      std::size_t n = 0;
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = num(data[n++]);
    }
    if (!w.all_finite()) throw InvalidArgument("weights contain non-finite values");
    return w;
  } catch (const InvalidArgument& e) {
    throw ParseError(file, 0, e.what());
  }
}

inline void save_lstm_weights(const LstmWeights& w, const std::filesystem::path& path) {
  auto out = io_detail::open_out(path);
  out << lstm_weights_to_json(w).dump() << '\n';
  io_detail::finish(out, path);
}

inline LstmWeights load_lstm_weights(const std::filesystem::path& path) {
  return lstm_weights_from_json(io_detail::read_document(path), path.string());
}

}  // namespace mono3dt
