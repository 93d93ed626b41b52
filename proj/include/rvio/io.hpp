#pragma once

#include "rvio/estimator.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace rvio {

/// Malformed configuration or dataset content.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimOptions {
  TrajectorySpec traj;
  SceneSpec scene;
  bool noiseless = false;
  bool bias_random_walk = false;
  Vec3 true_bg = Vec3::Zero();
  Vec3 true_ba = Vec3::Zero();
  double fov_half_angle_deg = 45.0;
};

struct Config {
  EstimatorConfig est;
  SimOptions sim;
  std::uint64_t seed = 1;
  bool init_from_truth = true;
  bool init_perturb = true;
  int obs_ticks = 40;
  double obs_dt = 0.05;
  int obs_features = 8;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last || s.empty()) throw DataError("not a number: '" + s + "'");
  if (!std::isfinite(v)) throw DataError("non-finite value: '" + s + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& s) {
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) throw DataError("not an integer: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw DataError("not a boolean: '" + s + "'");
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(Config&, const std::string&)>;

inline void vec_keys(std::map<std::string, Setter>& k, const std::string& base, std::function<Vec3&(Config&)> get) {
  for (int i = 0; i < 3; ++i) {
    const char axis = "xyz"[i];
    k[base + "_" + axis] = [get, i](Config& c, const std::string& v) { get(c)(i) = parse_double(v); };
  }
}

inline const std::map<std::string, Setter>& config_keys() {
  static const std::map<std::string, Setter> keys = [] {
    std::map<std::string, Setter> k;
    const auto dbl = [&](const std::string& name, std::function<double&(Config&)> get) {
      k[name] = [get](Config& c, const std::string& v) { get(c) = parse_double(v); };
    };
    const auto vec = [&](const std::string& name, std::function<Vec3&(Config&)> get) {
      vec_keys(k, name, std::move(get));
    };
    k["window_size"] = [](Config& c, const std::string& v) { c.est.window_size = static_cast<int>(parse_int(v)); };
    k["max_slam_features"] = [](Config& c, const std::string& v) { c.est.max_slam_features = static_cast<int>(parse_int(v)); };
    dbl("sigma_na", [](Config& c) -> double& { return c.est.noise.sigma_na; });
    dbl("sigma_nba", [](Config& c) -> double& { return c.est.noise.sigma_nba; });
    dbl("sigma_ng", [](Config& c) -> double& { return c.est.noise.sigma_ng; });
    dbl("sigma_nbg", [](Config& c) -> double& { return c.est.noise.sigma_nbg; });
    dbl("sigma_v", [](Config& c) -> double& { return c.est.noise.sigma_v; });
    dbl("sigma_r", [](Config& c) -> double& { return c.est.noise.sigma_r; });
    dbl("d_min", [](Config& c) -> double& { return c.est.d_min; });
    dbl("min_baseline", [](Config& c) -> double& { return c.est.min_baseline; });
    dbl("slam_confidence", [](Config& c) -> double& { return c.est.slam_confidence; });
    dbl("msckf_confidence", [](Config& c) -> double& { return c.est.msckf_confidence; });
    dbl("range_confidence", [](Config& c) -> double& { return c.est.range_confidence; });
    vec("p_ic", [](Config& c) -> Vec3& { return c.est.ext.p_ic; });
    dbl("q_ic_w", [](Config& c) -> double& { return c.est.ext.q_ic.w; });
    dbl("q_ic_x", [](Config& c) -> double& { return c.est.ext.q_ic.x; });
    dbl("q_ic_y", [](Config& c) -> double& { return c.est.ext.q_ic.y; });
    dbl("q_ic_z", [](Config& c) -> double& { return c.est.ext.q_ic.z; });
    vec("lrf_u", [](Config& c) -> Vec3& { return c.est.lrf_direction; });
    vec("gravity", [](Config& c) -> Vec3& { return c.est.world.g_w; });
    vec("init_p", [](Config& c) -> Vec3& { return c.est.initial.p_wi; });
    vec("init_v", [](Config& c) -> Vec3& { return c.est.initial.v_wi; });
    dbl("init_q_w", [](Config& c) -> double& { return c.est.initial.q_wi.w; });
    dbl("init_q_x", [](Config& c) -> double& { return c.est.initial.q_wi.x; });
    dbl("init_q_y", [](Config& c) -> double& { return c.est.initial.q_wi.y; });
    dbl("init_q_z", [](Config& c) -> double& { return c.est.initial.q_wi.z; });
    vec("init_bg", [](Config& c) -> Vec3& { return c.est.initial.b_g; });
    vec("init_ba", [](Config& c) -> Vec3& { return c.est.initial.b_a; });
    dbl("init_sigma_p", [](Config& c) -> double& { return c.est.initial_sigma.p; });
    dbl("init_sigma_v", [](Config& c) -> double& { return c.est.initial_sigma.v; });
    dbl("init_sigma_theta", [](Config& c) -> double& { return c.est.initial_sigma.theta; });
    dbl("init_sigma_bg", [](Config& c) -> double& { return c.est.initial_sigma.bg; });
    dbl("init_sigma_ba", [](Config& c) -> double& { return c.est.initial_sigma.ba; });
    k["init_from_truth"] = [](Config& c, const std::string& v) { c.init_from_truth = parse_bool(v); };
    k["init_perturb"] = [](Config& c, const std::string& v) { c.init_perturb = parse_bool(v); };
    k["tile_rows"] = [](Config& c, const std::string& v) { c.est.tiles.rows = static_cast<int>(parse_int(v)); };
    k["tile_cols"] = [](Config& c, const std::string& v) { c.est.tiles.cols = static_cast<int>(parse_int(v)); };
    k["use_range"] = [](Config& c, const std::string& v) { c.est.use_range = parse_bool(v); };
    k["use_vision"] = [](Config& c, const std::string& v) { c.est.use_vision = parse_bool(v); };

    k["trajectory"] = [](Config& c, const std::string& v) {
      const auto kind = parse_trajectory_kind(v);
      if (!kind) throw DataError("unknown trajectory kind '" + v + "'");
      c.sim.traj.kind = *kind;
    };
    dbl("duration", [](Config& c) -> double& { return c.sim.traj.duration; });
    vec("start", [](Config& c) -> Vec3& { return c.sim.traj.start; });
    vec("velocity", [](Config& c) -> Vec3& { return c.sim.traj.velocity; });
    vec("acceleration", [](Config& c) -> Vec3& { return c.sim.traj.acceleration; });
    dbl("speed", [](Config& c) -> double& { return c.sim.traj.speed; });
    dbl("radius", [](Config& c) -> double& { return c.sim.traj.radius; });
    dbl("amplitude", [](Config& c) -> double& { return c.sim.traj.amplitude; });
    dbl("frequency", [](Config& c) -> double& { return c.sim.traj.frequency; });
    dbl("imu_rate", [](Config& c) -> double& { return c.sim.traj.imu_rate; });
    dbl("cam_rate", [](Config& c) -> double& { return c.sim.traj.cam_rate; });
    dbl("lrf_rate", [](Config& c) -> double& { return c.sim.traj.lrf_rate; });
    k["terrain"] = [](Config& c, const std::string& v) {
      if (v == "flat")
        c.sim.scene.terrain = TerrainKind::Flat;
      else if (v == "hills")
        c.sim.scene.terrain = TerrainKind::Hills;
      else
        throw DataError("unknown terrain '" + v + "'");
    };
    dbl("hill_amplitude", [](Config& c) -> double& { return c.sim.scene.hill_amplitude; });
    dbl("hill_wavelength", [](Config& c) -> double& { return c.sim.scene.hill_wavelength; });
    dbl("landmark_density", [](Config& c) -> double& { return c.sim.scene.landmark_density; });
    dbl("scene_margin", [](Config& c) -> double& { return c.sim.scene.margin; });
    k["range_from_surface"] = [](Config& c, const std::string& v) { c.sim.scene.range_from_surface = parse_bool(v); };
    k["noiseless"] = [](Config& c, const std::string& v) { c.sim.noiseless = parse_bool(v); };
    k["bias_random_walk"] = [](Config& c, const std::string& v) { c.sim.bias_random_walk = parse_bool(v); };
    vec("true_bg", [](Config& c) -> Vec3& { return c.sim.true_bg; });
    vec("true_ba", [](Config& c) -> Vec3& { return c.sim.true_ba; });
    dbl("fov_half_angle_deg", [](Config& c) -> double& { return c.sim.fov_half_angle_deg; });
    k["seed"] = [](Config& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(parse_int(v)); };
    k["obs_ticks"] = [](Config& c, const std::string& v) { c.obs_ticks = static_cast<int>(parse_int(v)); };
    dbl("obs_dt", [](Config& c) -> double& { return c.obs_dt; });
    k["obs_features"] = [](Config& c, const std::string& v) { c.obs_features = static_cast<int>(parse_int(v)); };
    return k;
  }();
  return keys;
}

}  // namespace detail

inline void validate(const Config& c) {
  const auto fail = [](const std::string& m) { throw DataError("config: " + m); };
  if (c.est.window_size < 2) fail("window_size must be >= 2");
  if (c.est.max_slam_features < 0) fail("max_slam_features must be >= 0");
  for (double s : {c.est.noise.sigma_na, c.est.noise.sigma_nba, c.est.noise.sigma_ng, c.est.noise.sigma_nbg})
    if (s < 0.0) fail("noise densities must be non-negative");
  if (!(c.est.noise.sigma_v > 0.0) || !(c.est.noise.sigma_r > 0.0)) fail("sigma_v and sigma_r must be positive");
  if (!(c.est.d_min > 0.0)) fail("d_min must be positive");
  if (c.est.min_baseline < 0.0) fail("min_baseline must be non-negative");
  for (double p : {c.est.slam_confidence, c.est.msckf_confidence, c.est.range_confidence})
    if (!(p > 0.0 && p < 1.0)) fail("gate confidences must lie in (0, 1)");
  if (std::abs(c.est.ext.q_ic.norm() - 1.0) > 1e-6) fail("q_ic must be a unit quaternion");
  if (std::abs(c.est.initial.q_wi.norm() - 1.0) > 1e-6) fail("init_q must be a unit quaternion");
  if (!(c.est.lrf_direction.norm() > 0.0)) fail("lrf_u must be nonzero");
  if (c.est.tiles.rows < 1 || c.est.tiles.cols < 1) fail("tile grid must be at least 1x1");
  const auto& is = c.est.initial_sigma;
  for (double s : {is.p, is.v, is.theta, is.bg, is.ba})
    if (!(s > 0.0)) fail("initial sigmas must be positive");
  try {
    c.sim.traj.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (!(c.sim.scene.landmark_density > 0.0)) fail("landmark_density must be positive");
  if (!(c.sim.fov_half_angle_deg > 0.0 && c.sim.fov_half_angle_deg < 89.0)) fail("fov_half_angle_deg must lie in (0, 89)");
  if (c.obs_ticks < 4) fail("obs_ticks must be >= 4");
  if (!(c.obs_dt > 0.0)) fail("obs_dt must be positive");
  if (c.obs_features < 4) fail("obs_features must be >= 4");
}

/// Flat `key = value` text; `#` starts a comment. Unknown keys are rejected.
inline Config parse_config(std::istream& in, const std::string& source = "config") {
  Config c;
  std::string line;
  int no = 0;
  const auto& keys = detail::config_keys();
  while (std::getline(in, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(source + ":" + std::to_string(no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) throw DataError(source + ":" + std::to_string(no) + ": unknown key '" + key + "'");
    try {
      it->second(c, value);
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  validate(c);
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

inline SensorRig sensor_rig(const Config& c) {
  SensorRig rig;
  rig.ext = c.est.ext;
  rig.lrf = c.est.lrf();
  rig.fov_half_angle_deg = c.sim.fov_half_angle_deg;
  return rig;
}

inline SensorNoise sensor_noise(const Config& c) {
  SensorNoise n;
  n.filter = c.est.noise;
  n.noiseless = c.sim.noiseless;
  n.bias_random_walk = c.sim.bias_random_walk;
  n.b_g = c.sim.true_bg;
  n.b_a = c.sim.true_ba;
  return n;
}

/// Scene and sensor data for one seed.
inline Dataset simulate(const Config& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Scene scene = make_scene(c.sim.traj, c.sim.scene, rng);
  return generate(c.sim.traj, scene, sensor_noise(c), sensor_rig(c), rng, c.est.world);
}

// ---- CSV ------------------------------------------------------------------

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& p) : out_(p, std::ios::binary), path_(p) {
    if (!out_) throw std::runtime_error("cannot write '" + p.string() + "'");
  }
  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
    out_ << '\n';
  }
  CsvWriter& operator<<(double v) {
    sep();
    out_ << detail::fmt(v);
    return *this;
  }
  CsvWriter& operator<<(std::int64_t v) {
    sep();
    out_ << v;
    return *this;
  }
  CsvWriter& operator<<(int v) { return *this << static_cast<std::int64_t>(v); }
  CsvWriter& operator<<(const std::string& s) {
    sep();
    out_ << s;
    return *this;
  }
  CsvWriter& operator<<(const Vec3& v) { return *this << v.x() << v.y() << v.z(); }
  CsvWriter& operator<<(const Quaternion& q) { return *this << q.w << q.x << q.y << q.z; }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }
  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("error writing '" + path_.string() + "'");
  }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }
  std::ofstream out_;
  std::filesystem::path path_;
  bool first_ = true;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

/// Reads a CSV whose header must equal `expected`; every row must have the same width.
inline CsvTable read_csv(const std::filesystem::path& p, const std::vector<std::string>& expected) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  CsvTable t;
  std::string line;
  int no = 0;
  const auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) out.push_back(detail::trim(cell));
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (no == 1) {
      t.header = split(line);
      if (t.header != expected) throw DataError(p.string() + ":1: unexpected header");
      continue;
    }
    if (detail::trim(line).empty()) continue;
    auto cells = split(line);
    if (cells.size() != expected.size())
      throw DataError(p.string() + ":" + std::to_string(no) + ": expected " + std::to_string(expected.size()) +
                      " fields, got " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(no);
  }
  if (no == 0) throw DataError(p.string() + ": empty file (missing header)");
  return t;
}

namespace detail {

inline double cell_double(const CsvTable& t, std::size_t r, std::size_t c, const std::filesystem::path& p) {
  try {
    return parse_double(t.rows[r][c]);
  } catch (const DataError& e) {
    throw DataError(p.string() + ":" + std::to_string(t.line_numbers[r]) + ": column '" + t.header[c] + "': " + e.what());
  }
}

inline std::int64_t cell_int(const CsvTable& t, std::size_t r, std::size_t c, const std::filesystem::path& p) {
  try {
    return parse_int(t.rows[r][c]);
  } catch (const DataError& e) {
    throw DataError(p.string() + ":" + std::to_string(t.line_numbers[r]) + ": column '" + t.header[c] + "': " + e.what());
  }
}

inline void require_sorted(double prev, double t, const std::filesystem::path& p, int line, bool strict) {
  if (strict ? !(t > prev) : !(t >= prev))
    throw DataError(p.string() + ":" + std::to_string(line) + ": timestamps must be " +
                    (strict ? "strictly increasing" : "non-decreasing"));
}

}  // namespace detail

inline const std::vector<std::string> kImuHeader{"t", "wx", "wy", "wz", "ax", "ay", "az"};
inline const std::vector<std::string> kFeatureHeader{"t", "track_id", "u", "v"};
inline const std::vector<std::string> kRangeHeader{"t", "range"};
inline const std::vector<std::string> kTruthHeader{"t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz"};

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds, const std::string& meta) {
  std::filesystem::create_directories(dir);
  {
    CsvWriter w(dir / "imu.csv");
    w.header(kImuHeader);
    for (const auto& u : ds.imu) {
      w << u.t << u.omega_imu << u.a_imu;
      w.end_row();
    }
    w.close();
  }
  {
    CsvWriter w(dir / "features.csv");
    w.header(kFeatureHeader);
    for (const auto& f : ds.frames)
      for (const auto& o : f.obs) {
        w << f.t << o.track_id << o.z.x() << o.z.y();
        w.end_row();
      }
    w.close();
  }
  {
    CsvWriter w(dir / "range.csv");
    w.header(kRangeHeader);
    for (const auto& r : ds.ranges) {
      w << r.t << r.range;
      w.end_row();
    }
    w.close();
  }
  {
    CsvWriter w(dir / "truth.csv");
    w.header(kTruthHeader);
    for (const auto& s : ds.truth) {
      w << s.t << s.x.p_wi << s.x.v_wi << s.x.q_wi;
      w.end_row();
    }
    w.close();
  }
  std::ofstream m(dir / "meta.txt", std::ios::binary);
  m << meta;
  if (!m) throw std::runtime_error("cannot write meta.txt");
}

/// Frames are the distinct timestamps of features.csv and range.csv.
inline Dataset read_dataset(const std::filesystem::path& dir, bool need_truth = false) {
  Dataset ds;
  {
    const auto p = dir / "imu.csv";
    const CsvTable t = read_csv(p, kImuHeader);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      ImuSample u;
      u.t = detail::cell_double(t, r, 0, p);
      u.omega_imu = {detail::cell_double(t, r, 1, p), detail::cell_double(t, r, 2, p), detail::cell_double(t, r, 3, p)};
      u.a_imu = {detail::cell_double(t, r, 4, p), detail::cell_double(t, r, 5, p), detail::cell_double(t, r, 6, p)};
      if (!ds.imu.empty()) detail::require_sorted(ds.imu.back().t, u.t, p, t.line_numbers[r], true);
      ds.imu.push_back(u);
    }
    if (ds.imu.empty()) throw DataError(p.string() + ": no IMU samples");
  }
  std::map<double, SimFrame> frames;
  {
    const auto p = dir / "features.csv";
    const CsvTable t = read_csv(p, kFeatureHeader);
    double prev = -1e300;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      VisionObservation o;
      o.t = detail::cell_double(t, r, 0, p);
      o.track_id = detail::cell_int(t, r, 1, p);
      o.z = {detail::cell_double(t, r, 2, p), detail::cell_double(t, r, 3, p)};
      detail::require_sorted(prev, o.t, p, t.line_numbers[r], false);
      prev = o.t;
      auto& fr = frames[o.t];
      fr.t = o.t;
      fr.obs.push_back(o);
    }
  }
  {
    const auto p = dir / "range.csv";
    const CsvTable t = read_csv(p, kRangeHeader);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      RangeSample s{detail::cell_double(t, r, 0, p), detail::cell_double(t, r, 1, p)};
      if (!ds.ranges.empty()) detail::require_sorted(ds.ranges.back().t, s.t, p, t.line_numbers[r], true);
      if (!(s.range > 0.0))
        throw DataError(p.string() + ":" + std::to_string(t.line_numbers[r]) + ": range must be positive");
      ds.ranges.push_back(s);
      frames[s.t].t = s.t;
    }
  }
  for (auto& [t, f] : frames) ds.frames.push_back(std::move(f));
  const auto tp = dir / "truth.csv";
  if (need_truth || std::filesystem::exists(tp)) {
    const CsvTable t = read_csv(tp, kTruthHeader);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      TruthState s;
      std::array<double, 11> v;
      for (std::size_t c = 0; c < 11; ++c) v[c] = detail::cell_double(t, r, c, tp);
      s.t = v[0];
      s.x.p_wi = {v[1], v[2], v[3]};
      s.x.v_wi = {v[4], v[5], v[6]};
      s.x.q_wi = Quaternion(v[7], v[8], v[9], v[10]);
      if (!(s.x.q_wi.norm() > 0.5 && s.x.q_wi.norm() < 1.5))
        throw DataError(tp.string() + ":" + std::to_string(t.line_numbers[r]) + ": quaternion is not normalized");
      s.x.q_wi = s.x.q_wi.normalized();
      ds.truth.push_back(s);
    }
  }
  return ds;
}

inline std::vector<std::string> estimate_header() {
  std::vector<std::string> h{"t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
                             "bgx", "bgy", "bgz", "bax", "bay", "baz"};
  for (int i = 0; i < 15; ++i) h.push_back("var" + std::to_string(i));
  for (int i = 0; i < 9; ++i)
    for (int j = i + 1; j < 9; ++j) h.push_back("cov" + std::to_string(i) + "_" + std::to_string(j));
  return h;
}

inline void write_estimates(const std::filesystem::path& p, const std::vector<EstimateRecord>& est) {
  CsvWriter w(p);
  w.header(estimate_header());
  for (const auto& e : est) {
    w << e.t << e.x.p_wi << e.x.v_wi << e.x.q_wi << e.x.b_g << e.x.b_a;
    for (int i = 0; i < 15; ++i) w << e.P(i, i);
    for (int i = 0; i < 9; ++i)
      for (int j = i + 1; j < 9; ++j) w << e.P(i, j);
    w.end_row();
  }
  w.close();
}

/// Inverse of write_estimates; covariance entries not stored in the file are zero.
inline std::vector<EstimateRecord> read_estimates(const std::filesystem::path& p) {
  const auto header = estimate_header();
  const CsvTable t = read_csv(p, header);
  std::vector<EstimateRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<double> v(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) v[c] = detail::cell_double(t, r, c, p);
    EstimateRecord e;
    e.t = v[0];
    e.x.p_wi = {v[1], v[2], v[3]};
    e.x.v_wi = {v[4], v[5], v[6]};
    e.x.q_wi = Quaternion(v[7], v[8], v[9], v[10]).normalized();
    e.x.b_g = {v[11], v[12], v[13]};
    e.x.b_a = {v[14], v[15], v[16]};
    e.P.setZero();
    std::size_t c = 17;
    for (int i = 0; i < 15; ++i) e.P(i, i) = v[c++];
    for (int i = 0; i < 9; ++i)
      for (int j = i + 1; j < 9; ++j) e.P(i, j) = e.P(j, i) = v[c++];
    out.push_back(e);
  }
  return out;
}

inline void write_diagnostics(const std::filesystem::path& p, const RunLog& log) {
  CsvWriter w(p);
  w.header({"t", "slam_accepted", "slam_rejected", "msckf_tracks", "msckf_skipped", "msckf_rows", "slam_inits_msckf",
            "slam_inits_unknown", "live_features", "range_applied", "range_status"});
  for (const auto& d : log.frames) {
    w << d.t << d.slam_accepted << d.slam_rejected << d.msckf_tracks << d.msckf_skipped << d.msckf_rows
      << d.slam_inits_msckf << d.slam_inits_unknown << d.live_features << d.range_applied
      << (d.range_status.empty() ? std::string("none") : d.range_status);
    w.end_row();
  }
  w.close();
}

/// Initial inertial state for a run: truth at the first IMU time when available,
/// optionally perturbed by a draw from the initial covariance.
inline InertialState initial_state(const Config& c, const Dataset& ds) {
  if (!c.init_from_truth || ds.truth.empty()) return c.est.initial;
  InertialState x = ds.truth.front().x;
  x.b_g = c.est.initial.b_g;
  x.b_a = c.est.initial.b_a;
  if (c.init_perturb) {
    std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> n(0.0, 1.0);
    const auto draw = [&](double s) { return Vec3(s * n(rng), s * n(rng), s * n(rng)); };
    const auto& is = c.est.initial_sigma;
    x.p_wi += draw(is.p);
    x.v_wi += draw(is.v);
    x.q_wi = quat_mul(x.q_wi, quat_exp(draw(is.theta))).normalized();
    x.b_g += draw(is.bg);
    x.b_a += draw(is.ba);
  }
  return x;
}

}  // namespace rvio
