#pragma once

#include "rvio/range_update.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace rvio {

enum class TrajectoryKind { Hover, ConstantVelocity, ConstantAcceleration, Circle, Sinusoid };

inline std::optional<TrajectoryKind> parse_trajectory_kind(const std::string& s) {
  if (s == "hover") return TrajectoryKind::Hover;
  if (s == "constant_velocity") return TrajectoryKind::ConstantVelocity;
  if (s == "constant_acceleration") return TrajectoryKind::ConstantAcceleration;
  if (s == "circle") return TrajectoryKind::Circle;
  if (s == "sinusoid") return TrajectoryKind::Sinusoid;
  return std::nullopt;
}

inline const char* to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::Hover: return "hover";
    case TrajectoryKind::ConstantVelocity: return "constant_velocity";
    case TrajectoryKind::ConstantAcceleration: return "constant_acceleration";
    case TrajectoryKind::Circle: return "circle";
    case TrajectoryKind::Sinusoid: return "sinusoid";
  }
  return "?";
}

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::ConstantVelocity;
  double duration = 10.0;
  Vec3 start{0.0, 0.0, 5.0};
  Vec3 velocity{1.0, 0.0, 0.0};      // constant_velocity / constant_acceleration initial velocity
  Vec3 acceleration{0.05, 0.0, 0.0};  // constant_acceleration
  double speed = 1.0;                 // circle / sinusoid forward speed
  double radius = 5.0;                // circle
  double amplitude = 1.0;             // sinusoid
  double frequency = 0.1;             // sinusoid, Hz
  double imu_rate = 200.0;
  double cam_rate = 10.0;
  double lrf_rate = 5.0;

  void validate() const {
    if (!(duration > 0.0)) throw std::invalid_argument("duration must be positive");
    if (!(imu_rate > 0.0) || !(cam_rate > 0.0) || !(lrf_rate > 0.0))
      throw std::invalid_argument("sensor rates must be positive");
    if (imu_rate < cam_rate) throw std::invalid_argument("imu_rate must be >= cam_rate");
    if (lrf_rate > cam_rate) throw std::invalid_argument("lrf_rate must be <= cam_rate");
    if (kind == TrajectoryKind::Circle && !(radius > 0.0)) throw std::invalid_argument("radius must be positive");
  }
};

struct TruthSample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();          // world acceleration
  Quaternion q;                   // world -> IMU
  Vec3 omega = Vec3::Zero();      // body rate
};

namespace detail {

inline Quaternion yaw_quat(double yaw) {
  // C(q) = Rz(yaw)^T
  return Quaternion(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw));
}

}  // namespace detail

inline TruthSample truth_at(const TrajectorySpec& spec, double t) {
  TruthSample s;
  s.t = t;
  switch (spec.kind) {
    case TrajectoryKind::Hover:
      s.p = spec.start;
      break;
    case TrajectoryKind::ConstantVelocity:
      s.p = spec.start + spec.velocity * t;
      s.v = spec.velocity;
      break;
    case TrajectoryKind::ConstantAcceleration:
      s.p = spec.start + spec.velocity * t + 0.5 * spec.acceleration * t * t;
      s.v = spec.velocity + spec.acceleration * t;
      s.a = spec.acceleration;
      break;
    case TrajectoryKind::Circle: {
      const double w = spec.speed / spec.radius;
      const double th = w * t;
      s.p = spec.start + spec.radius * Vec3(std::sin(th), 1.0 - std::cos(th), 0.0);
      s.v = spec.speed * Vec3(std::cos(th), std::sin(th), 0.0);
      s.a = spec.speed * w * Vec3(-std::sin(th), std::cos(th), 0.0);
      s.q = detail::yaw_quat(th);
      s.omega = Vec3(0.0, 0.0, w);
      break;
    }
    case TrajectoryKind::Sinusoid: {
      const double w = 2.0 * M_PI * spec.frequency;
      s.p = spec.start + Vec3(spec.speed * t, spec.amplitude * std::sin(w * t), 0.5 * spec.amplitude * std::sin(2.0 * w * t));
      s.v = Vec3(spec.speed, spec.amplitude * w * std::cos(w * t), spec.amplitude * w * std::cos(2.0 * w * t));
      s.a = Vec3(0.0, -spec.amplitude * w * w * std::sin(w * t), -2.0 * spec.amplitude * w * w * std::sin(2.0 * w * t));
      break;
    }
  }
  return s;
}

enum class TerrainKind { Flat, Hills };

struct SceneSpec {
  TerrainKind terrain = TerrainKind::Flat;
  double hill_amplitude = 0.3;
  double hill_wavelength = 8.0;
  double landmark_density = 1.0;  // landmarks per m²
  double margin = 8.0;            // extent around the trajectory footprint
  bool range_from_surface = false;  // cast against the analytic surface instead of the mesh
};

struct MeshTriangle {
  std::array<int, 3> v;
};

struct Scene {
  SceneSpec spec;
  std::vector<Vec3> landmarks;
  std::vector<MeshTriangle> mesh;

  double height(double x, double y) const {
    if (spec.terrain == TerrainKind::Flat) return 0.0;
    const double k = 2.0 * M_PI / spec.hill_wavelength;
    return spec.hill_amplitude * std::sin(k * x) * std::cos(k * y);
  }
};

/// Landmarks covering the trajectory's ground track; the mesh triangulates their xy.
inline Scene make_scene(const TrajectorySpec& traj, const SceneSpec& spec, std::mt19937_64& rng) {
  Scene sc;
  sc.spec = spec;
  Vec2 lo(1e300, 1e300), hi(-1e300, -1e300);
  const int samples = 200;
  for (int i = 0; i <= samples; ++i) {
    const Vec3 p = truth_at(traj, traj.duration * i / samples).p;
    lo = lo.cwiseMin(p.head<2>());
    hi = hi.cwiseMax(p.head<2>());
  }
  lo.array() -= spec.margin;
  hi.array() += spec.margin;
  const double area = (hi - lo).prod();
  const int count = std::max(3, static_cast<int>(std::round(area * spec.landmark_density)));
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y());
  std::vector<Vec2> xy;
  for (int i = 0; i < count; ++i) {
    const double x = ux(rng), y = uy(rng);
    xy.emplace_back(x, y);
    sc.landmarks.emplace_back(x, y, sc.height(x, y));
  }
  for (const auto& t : delaunay_facets(xy)) sc.mesh.push_back({t});
  return sc;
}

/// Möller-Trumbore; returns the ray parameter of the closest hit.
inline std::optional<double> ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = d.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tv = o - a;
  const double u = tv.dot(pv) * inv;
  if (u < -1e-12 || u > 1.0 + 1e-12) return std::nullopt;
  const Vec3 qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  if (v < -1e-12 || u + v > 1.0 + 1e-12) return std::nullopt;
  const double t = e2.dot(qv) * inv;
  if (!(t > 0.0)) return std::nullopt;
  return t;
}

inline std::optional<double> cast_mesh(const Scene& sc, const Vec3& o, const Vec3& d) {
  std::optional<double> best;
  for (const auto& tri : sc.mesh) {
    const auto t = ray_triangle(o, d, sc.landmarks[tri.v[0]], sc.landmarks[tri.v[1]], sc.landmarks[tri.v[2]]);
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

inline std::optional<double> cast_surface(const Scene& sc, const Vec3& o, const Vec3& d) {
  const auto f = [&](double t) {
    const Vec3 p = o + t * d;
    return p.z() - sc.height(p.x(), p.y());
  };
  if (!(f(0.0) > 0.0)) return std::nullopt;
  double lo = 0.0, hi = 0.05;
  while (f(hi) > 0.0) {
    lo = hi;
    hi *= 1.5;
    if (hi > 1e4) return std::nullopt;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-13; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct SensorNoise {
  NoiseConfig filter;        // densities copied from the filter config
  bool bias_random_walk = false;
  Vec3 b_g = Vec3::Zero();   // true constant biases
  Vec3 b_a = Vec3::Zero();
  bool noiseless = false;
};

struct SimFrame {
  double t = 0.0;
  std::vector<VisionObservation> obs;
};

struct RangeSample {
  double t = 0.0;
  double range = 0.0;
};

struct TruthState {
  double t = 0.0;
  InertialState x;
};

struct Dataset {
  std::vector<ImuSample> imu;
  std::vector<SimFrame> frames;
  std::vector<RangeSample> ranges;
  std::vector<TruthState> truth;  // at IMU times
  int missed_ranges = 0;
};

struct SensorRig {
  CameraExtrinsics ext;
  LrfModel lrf;
  double fov_half_angle_deg = 45.0;
  double max_range = 100.0;
};

inline CameraExtrinsics downward_camera() {
  CameraExtrinsics e;
  e.q_ic = from_rotation(Vec3(1.0, -1.0, -1.0).asDiagonal().toDenseMatrix());
  return e;
}

/// Deterministic sensor synthesis; all randomness comes from `rng`.
inline Dataset generate(const TrajectorySpec& spec, const Scene& scene, const SensorNoise& noise,
                        const SensorRig& rig, std::mt19937_64& rng, const WorldModel& world = {}) {
  spec.validate();
  Dataset ds;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto randn3 = [&]() { return Vec3(gauss(rng), gauss(rng), gauss(rng)); };
  const double scale = noise.noiseless ? 0.0 : 1.0;
  const NoiseConfig& nc = noise.filter;

  const auto n_imu = static_cast<long>(std::floor(spec.duration * spec.imu_rate + 1e-9));
  const double dt = 1.0 / spec.imu_rate;
  Vec3 bg = noise.b_g, ba = noise.b_a;
  for (long i = 0; i < n_imu; ++i) {
    const double t = static_cast<double>(i) / spec.imu_rate;
    const TruthSample s = truth_at(spec, t);
    ImuSample u;
    u.t = t;
    u.omega_imu = s.omega + bg + scale * nc.sigma_ng / std::sqrt(dt) * randn3();
    u.a_imu = to_rotation(s.q) * (s.a - world.g_w) + ba + scale * nc.sigma_na / std::sqrt(dt) * randn3();
    ds.imu.push_back(u);
    TruthState ts;
    ts.t = t;
    ts.x.p_wi = s.p;
    ts.x.v_wi = s.v;
    ts.x.q_wi = s.q;
    ts.x.b_g = bg;
    ts.x.b_a = ba;
    ds.truth.push_back(ts);
    if (noise.bias_random_walk && !noise.noiseless) {
      bg += nc.sigma_nbg * std::sqrt(dt) * randn3();
      ba += nc.sigma_nba * std::sqrt(dt) * randn3();
    }
  }

  const double tan_fov = std::tan(rig.fov_half_angle_deg * M_PI / 180.0);
  const int n_lm = static_cast<int>(scene.landmarks.size());
  std::vector<std::int64_t> track_of(n_lm, -1);
  std::int64_t next_track = 0;
  const auto n_frames = static_cast<long>(std::floor(spec.duration * spec.cam_rate + 1e-9));
  const long lrf_every = std::max(1L, static_cast<long>(std::llround(spec.cam_rate / spec.lrf_rate)));
  for (long f = 0; f < n_frames; ++f) {
    const double t = static_cast<double>(f) / spec.cam_rate;
    const TruthSample s = truth_at(spec, t);
    InertialState x;
    x.p_wi = s.p;
    x.q_wi = s.q;
    const CameraPose cam = camera_pose_from_imu(x, rig.ext);
    const Mat3 c = to_rotation(cam.q_wc);
    SimFrame fr;
    fr.t = t;
    for (int j = 0; j < n_lm; ++j) {
      const Vec3 pc = c * (scene.landmarks[j] - cam.p_wc);
      const bool visible = pc.z() > 0.1 && std::abs(pc.x()) <= tan_fov * pc.z() &&
                           std::abs(pc.y()) <= tan_fov * pc.z() && pc.z() < rig.max_range;
      if (!visible) {
        track_of[j] = -1;
        continue;
      }
      if (track_of[j] < 0) track_of[j] = next_track++;
      VisionObservation o;
      o.track_id = track_of[j];
      o.t = t;
      o.z = Vec2(pc.x() / pc.z(), pc.y() / pc.z()) + scale * nc.sigma_v * Vec2(gauss(rng), gauss(rng));
      fr.obs.push_back(o);
    }
    ds.frames.push_back(std::move(fr));

    if (f % lrf_every == 0) {
      const Vec3 dir = c.transpose() * rig.lrf.u_c;
      const auto hit = scene.spec.range_from_surface ? cast_surface(scene, cam.p_wc, dir) : cast_mesh(scene, cam.p_wc, dir);
      const double eps = gauss(rng);
      if (!hit || *hit > rig.max_range) {
        ++ds.missed_ranges;
        continue;
      }
      ds.ranges.push_back({t, *hit + scale * rig.lrf.sigma_r * eps});
    }
  }
  return ds;
}

struct EstimateRecord {
  double t = 0.0;
  InertialState x;
  Eigen::Matrix<double, 15, 15> P = Eigen::Matrix<double, 15, 15>::Identity();
};

struct Metrics {
  double position_rmse = 0.0;
  double velocity_rmse = 0.0;
  double attitude_rmse_deg = 0.0;
  double final_position_error = 0.0;
  double final_z_error = 0.0;
  std::vector<double> nees;  // 9-dof over position, velocity, attitude
  std::vector<double> times;
  int matched = 0;
};

/// Error state δx with truth = estimate ⊕ δx, over (p, v, θ).
inline Eigen::Matrix<double, 9, 1> pose_velocity_error(const InertialState& est, const InertialState& truth) {
  Eigen::Matrix<double, 9, 1> e;
  e.segment<3>(0) = truth.p_wi - est.p_wi;
  e.segment<3>(3) = truth.v_wi - est.v_wi;
  e.segment<3>(6) = quat_log(quat_mul(est.q_wi.conjugate(), truth.q_wi));
  return e;
}

inline double nees(const VecX& err, const MatX& p) {
  const Eigen::LDLT<MatX> ldlt(p);
  return err.dot(ldlt.solve(err));
}

/// Truth is looked up by nearest timestamp within half an IMU period.
inline Metrics evaluate(const std::vector<EstimateRecord>& est, const std::vector<TruthState>& truth) {
  Metrics m;
  if (est.empty() || truth.empty()) throw std::invalid_argument("evaluate: empty estimates or truth");
  const double tol = truth.size() > 1 ? 0.5 * (truth[1].t - truth[0].t) + 1e-9 : 1e-9;
  double sp = 0, sv = 0, sa = 0;
  std::size_t j = 0;
  for (const auto& e : est) {
    while (j + 1 < truth.size() && std::abs(truth[j + 1].t - e.t) <= std::abs(truth[j].t - e.t)) ++j;
    if (std::abs(truth[j].t - e.t) > tol) continue;
    const auto err = pose_velocity_error(e.x, truth[j].x);
    sp += err.segment<3>(0).squaredNorm();
    sv += err.segment<3>(3).squaredNorm();
    sa += std::pow(err.segment<3>(6).norm() * 180.0 / M_PI, 2);
    m.nees.push_back(nees(err, e.P.topLeftCorner<9, 9>()));
    m.times.push_back(e.t);
    m.final_position_error = err.segment<3>(0).norm();
    m.final_z_error = std::abs(err(2));
    ++m.matched;
  }
  if (m.matched == 0) throw std::invalid_argument("evaluate: no overlapping timestamps");
  m.position_rmse = std::sqrt(sp / m.matched);
  m.velocity_rmse = std::sqrt(sv / m.matched);
  m.attitude_rmse_deg = std::sqrt(sa / m.matched);
  return m;
}

}  // namespace rvio
