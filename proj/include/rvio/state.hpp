#pragma once

#include "rvio/geom.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvio {

struct InertialState {
  Vec3 p_wi = Vec3::Zero();
  Vec3 v_wi = Vec3::Zero();
  Quaternion q_wi;  // world -> IMU
  Vec3 b_g = Vec3::Zero();
  Vec3 b_a = Vec3::Zero();
};

struct CameraExtrinsics {
  Vec3 p_ic = Vec3::Zero();  // camera origin in IMU frame
  Quaternion q_ic;           // IMU -> camera
};

struct WorldModel {
  Vec3 g_w{0.0, 0.0, -9.81};
};

struct CameraPose {
  Vec3 p_wc = Vec3::Zero();
  Quaternion q_wc;
};

inline CameraPose camera_pose_from_imu(const InertialState& imu, const CameraExtrinsics& ext) {
  return {imu.p_wi + to_rotation(imu.q_wi).transpose() * ext.p_ic, quat_mul(imu.q_wi, ext.q_ic)};
}

/// Window slots are 1-based; slot 1 holds the newest pose.
struct SlidingWindow {
  std::vector<Vec3> positions;
  std::vector<Quaternion> orientations;
  std::vector<std::int64_t> frame_ids;  // -1 for slots that only hold a cloned pose
  std::vector<double> times;

  explicit SlidingWindow(int m = 0)
      : positions(m, Vec3::Zero()), orientations(m), frame_ids(m, -1), times(m, 0.0) {}

  int size() const { return static_cast<int>(positions.size()); }

  CameraPose pose(int slot) const {
    check(slot);
    return {positions[slot - 1], orientations[slot - 1]};
  }

  /// Slot holding the given frame, or nullopt.
  std::optional<int> slot_of(std::int64_t frame_id) const {
    for (int i = 0; i < size(); ++i)
      if (frame_ids[i] == frame_id && frame_id >= 0) return i + 1;
    return std::nullopt;
  }

  void check(int slot) const {
    if (slot < 1 || slot > size()) throw std::out_of_range("window slot " + std::to_string(slot));
  }
};

enum class FeatureStatus { Slam, MsckfCandidate };

struct Feature {
  double alpha = 0.0;
  double beta = 0.0;
  double rho = 1.0;
  int anchor = 1;  // window slot
  std::int64_t track_id = -1;
  FeatureStatus status = FeatureStatus::Slam;

  Vec3 vec() const { return {alpha, beta, rho}; }
  Vec3 bearing() const { return {alpha, beta, 1.0}; }
};

enum class InertialBlock { Position, Velocity, Attitude, GyroBias, AccelBias };

struct IndexRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

/// Error-state ordering: [δp δv δθ δbg δba | window positions | window attitudes | features].
class ErrorLayout {
 public:
  static constexpr int kInertialDim = 15;

  ErrorLayout() = default;
  ErrorLayout(int m, int n) : m_(m), n_(n) {
    if (m < 1 || n < 0) throw std::invalid_argument("ErrorLayout requires M >= 1 and N >= 0");
  }

  int window_size() const { return m_; }
  int feature_capacity() const { return n_; }
  int dim() const { return kInertialDim + 6 * m_ + 3 * n_; }

  IndexRange inertial(InertialBlock b) const {
    const int o = 3 * static_cast<int>(b);
    return {o, o + 3};
  }
  IndexRange window_position(int slot) const {
    check_slot(slot, m_, "window");
    const int o = kInertialDim + 3 * (slot - 1);
    return {o, o + 3};
  }
  IndexRange window_attitude(int slot) const {
    check_slot(slot, m_, "window");
    const int o = kInertialDim + 3 * m_ + 3 * (slot - 1);
    return {o, o + 3};
  }
  IndexRange feature(int slot) const {
    check_slot(slot, n_, "feature");
    const int o = kInertialDim + 6 * m_ + 3 * (slot - 1);
    return {o, o + 3};
  }

  int p() const { return 0; }
  int v() const { return 3; }
  int theta() const { return 6; }
  int bg() const { return 9; }
  int ba() const { return 12; }
  int pos(int slot) const { return window_position(slot).begin; }
  int att(int slot) const { return window_attitude(slot).begin; }
  int feat(int slot) const { return feature(slot).begin; }
  int vision_begin() const { return kInertialDim; }

 private:
  static void check_slot(int slot, int count, const char* what) {
    if (slot < 1 || slot > count)
      throw std::out_of_range(std::string(what) + " slot " + std::to_string(slot) + " outside [1, " +
                              std::to_string(count) + "]");
  }

  int m_ = 1;
  int n_ = 0;
};

struct FullState {
  InertialState imu;
  SlidingWindow window;
  std::vector<std::optional<Feature>> features;  // N slots, 1-based through feature(slot)
  ErrorLayout layout;

  FullState() = default;
  FullState(int m, int n) : window(m), features(n), layout(m, n) {}

  std::optional<Feature>& feature(int slot) {
    layout.feature(slot);
    return features[slot - 1];
  }
  const std::optional<Feature>& feature(int slot) const {
    layout.feature(slot);
    return features[slot - 1];
  }

  std::optional<int> free_feature_slot() const {
    for (int j = 0; j < static_cast<int>(features.size()); ++j)
      if (!features[j]) return j + 1;
    return std::nullopt;
  }

  int live_features() const {
    int n = 0;
    for (const auto& f : features) n += f.has_value();
    return n;
  }
};

class ErrorCovariance {
 public:
  ErrorCovariance() = default;
  explicit ErrorCovariance(const ErrorLayout& layout) : layout_(layout), p_(MatX::Identity(layout.dim(), layout.dim())) {}
  ErrorCovariance(const ErrorLayout& layout, MatX p) : layout_(layout), p_(std::move(p)) {
    if (p_.rows() != layout.dim() || p_.cols() != layout.dim())
      throw std::invalid_argument("covariance shape does not match layout");
  }

  const ErrorLayout& layout() const { return layout_; }
  MatX& matrix() { return p_; }
  const MatX& matrix() const { return p_; }
  int dim() const { return static_cast<int>(p_.rows()); }

  auto ii() { return p_.topLeftCorner(15, 15); }
  auto ii() const { return p_.topLeftCorner(15, 15); }
  auto iv() { return p_.topRightCorner(15, dim() - 15); }
  auto iv() const { return p_.topRightCorner(15, dim() - 15); }
  auto vv() { return p_.bottomRightCorner(dim() - 15, dim() - 15); }
  auto vv() const { return p_.bottomRightCorner(dim() - 15, dim() - 15); }

  auto block(const IndexRange& r, const IndexRange& c) { return p_.block(r.begin, c.begin, r.size(), c.size()); }
  auto block(const IndexRange& r, const IndexRange& c) const { return p_.block(r.begin, c.begin, r.size(), c.size()); }

  void symmetrize() { p_ = 0.5 * (p_ + p_.transpose()).eval(); }

  /// Decouples a feature slot: zero cross terms, identity on its own block.
  void reset_feature_slot(int slot) {
    const IndexRange r = layout_.feature(slot);
    p_.middleRows(r.begin, 3).setZero();
    p_.middleCols(r.begin, 3).setZero();
    p_.block(r.begin, r.begin, 3, 3).setIdentity();
  }

 private:
  ErrorLayout layout_;
  MatX p_;
};

/// Additive update for vectors, q ← q̂ ⊗ δq(δθ) for attitudes. Empty feature slots are left alone.
inline FullState apply_correction(const FullState& s, const VecX& dx) {
  const ErrorLayout& l = s.layout;
  if (dx.size() != l.dim())
    throw std::invalid_argument("correction has dimension " + std::to_string(dx.size()) + ", expected " +
                                std::to_string(l.dim()));
  FullState out = s;
  out.imu.p_wi += dx.segment<3>(l.p());
  out.imu.v_wi += dx.segment<3>(l.v());
  out.imu.q_wi = quat_mul(s.imu.q_wi, small_angle_quat(dx.segment<3>(l.theta()))).normalized();
  out.imu.b_g += dx.segment<3>(l.bg());
  out.imu.b_a += dx.segment<3>(l.ba());
  for (int i = 1; i <= l.window_size(); ++i) {
    out.window.positions[i - 1] += dx.segment<3>(l.pos(i));
    out.window.orientations[i - 1] =
        quat_mul(s.window.orientations[i - 1], small_angle_quat(dx.segment<3>(l.att(i)))).normalized();
  }
  for (int j = 1; j <= l.feature_capacity(); ++j) {
    auto& f = out.features[j - 1];
    if (!f) continue;
    const Vec3 d = dx.segment<3>(l.feat(j));
    f->alpha += d.x();
    f->beta += d.y();
    f->rho += d.z();
  }
  return out;
}

}  // namespace rvio
