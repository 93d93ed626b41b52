#pragma once

#include "rvio/filter_core.hpp"

#include <optional>
#include <vector>

namespace rvio {

using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat13 = Eigen::Matrix<double, 1, 3>;

inline constexpr double kDepthEpsilon = 1e-6;

struct VisionObservation {
  std::int64_t track_id = -1;
  Vec2 z = Vec2::Zero();
  double t = 0.0;
};

/// Anchor-frame inverse depth to world cartesian coordinates.
inline Vec3 inverse_depth_to_world(const Feature& f, const CameraPose& anchor) {
  if (f.rho == 0.0) throw std::domain_error("inverse_depth_to_world: rho == 0 (point at infinity)");
  return anchor.p_wc + to_rotation(anchor.q_wc).transpose() * f.bearing() / f.rho;
}

/// World point to inverse-depth parameters in the given frame; nullopt behind the camera.
inline std::optional<Feature> world_to_inverse_depth(const Vec3& p_w, const CameraPose& anchor) {
  const Vec3 pc = to_rotation(anchor.q_wc) * (p_w - anchor.p_wc);
  if (pc.z() <= kDepthEpsilon) return std::nullopt;
  Feature f;
  f.alpha = pc.x() / pc.z();
  f.beta = pc.y() / pc.z();
  f.rho = 1.0 / pc.z();
  return f;
}

inline std::optional<Vec2> project(const Vec3& p_c) {
  if (!(p_c.z() > kDepthEpsilon)) return std::nullopt;
  return Vec2(p_c.x() / p_c.z(), p_c.y() / p_c.z());
}

/// ∂(x/z, y/z)/∂p_c evaluated at p_c.
inline Mat23 projection_jacobian(const Vec3& p_c) {
  const double iz = 1.0 / p_c.z();
  Mat23 j;
  j << iz, 0.0, -p_c.x() * iz * iz,
       0.0, iz, -p_c.y() * iz * iz;
  return j;
}

/// ∂(bearing/ρ)/∂(α, β, ρ).
inline Mat3 inverse_depth_partial(const Feature& f) {
  const double ir = 1.0 / f.rho;
  Mat3 m;
  m << 1.0, 0.0, -f.alpha * ir,
       0.0, 1.0, -f.beta * ir,
       0.0, 0.0, -ir;
  return m;
}

struct SlamJacobianRow {
  Mat23 H_p_anchor = Mat23::Zero();
  Mat23 H_p_cur = Mat23::Zero();
  Mat23 H_theta_anchor = Mat23::Zero();
  Mat23 H_theta_cur = Mat23::Zero();
  Mat23 H_f = Mat23::Zero();
  Vec2 residual = Vec2::Zero();
  Vec2 predicted = Vec2::Zero();
  int anchor_slot = 1;
  int current_slot = 1;
  int feature_slot = 1;
  double noise_var = 0.0;

  /// Scatter into a 2×dim block, accumulating when anchor and current share a slot.
  MatX dense(const ErrorLayout& l) const {
    MatX h = MatX::Zero(2, l.dim());
    h.middleCols<3>(l.pos(anchor_slot)) += H_p_anchor;
    h.middleCols<3>(l.pos(current_slot)) += H_p_cur;
    h.middleCols<3>(l.att(anchor_slot)) += H_theta_anchor;
    h.middleCols<3>(l.att(current_slot)) += H_theta_cur;
    h.middleCols<3>(l.feat(feature_slot)) += H_f;
    return h;
  }
};

/// Predicted camera-frame coordinates of a SLAM feature seen from window slot `current`.
inline Vec3 slam_feature_in_camera(const FullState& s, const Feature& f, int current) {
  const CameraPose cur = s.window.pose(current);
  const Vec3 pw = inverse_depth_to_world(f, s.window.pose(f.anchor));
  return to_rotation(cur.q_wc) * (pw - cur.p_wc);
}

inline std::optional<SlamJacobianRow> slam_residual_and_jacobians(const FullState& s, int feature_slot,
                                                                  const Vec2& z, double sigma_v,
                                                                  int current_slot = 1) {
  const auto& fo = s.feature(feature_slot);
  if (!fo) return std::nullopt;
  const Feature& f = *fo;
  const CameraPose anchor = s.window.pose(f.anchor);
  const CameraPose cur = s.window.pose(current_slot);
  const Mat3 c_cur = to_rotation(cur.q_wc);
  const Mat3 c_anc_t = to_rotation(anchor.q_wc).transpose();
  const Vec3 pc = c_cur * (anchor.p_wc + c_anc_t * f.bearing() / f.rho - cur.p_wc);
  const auto zhat = project(pc);
  if (!zhat) return std::nullopt;

  const Mat23 j = projection_jacobian(pc);
  SlamJacobianRow row;
  row.anchor_slot = f.anchor;
  row.current_slot = current_slot;
  row.feature_slot = feature_slot;
  row.predicted = *zhat;
  row.residual = z - *zhat;
  row.noise_var = sigma_v * sigma_v;
  row.H_p_anchor = j * c_cur;
  row.H_p_cur = -row.H_p_anchor;
  const Mat3 cc = c_cur * c_anc_t;
  row.H_theta_anchor = -(1.0 / f.rho) * j * cc * skew(f.bearing());
  row.H_theta_cur = j * skew(pc);
  row.H_f = (1.0 / f.rho) * j * cc * inverse_depth_partial(f);
  return row;
}

struct StackedUpdate {
  VecX residual;
  MatX H;
  MatX R;
  int accepted = 0;
  int rejected = 0;
  std::vector<int> rejected_slots;
};

/// Stacks every SLAM observation that passes its own χ² gate (df = 2).
inline StackedUpdate build_slam_update(const FullState& s, const ErrorCovariance& cov,
                                       const std::vector<std::pair<int, Vec2>>& observations, double sigma_v,
                                       double confidence = 0.95) {
  const ErrorLayout& l = s.layout;
  std::vector<MatX> hs;
  std::vector<Vec2> rs;
  StackedUpdate out;
  for (const auto& [slot, z] : observations) {
    const auto row = slam_residual_and_jacobians(s, slot, z, sigma_v);
    if (!row) {
      ++out.rejected;
      out.rejected_slots.push_back(slot);
      continue;
    }
    MatX h = row->dense(l);
    const MatX sm = h * cov.matrix() * h.transpose() + row->noise_var * MatX::Identity(2, 2);
    if (!chi2_gate(row->residual, sm, confidence).pass) {
      ++out.rejected;
      out.rejected_slots.push_back(slot);
      continue;
    }
    hs.push_back(std::move(h));
    rs.push_back(row->residual);
  }
  const int m = static_cast<int>(rs.size());
  out.accepted = m;
  out.H = MatX::Zero(2 * m, l.dim());
  out.residual = VecX::Zero(2 * m);
  for (int i = 0; i < m; ++i) {
    out.H.middleRows<2>(2 * i) = hs[i];
    out.residual.segment<2>(2 * i) = rs[i];
  }
  out.R = sigma_v * sigma_v * MatX::Identity(2 * m, 2 * m);
  return out;
}

}  // namespace rvio
