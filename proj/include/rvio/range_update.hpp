#pragma once

#include "rvio/delaunay.hpp"
#include "rvio/slam_update.hpp"

#include <algorithm>
#include <string>

namespace rvio {

/// Beam direction in the camera frame; the beam origin is the optical center.
struct LrfModel {
  Vec3 u_c{0.0, 0.0, 1.0};
  double sigma_r = 0.05;
};

inline constexpr double kFacetDegeneracy = 0.05;

struct Facet {
  std::array<int, 3> slots{1, 1, 1};  // feature slots, 0 when built from raw points
  std::array<Vec3, 3> p_w;
  Vec3 n = Vec3::Zero();
  double a = 0.0;
  double b = 0.0;
};

struct RangePrediction {
  double z = 0.0;
  Facet facet;
  Vec3 u_w = Vec3::Zero();
  Vec3 intersection = Vec3::Zero();
};

/// Range along u_w from p_c to the plane through p1, p2, p3; nullopt when the beam is
/// too close to parallel with the plane.
inline std::optional<RangePrediction> range_predict(const std::array<Vec3, 3>& pts, const Vec3& p_c, const Vec3& u_w,
                                                    double threshold = kFacetDegeneracy) {
  RangePrediction out;
  out.u_w = u_w;
  out.facet.p_w = pts;
  out.facet.n = (pts[0] - pts[1]).cross(pts[2] - pts[1]);
  out.facet.a = (pts[1] - p_c).dot(out.facet.n);
  out.facet.b = u_w.dot(out.facet.n);
  const double scale = u_w.norm() * out.facet.n.norm();
  const double longest = std::max({(pts[0] - pts[1]).squaredNorm(), (pts[1] - pts[2]).squaredNorm(),
                                   (pts[2] - pts[0]).squaredNorm()});
  if (!(out.facet.n.norm() > threshold * longest)) return std::nullopt;  // collinear facet
  if (!(scale > 0.0) || !(std::abs(out.facet.b) > threshold * scale)) return std::nullopt;
  out.z = out.facet.a / out.facet.b;
  out.intersection = p_c + out.z * u_w;
  return out;
}

inline std::optional<RangePrediction> range_predict(const std::array<Vec3, 3>& pts, const CameraPose& cam,
                                                    const LrfModel& lrf, double threshold = kFacetDegeneracy) {
  return range_predict(pts, cam.p_wc, to_rotation(cam.q_wc).transpose() * lrf.u_c, threshold);
}

/// Derivatives of a/b w.r.t. camera position, camera attitude and the three world points.
struct RangeCartesianJacobian {
  Mat13 H_p_cam = Mat13::Zero();
  Mat13 H_theta_cam = Mat13::Zero();
  std::array<Mat13, 3> H_pj{Mat13::Zero(), Mat13::Zero(), Mat13::Zero()};
};

inline RangeCartesianJacobian range_cartesian_jacobian(const RangePrediction& pr, const Quaternion& q_wc,
                                                       const Vec3& u_c) {
  const Facet& f = pr.facet;
  const double b = f.b;
  const Vec3 e1 = f.p_w[0] - f.p_w[1];
  const Vec3 e3 = f.p_w[2] - f.p_w[1];
  const Mat13 dz_dn = (f.p_w[1] - pr.intersection).transpose() / b;
  RangeCartesianJacobian j;
  j.H_p_cam = -f.n.transpose() / b;
  j.H_theta_cam = (f.a / (b * b)) * f.n.transpose() * to_rotation(q_wc).transpose() * skew(u_c);
  j.H_pj[0] = -dz_dn * skew(e3);
  j.H_pj[1] = f.n.transpose() / b + dz_dn * (skew(e3) - skew(e1));
  j.H_pj[2] = dz_dn * skew(e1);
  return j;
}

struct RangeRow {
  double predicted = 0.0;
  double residual = 0.0;
  double noise_var = 0.0;
  MatX H;  // 1 × dim
};

/// Range row against the camera at window slot 1, chained through the inverse-depth
/// parametrization of the three facet features.
inline std::optional<RangeRow> range_jacobians(const FullState& s, const std::array<int, 3>& slots, double z,
                                               const LrfModel& lrf, double threshold = kFacetDegeneracy) {
  const ErrorLayout& l = s.layout;
  std::array<Vec3, 3> pts;
  std::array<Feature, 3> fs;
  for (int k = 0; k < 3; ++k) {
    const auto& f = s.feature(slots[k]);
    if (!f || !(f->rho > 0.0)) return std::nullopt;
    fs[k] = *f;
    pts[k] = inverse_depth_to_world(*f, s.window.pose(f->anchor));
  }
  const CameraPose cam = s.window.pose(1);
  const auto pr = range_predict(pts, cam, lrf, threshold);
  if (!pr) return std::nullopt;
  const RangeCartesianJacobian jc = range_cartesian_jacobian(*pr, cam.q_wc, lrf.u_c);

  RangeRow row;
  row.predicted = pr->z;
  row.residual = z - pr->z;
  row.noise_var = lrf.sigma_r * lrf.sigma_r;
  row.H = MatX::Zero(1, l.dim());
  row.H.middleCols<3>(l.pos(1)) += jc.H_p_cam;
  row.H.middleCols<3>(l.att(1)) += jc.H_theta_cam;
  for (int k = 0; k < 3; ++k) {
    const Feature& f = fs[k];
    const Mat3 c_anc_t = to_rotation(s.window.orientations[f.anchor - 1]).transpose();
    row.H.middleCols<3>(l.pos(f.anchor)) += jc.H_pj[k];
    row.H.middleCols<3>(l.att(f.anchor)) += -(1.0 / f.rho) * jc.H_pj[k] * c_anc_t * skew(f.bearing());
    row.H.middleCols<3>(l.feat(slots[k])) += (1.0 / f.rho) * jc.H_pj[k] * c_anc_t * inverse_depth_partial(f);
  }
  return row;
}

struct FacetChoice {
  std::optional<std::array<int, 3>> slots;
  std::string reason;
};

/// Delaunay over the live SLAM features as seen from window slot 1, then the triangle
/// containing the image of the beam.
inline FacetChoice choose_facet(const FullState& s, const LrfModel& lrf) {
  FacetChoice out;
  if (!(lrf.u_c.z() > kDepthEpsilon)) {
    out.reason = "beam does not project into the image";
    return out;
  }
  const CameraPose cam = s.window.pose(1);
  std::vector<Vec2> pts;
  std::vector<int> slot_of;
  for (int j = 1; j <= s.layout.feature_capacity(); ++j) {
    const auto& f = s.feature(j);
    if (!f || !(f->rho > 0.0)) continue;
    const Vec3 pc = to_rotation(cam.q_wc) * (inverse_depth_to_world(*f, s.window.pose(f->anchor)) - cam.p_wc);
    const auto uv = project(pc);
    if (!uv) continue;
    pts.push_back(*uv);
    slot_of.push_back(j);
  }
  if (pts.size() < 3) {
    out.reason = "fewer than three SLAM features";
    return out;
  }
  const auto tris = delaunay_facets(pts);
  if (tris.empty()) {
    out.reason = "SLAM features are collinear";
    return out;
  }
  const Vec2 beam(lrf.u_c.x() / lrf.u_c.z(), lrf.u_c.y() / lrf.u_c.z());
  const auto k = select_facet(tris, pts, beam);
  if (!k) {
    out.reason = "beam outside the feature hull";
    return out;
  }
  const auto& t = tris[*k];
  out.slots = std::array<int, 3>{slot_of[t[0]], slot_of[t[1]], slot_of[t[2]]};
  return out;
}

struct RangeUpdateResult {
  bool applied = false;
  std::string reason;
  double residual = 0.0;
};

inline RangeUpdateResult range_update(FullState& s, ErrorCovariance& cov, double z, const LrfModel& lrf,
                                      double confidence = 0.95) {
  RangeUpdateResult out;
  if (!std::isfinite(z) || !(z > 0.0)) {
    out.reason = "invalid range sample";
    return out;
  }
  const FacetChoice choice = choose_facet(s, lrf);
  if (!choice.slots) {
    out.reason = choice.reason;
    return out;
  }
  const auto row = range_jacobians(s, *choice.slots, z, lrf);
  if (!row) {
    out.reason = "beam nearly parallel to the facet";
    return out;
  }
  out.residual = row->residual;
  VecX r(1);
  r(0) = row->residual;
  MatX rn(1, 1);
  rn(0, 0) = row->noise_var;
  const MatX sm = row->H * cov.matrix() * row->H.transpose() + rn;
  const GateResult g = chi2_gate(r, sm, confidence);
  if (!g.pass) {
    out.reason = g.diagnostic;
    return out;
  }
  const UpdateOutcome u = ekf_update(s, cov, r, row->H, rn);
  out.applied = u.applied;
  out.reason = u.reason;
  return out;
}

}  // namespace rvio
