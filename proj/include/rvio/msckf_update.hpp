#pragma once

#include "rvio/slam_update.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <string>
#include <vector>

namespace rvio {

struct TrackObservation {
  std::int64_t frame_id = -1;
  Vec2 z = Vec2::Zero();
};

/// Time-ordered image observations of one feature.
struct Track {
  std::int64_t track_id = -1;
  std::vector<TrackObservation> observations;

  int length() const { return static_cast<int>(observations.size()); }
};

struct Eligibility {
  bool eligible = false;
  std::string reason;
};

inline Eligibility check_requirements(const Track& track, const SlidingWindow& window, double min_baseline) {
  const int m = track.length();
  if (m < 2) return {false, "must be visible in at least two images"};
  if (m > window.size()) return {false, "track exceeds the sliding window"};
  std::vector<Vec3> centers;
  centers.reserve(m);
  for (const auto& o : track.observations) {
    const auto slot = window.slot_of(o.frame_id);
    if (!slot) return {false, "observation frame left the sliding window"};
    centers.push_back(window.positions[*slot - 1]);
  }
  double baseline = 0.0;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) baseline = std::max(baseline, (centers[a] - centers[b]).norm());
  if (!(baseline >= min_baseline)) return {false, "insufficient baseline"};
  return {true, {}};
}

struct TriangulationResult {
  bool ok = false;
  Vec3 p_w = Vec3::Zero();
  double rms_reprojection = 0.0;
  int iterations = 0;
  std::string reason;
};

namespace detail {

struct ObservedPose {
  CameraPose pose;
  Mat3 c;  // C(q_wc)
  Vec2 z;
};

inline std::vector<ObservedPose> observed_poses(const Track& track, const SlidingWindow& window) {
  std::vector<ObservedPose> out;
  for (const auto& o : track.observations) {
    const auto slot = window.slot_of(o.frame_id);
    if (!slot) continue;
    const CameraPose pose = window.pose(*slot);
    out.push_back({pose, to_rotation(pose.q_wc), o.z});
  }
  return out;
}

inline double reprojection_cost(const std::vector<ObservedPose>& obs, const Vec3& p_w, bool* ok) {
  double cost = 0.0;
  *ok = true;
  for (const auto& o : obs) {
    const auto zhat = project(o.c * (p_w - o.pose.p_wc));
    if (!zhat) {
      *ok = false;
      return 0.0;
    }
    cost += (o.z - *zhat).squaredNorm();
  }
  return cost;
}

}  // namespace detail

/// Midpoint of the first and last rays, refined by Gauss-Newton over inverse depth
/// in the first observing camera.
inline TriangulationResult triangulate(const Track& track, const SlidingWindow& window) {
  TriangulationResult res;
  const auto obs = detail::observed_poses(track, window);
  if (obs.size() < 2) {
    res.reason = "fewer than two observations in the window";
    return res;
  }
  const auto& first = obs.front();
  const auto& last = obs.back();
  const Vec3 d1 = first.c.transpose() * Vec3(first.z.x(), first.z.y(), 1.0);
  const Vec3 d2 = last.c.transpose() * Vec3(last.z.x(), last.z.y(), 1.0);
  const Vec3 w0 = first.pose.p_wc - last.pose.p_wc;
  const double a = d1.dot(d1), b = d1.dot(d2), c = d2.dot(d2), d = d1.dot(w0), e = d2.dot(w0);
  const double den = a * c - b * b;
  if (std::abs(den) < 1e-12 * a * c) {
    res.reason = "parallel rays";
    return res;
  }
  const double s1 = (b * e - c * d) / den;
  const double s2 = (a * e - b * d) / den;
  if (!(s1 > kDepthEpsilon) || !(s2 > kDepthEpsilon)) {
    res.reason = "non-positive initial depth";
    return res;
  }
  const Vec3 mid = 0.5 * ((first.pose.p_wc + s1 * d1) + (last.pose.p_wc + s2 * d2));

  auto anchor_init = world_to_inverse_depth(mid, first.pose);
  if (!anchor_init) {
    res.reason = "initial point behind the first camera";
    return res;
  }
  Feature f = *anchor_init;
  const Mat3 c_anc_t = first.c.transpose();
  const auto to_world = [&](const Feature& g) -> Vec3 { return first.pose.p_wc + c_anc_t * g.bearing() / g.rho; };

  bool ok = true;
  double cost = detail::reprojection_cost(obs, to_world(f), &ok);
  if (!ok) {
    res.reason = "initial point behind a camera";
    return res;
  }
  const int m = static_cast<int>(obs.size());
  for (int it = 0; it < 10; ++it) {
    res.iterations = it + 1;
    MatX jac(2 * m, 3);
    VecX r(2 * m);
    const Vec3 pw = to_world(f);
    for (int i = 0; i < m; ++i) {
      const Vec3 pc = obs[i].c * (pw - obs[i].pose.p_wc);
      if (!(pc.z() > kDepthEpsilon)) {
        res.reason = "point behind a camera";
        return res;
      }
      r.segment<2>(2 * i) = obs[i].z - Vec2(pc.x() / pc.z(), pc.y() / pc.z());
      jac.middleRows<2>(2 * i) = (1.0 / f.rho) * projection_jacobian(pc) * obs[i].c * c_anc_t * inverse_depth_partial(f);
    }
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::LDLT<Eigen::Matrix3d> ldlt(jtj);
    if (ldlt.info() != Eigen::Success) {
      res.reason = "singular normal equations";
      return res;
    }
    Vec3 step = ldlt.solve(jac.transpose() * r);
    if (!step.allFinite()) {
      res.reason = "non-finite Gauss-Newton step";
      return res;
    }
    // Backtrack when the full step increases the cost.
    double scale = 1.0;
    Feature trial = f;
    double trial_cost = 0.0;
    bool improved = false;
    for (int ls = 0; ls < 8; ++ls) {
      trial = f;
      trial.alpha += scale * step.x();
      trial.beta += scale * step.y();
      trial.rho += scale * step.z();
      if (trial.rho > 0.0) {
        trial_cost = detail::reprojection_cost(obs, to_world(trial), &ok);
        if (ok && trial_cost <= cost) {
          improved = true;
          break;
        }
      }
      scale *= 0.5;
    }
    if (!improved) {
      if (step.norm() < 1e-8 * (1.0 + f.vec().norm())) break;  // already at a minimum
      res.reason = "diverging reprojection cost";
      return res;
    }
    f = trial;
    cost = trial_cost;
    if ((scale * step).norm() < 1e-10) break;
  }
  if (!(f.rho > 0.0)) {
    res.reason = "non-positive refined depth";
    return res;
  }
  res.ok = true;
  res.p_w = to_world(f);
  res.rms_reprojection = std::sqrt(cost / (2.0 * m));
  return res;
}

/// Stacked linearization of one track about a triangulated point.
struct FeatureLinearization {
  std::int64_t track_id = -1;
  Vec3 p_w = Vec3::Zero();
  VecX residual;  // 2m
  MatX H_x;       // 2m × dim
  MatX H_f;       // 2m × 3, w.r.t. the world point
};

inline std::optional<FeatureLinearization> linearize_track(const Track& track, const FullState& s, const Vec3& p_w) {
  const ErrorLayout& l = s.layout;
  const int m = track.length();
  FeatureLinearization lin;
  lin.track_id = track.track_id;
  lin.p_w = p_w;
  lin.residual = VecX::Zero(2 * m);
  lin.H_x = MatX::Zero(2 * m, l.dim());
  lin.H_f = MatX::Zero(2 * m, 3);
  for (int i = 0; i < m; ++i) {
    const auto slot = s.window.slot_of(track.observations[i].frame_id);
    if (!slot) return std::nullopt;
    const CameraPose pose = s.window.pose(*slot);
    const Mat3 c = to_rotation(pose.q_wc);
    const Vec3 pc = c * (p_w - pose.p_wc);
    const auto zhat = project(pc);
    if (!zhat) return std::nullopt;
    const Mat23 j = projection_jacobian(pc);
    lin.residual.segment<2>(2 * i) = track.observations[i].z - *zhat;
    lin.H_x.block<2, 3>(2 * i, l.pos(*slot)) = -j * c;
    lin.H_x.block<2, 3>(2 * i, l.att(*slot)) = j * skew(pc);
    lin.H_f.middleRows<2>(2 * i) = j * c;
  }
  return lin;
}

/// Column-space / left-nullspace split of H_f from a full Householder QR.
struct NullspaceSplit {
  MatX B;  // 2m × 3
  MatX A;  // 2m × (2m-3)
};

inline std::optional<NullspaceSplit> nullspace_split(const MatX& h_f) {
  const Eigen::JacobiSVD<MatX> svd(h_f);
  const auto& sv = svd.singularValues();
  if (sv.size() < 3 || sv(2) < 1e-8 * sv(0)) return std::nullopt;
  const Eigen::HouseholderQR<MatX> qr(h_f);
  const MatX q = qr.householderQ() * MatX::Identity(h_f.rows(), h_f.rows());
  return NullspaceSplit{q.leftCols(3), q.rightCols(h_f.rows() - 3)};
}

struct MsckfSystem {
  VecX residual;
  MatX H;
  double sigma_v = 0.0;
  std::vector<std::int64_t> used_tracks;
  std::vector<std::pair<std::int64_t, std::string>> skipped;

  int rows() const { return static_cast<int>(residual.size()); }
};

inline MsckfSystem build_projected_system(const std::vector<Track>& tracks, const FullState& s,
                                          const ErrorCovariance& cov, double sigma_v, double confidence = 0.95,
                                          const std::vector<Vec3>* points = nullptr) {
  MsckfSystem sys;
  sys.sigma_v = sigma_v;
  std::vector<MatX> hs;
  std::vector<VecX> rs;
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    const Track& t = tracks[k];
    Vec3 pw;
    if (points) {
      pw = (*points)[k];
    } else {
      const auto tri = triangulate(t, s.window);
      if (!tri.ok) {
        sys.skipped.emplace_back(t.track_id, "triangulation failed: " + tri.reason);
        continue;
      }
      pw = tri.p_w;
    }
    const auto lin = linearize_track(t, s, pw);
    if (!lin) {
      sys.skipped.emplace_back(t.track_id, "linearization failed");
      continue;
    }
    const auto split = nullspace_split(lin->H_f);
    if (!split) {
      sys.skipped.emplace_back(t.track_id, "degenerate feature Jacobian");
      continue;
    }
    MatX h0 = split->A.transpose() * lin->H_x;
    VecX r0 = split->A.transpose() * lin->residual;
    const MatX sm = h0 * cov.matrix() * h0.transpose() + sigma_v * sigma_v * MatX::Identity(r0.size(), r0.size());
    if (!chi2_gate(r0, sm, confidence).pass) {
      sys.skipped.emplace_back(t.track_id, "chi2 gate rejected");
      continue;
    }
    sys.used_tracks.push_back(t.track_id);
    hs.push_back(std::move(h0));
    rs.push_back(std::move(r0));
  }
  int rows = 0;
  for (const auto& r : rs) rows += static_cast<int>(r.size());
  sys.H = MatX::Zero(rows, s.layout.dim());
  sys.residual = VecX::Zero(rows);
  int at = 0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const int n = static_cast<int>(rs[i].size());
    sys.H.middleRows(at, n) = hs[i];
    sys.residual.segment(at, n) = rs[i];
    at += n;
  }
  return sys;
}

/// Replaces (H, r) by (R, Qᵀr) when H has more rows than non-zero columns.
/// The factorization runs on the non-zero columns only; the rest of H is zero anyway.
inline MsckfSystem qr_compress(const MsckfSystem& in) {
  if (in.rows() == 0) return in;
  std::vector<int> cols;
  for (int c = 0; c < in.H.cols(); ++c)
    if (in.H.col(c).cwiseAbs().maxCoeff() > 0.0) cols.push_back(c);
  const int k = static_cast<int>(cols.size());
  if (in.rows() <= k) return in;
  MatX active(in.rows(), k);
  for (int i = 0; i < k; ++i) active.col(i) = in.H.col(cols[i]);
  const Eigen::HouseholderQR<MatX> qr(active);
  const MatX r_full = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const VecX qtr = qr.householderQ().transpose() * in.residual;
  MsckfSystem out = in;
  out.H = MatX::Zero(k, in.H.cols());
  for (int i = 0; i < k; ++i) out.H.col(cols[i]) = r_full.col(i);
  out.residual = qtr.head(k);
  return out;
}

}  // namespace rvio
