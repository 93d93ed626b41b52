#pragma once

#include "rvio/msckf_update.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace rvio {

/// Rows of the new camera-pose error w.r.t. the inertial error: [δp_c; δθ_c] = G [δp_i; δθ_i].
struct CloneJacobian {
  Mat3 p_p = Mat3::Identity();
  Mat3 p_theta = Mat3::Zero();
  Mat3 theta_theta = Mat3::Identity();
};

inline CloneJacobian clone_jacobian(const InertialState& imu, const CameraExtrinsics& ext) {
  CloneJacobian g;
  g.p_theta = -to_rotation(imu.q_wi).transpose() * skew(ext.p_ic);
  g.theta_theta = to_rotation(ext.q_ic);
  return g;
}

/// Drops slot M, shifts the window by one and inserts the current camera pose at slot 1.
/// Returns the dense J that was applied to P. Feature anchors move with their poses;
/// features anchored at slot M must be reparametrized before calling this.
inline MatX slide_window(FullState& s, ErrorCovariance& cov, const CameraExtrinsics& ext, std::int64_t frame_id,
                         double t) {
  const ErrorLayout& l = s.layout;
  const int m = l.window_size();
  const int n = l.dim();
  for (const auto& f : s.features)
    if (f && f->anchor == m && m > 1) throw std::logic_error("slide_window: feature still anchored at the oldest slot");

  MatX j = MatX::Zero(n, n);
  j.topLeftCorner<15, 15>().setIdentity();
  const CloneJacobian g = clone_jacobian(s.imu, ext);
  j.block<3, 3>(l.pos(1), l.p()) = g.p_p;
  j.block<3, 3>(l.pos(1), l.theta()) = g.p_theta;
  j.block<3, 3>(l.att(1), l.theta()) = g.theta_theta;
  for (int k = 2; k <= m; ++k) {
    j.block<3, 3>(l.pos(k), l.pos(k - 1)).setIdentity();
    j.block<3, 3>(l.att(k), l.att(k - 1)).setIdentity();
  }
  for (int f = 1; f <= l.feature_capacity(); ++f) j.block<3, 3>(l.feat(f), l.feat(f)).setIdentity();

  MatX p = j * cov.matrix() * j.transpose();
  // Empty feature slots keep their placeholder identity block.
  cov.matrix() = 0.5 * (p + p.transpose());

  auto& w = s.window;
  for (int k = m - 1; k >= 1; --k) {
    w.positions[k] = w.positions[k - 1];
    w.orientations[k] = w.orientations[k - 1];
    w.frame_ids[k] = w.frame_ids[k - 1];
    w.times[k] = w.times[k - 1];
  }
  const CameraPose cam = camera_pose_from_imu(s.imu, ext);
  w.positions[0] = cam.p_wc;
  w.orientations[0] = cam.q_wc;
  w.frame_ids[0] = frame_id;
  w.times[0] = t;
  for (auto& f : s.features)
    if (f && m > 1) ++f->anchor;
  if (m == 1)
    for (auto& f : s.features)
      if (f) f.reset();
  return j;
}

/// Fills every window slot with a clone of the current camera pose.
inline void initialize_window(FullState& s, ErrorCovariance& cov, const CameraExtrinsics& ext, std::int64_t frame_id,
                              double t) {
  const ErrorLayout& l = s.layout;
  const int n = l.dim();
  MatX j = MatX::Identity(n, n);
  const CloneJacobian g = clone_jacobian(s.imu, ext);
  const CameraPose cam = camera_pose_from_imu(s.imu, ext);
  for (int k = 1; k <= l.window_size(); ++k) {
    j.middleRows<3>(l.pos(k)).setZero();
    j.middleRows<3>(l.att(k)).setZero();
    j.block<3, 3>(l.pos(k), l.p()) = g.p_p;
    j.block<3, 3>(l.pos(k), l.theta()) = g.p_theta;
    j.block<3, 3>(l.att(k), l.theta()) = g.theta_theta;
    s.window.positions[k - 1] = cam.p_wc;
    s.window.orientations[k - 1] = cam.q_wc;
    s.window.frame_ids[k - 1] = -1;
    s.window.times[k - 1] = t;
  }
  s.window.frame_ids[0] = frame_id;
  MatX p = j * cov.matrix() * j.transpose();
  cov.matrix() = 0.5 * (p + p.transpose());
}

/// Unknown-depth SLAM initialization at window slot 1.
inline Feature init_feature_unknown_depth(FullState& s, ErrorCovariance& cov, int slot, const Vec2& z,
                                          std::int64_t track_id, double d_min, double sigma_v) {
  if (!(d_min > 0.0)) throw std::invalid_argument("init_feature_unknown_depth: d_min must be positive");
  if (s.feature(slot)) throw std::logic_error("init_feature_unknown_depth: slot is occupied");
  Feature f;
  f.alpha = z.x();
  f.beta = z.y();
  f.rho = 1.0 / (2.0 * d_min);
  f.anchor = 1;
  f.track_id = track_id;
  s.feature(slot) = f;
  cov.reset_feature_slot(slot);
  const int o = s.layout.feat(slot);
  const double srho = 1.0 / (4.0 * d_min);
  cov.matrix().block<3, 3>(o, o) = Vec3(sigma_v * sigma_v, sigma_v * sigma_v, srho * srho).asDiagonal();
  return f;
}

/// Jacobian of the inverse-depth conversion w.r.t. the camera-frame point w.
inline Mat3 inverse_depth_from_point_jacobian(const Vec3& w) {
  const double iz = 1.0 / w.z();
  Mat3 j;
  j << iz, 0.0, -w.x() * iz * iz,
       0.0, iz, -w.y() * iz * iz,
       0.0, 0.0, -iz * iz;
  return j;
}

/// Blocks of the reparametrization map w.r.t. the involved error coordinates.
struct ReparamJacobian {
  Mat3 J1 = Mat3::Identity();        // ∂(α,β,ρ)_new / ∂w
  Mat3 dw_p_old = Mat3::Zero();
  Mat3 dw_p_new = Mat3::Zero();
  Mat3 dw_theta_old = Mat3::Zero();
  Mat3 dw_theta_new = Mat3::Zero();
  Mat3 dw_f = Mat3::Zero();
  Vec3 w = Vec3::Zero();
};

inline ReparamJacobian reparam_jacobian(const Feature& f, const CameraPose& old_anchor, const CameraPose& new_anchor) {
  ReparamJacobian r;
  const Mat3 c_old_t = to_rotation(old_anchor.q_wc).transpose();
  const Mat3 c_new = to_rotation(new_anchor.q_wc);
  r.w = c_new * (old_anchor.p_wc - new_anchor.p_wc + c_old_t * f.bearing() / f.rho);
  r.J1 = inverse_depth_from_point_jacobian(r.w);
  r.dw_p_old = c_new;
  r.dw_p_new = -c_new;
  r.dw_theta_old = -(1.0 / f.rho) * c_new * c_old_t * skew(f.bearing());
  r.dw_theta_new = skew(r.w);
  r.dw_f = (1.0 / f.rho) * c_new * c_old_t * inverse_depth_partial(f);
  return r;
}

/// Re-expresses the feature in `new_anchor`. Returns false and frees the slot when the
/// point is not in front of the new anchor.
inline bool reparametrize_anchor(FullState& s, ErrorCovariance& cov, int slot, int new_anchor = 1) {
  auto& fo = s.feature(slot);
  if (!fo) throw std::logic_error("reparametrize_anchor: empty slot");
  const Feature f = *fo;
  if (f.anchor == new_anchor) return true;
  const ErrorLayout& l = s.layout;
  const ReparamJacobian r = reparam_jacobian(f, s.window.pose(f.anchor), s.window.pose(new_anchor));
  if (!(r.w.z() > kDepthEpsilon)) {
    fo.reset();
    cov.reset_feature_slot(slot);
    return false;
  }
  const int n = l.dim();
  MatX rows = MatX::Zero(3, n);
  rows.middleCols<3>(l.pos(f.anchor)) += r.J1 * r.dw_p_old;
  rows.middleCols<3>(l.pos(new_anchor)) += r.J1 * r.dw_p_new;
  rows.middleCols<3>(l.att(f.anchor)) += r.J1 * r.dw_theta_old;
  rows.middleCols<3>(l.att(new_anchor)) += r.J1 * r.dw_theta_new;
  rows.middleCols<3>(l.feat(slot)) += r.J1 * r.dw_f;

  // P ← J P Jᵀ where J differs from I only in the feature rows.
  MatX& p = cov.matrix();
  const int o = l.feat(slot);
  const MatX rp = rows * p;
  const Mat3 ff = rp * rows.transpose();
  p.middleRows(o, 3) = rp;
  p.middleCols(o, 3) = rp.transpose();
  p.block<3, 3>(o, o) = 0.5 * (ff + ff.transpose());

  Feature g = f;
  g.alpha = r.w.x() / r.w.z();
  g.beta = r.w.y() / r.w.z();
  g.rho = 1.0 / r.w.z();
  g.anchor = new_anchor;
  fo = g;
  return true;
}

/// Cartesian result of the closed-form feature initialization, before conversion.
struct CartesianInit {
  VecX dx;                  // correction of the existing error state
  MatX P;                   // (dim + 3K)², features appended after the existing state
  std::vector<Vec3> p_w;    // updated feature positions
};

/// Closed-form limit of the augmented update with an uninformative feature prior.
/// Returns nullopt when some H₂ block is too ill-conditioned.
inline std::optional<CartesianInit> msckf_init_cartesian(const ErrorCovariance& cov,
                                                         const std::vector<FeatureLinearization>& lins,
                                                         double sigma_v, double max_condition = 1e10) {
  const int n = cov.dim();
  const int k = static_cast<int>(lins.size());
  int rows0 = 0;
  for (const auto& lin : lins) rows0 += static_cast<int>(lin.residual.size()) - 3;
  MatX h0(rows0, n);
  VecX r0(rows0);
  MatX h1(3 * k, n);
  MatX h2inv = MatX::Zero(3 * k, 3 * k);
  VecX dz1(3 * k);
  int at = 0;
  for (int i = 0; i < k; ++i) {
    const auto split = nullspace_split(lins[i].H_f);
    if (!split) return std::nullopt;
    const int q = static_cast<int>(split->A.cols());
    h0.middleRows(at, q) = split->A.transpose() * lins[i].H_x;
    r0.segment(at, q) = split->A.transpose() * lins[i].residual;
    at += q;
    const Mat3 h2 = split->B.transpose() * lins[i].H_f;
    const Eigen::JacobiSVD<Mat3> svd(h2);
    const auto& sv = svd.singularValues();
    if (!(sv(2) > 0.0) || sv(0) / sv(2) > max_condition) return std::nullopt;
    h1.middleRows(3 * i, 3) = split->B.transpose() * lins[i].H_x;
    h2inv.block<3, 3>(3 * i, 3 * i) = h2.inverse();
    dz1.segment<3>(3 * i) = split->B.transpose() * lins[i].residual;
  }

  const double s2 = sigma_v * sigma_v;
  const MatX& p = cov.matrix();
  VecX dx = VecX::Zero(n);
  MatX pp = p;
  if (rows0 > 0) {
    const MatX pht = p * h0.transpose();
    const MatX s = h0 * pht + s2 * MatX::Identity(rows0, rows0);
    const Eigen::LLT<MatX> llt(s);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const MatX kg = llt.solve(pht.transpose()).transpose();
    dx = kg * r0;
    const MatX ikh = MatX::Identity(n, n) - kg * h0;
    pp = ikh * p * ikh.transpose() + s2 * kg * kg.transpose();
    pp = 0.5 * (pp + pp.transpose()).eval();
  }

  CartesianInit out;
  out.dx = dx;
  const MatX t = h2inv * h1;  // H₂⁻¹H₁
  const VecX df = h2inv * dz1 - t * dx;
  out.P = MatX::Zero(n + 3 * k, n + 3 * k);
  out.P.topLeftCorner(n, n) = pp;
  const MatX p21 = -t * pp;
  out.P.bottomLeftCorner(3 * k, n) = p21;
  out.P.topRightCorner(n, 3 * k) = p21.transpose();
  const MatX p22 = t * pp * t.transpose() + s2 * h2inv * h2inv.transpose();
  out.P.bottomRightCorner(3 * k, 3 * k) = 0.5 * (p22 + p22.transpose());
  for (int i = 0; i < k; ++i) out.p_w.push_back(lins[i].p_w + df.segment<3>(3 * i));
  return out;
}

struct MsckfInitRequest {
  Track track;
  int slot = 1;
};

struct MsckfInitResult {
  bool applied = false;
  std::string reason;
  std::vector<int> slots;
};

/// Initializes SLAM features from completed tracks and applies the H₀ part as an MSCKF
/// update. Features end up in inverse depth anchored at window slot 1.
inline MsckfInitResult init_features_from_msckf(FullState& s, ErrorCovariance& cov,
                                                const std::vector<MsckfInitRequest>& reqs, double sigma_v,
                                                const std::vector<Vec3>* points = nullptr) {
  MsckfInitResult res;
  if (reqs.empty()) {
    res.reason = "no requests";
    return res;
  }
  std::vector<FeatureLinearization> lins;
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    if (s.feature(reqs[i].slot)) throw std::logic_error("init_features_from_msckf: slot is occupied");
    Vec3 pw;
    if (points) {
      pw = (*points)[i];
    } else {
      const auto tri = triangulate(reqs[i].track, s.window);
      if (!tri.ok) {
        res.reason = "triangulation failed: " + tri.reason;
        return res;
      }
      pw = tri.p_w;
    }
    auto lin = linearize_track(reqs[i].track, s, pw);
    if (!lin) {
      res.reason = "linearization failed";
      return res;
    }
    lins.push_back(std::move(*lin));
  }
  const auto ci = msckf_init_cartesian(cov, lins, sigma_v);
  if (!ci) {
    res.reason = "ill-conditioned feature block";
    return res;
  }
  FullState post = apply_correction(s, ci->dx);
  const ErrorLayout& l = s.layout;
  const int n = l.dim();
  const int k = static_cast<int>(reqs.size());
  const CameraPose anchor = post.window.pose(1);
  const Mat3 c1 = to_rotation(anchor.q_wc);

  std::vector<Feature> feats;
  MatX g = MatX::Zero(n, n + 3 * k);
  g.leftCols(n).setIdentity();
  for (int i = 0; i < k; ++i) {
    const Vec3 w = c1 * (ci->p_w[i] - anchor.p_wc);
    if (!(w.z() > kDepthEpsilon)) {
      res.reason = "initialized point behind the anchor";
      return res;
    }
    const Mat3 j1 = inverse_depth_from_point_jacobian(w);
    const int o = l.feat(reqs[i].slot);
    g.middleRows(o, 3).setZero();
    g.block<3, 3>(o, n + 3 * i) = j1 * c1;
    g.block<3, 3>(o, l.pos(1)) = -j1 * c1;
    g.block<3, 3>(o, l.att(1)) = j1 * skew(w);
    Feature f;
    f.alpha = w.x() / w.z();
    f.beta = w.y() / w.z();
    f.rho = 1.0 / w.z();
    f.anchor = 1;
    f.track_id = reqs[i].track.track_id;
    feats.push_back(f);
  }
  MatX p = g * ci->P * g.transpose();
  cov.matrix() = 0.5 * (p + p.transpose());
  for (int i = 0; i < k; ++i) post.feature(reqs[i].slot) = feats[i];
  s = std::move(post);
  res.applied = true;
  for (const auto& r : reqs) res.slots.push_back(r.slot);
  return res;
}

struct TileGrid {
  int rows = 4;
  int cols = 4;
  double half_extent = 1.0;  // normalized image coordinates covered by the grid

  int tile_of(const Vec2& z) const {
    const auto cell = [&](double v, int count) {
      const double u = (v + half_extent) / (2.0 * half_extent);
      return std::clamp(static_cast<int>(std::floor(u * count)), 0, count - 1);
    };
    return cell(z.y(), rows) * cols + cell(z.x(), cols);
  }
};

struct FramePlan {
  std::vector<std::pair<int, Vec2>> slam;  // (feature slot, observation)
  std::vector<Track> ended;                // tracks that ended before this frame
  std::vector<Track> full;                 // tracks that reached the window length this frame
  std::vector<int> lost_slots;             // SLAM features not observed this frame
};

/// Track bookkeeping and the SLAM/MSCKF classification.
class TrackManager {
 public:
  explicit TrackManager(int window_size = 10, TileGrid grid = {}) : m_(window_size), grid_(grid) {}

  FramePlan manage_tracks(std::int64_t frame_id, const std::vector<VisionObservation>& obs) {
    FramePlan plan;
    std::set<std::int64_t> seen;
    for (const auto& o : obs) {
      if (!seen.insert(o.track_id).second) continue;  // duplicate id in one frame
      if (const auto it = slam_.find(o.track_id); it != slam_.end()) {
        plan.slam.emplace_back(it->second, o.z);
        last_seen_[o.track_id] = o.z;
        continue;
      }
      tracks_[o.track_id].track_id = o.track_id;
      tracks_[o.track_id].observations.push_back({frame_id, o.z});
    }
    for (auto it = slam_.begin(); it != slam_.end();) {
      if (!seen.count(it->first)) {
        plan.lost_slots.push_back(it->second);
        last_seen_.erase(it->first);
        it = slam_.erase(it);
      } else {
        ++it;
      }
    }
    for (auto it = tracks_.begin(); it != tracks_.end();) {
      if (!seen.count(it->first)) {
        if (it->second.length() >= 2) plan.ended.push_back(std::move(it->second));
        it = tracks_.erase(it);
        continue;
      }
      if (it->second.length() >= m_) {
        plan.full.push_back(it->second);
        it->second.observations.clear();
      }
      ++it;
    }
    return plan;
  }

  /// Greedy promotion: longer track first, then emptier tile, then lower id.
  std::vector<std::int64_t> rank_promotions(const std::vector<Track>& candidates, int free_slots) const {
    std::vector<int> occupancy(grid_.rows * grid_.cols, 0);
    for (const auto& [id, z] : last_seen_) ++occupancy[grid_.tile_of(z)];
    std::vector<const Track*> pool;
    for (const auto& t : candidates)
      if (!t.observations.empty()) pool.push_back(&t);
    std::vector<std::int64_t> out;
    while (free_slots-- > 0 && !pool.empty()) {
      const auto key = [&](const Track* t) {
        return std::make_tuple(-t->length(), occupancy[grid_.tile_of(t->observations.back().z)], t->track_id);
      };
      auto best = std::min_element(pool.begin(), pool.end(), [&](auto a, auto b) { return key(a) < key(b); });
      ++occupancy[grid_.tile_of((*best)->observations.back().z)];
      out.push_back((*best)->track_id);
      pool.erase(best);
    }
    return out;
  }

  void assign_slam(std::int64_t track_id, int slot, const Vec2& z) {
    slam_[track_id] = slot;
    last_seen_[track_id] = z;
    tracks_.erase(track_id);
  }

  void release_slot(int slot) {
    for (auto it = slam_.begin(); it != slam_.end(); ++it)
      if (it->second == slot) {
        last_seen_.erase(it->first);
        slam_.erase(it);
        return;
      }
  }

  bool is_slam(std::int64_t track_id) const { return slam_.count(track_id) > 0; }
  int active_tracks() const { return static_cast<int>(tracks_.size()); }
  const TileGrid& grid() const { return grid_; }

 private:
  int m_;
  TileGrid grid_;
  std::map<std::int64_t, Track> tracks_;
  std::map<std::int64_t, int> slam_;
  std::map<std::int64_t, Vec2> last_seen_;
};

}  // namespace rvio
