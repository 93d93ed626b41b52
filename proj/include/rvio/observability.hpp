#pragma once

// Linearized observability of the cartesian-feature system x = [x_I; p_F1 .. p_FN],
// evaluated on trajectories generated by the filter's own discrete propagation.

#include "rvio/range_update.hpp"

#include <Eigen/SVD>

#include <string>
#include <vector>

namespace rvio {

struct ObsTrajectory {
  std::vector<InertialState> states;  // tick k at index k-1
  std::vector<ImuSample> inputs;      // input applied from tick k to k+1
  double dt = 0.01;
  Vec3 a_body_const = Vec3::Zero();   // constant world acceleration resolved in the IMU frame
};

/// Propagates x1 with the given constant inputs for K-1 steps.
inline ObsTrajectory discrete_trajectory(const InertialState& x1, const ImuSample& u, double dt, int k_ticks,
                                         const WorldModel& world = {}) {
  ObsTrajectory t;
  t.dt = dt;
  t.states.push_back(x1);
  for (int k = 1; k < k_ticks; ++k) {
    t.inputs.push_back(u);
    t.states.push_back(propagate_state(t.states.back(), u, dt, world));
  }
  t.a_body_const = u.a_imu - x1.b_a + to_rotation(x1.q_wi) * world.g_w;
  return t;
}

/// Φ_{k,1} for k = 1..K over the inertial block.
inline std::vector<Mat15> accumulate_phi(const ObsTrajectory& traj) {
  std::vector<Mat15> phi{Mat15::Identity()};
  for (std::size_t i = 0; i + 1 < traj.states.size(); ++i)
    phi.push_back(error_jacobians(traj.states[i], traj.inputs[i], traj.dt).F * phi.back());
  return phi;
}

struct ObsSystem {
  ObsTrajectory traj;
  std::vector<Vec3> features;  // the first three form the facet
  Quaternion q_ic;             // zero lever arm
  Vec3 u_c{0.0, 0.0, 1.0};
  WorldModel world;

  int width() const { return 15 + 3 * static_cast<int>(features.size()); }
  int ticks() const { return static_cast<int>(traj.states.size()); }
  CameraPose camera(int k) const {
    const auto& s = traj.states[k - 1];
    return {s.p_wi, quat_mul(s.q_wi, q_ic)};
  }
};

struct ObsRow {
  MatX via_phi;      // H_k Φ_{k,1}
  MatX closed_form;  // explicit blocks, only for zero-rotation constant-velocity motion
  double a = 0.0;
  double b = 0.0;
  Vec3 n = Vec3::Zero();
  Vec3 intersection = Vec3::Zero();
};

/// Range measurement Jacobian at tick k w.r.t. x_k (inertial error at tick k, cartesian features).
inline std::optional<MatX> range_row_at(const ObsSystem& sys, int k, RangePrediction* pred = nullptr) {
  const CameraPose cam = sys.camera(k);
  const auto pr = range_predict({sys.features[0], sys.features[1], sys.features[2]}, cam,
                                LrfModel{sys.u_c, 1.0});
  if (!pr) return std::nullopt;
  const RangeCartesianJacobian j = range_cartesian_jacobian(*pr, cam.q_wc, sys.u_c);
  MatX h = MatX::Zero(1, sys.width());
  h.middleCols<3>(0) = j.H_p_cam;
  h.middleCols<3>(6) = j.H_theta_cam * to_rotation(sys.q_ic);
  for (int i = 0; i < 3; ++i) h.middleCols<3>(15 + 3 * i) = j.H_pj[i];
  if (pred) *pred = *pr;
  return h;
}

/// Visual rows for every feature in front of the camera at tick k.
inline MatX vio_rows_at(const ObsSystem& sys, int k) {
  const CameraPose cam = sys.camera(k);
  const Mat3 c = to_rotation(cam.q_wc);
  const Mat3 c_ic = to_rotation(sys.q_ic);
  std::vector<MatX> rows;
  for (std::size_t j = 0; j < sys.features.size(); ++j) {
    const Vec3 pc = c * (sys.features[j] - cam.p_wc);
    if (!(pc.z() > kDepthEpsilon)) continue;
    const Mat23 jp = projection_jacobian(pc);
    MatX h = MatX::Zero(2, sys.width());
    h.middleCols<3>(0) = -jp * c;
    h.middleCols<3>(6) = jp * skew(pc) * c_ic;
    h.middleCols<3>(15 + 3 * j) = jp * c;
    rows.push_back(std::move(h));
  }
  MatX out(2 * static_cast<int>(rows.size()), sys.width());
  for (std::size_t i = 0; i < rows.size(); ++i) out.middleRows<2>(2 * i) = rows[i];
  return out;
}

inline MatX times_phi(const MatX& h, const Mat15& phi) {
  MatX out = h;
  out.leftCols<15>() = h.leftCols<15>() * phi;
  return out;
}

inline std::optional<ObsRow> obs_row(int k, const ObsSystem& sys, const std::vector<Mat15>& phi) {
  RangePrediction pr;
  const auto h = range_row_at(sys, k, &pr);
  if (!h) return std::nullopt;
  ObsRow row;
  row.via_phi = times_phi(*h, phi[k - 1]);
  row.a = pr.facet.a;
  row.b = pr.facet.b;
  row.n = pr.facet.n;
  row.intersection = pr.intersection;

  // Closed-form blocks of the discrete transition with ω̂ = 0 and zero world acceleration.
  const double dt = sys.traj.dt;
  const double steps = k - 1;
  const double big_t = steps * dt;
  const double s2 = dt * dt * steps * (steps - 1.0) / 2.0;
  const double s3 = dt * dt * dt * steps * (steps - 1.0) * (steps - 2.0) / 6.0;
  const auto& x1 = sys.traj.states.front();
  const auto& xk = sys.traj.states[k - 1];
  const Vec3& g = sys.world.g_w;
  const Mat3 r1 = to_rotation(x1.q_wi).transpose();
  const Mat3 c_ck = to_rotation(sys.camera(k).q_wc);
  const Mat3 u_skew = skew(sys.u_c);
  const Vec3& n = row.n;
  const double a = row.a, b = row.b;
  const Vec3 p1 = sys.features[0], p2 = sys.features[1], p3 = sys.features[2];
  const Vec3 ik = row.intersection;

  MatX m = MatX::Zero(1, sys.width());
  const Mat13 dtheta_cam = (a / (b * b)) * n.transpose() * c_ck.transpose() * u_skew * to_rotation(sys.q_ic);
  m.middleCols<3>(0) = -n.transpose() / b;
  m.middleCols<3>(3) = -big_t * n.transpose() / b;
  m.middleCols<3>(6) = dtheta_cam - (n.transpose() / b) * skew(x1.p_wi + x1.v_wi * big_t + g * s2 - xk.p_wi) * r1;
  m.middleCols<3>(9) = -big_t * dtheta_cam + (n.transpose() / b) * s3 * skew(g) * r1;
  m.middleCols<3>(12) = (n.transpose() / b) * s2 * r1;
  m.middleCols<3>(15) = (skew(p3 - p2) * (p2 - ik)).transpose() / b;
  m.middleCols<3>(18) = (n + skew(p1 - p3) * (p2 - ik)).transpose() / b;
  m.middleCols<3>(21) = (skew(p2 - p1) * (p2 - ik)).transpose() / b;
  row.closed_form = m;
  return row;
}

struct ObsMatrices {
  MatX range;          // range rows only
  MatX vio;            // visual rows only
  std::vector<int> range_ticks;
  std::vector<double> range_values;  // a/b per range row
};

inline ObsMatrices build_observability(const ObsSystem& sys, int stride = 1) {
  const auto phi = accumulate_phi(sys.traj);
  std::vector<MatX> rr, vr;
  ObsMatrices out;
  for (int k = 1; k <= sys.ticks(); k += stride) {
    if (const auto row = obs_row(k, sys, phi)) {
      rr.push_back(row->via_phi);
      out.range_ticks.push_back(k);
      out.range_values.push_back(row->a / row->b);
    }
    vr.push_back(times_phi(vio_rows_at(sys, k), phi[k - 1]));
  }
  const auto stack = [&](const std::vector<MatX>& parts) {
    int rows = 0;
    for (const auto& p : parts) rows += static_cast<int>(p.rows());
    MatX m(rows, sys.width());
    int at = 0;
    for (const auto& p : parts) {
      m.middleRows(at, p.rows()) = p;
      at += static_cast<int>(p.rows());
    }
    return m;
  };
  out.range = stack(rr);
  out.vio = stack(vr);
  return out;
}

inline MatX combined(const ObsMatrices& m) {
  MatX out(m.range.rows() + m.vio.rows(), m.range.cols());
  out << m.range, m.vio;
  return out;
}

struct NullDirection {
  std::string label;
  VecX d;
};

inline VecX global_position_direction(const ObsSystem& sys, int axis) {
  VecX d = VecX::Zero(sys.width());
  d(axis) = 1.0;
  for (std::size_t j = 0; j < sys.features.size(); ++j) d(15 + 3 * j + axis) = 1.0;
  return d;
}

inline VecX yaw_direction(const ObsSystem& sys) {
  const auto& x = sys.traj.states.front();
  const Vec3& g = sys.world.g_w;
  VecX d = VecX::Zero(sys.width());
  d.segment<3>(0) = skew(g) * x.p_wi;
  d.segment<3>(3) = skew(g) * x.v_wi;
  d.segment<3>(6) = to_rotation(x.q_wi) * g;
  for (std::size_t j = 0; j < sys.features.size(); ++j) d.segment<3>(15 + 3 * j) = skew(g) * sys.features[j];
  return d;
}

inline VecX scale_direction(const ObsSystem& sys) {
  const auto& x = sys.traj.states.front();
  VecX d = VecX::Zero(sys.width());
  d.segment<3>(0) = x.p_wi;
  d.segment<3>(3) = x.v_wi;
  d.segment<3>(12) = -sys.traj.a_body_const;
  for (std::size_t j = 0; j < sys.features.size(); ++j) d.segment<3>(15 + 3 * j) = sys.features[j];
  return d;
}

inline VecX hover_direction(const ObsSystem& sys) {
  VecX d = VecX::Zero(sys.width());
  for (std::size_t j = 3; j < sys.features.size(); ++j) d.segment<3>(15 + 3 * j) = sys.features[j];
  return d;
}

inline std::vector<NullDirection> candidate_directions(const ObsSystem& sys) {
  return {{"global-position-x", global_position_direction(sys, 0)},
          {"global-position-y", global_position_direction(sys, 1)},
          {"global-position-z", global_position_direction(sys, 2)},
          {"yaw-about-gravity", yaw_direction(sys)},
          {"scale N_s", scale_direction(sys)},
          {"hover N_h", hover_direction(sys)}};
}

inline int numeric_rank(const MatX& m, double rel = 1e-8) {
  if (m.rows() == 0) return 0;
  const Eigen::JacobiSVD<MatX> svd(m);
  const auto& s = svd.singularValues();
  int r = 0;
  for (int i = 0; i < s.size(); ++i) r += s(i) > rel * s(0);
  return r;
}

struct DirectionResidual {
  std::string label;
  double residual = 0.0;  // ‖M d‖∞ / ‖d‖∞
};

struct NullspaceReport {
  std::vector<DirectionResidual> directions;
  int rank = 0;
  int rows = 0;
};

inline NullspaceReport nullspace_report(const MatX& m, const std::vector<NullDirection>& dirs) {
  NullspaceReport r;
  r.rows = static_cast<int>(m.rows());
  r.rank = numeric_rank(m);
  for (const auto& d : dirs) {
    const double dn = d.d.cwiseAbs().maxCoeff();
    const double res = (m.rows() == 0 || dn == 0.0) ? 0.0 : (m * d.d).cwiseAbs().maxCoeff() / dn;
    r.directions.push_back({d.label, res});
  }
  return r;
}

/// n^T(p_F2 - p_ik)/b at each range row, the per-row value of M_k N_s.
inline std::vector<double> scale_row_closed_form(const ObsSystem& sys, const ObsMatrices& m) {
  std::vector<double> out;
  for (int k : m.range_ticks) {
    RangePrediction pr;
    range_row_at(sys, k, &pr);
    out.push_back(pr.facet.n.dot(sys.features[1] - sys.traj.states[k - 1].p_wi) / pr.facet.b);
  }
  return out;
}

}  // namespace rvio
