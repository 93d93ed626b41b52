#pragma once

#include "rvio/state.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>

#include <stdexcept>
#include <string>

namespace rvio {

using Mat15 = Eigen::Matrix<double, 15, 15>;

struct ImuSample {
  double t = 0.0;
  Vec3 omega_imu = Vec3::Zero();
  Vec3 a_imu = Vec3::Zero();
};

/// Continuous-time noise densities plus measurement standard deviations.
struct NoiseConfig {
  double sigma_na = 0.01;    // m/s^2/sqrt(Hz)
  double sigma_nba = 1e-4;   // m/s^3/sqrt(Hz)
  double sigma_ng = 1e-3;    // rad/s/sqrt(Hz)
  double sigma_nbg = 1e-5;   // rad/s^2/sqrt(Hz)
  double sigma_v = 0.002;    // normalized image units
  double sigma_r = 0.05;     // m
};

inline InertialState propagate_state(const InertialState& s, const ImuSample& u, double dt, const WorldModel& world) {
  if (!(dt > 0.0)) throw std::invalid_argument("propagate_state: dt must be positive");
  const Vec3 a_hat = u.a_imu - s.b_a;
  const Vec3 w_hat = u.omega_imu - s.b_g;
  InertialState out = s;
  out.p_wi = s.p_wi + s.v_wi * dt;
  out.v_wi = s.v_wi + (to_rotation(s.q_wi).transpose() * a_hat + world.g_w) * dt;
  // q + ½Ω(ω̂)q dt == q ⊗ [1, ½ω̂dt]
  out.q_wi = quat_mul(s.q_wi, Quaternion(1.0, 0.5 * dt * w_hat)).normalized();
  return out;
}

struct ErrorJacobians {
  Mat15 F;  // transition of δx_I over one step
  Mat15 Q;  // G Q G^T accumulated over the step
};

/// Linearized one-step error transition. Position and velocity rows are
/// I + F_c dt; the attitude rows use the incremental rotation of the step
/// itself so that the transition is the exact Jacobian of propagate_state.
inline ErrorJacobians error_jacobians(const InertialState& s, const ImuSample& u, double dt,
                                      const NoiseConfig& noise = {}) {
  if (!(dt > 0.0)) throw std::invalid_argument("error_jacobians: dt must be positive");
  const Vec3 a_hat = u.a_imu - s.b_a;
  const Vec3 w_hat = u.omega_imu - s.b_g;
  const Mat3 r_wi = to_rotation(s.q_wi).transpose();
  const Mat3 eye = Mat3::Identity();

  // Rotation vector of the normalized step quaternion and its derivative w.r.t. ω̂.
  const double speed = w_hat.norm();
  Vec3 phi;
  Mat3 dphi_dw;
  if (speed * dt < 1e-9) {
    phi = w_hat * dt;
    dphi_dw = eye * dt;
  } else {
    const Vec3 axis = w_hat / speed;
    const double h = 0.5 * speed * dt;
    const double f = 2.0 * std::atan(h);
    const double df = dt / (1.0 + h * h);
    phi = f * axis;
    const Mat3 uu = axis * axis.transpose();
    dphi_dw = df * uu + (f / speed) * (eye - uu);
  }
  const Mat3 step_rot = to_rotation(quat_exp(phi));

  ErrorJacobians j;
  j.F.setIdentity();
  j.F.block<3, 3>(0, 3) = eye * dt;
  j.F.block<3, 3>(3, 6) = -r_wi * skew(a_hat) * dt;
  j.F.block<3, 3>(3, 12) = -r_wi * dt;
  j.F.block<3, 3>(6, 6) = step_rot;
  j.F.block<3, 3>(6, 9) = -right_jacobian(phi) * dphi_dw;

  j.Q.setZero();
  j.Q.block<3, 3>(3, 3) = eye * noise.sigma_na * noise.sigma_na * dt;
  j.Q.block<3, 3>(6, 6) = eye * noise.sigma_ng * noise.sigma_ng * dt;
  j.Q.block<3, 3>(9, 9) = eye * noise.sigma_nbg * noise.sigma_nbg * dt;
  j.Q.block<3, 3>(12, 12) = eye * noise.sigma_nba * noise.sigma_nba * dt;
  return j;
}

/// P_II ← F P_II Fᵀ + Q, P_IV ← F P_IV, P_VV untouched.
inline void propagate_covariance(ErrorCovariance& cov, const Mat15& f, const Mat15& q) {
  MatX& p = cov.matrix();
  const int rest = cov.dim() - 15;
  const Mat15 pii = f * p.topLeftCorner<15, 15>() * f.transpose() + q;
  p.topLeftCorner<15, 15>() = 0.5 * (pii + pii.transpose());
  if (rest > 0) {
    const MatX piv = f * p.topRightCorner(15, rest);
    p.topRightCorner(15, rest) = piv;
    p.bottomLeftCorner(rest, 15) = piv.transpose();
  }
}

inline double chi2_quantile(int df, double confidence) {
  if (df < 1) throw std::invalid_argument("chi2_quantile: df must be >= 1");
  const boost::math::chi_squared dist(static_cast<double>(df));
  return boost::math::quantile(dist, confidence);
}

struct GateResult {
  bool pass = false;
  double distance2 = 0.0;
  double threshold = 0.0;
  std::string diagnostic;
};

/// Passes iff rᵀ S⁻¹ r is below the χ² quantile with len(r) degrees of freedom.
inline GateResult chi2_gate(const VecX& r, const MatX& s, double confidence = 0.95) {
  GateResult g;
  if (r.size() == 0) {
    g.pass = true;
    return g;
  }
  g.threshold = chi2_quantile(static_cast<int>(r.size()), confidence);
  const Eigen::LDLT<MatX> ldlt(s);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
    g.diagnostic = "innovation covariance is singular";
    return g;
  }
  g.distance2 = r.dot(ldlt.solve(r));
  if (!std::isfinite(g.distance2)) {
    g.diagnostic = "non-finite Mahalanobis distance";
    return g;
  }
  g.pass = g.distance2 <= g.threshold;
  if (!g.pass) g.diagnostic = "chi2 gate rejected";
  return g;
}

struct UpdateOutcome {
  bool applied = false;
  std::string reason;
  VecX dx;
};

inline constexpr double kMaxInnovationCondition = 1e12;

/// EKF update with Joseph-form covariance.
inline UpdateOutcome ekf_update(FullState& state, ErrorCovariance& cov, const VecX& residual, const MatX& h,
                                const MatX& r) {
  UpdateOutcome out;
  const int n = cov.dim();
  if (h.cols() != n || h.rows() != residual.size() || r.rows() != h.rows() || r.cols() != h.rows())
    throw std::invalid_argument("ekf_update: inconsistent shapes");
  if (h.rows() == 0) {
    out.reason = "empty measurement";
    out.dx = VecX::Zero(n);
    return out;
  }
  const MatX& p = cov.matrix();
  const MatX pht = p * h.transpose();
  MatX s = h * pht + r;
  s = 0.5 * (s + s.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<MatX> eig(s, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxInnovationCondition) {
    out.reason = "innovation covariance ill-conditioned";
    out.dx = VecX::Zero(n);
    return out;
  }
  const Eigen::LLT<MatX> llt(s);
  const MatX k = llt.solve(pht.transpose()).transpose();
  out.dx = k * residual;
  MatX ikh = MatX::Identity(n, n) - k * h;
  MatX pn = ikh * p * ikh.transpose() + k * r * k.transpose();
  cov.matrix() = 0.5 * (pn + pn.transpose());
  state = apply_correction(state, out.dx);
  out.applied = true;
  return out;
}

}  // namespace rvio
