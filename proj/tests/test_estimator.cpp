#include "rvio/io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace rvio;
using namespace rvio::test;

namespace {

Config noiseless_config(TrajectoryKind kind, double duration) {
  Config c;
  c.sim.traj.kind = kind;
  c.sim.traj.duration = duration;
  c.sim.scene.landmark_density = 0.5;
  c.sim.noiseless = true;
  c.init_perturb = false;
  return c;
}

RunLog run(Config c, const Dataset& ds) {
  c.est.initial = initial_state(c, ds);
  Estimator est(c.est);
  return est.run(ds);
}

}  // namespace

TEST(Estimator, PureInertialWithoutFramesIsDeadReckoning) {
  Config c = noiseless_config(TrajectoryKind::Circle, 2.0);
  c.sim.noiseless = false;
  Dataset ds = simulate(c, 4);
  ds.frames.clear();
  ds.ranges.clear();
  const RunLog log = run(c, ds);
  ASSERT_EQ(log.estimates.size(), 1u);
  InertialState x = initial_state(c, ds);
  for (std::size_t i = 0; i + 1 < ds.imu.size(); ++i) x = propagate_state(x, ds.imu[i], ds.imu[i + 1].t - ds.imu[i].t, c.est.world);
  const EstimateRecord& e = log.estimates.back();
  EXPECT_EQ(e.t, ds.imu.back().t);
  EXPECT_LE((e.x.p_wi - x.p_wi).norm(), 1e-12);
  EXPECT_LE((e.x.v_wi - x.v_wi).norm(), 1e-12);
  EXPECT_LE(angle_between(e.x.q_wi, x.q_wi), 1e-12);
}

TEST(Estimator, NoiselessHoverStaysPut) {
  const Config c = noiseless_config(TrajectoryKind::Hover, 10.0);
  const Dataset ds = simulate(c, 1);
  const RunLog log = run(c, ds);
  EXPECT_LE((log.estimates.back().x.p_wi - ds.truth.back().x.p_wi).norm(), 1e-6);
  int inits = 0;
  for (const auto& d : log.frames) inits += d.slam_inits_unknown + d.slam_inits_msckf;
  EXPECT_GT(inits, 0);
}

TEST(Estimator, NoiselessCircleTracksTruth) {
  const Config c = noiseless_config(TrajectoryKind::Circle, 10.0);
  const Dataset ds = simulate(c, 2);
  const RunLog log = run(c, ds);
  const Metrics m = evaluate(log.estimates, ds.truth);
  EXPECT_LE(m.position_rmse, 0.05);
  int msckf = 0, range = 0;
  for (const auto& d : log.frames) {
    msckf += d.msckf_tracks;
    range += d.range_applied;
  }
  EXPECT_GT(msckf, 0);
  EXPECT_GT(range, 0);
}

TEST(Estimator, DeterministicGivenDatasetAndConfig) {
  Config c = noiseless_config(TrajectoryKind::Sinusoid, 4.0);
  c.sim.noiseless = false;
  const Dataset ds = simulate(c, 8);
  const RunLog a = run(c, ds), b = run(c, ds);
  ASSERT_EQ(a.estimates.size(), b.estimates.size());
  for (std::size_t i = 0; i < a.estimates.size(); ++i) {
    EXPECT_EQ(a.estimates[i].x.p_wi, b.estimates[i].x.p_wi);
    EXPECT_EQ(a.estimates[i].P, b.estimates[i].P);
  }
}

TEST(Estimator, CovarianceStaysSymmetricPsd) {
  Config c = noiseless_config(TrajectoryKind::Circle, 6.0);
  c.sim.noiseless = false;
  c.init_perturb = true;
  const Dataset ds = simulate(c, 5);
  c.est.initial = initial_state(c, ds);
  Estimator est(c.est);
  est.run(ds);
  const MatX& p = est.covariance().matrix();
  EXPECT_LE((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-12 * p.cwiseAbs().maxCoeff());
  const Eigen::SelfAdjointEigenSolver<MatX> eig(p);
  EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-9 * eig.eigenvalues().maxCoeff());
}

TEST(Estimator, RejectsBadConfiguration) {
  EstimatorConfig cfg;
  cfg.window_size = 1;
  EXPECT_THROW(Estimator{cfg}, std::invalid_argument);
  Estimator ok{EstimatorConfig{}};
  EXPECT_THROW(ok.run(Dataset{}), std::invalid_argument);
}
