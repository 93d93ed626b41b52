#include "rvio/state_manager.hpp"
#include "test_util.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>
#include <gtest/gtest.h>

using namespace rvio;
using namespace rvio::test;

namespace {

using Quad = boost::multiprecision::cpp_bin_float_quad;
using MatL = Eigen::Matrix<Quad, Eigen::Dynamic, Eigen::Dynamic>;
using VecL = Eigen::Matrix<Quad, Eigen::Dynamic, 1>;

double rel_max(const MatX& a, const MatX& b) { return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff(); }

CameraExtrinsics random_extrinsics() {
  CameraExtrinsics e;
  e.p_ic = rand_vec(0.2);
  e.q_ic = rand_quat();
  return e;
}

Track observe(const FullState& s, const Vec3& pw, const std::vector<int>& slots, double noise, std::int64_t id) {
  Track t;
  t.track_id = id;
  for (auto it = slots.rbegin(); it != slots.rend(); ++it) {
    const CameraPose p = s.window.pose(*it);
    t.observations.push_back(
        {s.window.frame_ids[*it - 1], *project(to_rotation(p.q_wc) * (pw - p.p_wc)) + noise * Vec2(randn(), randn())});
  }
  return t;
}

Vec3 ground_point(const FullState& s) {
  const Vec3 c = s.window.positions[0];
  return {c.x() + uniform(-1.5, 1.5), c.y() + uniform(-1.5, 1.5), uniform(-0.5, 0.5)};
}

void add_feature(FullState& s, int slot, int anchor) {
  auto f = world_to_inverse_depth(ground_point(s), s.window.pose(anchor));
  f->anchor = anchor;
  f->track_id = slot;
  s.feature(slot) = *f;
}

Vec3 world_point(const FullState& s, int slot) {
  const Feature& f = *s.feature(slot);
  return inverse_depth_to_world(f, s.window.pose(f.anchor));
}

MatX sample_cov(const std::vector<VecX>& xs) {
  const int d = static_cast<int>(xs[0].size());
  VecX mean = VecX::Zero(d);
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  MatX c = MatX::Zero(d, d);
  for (const auto& x : xs) c += (x - mean) * (x - mean).transpose();
  return c / static_cast<double>(xs.size() - 1);
}

Track make_track(std::int64_t id, int len, const Vec2& z) {
  Track t;
  t.track_id = id;
  for (int i = 0; i < len; ++i) t.observations.push_back({i, z});
  return t;
}

}  // namespace

TEST(SlideWindow, IdentityExtrinsicsClonesImuPose) {
  FullState s = random_state(3, 1);
  ErrorCovariance cov(s.layout, rand_spd(s.layout.dim()));
  const MatX p0 = cov.matrix();
  slide_window(s, cov, CameraExtrinsics{}, 42, 1.0);
  EXPECT_LE((s.window.positions[0] - s.imu.p_wi).norm(), 1e-15);
  EXPECT_LE(angle_between(s.window.orientations[0], s.imu.q_wi), 1e-12);
  EXPECT_EQ(s.window.frame_ids[0], 42);
  const ErrorLayout& l = s.layout;
  EXPECT_LE((cov.matrix().block<3, 3>(l.pos(1), l.pos(1)) - p0.block<3, 3>(0, 0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((cov.matrix().block<3, 3>(l.att(1), l.att(1)) - p0.block<3, 3>(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((cov.matrix().block<3, 3>(l.pos(1), l.att(1)) - p0.block<3, 3>(0, 6)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SlideWindow, FifoOrderAndUntouchedBlocks) {
  FullState s = random_state(3, 2);
  add_feature(s, 1, 1);
  ErrorCovariance cov(s.layout, rand_spd(s.layout.dim()));
  const ErrorLayout& l = s.layout;
  const MatX p0 = cov.matrix();
  const CameraExtrinsics ext = random_extrinsics();
  s.imu.p_wi = Vec3(1, 0, 0);
  slide_window(s, cov, ext, 1, 0.1);
  const Vec3 first = s.window.positions[0];
  s.imu.p_wi = Vec3(2, 0, 0);
  slide_window(s, cov, ext, 2, 0.2);
  EXPECT_EQ(s.window.frame_ids[0], 2);
  EXPECT_EQ(s.window.frame_ids[1], 1);
  EXPECT_EQ(s.window.positions[1], first);
  EXPECT_EQ(s.feature(1)->anchor, 3);
  // Inertial and feature blocks untouched.
  EXPECT_LE((cov.matrix().topLeftCorner<15, 15>() - p0.topLeftCorner<15, 15>()).cwiseAbs().maxCoeff(), 1e-12);
  const int f = l.feat(1);
  EXPECT_LE((cov.matrix().block<3, 3>(f, f) - p0.block<3, 3>(f, f)).cwiseAbs().maxCoeff(), 1e-12);
  const MatX ii1 = cov.matrix().topLeftCorner<15, 15>(), ii0 = p0.topLeftCorner<15, 15>();
  EXPECT_NEAR(ii1.trace(), ii0.trace(), 1e-12);
  EXPECT_THROW(slide_window(s, cov, ext, 3, 0.3), std::logic_error);  // feature now anchored at slot M
  reparametrize_anchor(s, cov, 1, 1);
  EXPECT_NO_THROW(slide_window(s, cov, ext, 3, 0.3));
}

TEST(SlideWindow, CovarianceMatchesMonteCarlo) {
  FullState s = random_state(3, 0);
  const CameraExtrinsics ext = random_extrinsics();
  const ErrorLayout& l = s.layout;
  const int n = l.dim();
  MatX p = 1e-6 * rand_spd(n);
  ErrorCovariance cov(l, p);
  const FullState nominal = s;
  slide_window(s, cov, ext, 7, 0.0);
  const CameraPose cam = s.window.pose(1);
  const Eigen::LLT<MatX> llt(p);
  std::vector<VecX> samples;
  std::mt19937_64 g(3);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 100000; ++k) {
    const VecX e = llt.matrixL() * VecX::NullaryExpr(n, [&] { return nd(g); });
    const FullState x = apply_correction(nominal, e);
    const CameraPose c = camera_pose_from_imu(x.imu, ext);
    VecX d(6);
    d << c.p_wc - cam.p_wc, quat_log(quat_mul(cam.q_wc.conjugate(), c.q_wc));
    samples.push_back(d);
  }
  MatX lin(6, 6);
  const std::array<int, 2> idx{l.pos(1), l.att(1)};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) lin.block<3, 3>(3 * a, 3 * b) = cov.matrix().block<3, 3>(idx[a], idx[b]);
  const MatX mc = sample_cov(samples);
  EXPECT_LE((mc - lin).norm() / lin.norm(), 0.02);
}

TEST(InitializeWindow, ClonesIntoEverySlot) {
  FullState s = random_state(4, 0);
  ErrorCovariance cov(s.layout, rand_spd(s.layout.dim()));
  initialize_window(s, cov, random_extrinsics(), 9, 0.5);
  EXPECT_EQ(s.window.frame_ids[0], 9);
  EXPECT_EQ(s.window.frame_ids[3], -1);
  const ErrorLayout& l = s.layout;
  for (int k = 2; k <= 4; ++k) {
    EXPECT_EQ(s.window.positions[k - 1], s.window.positions[0]);
    EXPECT_LE((cov.matrix().block<3, 3>(l.pos(k), l.pos(k)) - cov.matrix().block<3, 3>(l.pos(1), l.pos(1))).norm(), 1e-15);
  }
}

TEST(UnknownDepthInit, PriorValues) {
  for (auto [dmin, rho, sigma] : {std::tuple{1.0, 0.5, 0.25}, {0.5, 1.0, 0.5}}) {
    FullState s = random_state(3, 2);
    ErrorCovariance cov(s.layout, 1e-3 * rand_spd(s.layout.dim()));
    const Feature f = init_feature_unknown_depth(s, cov, 2, Vec2(0.1, -0.2), 5, dmin, 0.002);
    EXPECT_DOUBLE_EQ(f.rho, rho);
    EXPECT_EQ(f.anchor, 1);
    EXPECT_EQ(f.alpha, 0.1);
    const int o = s.layout.feat(2);
    EXPECT_DOUBLE_EQ(cov.matrix()(o + 2, o + 2), sigma * sigma);
    EXPECT_DOUBLE_EQ(cov.matrix()(o, o), 0.002 * 0.002);
    EXPECT_EQ(cov.matrix().middleRows(o, 3).leftCols(o).norm(), 0.0);
    const Eigen::SelfAdjointEigenSolver<MatX> eig(cov.matrix());
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
    EXPECT_THROW(init_feature_unknown_depth(s, cov, 2, Vec2::Zero(), 6, dmin, 0.002), std::logic_error);
  }
}

TEST(Reparametrize, SamePoseIsIdentity) {
  FullState s = random_state(3, 1);
  s.window.positions[2] = s.window.positions[0];
  s.window.orientations[2] = s.window.orientations[0];
  add_feature(s, 1, 3);
  const Vec3 before = s.feature(1)->vec();
  ErrorCovariance cov(s.layout, 1e-3 * rand_spd(s.layout.dim()));
  ASSERT_TRUE(reparametrize_anchor(s, cov, 1, 1));
  EXPECT_LE((s.feature(1)->vec() - before).norm(), 1e-12);
  EXPECT_EQ(s.feature(1)->anchor, 1);
}

TEST(Reparametrize, WorldPointAndPredictionsInvariant) {
  for (int trial = 0; trial < 100; ++trial) {
    FullState s = random_state(4, 2);
    add_feature(s, 2, 4);
    const Vec3 before = world_point(s, 2);
    std::array<Vec3, 4> pc_before;
    for (int i = 1; i <= 4; ++i) pc_before[i - 1] = slam_feature_in_camera(s, *s.feature(2), i);
    ErrorCovariance cov(s.layout, 1e-3 * rand_spd(s.layout.dim()));
    ASSERT_TRUE(reparametrize_anchor(s, cov, 2, 1));
    EXPECT_LE((world_point(s, 2) - before).norm(), 1e-12 * std::max(1.0, before.norm()));
    for (int i = 1; i <= 4; ++i) {
      const Vec3 pc = slam_feature_in_camera(s, *s.feature(2), i);
      EXPECT_LE((*project(pc) - *project(pc_before[i - 1])).norm(), 1e-10);
    }
  }
}

TEST(Reparametrize, JacobianMatchesFiniteDifferences) {
  for (int trial = 0; trial < 100; ++trial) {
    FullState s = random_state(4, 2);
    const int old_anchor = 2 + trial % 3;
    add_feature(s, 1, old_anchor);
    add_feature(s, 2, 1);
    const ErrorLayout& l = s.layout;
    const int n = l.dim();
    const MatX p = 1e-3 * rand_spd(n);
    ErrorCovariance cov(l, p);
    // The conversion map as a function of the state before reparametrization.
    const auto convert = [&](const FullState& x) -> VecX {
      const Vec3 pw = world_point(x, 1);
      return world_to_inverse_depth(pw, x.window.pose(1))->vec();
    };
    const MatX fd = fd_jacobian(s, convert);
    const ReparamJacobian r = reparam_jacobian(*s.feature(1), s.window.pose(old_anchor), s.window.pose(1));
    MatX rows = MatX::Zero(3, n);
    rows.middleCols<3>(l.pos(old_anchor)) += r.J1 * r.dw_p_old;
    rows.middleCols<3>(l.pos(1)) += r.J1 * r.dw_p_new;
    rows.middleCols<3>(l.att(old_anchor)) += r.J1 * r.dw_theta_old;
    rows.middleCols<3>(l.att(1)) += r.J1 * r.dw_theta_new;
    rows.middleCols<3>(l.feat(1)) += r.J1 * r.dw_f;
    EXPECT_LE(rel_err(rows, fd), 1e-5);

    // Covariance after reparametrization equals J P Jᵀ with the finite-difference rows.
    ASSERT_TRUE(reparametrize_anchor(s, cov, 1, 1));
    MatX j = MatX::Identity(n, n);
    j.middleRows(l.feat(1), 3) = fd;
    EXPECT_LE(rel_max(cov.matrix(), j * p * j.transpose()), 1e-5);
  }
}

TEST(Reparametrize, CovarianceMatchesMonteCarlo) {
  FullState s = random_state(3, 1);
  add_feature(s, 1, 3);
  const ErrorLayout& l = s.layout;
  const int n = l.dim();
  const MatX p = 1e-7 * rand_spd(n);
  ErrorCovariance cov(l, p);
  const FullState nominal = s;
  ASSERT_TRUE(reparametrize_anchor(s, cov, 1, 1));
  const Vec3 f_new = s.feature(1)->vec();
  const Eigen::LLT<MatX> llt(p);
  std::mt19937_64 g(11);
  std::normal_distribution<double> nd;
  std::vector<VecX> samples;
  for (int k = 0; k < 100000; ++k) {
    const FullState x = apply_correction(nominal, llt.matrixL() * VecX::NullaryExpr(n, [&] { return nd(g); }));
    samples.push_back(world_to_inverse_depth(world_point(x, 1), x.window.pose(1))->vec() - f_new);
  }
  const int o = l.feat(1);
  const MatX lin = cov.matrix().block<3, 3>(o, o);
  EXPECT_LE((sample_cov(samples) - lin).norm() / lin.norm(), 0.02);
}

TEST(Reparametrize, BehindNewAnchorDropsFeature) {
  FullState s(2, 1);
  s.window.positions[1] = Vec3::Zero();
  s.window.positions[0] = Vec3(0, 0, 10);  // new anchor beyond the point along the same axis
  Feature f;
  f.rho = 0.5;
  f.anchor = 2;
  s.feature(1) = f;
  ErrorCovariance cov(s.layout);
  EXPECT_FALSE(reparametrize_anchor(s, cov, 1, 1));
  EXPECT_FALSE(s.feature(1).has_value());
}

TEST(MsckfInit, ClosedFormMatchesFiniteMuAugmentedUpdate) {
  const double mu = 1e12;
  for (int trial = 0; trial < 20; ++trial) {
    FullState s = random_state(4, 0);
    const int n = s.layout.dim();
    const MatX p = 1e-4 * rand_spd(n);
    const ErrorCovariance cov(s.layout, p);
    const double sv = 0.01;
    const int k = 1 + trial % 2;
    std::vector<FeatureLinearization> lins;
    for (int i = 0; i < k; ++i) {
      const Vec3 pw = ground_point(s);
      const Track t = observe(s, pw, {1, 2, 3, 4}, sv, i);
      lins.push_back(*linearize_track(t, s, pw + rand_vec(1e-2)));
    }
    const auto ci = msckf_init_cartesian(cov, lins, sv);
    ASSERT_TRUE(ci);

    // Literal augmented EKF update, prior diag(P, μI), in quad precision since cond(S) ~ 1e14.
    const int na = n + 3 * k;
    int rows = 0;
    for (const auto& lin : lins) rows += static_cast<int>(lin.residual.size());
    MatL pa = MatL::Zero(na, na);
    pa.topLeftCorner(n, n) = p.cast<Quad>();
    pa.bottomRightCorner(3 * k, 3 * k) = static_cast<Quad>(mu) * MatL::Identity(3 * k, 3 * k);
    MatL h = MatL::Zero(rows, na);
    VecL r(rows);
    int at = 0;
    for (int i = 0; i < k; ++i) {
      const int m2 = static_cast<int>(lins[i].residual.size());
      h.block(at, 0, m2, n) = lins[i].H_x.cast<Quad>();
      h.block(at, n + 3 * i, m2, 3) = lins[i].H_f.cast<Quad>();
      r.segment(at, m2) = lins[i].residual.cast<Quad>();
      at += m2;
    }
    const MatL sm = h * pa * h.transpose() + static_cast<Quad>(sv * sv) * MatL::Identity(rows, rows);
    const MatL kg = sm.llt().solve(h * pa).transpose();
    const VecL dx = kg * r;
    const MatL post = pa - kg * h * pa;
    const MatX post_d = post.cast<double>();
    const VecX dx_d = dx.cast<double>();

    EXPECT_LE((ci->dx - dx_d.head(n)).cwiseAbs().maxCoeff() / dx_d.head(n).cwiseAbs().maxCoeff(), 1e-4);
    for (int i = 0; i < k; ++i) {
      const Vec3 expected = lins[i].p_w + dx_d.segment<3>(n + 3 * i);
      EXPECT_LE((ci->p_w[i] - expected).norm() / std::max(1e-12, dx_d.segment<3>(n + 3 * i).norm()), 1e-4);
    }
    EXPECT_LE(rel_max(ci->P, post_d), 1e-4);
    EXPECT_LE(rel_max(ci->P.bottomLeftCorner(3 * k, n), post_d.bottomLeftCorner(3 * k, n)), 1e-4);
    EXPECT_LE(rel_max(ci->P.bottomRightCorner(3 * k, 3 * k), post_d.bottomRightCorner(3 * k, 3 * k)), 1e-4);
  }
}

TEST(MsckfInit, BatchEqualsSequentialOnIndependentBlocks) {
  for (int trial = 0; trial < 10; ++trial) {
    FullState s = random_state(4, 2);
    const ErrorLayout& l = s.layout;
    const int n = l.dim();
    // Slots 1-2 and 3-4 are uncorrelated with each other; the inertial block is decoupled too.
    MatX p = MatX::Identity(n, n) * 1e-4;
    const MatX a = 1e-4 * rand_spd(6), b = 1e-4 * rand_spd(6);
    for (int s1 : {1, 3}) {
      const MatX blk = (s1 == 1 ? a : b);
      p.block<3, 3>(l.pos(s1), l.pos(s1 + 1)) = blk.block<3, 3>(0, 3);
      p.block<3, 3>(l.pos(s1 + 1), l.pos(s1)) = blk.block<3, 3>(3, 0);
      p.block<3, 3>(l.pos(s1), l.pos(s1)) = blk.block<3, 3>(0, 0);
      p.block<3, 3>(l.pos(s1 + 1), l.pos(s1 + 1)) = blk.block<3, 3>(3, 3);
    }
    const ErrorCovariance cov(l, p);
    const Vec3 pa = ground_point(s), pb = ground_point(s);
    const Track ta = observe(s, pa, {1, 2}, 0.001, 1);
    const Track tb = observe(s, pb, {3, 4}, 0.001, 2);
    const std::vector<Vec3> pts{pa, pb};

    FullState s1 = s;
    ErrorCovariance c1 = cov;
    ASSERT_TRUE(init_features_from_msckf(s1, c1, {{ta, 1}, {tb, 2}}, 0.002, &pts).applied);

    FullState s2 = s;
    ErrorCovariance c2 = cov;
    const std::vector<Vec3> pa_only{pa}, pb_only{pb};
    ASSERT_TRUE(init_features_from_msckf(s2, c2, {{ta, 1}}, 0.002, &pa_only).applied);
    ASSERT_TRUE(init_features_from_msckf(s2, c2, {{tb, 2}}, 0.002, &pb_only).applied);

    EXPECT_LE((c1.matrix() - c2.matrix()).cwiseAbs().maxCoeff(), 1e-9);
    for (int j = 1; j <= 2; ++j) EXPECT_LE((s1.feature(j)->vec() - s2.feature(j)->vec()).norm(), 1e-9);
    for (int i = 0; i < 4; ++i) EXPECT_LE((s1.window.positions[i] - s2.window.positions[i]).norm(), 1e-9);
    const Eigen::SelfAdjointEigenSolver<MatX> eig(c1.matrix());
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
    EXPECT_LE((c1.matrix() - c1.matrix().transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(MsckfInit, DepthVarianceBelowUnknownDepthPrior) {
  for (int trial = 0; trial < 20; ++trial) {
    FullState s = random_state(5, 1);
    ErrorCovariance cov(s.layout, 1e-5 * rand_spd(s.layout.dim()));
    const Vec3 pw = ground_point(s);
    const Track t = observe(s, pw, {1, 2, 3, 4, 5}, 0.002, 3);
    FullState a = s;
    ErrorCovariance ca = cov;
    const MsckfInitResult res = init_features_from_msckf(a, ca, {{t, 1}}, 0.002);
    ASSERT_TRUE(res.applied) << res.reason;
    const int o = s.layout.feat(1);
    FullState b = s;
    ErrorCovariance cb = cov;
    init_feature_unknown_depth(b, cb, 1, t.observations.back().z, 3, 1.0, 0.002);
    EXPECT_LT(ca.matrix()(o + 2, o + 2), cb.matrix()(o + 2, o + 2));
    EXPECT_EQ(a.feature(1)->anchor, 1);
    EXPECT_LE((world_point(a, 1) - pw).norm(), 0.2);
  }
}

TEST(MsckfInit, IllConditionedFeatureIsRefused) {
  FullState s = random_state(3, 1);
  const ErrorCovariance cov(s.layout, 1e-4 * rand_spd(s.layout.dim()));
  const Vec3 pw = ground_point(s);
  const auto lin = linearize_track(observe(s, pw, {1, 2, 3}, 0.0, 1), s, pw);
  EXPECT_FALSE(msckf_init_cartesian(cov, {*lin}, 0.002, 1.0));
}

TEST(TrackManager, EmptyFrameEndsTracks) {
  TrackManager tm(5);
  tm.manage_tracks(0, {{1, Vec2(0, 0), 0.0}, {2, Vec2(0.1, 0), 0.0}});
  tm.manage_tracks(1, {{1, Vec2(0, 0), 0.1}, {2, Vec2(0.1, 0), 0.1}});
  tm.assign_slam(2, 4, Vec2(0.1, 0));
  const FramePlan plan = tm.manage_tracks(2, {});
  EXPECT_TRUE(plan.slam.empty());
  ASSERT_EQ(plan.ended.size(), 1u);
  EXPECT_EQ(plan.ended[0].track_id, 1);
  EXPECT_EQ(plan.ended[0].length(), 2);
  EXPECT_EQ(plan.lost_slots, std::vector<int>{4});
  EXPECT_EQ(tm.active_tracks(), 0);
}

TEST(TrackManager, SlamObservationsAndFullTracks) {
  TrackManager tm(3);
  FramePlan plan;
  for (int f = 0; f < 3; ++f) plan = tm.manage_tracks(f, {{7, Vec2(0.2, 0.1), 0.0}, {8, Vec2(0, 0), 0.0}});
  ASSERT_EQ(plan.full.size(), 2u);
  EXPECT_EQ(plan.full[0].length(), 3);
  tm.assign_slam(7, 1, Vec2(0.2, 0.1));
  plan = tm.manage_tracks(3, {{7, Vec2(0.21, 0.1), 0.0}, {8, Vec2(0, 0), 0.0}});
  ASSERT_EQ(plan.slam.size(), 1u);
  EXPECT_EQ(plan.slam[0].first, 1);
  EXPECT_TRUE(tm.is_slam(7));
  EXPECT_FALSE(tm.is_slam(8));
  tm.release_slot(1);
  EXPECT_FALSE(tm.is_slam(7));
}

TEST(TrackManager, PromotionPolicy) {
  TrackManager tm(10);
  const std::vector<Track> c{make_track(1, 5, Vec2(-0.9, -0.9)), make_track(2, 6, Vec2(0.9, 0.9)),
                             make_track(3, 4, Vec2(0.0, 0.0))};
  auto all = tm.rank_promotions(c, 3);
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, (std::vector<std::int64_t>{1, 2, 3}));
  // Same tile, one slot: the longer track wins; equal length falls back to the lower id.
  const std::vector<Track> same{make_track(5, 4, Vec2(0.1, 0.1)), make_track(4, 6, Vec2(0.12, 0.1))};
  EXPECT_EQ(tm.rank_promotions(same, 1), std::vector<std::int64_t>{4});
  const std::vector<Track> same_rev{same[1], same[0]};
  EXPECT_EQ(tm.rank_promotions(same_rev, 1), std::vector<std::int64_t>{4});
  const std::vector<Track> tie{make_track(9, 4, Vec2(0.1, 0.1)), make_track(8, 4, Vec2(0.12, 0.1))};
  EXPECT_EQ(tm.rank_promotions(tie, 1), std::vector<std::int64_t>{8});
  // Equal length in different tiles: the emptier tile wins.
  tm.assign_slam(100, 1, Vec2(0.1, 0.1));
  const std::vector<Track> spread{make_track(10, 4, Vec2(0.11, 0.1)), make_track(11, 4, Vec2(-0.9, 0.9))};
  EXPECT_EQ(tm.rank_promotions(spread, 1), std::vector<std::int64_t>{11});
  EXPECT_TRUE(tm.rank_promotions(spread, 0).empty());
}
