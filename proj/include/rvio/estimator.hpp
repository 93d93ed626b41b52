#pragma once

#include "rvio/sim.hpp"
#include "rvio/state_manager.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvio {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InitialSigma {
  double p = 1e-3;
  double v = 1e-3;
  double theta = 1e-3;
  double bg = 1e-4;
  double ba = 1e-3;
};

struct EstimatorConfig {
  int window_size = 10;
  int max_slam_features = 15;
  NoiseConfig noise;
  double d_min = 1.0;
  double min_baseline = 0.05;
  double slam_confidence = 0.95;
  double msckf_confidence = 0.95;
  double range_confidence = 0.95;
  CameraExtrinsics ext = downward_camera();
  Vec3 lrf_direction{0.0, 0.0, 1.0};
  WorldModel world;
  InertialState initial;
  InitialSigma initial_sigma;
  TileGrid tiles;
  bool use_range = true;
  bool use_vision = true;

  LrfModel lrf() const { return {lrf_direction.normalized(), noise.sigma_r}; }
};

struct FrameDiagnostics {
  double t = 0.0;
  int slam_accepted = 0;
  int slam_rejected = 0;
  int msckf_tracks = 0;
  int msckf_skipped = 0;
  int msckf_rows = 0;
  int slam_inits_msckf = 0;
  int slam_inits_unknown = 0;
  int live_features = 0;
  int range_applied = 0;
  std::string range_status;
};

struct RunLog {
  std::vector<EstimateRecord> estimates;
  std::vector<FrameDiagnostics> frames;
  int ranges_unaligned = 0;
};

class Estimator {
 public:
  explicit Estimator(EstimatorConfig cfg)
      : cfg_(std::move(cfg)),
        s_(cfg_.window_size, cfg_.max_slam_features),
        cov_(s_.layout),
        tracks_(cfg_.window_size, cfg_.tiles) {
    if (cfg_.window_size < 2) throw std::invalid_argument("window_size must be >= 2");
    if (cfg_.max_slam_features < 0) throw std::invalid_argument("max_slam_features must be >= 0");
    s_.imu = cfg_.initial;
    const auto& is = cfg_.initial_sigma;
    const Eigen::Matrix<double, 15, 1> d =
        (Eigen::Matrix<double, 15, 1>() << Vec3::Constant(is.p), Vec3::Constant(is.v), Vec3::Constant(is.theta),
         Vec3::Constant(is.bg), Vec3::Constant(is.ba))
            .finished();
    cov_.ii() = d.array().square().matrix().asDiagonal();
  }

  RunLog run(const Dataset& ds) {
    RunLog log;
    if (ds.imu.empty()) throw std::invalid_argument("dataset has no IMU samples");
    imu_ = &ds.imu;
    k_ = 0;
    t_ = ds.imu.front().t;
    std::size_t r = 0;
    for (std::size_t f = 0; f < ds.frames.size(); ++f) {
      const SimFrame& fr = ds.frames[f];
      if (fr.t < t_ - 1e-9) continue;
      propagate_to(fr.t);
      FrameDiagnostics diag;
      diag.t = fr.t;
      process_frame(static_cast<std::int64_t>(f), fr, diag);
      while (r < ds.ranges.size() && ds.ranges[r].t < fr.t - 1e-6) {
        ++log.ranges_unaligned;
        ++r;
      }
      if (r < ds.ranges.size() && std::abs(ds.ranges[r].t - fr.t) <= 1e-6) {
        if (cfg_.use_range) {
          const RangeUpdateResult ru = range_update(s_, cov_, ds.ranges[r].range, cfg_.lrf(), cfg_.range_confidence);
          diag.range_applied = ru.applied;
          diag.range_status = ru.applied ? "applied" : ru.reason;
          drop_bad_features();
        } else {
          diag.range_status = "disabled";
        }
        ++r;
      }
      check_finite();
      diag.live_features = s_.live_features();
      log.frames.push_back(diag);
      log.estimates.push_back(record());
    }
    log.ranges_unaligned += static_cast<int>(ds.ranges.size() - r);
    propagate_to(ds.imu.back().t);
    if (log.estimates.empty() || log.estimates.back().t < t_ - 1e-12) log.estimates.push_back(record());
    return log;
  }

  const FullState& state() const { return s_; }
  const ErrorCovariance& covariance() const { return cov_; }

 private:
  EstimateRecord record() const {
    EstimateRecord e;
    e.t = t_;
    e.x = s_.imu;
    e.P = cov_.matrix().topLeftCorner<15, 15>();
    return e;
  }

  void check_finite() const {
    if (!cov_.matrix().allFinite() || !s_.imu.p_wi.allFinite() || !s_.imu.v_wi.allFinite())
      throw NumericalError("non-finite state or covariance at t = " + std::to_string(t_));
  }

  void propagate_to(double t) {
    const auto& imu = *imu_;
    while (t_ < t - 1e-12) {
      while (k_ + 1 < imu.size() && imu[k_ + 1].t <= t_ + 1e-12) ++k_;
      const double t_next = (k_ + 1 < imu.size()) ? std::min(imu[k_ + 1].t, t) : t;
      const double dt = t_next - t_;
      if (dt > 0.0) {
        const ErrorJacobians j = error_jacobians(s_.imu, imu[k_], dt, cfg_.noise);
        s_.imu = propagate_state(s_.imu, imu[k_], dt, cfg_.world);
        propagate_covariance(cov_, j.F, j.Q);
      }
      t_ = t_next;
    }
  }

  void free_slot(int slot) {
    s_.feature(slot).reset();
    cov_.reset_feature_slot(slot);
    tracks_.release_slot(slot);
  }

  void drop_bad_features() {
    for (int j = 1; j <= s_.layout.feature_capacity(); ++j) {
      const auto& f = s_.feature(j);
      if (f && !(f->rho > 0.0 && std::isfinite(f->rho))) free_slot(j);
    }
  }

  std::vector<int> free_slots() const {
    std::vector<int> out;
    for (int j = 1; j <= s_.layout.feature_capacity(); ++j)
      if (!s_.feature(j)) out.push_back(j);
    return out;
  }

  Track in_window(const Track& t) const {
    Track out;
    out.track_id = t.track_id;
    for (const auto& o : t.observations)
      if (s_.window.slot_of(o.frame_id)) out.observations.push_back(o);
    return out;
  }

  void process_frame(std::int64_t frame_id, const SimFrame& fr, FrameDiagnostics& diag) {
    const int m = s_.layout.window_size();
    if (!window_ready_) {
      initialize_window(s_, cov_, cfg_.ext, frame_id, fr.t);
      window_ready_ = true;
    } else {
      for (int j = 1; j <= s_.layout.feature_capacity(); ++j) {
        const auto& f = s_.feature(j);
        if (f && f->anchor == m && !reparametrize_anchor(s_, cov_, j, 1)) tracks_.release_slot(j);
      }
      slide_window(s_, cov_, cfg_.ext, frame_id, fr.t);
    }
    if (!cfg_.use_vision) return;

    FramePlan plan = tracks_.manage_tracks(frame_id, fr.obs);
    for (int slot : plan.lost_slots) {
      s_.feature(slot).reset();
      cov_.reset_feature_slot(slot);
    }

    const StackedUpdate su = build_slam_update(s_, cov_, plan.slam, cfg_.noise.sigma_v, cfg_.slam_confidence);
    diag.slam_accepted = su.accepted;
    diag.slam_rejected = su.rejected;
    if (su.accepted > 0) ekf_update(s_, cov_, su.residual, su.H, su.R);
    drop_bad_features();

    std::vector<Track> batch, full_ok, low_baseline;
    for (const auto& t : plan.ended) {
      Track w = in_window(t);
      if (check_requirements(w, s_.window, cfg_.min_baseline).eligible) batch.push_back(std::move(w));
    }
    for (const auto& t : plan.full) {
      Track w = in_window(t);
      const Eligibility e = check_requirements(w, s_.window, cfg_.min_baseline);
      if (e.eligible)
        full_ok.push_back(std::move(w));
      else if (e.reason == "insufficient baseline")
        low_baseline.push_back(std::move(w));
    }

    std::vector<int> slots = free_slots();
    const auto promoted_ids = tracks_.rank_promotions(full_ok, static_cast<int>(slots.size()));
    std::vector<Track> promoted;
    for (auto& t : full_ok) {
      if (std::find(promoted_ids.begin(), promoted_ids.end(), t.track_id) != promoted_ids.end())
        promoted.push_back(t);
      else
        batch.push_back(t);
    }

    if (!batch.empty()) {
      const MsckfSystem sys = qr_compress(
          build_projected_system(batch, s_, cov_, cfg_.noise.sigma_v, cfg_.msckf_confidence));
      diag.msckf_tracks = static_cast<int>(sys.used_tracks.size());
      diag.msckf_skipped = static_cast<int>(sys.skipped.size());
      diag.msckf_rows = sys.rows();
      if (sys.rows() > 0) {
        const double s2 = cfg_.noise.sigma_v * cfg_.noise.sigma_v;
        ekf_update(s_, cov_, sys.residual, sys.H, s2 * MatX::Identity(sys.rows(), sys.rows()));
      }
      drop_bad_features();
    }

    slots = free_slots();
    std::size_t next_slot = 0;
    for (const auto& t : promoted) {
      if (next_slot >= slots.size()) break;
      const MsckfSystem one = build_projected_system({t}, s_, cov_, cfg_.noise.sigma_v, cfg_.msckf_confidence);
      if (one.used_tracks.empty()) continue;
      const int slot = slots[next_slot];
      const MsckfInitResult res = init_features_from_msckf(s_, cov_, {{t, slot}}, cfg_.noise.sigma_v);
      const Vec2 z = t.observations.back().z;
      if (res.applied) {
        ++diag.slam_inits_msckf;
      } else {
        init_feature_unknown_depth(s_, cov_, slot, z, t.track_id, cfg_.d_min, cfg_.noise.sigma_v);
        ++diag.slam_inits_unknown;
      }
      tracks_.assign_slam(t.track_id, slot, z);
      ++next_slot;
    }

    slots = free_slots();
    const auto unknown_ids = tracks_.rank_promotions(low_baseline, static_cast<int>(slots.size()));
    std::size_t u = 0;
    for (const auto id : unknown_ids) {
      const auto it = std::find_if(low_baseline.begin(), low_baseline.end(), [&](const Track& t) { return t.track_id == id; });
      if (it->observations.back().frame_id != frame_id) continue;
      const Vec2 z = it->observations.back().z;
      init_feature_unknown_depth(s_, cov_, slots[u], z, id, cfg_.d_min, cfg_.noise.sigma_v);
      tracks_.assign_slam(id, slots[u], z);
      ++diag.slam_inits_unknown;
      ++u;
    }
    drop_bad_features();
  }

  EstimatorConfig cfg_;
  FullState s_;
  ErrorCovariance cov_;
  TrackManager tracks_;
  const std::vector<ImuSample>* imu_ = nullptr;
  std::size_t k_ = 0;
  double t_ = 0.0;
  bool window_ready_ = false;
};

}  // namespace rvio
