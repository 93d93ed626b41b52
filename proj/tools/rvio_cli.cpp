// rvio command line: sim, run, eval, obs.

#include "rvio/io.hpp"
#include "rvio/observability.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace rvio;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Options {
  std::string config;
  std::string out = ".";
  std::string data = ".";
  std::optional<std::uint64_t> seed;
  int trials = 1;
  bool no_range = false;
  bool no_vision = false;
};

Config load(const Options& o) {
  Config c = o.config.empty() ? Config{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.no_range) c.est.use_range = false;
  if (o.no_vision) c.est.use_vision = false;
  validate(c);
  return c;
}

// with --trials K > 1 every trial lives in its own trial_NNN subdirectory
fs::path trial_dir(const std::string& base, const Options& o, int i) {
  if (o.trials <= 1) return base;
  char name[32];
  std::snprintf(name, sizeof name, "trial_%03d", i);
  return fs::path(base) / name;
}

std::string meta_text(const Config& c, std::uint64_t seed) {
  const auto& t = c.sim.traj;
  std::ostringstream m;
  m << "seed = " << seed << "\n"
    << "trajectory = " << to_string(t.kind) << "\n"
    << "duration = " << detail::fmt(t.duration) << "\n"
    << "imu_rate = " << detail::fmt(t.imu_rate) << "\n"
    << "cam_rate = " << detail::fmt(t.cam_rate) << "\n"
    << "lrf_rate = " << detail::fmt(t.lrf_rate) << "\n"
    << "terrain = " << (c.sim.scene.terrain == TerrainKind::Flat ? "flat" : "hills") << "\n"
    << "landmark_density = " << detail::fmt(c.sim.scene.landmark_density) << "\n"
    << "noiseless = " << (c.sim.noiseless ? "true" : "false") << "\n";
  return m.str();
}

int cmd_sim(const Options& o) {
  const Config c = load(o);
  for (int i = 0; i < o.trials; ++i) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(i);
    const Dataset ds = simulate(c, seed);
    const fs::path dir = trial_dir(o.out, o, i);
    write_dataset(dir, ds, meta_text(c, seed));
    std::cout << dir.string() << ": " << ds.imu.size() << " imu, " << ds.frames.size() << " frames, "
              << ds.ranges.size() << " ranges";
    if (ds.missed_ranges) std::cout << " (" << ds.missed_ranges << " beams missed the terrain)";
    std::cout << "\n";
  }
  return kOk;
}

int cmd_run(const Options& o) {
  const Config base = load(o);
  for (int i = 0; i < o.trials; ++i) {
    Config c = base;
    c.seed = base.seed + static_cast<std::uint64_t>(i);
    const Dataset ds = read_dataset(trial_dir(o.data, o, i));
    c.est.initial = initial_state(c, ds);
    Estimator est(c.est);
    const RunLog log = est.run(ds);
    const fs::path out = trial_dir(o.out, o, i);
    fs::create_directories(out);
    write_estimates(out / "estimates.csv", log.estimates);
    write_diagnostics(out / "diagnostics.csv", log);
    int applied = 0;
    for (const auto& f : log.frames) applied += f.range_applied;
    std::cout << out.string() << ": " << log.estimates.size() << " estimates, " << applied << " range updates\n";
  }
  return kOk;
}

int cmd_eval(const Options& o) {
  std::vector<double> z_errors;
  for (int i = 0; i < o.trials; ++i) {
    const Dataset ds = read_dataset(trial_dir(o.data, o, i), true);
    const fs::path out = trial_dir(o.out, o, i);
    const auto est = read_estimates(out / "estimates.csv");
    const Metrics m = evaluate(est, ds.truth);
    CsvWriter w(out / "nees.csv");
    w.header({"t", "nees"});
    for (std::size_t k = 0; k < m.nees.size(); ++k) {
      w << m.times[k] << m.nees[k];
      w.end_row();
    }
    w.close();
    double mean_nees = 0.0;
    for (double v : m.nees) mean_nees += v;
    mean_nees /= static_cast<double>(m.nees.size());
    std::printf("%s: pos_rmse %.6f m  vel_rmse %.6f m/s  att_rmse %.6f deg  final_pos %.6f m  final_z %.6f m  mean_nees %.3f\n",
                out.string().c_str(), m.position_rmse, m.velocity_rmse, m.attitude_rmse_deg, m.final_position_error,
                m.final_z_error, mean_nees);
    z_errors.push_back(m.final_z_error);
  }
  if (o.trials > 1) {
    std::sort(z_errors.begin(), z_errors.end());
    const std::size_t n = z_errors.size();
    const double median = n % 2 ? z_errors[n / 2] : 0.5 * (z_errors[n / 2 - 1] + z_errors[n / 2]);
    std::printf("median final_z %.6f m over %zu trials\n", median, n);
  }
  return kOk;
}

// Constant-input trajectory matching the configured motion class, expressed with the world
// origin at the initial IMU position.
ObsSystem obs_system(const Config& c) {
  ObsSystem sys;
  sys.world = c.est.world;
  sys.q_ic = c.est.ext.q_ic;
  const auto& t = c.sim.traj;
  InertialState x;
  Vec3 a_w = Vec3::Zero(), w = Vec3::Zero();
  switch (t.kind) {
    case TrajectoryKind::Hover: break;
    case TrajectoryKind::ConstantVelocity: x.v_wi = t.velocity; break;
    case TrajectoryKind::ConstantAcceleration:
      x.v_wi = t.velocity;
      a_w = t.acceleration;
      break;
    case TrajectoryKind::Circle:
    case TrajectoryKind::Sinusoid: {
      // generic motion: constant body rate and body-frame acceleration
      const double rate = t.kind == TrajectoryKind::Circle ? t.speed / t.radius : 2.0 * M_PI * t.frequency;
      x.v_wi = Vec3(t.speed, 0.0, 0.0);
      w = Vec3(0.1 * rate, 0.0, rate);
      a_w = Vec3(0.0, t.speed * rate, 0.0);
      break;
    }
  }
  ImuSample u;
  u.omega_imu = w;
  u.a_imu = to_rotation(x.q_wi) * (a_w - sys.world.g_w);
  sys.traj = discrete_trajectory(x, u, c.obs_dt, c.obs_ticks, sys.world);

  const double h = t.start.z();
  const Vec3 ground(0.0, 0.0, -h);
  sys.features = {ground + Vec3(-0.3 * h, -0.3 * h, 0.02 * h), ground + Vec3(0.35 * h, -0.1 * h, -0.03 * h),
                  ground + Vec3(0.05 * h, 0.3 * h, 0.0)};
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> u_xy(-0.5 * h, 0.5 * h), u_z(-0.05 * h, 0.05 * h);
  while (static_cast<int>(sys.features.size()) < c.obs_features) sys.features.push_back(ground + Vec3(u_xy(rng), u_xy(rng), u_z(rng)));
  return sys;
}

const char* flag(double r) { return r <= 1e-8 ? "nullspace" : "observable"; }

int cmd_obs(const Options& o) {
  const Config c = load(o);
  const ObsSystem sys = obs_system(c);
  const ObsMatrices m = build_observability(sys);
  if (m.range.rows() < 4) {
    std::cerr << "error: fewer than 4 valid range rows; check the facet geometry\n";
    return kNumerical;
  }
  const auto dirs = candidate_directions(sys);
  const NullspaceReport vio = nullspace_report(m.vio, dirs);
  const NullspaceReport rvio = nullspace_report(combined(m), dirs);
  std::printf("trajectory %s, %d ticks, dt %g s, %zu features (%d range rows, %d visual rows)\n",
              to_string(c.sim.traj.kind), sys.ticks(), sys.traj.dt, sys.features.size(),
              static_cast<int>(m.range.rows()), static_cast<int>(m.vio.rows()));
  std::printf("%-20s %14s %-11s %14s %-11s\n", "direction", "VIO |Md|", "", "range-VIO |Md|", "");
  for (std::size_t i = 0; i < dirs.size(); ++i)
    std::printf("%-20s %14.3e %-11s %14.3e %-11s\n", dirs[i].label.c_str(), vio.directions[i].residual,
                flag(vio.directions[i].residual), rvio.directions[i].residual, flag(rvio.directions[i].residual));
  std::printf("rank VIO %d, range-VIO %d (width %d)\n", vio.rank, rvio.rank, sys.width());
  const auto kind = c.sim.traj.kind;
  if (kind == TrajectoryKind::Hover || kind == TrajectoryKind::ConstantVelocity ||
      kind == TrajectoryKind::ConstantAcceleration) {
    const VecX mns = m.range * scale_direction(sys);
    const auto closed = scale_row_closed_form(sys, m);
    double worst = 0.0, smallest = 1e300;
    for (int i = 0; i < mns.size(); ++i) {
      worst = std::max(worst, std::abs(mns(i) - closed[i]));
      smallest = std::min(smallest, std::abs(closed[i]));
    }
    std::printf("scale rows: max |M_k N_s - n^T(p_F2 - p_ik)/b| = %.3e, min |n^T(p_F2 - p_ik)/b| = %.3e\n", worst,
                smallest);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"range-visual-inertial odometry: simulate, run, evaluate, observability"};
  app.require_subcommand(1);
  Options o;
  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "flat key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "RNG seed (overrides the config)");
    sub->add_option("--trials", o.trials, "independent seeded trials")->check(CLI::PositiveNumber);
  };
  auto* sim = app.add_subcommand("sim", "generate a synthetic dataset");
  common(sim);
  sim->add_option("--out", o.out, "output directory");
  auto* run = app.add_subcommand("run", "run the estimator on a dataset");
  common(run);
  run->add_option("--data", o.data, "dataset directory")->required();
  run->add_option("--out", o.out, "output directory");
  run->add_flag("--no-range", o.no_range, "disable range updates");
  run->add_flag("--no-vision", o.no_vision, "inertial only");
  auto* eval = app.add_subcommand("eval", "compare estimates.csv against truth.csv");
  common(eval);
  eval->add_option("--data", o.data, "dataset directory")->required();
  eval->add_option("--out", o.out, "directory holding estimates.csv");
  auto* obs = app.add_subcommand("obs", "linearized observability report");
  common(obs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }
  try {
    if (*sim) return cmd_sim(o);
    if (*run) return cmd_run(o);
    if (*eval) return cmd_eval(o);
    if (*obs) return cmd_obs(o);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
