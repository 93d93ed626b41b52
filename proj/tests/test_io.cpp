#include "rvio/io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <unistd.h>

using namespace rvio;
using namespace rvio::test;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rvio_io_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

Config parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "cfg");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

Config short_config(TrajectoryKind kind, double duration) {
  Config c;
  c.sim.traj.kind = kind;
  c.sim.traj.duration = duration;
  c.sim.scene.landmark_density = 0.5;
  return c;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Config, ParsesKeysCommentsAndBlankLines) {
  const Config c = parse(
      "# comment\n"
      "\n"
      "window_size = 6   # trailing comment\n"
      "sigma_v=0.003\n"
      "trajectory = circle\n"
      "gravity_z = -9.80665\n"
      "use_range = false\n");
  EXPECT_EQ(c.est.window_size, 6);
  EXPECT_EQ(c.est.noise.sigma_v, 0.003);
  EXPECT_EQ(c.sim.traj.kind, TrajectoryKind::Circle);
  EXPECT_EQ(c.est.world.g_w.z(), -9.80665);
  EXPECT_FALSE(c.est.use_range);
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_of("window_size = 4\nbogus = 1\n"), "cfg:2: unknown key 'bogus'");
  EXPECT_NE(error_of("sigma_v = abc\n").find("cfg:1:"), std::string::npos);
  EXPECT_NE(error_of("sigma_v = nan\n").find("non-finite"), std::string::npos);
  EXPECT_NE(error_of("\n\nwindow_size\n").find("cfg:3: expected key = value"), std::string::npos);
  EXPECT_NE(error_of("use_range = maybe\n").find("not a boolean"), std::string::npos);
  EXPECT_NE(error_of("trajectory = loop\n").find("unknown trajectory kind"), std::string::npos);
}

TEST(Config, Validation) {
  EXPECT_NE(error_of("cam_rate = 400\n").find("imu_rate must be >= cam_rate"), std::string::npos);
  EXPECT_NE(error_of("window_size = 1\n").find("window_size"), std::string::npos);
  EXPECT_NE(error_of("d_min = 0\n").find("d_min"), std::string::npos);
  EXPECT_NE(error_of("slam_confidence = 1\n").find("confidences"), std::string::npos);
  EXPECT_NE(error_of("q_ic_w = 2\n").find("unit quaternion"), std::string::npos);
  EXPECT_THROW(load_config("/nonexistent/rvio.cfg"), DataError);
}

TEST(Csv, SeventeenDigitsRoundTripBitExactly) {
  for (int i = 0; i < 10000; ++i) {
    const double v = std::ldexp(uniform(-1, 1), static_cast<int>(uniform(-300, 300)));
    EXPECT_EQ(detail::parse_double(detail::fmt(v)), v);
  }
  EXPECT_EQ(detail::parse_double(detail::fmt(0.1)), 0.1);
  EXPECT_EQ(detail::parse_double("+2.5"), 2.5);
}

TEST(Dataset, WriteReadRoundTrip) {
  const Config c = short_config(TrajectoryKind::Circle, 2.0);
  const Dataset ds = simulate(c, 3);
  const fs::path dir = scratch("roundtrip");
  write_dataset(dir, ds, "seed = 3\n");
  const Dataset back = read_dataset(dir, true);
  ASSERT_EQ(back.imu.size(), ds.imu.size());
  for (std::size_t i = 0; i < ds.imu.size(); ++i) {
    EXPECT_EQ(back.imu[i].t, ds.imu[i].t);
    EXPECT_EQ(back.imu[i].a_imu, ds.imu[i].a_imu);
    EXPECT_EQ(back.imu[i].omega_imu, ds.imu[i].omega_imu);
  }
  // Frames come back as the union of feature and range timestamps; all frames here have features.
  ASSERT_EQ(back.frames.size(), ds.frames.size());
  for (std::size_t f = 0; f < ds.frames.size(); ++f) {
    ASSERT_EQ(back.frames[f].obs.size(), ds.frames[f].obs.size());
    for (std::size_t j = 0; j < ds.frames[f].obs.size(); ++j) {
      EXPECT_EQ(back.frames[f].obs[j].track_id, ds.frames[f].obs[j].track_id);
      EXPECT_EQ(back.frames[f].obs[j].z, ds.frames[f].obs[j].z);
    }
  }
  ASSERT_EQ(back.ranges.size(), ds.ranges.size());
  for (std::size_t i = 0; i < ds.ranges.size(); ++i) EXPECT_EQ(back.ranges[i].range, ds.ranges[i].range);
  ASSERT_EQ(back.truth.size(), ds.truth.size());
  EXPECT_EQ(back.truth[17].x.p_wi, ds.truth[17].x.p_wi);
  EXPECT_EQ(slurp(dir / "meta.txt"), "seed = 3\n");
}

TEST(Dataset, HoverOneSecondImuRowCount) {
  const Dataset ds = simulate(short_config(TrajectoryKind::Hover, 1.0), 1);
  const fs::path dir = scratch("hover1s");
  write_dataset(dir, ds, "");
  const std::string imu = slurp(dir / "imu.csv");
  EXPECT_EQ(count_lines(imu), 201u);  // 200 rows plus header
  EXPECT_EQ(imu.substr(0, imu.find('\n')), "t,wx,wy,wz,ax,ay,az");
}

TEST(Dataset, SameSeedByteIdenticalFiles) {
  const Config c = short_config(TrajectoryKind::Sinusoid, 2.0);
  const fs::path a = scratch("seed_a"), b = scratch("seed_b"), d = scratch("seed_c");
  write_dataset(a, simulate(c, 11), "");
  write_dataset(b, simulate(c, 11), "");
  write_dataset(d, simulate(c, 12), "");
  for (const char* f : {"imu.csv", "features.csv", "range.csv", "truth.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_NE(slurp(a / "imu.csv"), slurp(d / "imu.csv"));
}

TEST(Dataset, MalformedInputsAreDiagnosed) {
  const fs::path dir = scratch("malformed");
  write_dataset(dir, simulate(short_config(TrajectoryKind::Hover, 1.0), 1), "");
  const std::string imu = slurp(dir / "imu.csv");
  const auto expect_error = [&](const std::string& file, const std::string& content, const std::string& needle) {
    const std::string keep = slurp(dir / file);
    dump(dir / file, content);
    try {
      read_dataset(dir);
      ADD_FAILURE() << "no error for " << needle;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
    dump(dir / file, keep);
  };
  expect_error("imu.csv", imu + "5.0,0,0\n", "imu.csv:202: expected 7 fields, got 3");
  expect_error("imu.csv", imu + "5.0,0,0,nan,0,0,0\n", "imu.csv:202: column 'wz': non-finite");
  expect_error("imu.csv", imu + "0.5,0,0,0,0,0,0\n", "imu.csv:202: timestamps must be strictly increasing");
  expect_error("imu.csv", "t,wx\n", "imu.csv:1: unexpected header");
  expect_error("imu.csv", "", "empty file");
  expect_error("imu.csv", "t,wx,wy,wz,ax,ay,az\n", "no IMU samples");
  expect_error("range.csv", "t,range\n0.0,-1\n", "range.csv:2: range must be positive");
  expect_error("features.csv", "t,track_id,u,v\n0.1,1.5,0,0\n", "column 'track_id': not an integer");
  expect_error("truth.csv", "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz\n0,0,0,0,0,0,0,3,0,0,0\n", "quaternion is not normalized");
  fs::remove(dir / "range.csv");
  EXPECT_THROW(read_dataset(dir), DataError);
}

TEST(Estimates, WriteReadRoundTrip) {
  std::vector<EstimateRecord> est(3);
  for (auto& e : est) {
    e.t = uniform(0, 10);
    e.x.p_wi = rand_vec(5);
    e.x.q_wi = rand_quat();
    e.x.b_a = rand_vec(0.1);
    const MatX p = rand_spd(15);
    e.P = p;
  }
  const fs::path p = scratch("est") / "estimates.csv";
  write_estimates(p, est);
  const auto back = read_estimates(p);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].t, est[i].t);
    EXPECT_EQ(back[i].x.p_wi, est[i].x.p_wi);
    EXPECT_EQ(back[i].x.b_a, est[i].x.b_a);
    EXPECT_EQ(back[i].P.diagonal(), est[i].P.diagonal());
    EXPECT_EQ(MatX(back[i].P.topLeftCorner<9, 9>()), MatX(est[i].P.topLeftCorner<9, 9>()));
  }
}

TEST(Dataset, FuzzedFilesNeverCrash) {
  const fs::path dir = scratch("fuzz");
  Config c = short_config(TrajectoryKind::Circle, 1.5);
  write_dataset(dir, simulate(c, 2), "");
  std::map<std::string, std::string> pristine;
  for (const char* f : {"imu.csv", "features.csv", "range.csv", "truth.csv"}) pristine[f] = slurp(dir / f);
  std::mt19937_64 g(99);
  const std::vector<std::string> junk{"nan", "inf", "-", "", "1e999", "abc", ",,", "0x10", "\"1\"", "  "};
  int parsed = 0, diagnosed = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto it = pristine.begin();
    std::advance(it, static_cast<long>(g() % pristine.size()));
    std::string s = it->second;
    switch (g() % 4) {
      case 0: s.resize(g() % s.size()); break;  // truncate mid-row
      case 1: {
        const std::size_t at = g() % s.size();
        const std::size_t end = std::min(s.size(), at + g() % 12);
        s.replace(at, end - at, junk[g() % junk.size()]);
        break;
      }
      case 2: {
        const auto nl = s.find('\n', g() % s.size());
        if (nl != std::string::npos) s.insert(nl, ",7");
        break;
      }
      default: {
        const std::size_t at = g() % s.size();
        s[at] = static_cast<char>(g() % 256);
      }
    }
    for (const auto& [f, content] : pristine) dump(dir / f, f == it->first ? s : content);
    try {
      const Dataset ds = read_dataset(dir);
      ++parsed;
      Estimator est(c.est);
      est.run(ds);
    } catch (const DataError&) {
      ++diagnosed;
    } catch (const NumericalError&) {
      ++diagnosed;
    } catch (const std::invalid_argument&) {
      ++diagnosed;
    } catch (const std::exception& e) {
      ADD_FAILURE() << "undiagnosed exception: " << e.what();
    }
  }
  EXPECT_GT(diagnosed, 0);
  EXPECT_GT(parsed, 0);
}
