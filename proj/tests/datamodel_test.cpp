#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "trackfuse/datamodel.hpp"
#include "trackfuse/errors.hpp"
#include "trackfuse/sequence_io.hpp"

using namespace trackfuse;

namespace {

ImuSample imu_at(double t) { return ImuSample{t, {0, 0, 9.8}, {0, 0, t}, {20, 0, -40}}; }

SubjectStreams streams(std::vector<double> cam, std::vector<double> imu, std::vector<double> ftm) {
  SubjectStreams s;
  s.id = "s0";
  for (double t : cam) s.boxes.push_back({t, BBox5{t * 100, 50, 5, 10, 20}});
  for (double t : imu) s.imu.push_back(imu_at(t));
  for (double t : ftm) s.ftm.push_back({t, 5.0 + t, 0.5});
  return s;
}

// Exhaustive nearest-neighbour scan with the earlier-tie rule.
double scan_nearest(const std::vector<double>& times, double t) {
  double best = times.front();
  for (double c : times)
    if (std::abs(c - t) < std::abs(best - t)) best = c;
  return best;
}

// Solves the normal equations of a degree-p fit by Gaussian elimination and
// evaluates the polynomial at `at`. Deliberately naive and self-contained.
double explicit_fit(const std::vector<double>& xs, const std::vector<double>& ys, int p, double at) {
  const int n = p + 1;
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) a[r][c] += std::pow(xs[i], r + c);
      a[r][n] += std::pow(xs[i], r) * ys[i];
    }
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (int k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  double value = 0.0;
  for (int k = 0; k < n; ++k) value += a[k][n] / a[k][k] * std::pow(at, k);
  return value;
}

SyncTrack frames_track(std::size_t n) {
  SyncTrack t;
  t.subject = "a";
  for (std::size_t i = 0; i < n; ++i) {
    SyncFrame f;
    f.t = 0.1 * static_cast<double>(i);
    f.box = BBox5{static_cast<double>(i), 0, 1, 1, 1};
    f.imu = imu_at(f.t);
    f.ftm = {f.t, 1, 0.1};
    t.frames.push_back(f);
  }
  return t;
}

}  // namespace

TEST(Synchronize, ExactTimestampMatch) {
  std::vector<double> imu;
  for (int i = 0; i <= 10; ++i) imu.push_back(0.01 * i);
  auto track = synchronize(streams({0.0, 0.1}, imu, {0.0}));
  ASSERT_EQ(track.frames.size(), 2u);
  EXPECT_EQ(track.frames[0].imu.t, 0.0);
  EXPECT_EQ(track.frames[1].imu.t, 0.1);
}

TEST(Synchronize, SparseFtmPairsNearest) {
  auto track = synchronize(streams({0.0, 0.1, 0.2, 0.3}, {0.0, 0.3}, {0.0, 0.3}));
  ASSERT_EQ(track.frames.size(), 4u);
  const std::vector<double> ftm = {0.0, 0.3};
  for (const auto& f : track.frames) EXPECT_EQ(f.ftm.t, scan_nearest(ftm, f.t));
  EXPECT_EQ(track.frames[1].ftm.t, 0.0);
  EXPECT_EQ(track.frames[2].ftm.t, 0.3);
}

TEST(Synchronize, TieGoesToEarlierSample) {
  std::vector<double> times = {0.0, 0.1, 0.2};
  EXPECT_EQ(nearest_index(times, 0.15), 1u);
  // exact binary tie
  std::vector<double> exact = {1.0, 2.0};
  EXPECT_EQ(nearest_index(exact, 1.5), 0u);
}

TEST(Synchronize, DownsamplesThirtyToTen) {
  std::vector<double> cam, imu;
  for (int i = 0; i < 90; ++i) cam.push_back(i / 30.0);
  for (int i = 0; i < 300; ++i) imu.push_back(i / 100.0);
  auto track = synchronize(streams(cam, imu, {0.0, 0.25, 0.5}));
  ASSERT_EQ(track.frames.size(), 30u);
  for (std::size_t k = 0; k < track.frames.size(); ++k)
    EXPECT_NEAR(track.frames[k].t, 0.1 * static_cast<double>(k), 1e-9);
}

TEST(Synchronize, EmptyStreamThrows) {
  EXPECT_THROW(synchronize(streams({0.0}, {}, {0.0})), EmptyStream);
  EXPECT_THROW(synchronize(streams({}, {0.0}, {0.0})), EmptyStream);
}

TEST(Synchronize, NoUnpairedSampleIsStrictlyNearer) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> jitter(-0.004, 0.004);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> cam, imu, ftm;
    for (int i = 0; i < 60; ++i) cam.push_back(i / 30.0 + jitter(rng));
    for (int i = 0; i < 200; ++i) imu.push_back(i / 100.0 + 0.2 * jitter(rng));
    double t = 0.0;
    while (t < 2.0) {
      ftm.push_back(t);
      t += std::uniform_real_distribution<double>(0.2, 0.33)(rng);
    }
    auto track = synchronize(streams(cam, imu, ftm));
    for (const auto& f : track.frames) {
      for (double c : imu) EXPECT_FALSE(std::abs(c - f.t) < std::abs(f.imu.t - f.t));
      for (double c : ftm) EXPECT_FALSE(std::abs(c - f.t) < std::abs(f.ftm.t - f.t));
    }
  }
}

TEST(Synchronize, Idempotent) {
  std::vector<double> cam, imu, ftm;
  for (int i = 0; i < 90; ++i) cam.push_back(i / 30.0);
  for (int i = 0; i < 300; ++i) imu.push_back(i / 100.0);
  for (int i = 0; i < 15; ++i) ftm.push_back(i / 5.0);
  auto once = synchronize(streams(cam, imu, ftm));

  // Rebuild raw streams from the synchronized table (dropping repeated samples).
  SubjectStreams again;
  again.id = once.subject;
  for (const auto& f : once.frames) {
    again.boxes.push_back({f.t, f.box});
    if (again.imu.empty() || again.imu.back().t < f.imu.t) again.imu.push_back(f.imu);
    if (again.ftm.empty() || again.ftm.back().t < f.ftm.t) again.ftm.push_back(f.ftm);
  }
  EXPECT_EQ(synchronize(again), once);
}

TEST(NormalizeImu, Examples) {
  ImuSample s{0.0, {9.8, 0, 0}, {0.2, -0.1, 0.05}, {3, 4, 0}};
  ImuSample n = normalize_imu(s, 1.0);
  EXPECT_EQ(n.acc, (Vec3{1, 0, 0}));
  EXPECT_NEAR(n.mag[0], 0.6, 1e-15);
  EXPECT_NEAR(n.mag[1], 0.8, 1e-15);
  EXPECT_EQ(n.mag[2], 0.0);
  EXPECT_EQ(n.gyro, s.gyro);
}

TEST(NormalizeImu, ZeroMagnitudeThrows) {
  ImuSample s{0.0, {0, 0, 9.8}, {}, {0, 0, 0}};
  EXPECT_THROW(normalize_imu(s), ZeroMagnitude);
}

TEST(Savgol, ReproducesQuadratics) {
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    const double t = 0.37 * i - 3.0;
    y.push_back(t * t);
  }
  auto out = savgol_filter(y, 11, 2);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(out[i], y[i], 1e-9) << i;
}

TEST(Savgol, ConstantUnchanged) {
  std::vector<double> y(15, 4.25);
  for (double v : savgol_filter(y)) EXPECT_NEAR(v, 4.25, 1e-12);
}

TEST(Savgol, ImpulseMatchesExplicitFit) {
  std::vector<double> y(21, 0.0);
  y[10] = 1.0;
  auto out = savgol_filter(y, 11, 2);
  std::vector<double> xs, ys;
  for (int k = -5; k <= 5; ++k) {
    xs.push_back(k);
    ys.push_back(k == 0 ? 1.0 : 0.0);
  }
  const double oracle = explicit_fit(xs, ys, 2, 0.0);
  EXPECT_NEAR(out[10], oracle, 1e-12);
  EXPECT_NEAR(oracle, 89.0 / 429.0, 1e-12);  // classic 11-point quadratic weight
  // Off-centre: point 7 sees the impulse at offset +3 within its window.
  xs.clear();
  ys.clear();
  for (int k = -5; k <= 5; ++k) {
    xs.push_back(k);
    ys.push_back(k == 3 ? 1.0 : 0.0);
  }
  EXPECT_NEAR(out[7], explicit_fit(xs, ys, 2, 0.0), 1e-12);
}

TEST(Savgol, Linear) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> u(33), v(33), w(33);
  const double a = 1.7, b = -0.4;
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = n(rng);
    v[i] = n(rng);
    w[i] = a * u[i] + b * v[i];
  }
  auto fu = savgol_filter(u), fv = savgol_filter(v), fw = savgol_filter(w);
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(fw[i], a * fu[i] + b * fv[i], 1e-9);
}

TEST(Savgol, BadWindowThrows) {
  std::vector<double> y(20, 1.0);
  EXPECT_THROW(savgol_filter(y, 10, 2), BadWindow);
  EXPECT_THROW(savgol_filter(y, 5, 5), BadWindow);
  std::vector<double> shortie(7, 1.0);
  EXPECT_THROW(savgol_filter(shortie, 11, 2), BadWindow);
}

TEST(MakeWindows, Counts) {
  EXPECT_EQ(window_count(1683, 30, 29), 58u);
  EXPECT_EQ(make_windows(frames_track(1683), 30, 29).size(), 58u);
  EXPECT_EQ(make_windows(frames_track(10), 10, 1).size(), 1u);
  EXPECT_THROW(make_windows(frames_track(9), 10, 1), TooShort);
  EXPECT_THROW(make_windows(frames_track(20), 2, 1), BadWindow);
  EXPECT_THROW(make_windows(frames_track(20), 5, 6), BadWindow);
}

TEST(MakeWindows, TileByStride) {
  auto track = frames_track(100);
  for (int wl : {3, 10, 30}) {
    for (int ws : {1, wl / 2, wl - 1, wl}) {
      if (ws < 1) continue;
      auto windows = make_windows(track, wl, ws);
      ASSERT_EQ(windows.size(), (100 - wl) / ws + 1);
      for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto& s = windows[w];
        EXPECT_EQ(s.start, w * ws);
        ASSERT_EQ(s.length(), static_cast<std::size_t>(wl));
        EXPECT_EQ(s.imu.size(), s.length());
        EXPECT_EQ(s.ftm.size(), s.length());
        EXPECT_EQ(s.first, s.truth.front());
        EXPECT_EQ(s.first.x, static_cast<double>(w * ws));
      }
      if (ws == wl - 1) {
        for (std::size_t w = 1; w < windows.size(); ++w)
          EXPECT_EQ(windows[w - 1].truth.back(), windows[w].truth.front());
      }
    }
  }
}

TEST(MakeWindows, SmoothingAppliesPerAxis) {
  PreprocessConfig cfg;
  cfg.smooth = true;
  auto windows = make_windows(frames_track(30), 10, 10, cfg);
  // gyro z equals t, a straight line, so smoothing leaves it intact
  EXPECT_NEAR(windows[1].imu[3][5], 1.3, 1e-9);
  EXPECT_NEAR(windows[0].imu[0][2], 1.0, 1e-12);
}

TEST(SequenceIo, RoundTrip) {
  SceneSequence seq;
  seq.scene = "unit";
  seq.camera_fps = 10;
  seq.subjects.push_back(streams({0.0, 0.1, 0.2}, {0.0, 0.01, 0.1234567890123}, {0.0, 0.2}));
  auto other = streams({0.05}, {0.05}, {0.05});
  other.id = "s1";
  other.boxes[0].box.d = 1.0 / 3.0;
  seq.subjects.push_back(other);
  std::stringstream buf;
  write_sequence(seq, buf);
  EXPECT_EQ(read_sequence(buf), seq);
}

TEST(SequenceIo, MissingFieldIsSchemaError) {
  std::stringstream in(
      "{\"scene\":\"a\",\"camera_fps\":10,\"subjects\":[\"p\"]}\n"
      "{\"subj\":\"p\",\"mod\":\"ftm\",\"v\":[1,0.1]}\n");
  try {
    read_sequence(in);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "t");
  }
}

TEST(SequenceIo, OutOfOrderIsParseError) {
  std::stringstream in(
      "{\"scene\":\"a\",\"camera_fps\":10,\"subjects\":[\"p\"]}\n"
      "{\"subj\":\"p\",\"mod\":\"ftm\",\"t\":0.5,\"v\":[1,0.1]}\n"
      "{\"subj\":\"p\",\"mod\":\"imu\",\"t\":0.1,\"v\":[0,0,9.8,0,0,0,1,0,0]}\n"
      "{\"subj\":\"p\",\"mod\":\"ftm\",\"t\":0.4,\"v\":[1,0.1]}\n");
  try {
    read_sequence(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(SequenceIo, BadRecordsAreParseErrors) {
  const std::string header = "{\"scene\":\"a\",\"camera_fps\":10,\"subjects\":[\"p\"]}\n";
  for (const char* rec : {"{\"subj\":\"p\",\"mod\":\"bbx\",\"t\":0,\"v\":[1,2,3]}",
                          "{\"subj\":\"q\",\"mod\":\"ftm\",\"t\":0,\"v\":[1,2]}",
                          "{\"subj\":\"p\",\"mod\":\"gps\",\"t\":0,\"v\":[1,2]}", "not json"}) {
    std::stringstream in(header + rec + "\n");
    EXPECT_THROW(read_sequence(in), ParseError) << rec;
  }
}
