#include "trackfuse/datamodel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "trackfuse/errors.hpp"

namespace trackfuse {

std::size_t nearest_index(std::span<const double> times, double t) {
  if (times.empty()) throw EmptyStream("nearest_index on empty stream");
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0;
  if (it == times.end()) return times.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - times.begin());
  const std::size_t lo = hi - 1;
  return (t - times[lo] <= times[hi] - t) ? lo : hi;
}

namespace {

template <class Sample>
std::vector<double> times_of(const std::vector<Sample>& samples) {
  std::vector<double> t;
  t.reserve(samples.size());
  for (const auto& s : samples) t.push_back(s.t);
  return t;
}

}  // namespace

SyncTrack synchronize(const SubjectStreams& streams, const SyncConfig& cfg) {
  if (streams.boxes.empty()) throw EmptyStream("subject " + streams.id + ": no camera frames");
  if (streams.imu.empty()) throw EmptyStream("subject " + streams.id + ": no IMU samples");
  if (streams.ftm.empty()) throw EmptyStream("subject " + streams.id + ": no FTM samples");
  if (!(cfg.target_rate > 0.0)) throw BadWindow("target rate must be positive");

  const auto cam_t = times_of(streams.boxes);
  const auto imu_t = times_of(streams.imu);
  const auto ftm_t = times_of(streams.ftm);

  SyncTrack track;
  track.subject = streams.id;
  const double period = 1.0 / cfg.target_rate;
  const double t0 = cam_t.front();
  const double t_end = cam_t.back() + 1e-9;
  std::size_t last_kept = cam_t.size();
  for (std::size_t k = 0;; ++k) {
    const double tick = t0 + static_cast<double>(k) * period;
    if (tick > t_end) break;
    const std::size_t frame = nearest_index(cam_t, tick);
    if (frame == last_kept) continue;
    last_kept = frame;
    const double t = cam_t[frame];
    track.frames.push_back(SyncFrame{t, streams.boxes[frame].box,
                                     streams.imu[nearest_index(imu_t, t)],
                                     streams.ftm[nearest_index(ftm_t, t)]});
  }
  return track;
}

std::vector<SyncTrack> synchronize(const SceneSequence& seq, const SyncConfig& cfg) {
  std::vector<SyncTrack> out;
  out.reserve(seq.subjects.size());
  for (const auto& s : seq.subjects) out.push_back(synchronize(s, cfg));
  return out;
}

ImuSample normalize_imu(const ImuSample& s, double alpha) {
  const double norm = std::sqrt(s.mag[0] * s.mag[0] + s.mag[1] * s.mag[1] + s.mag[2] * s.mag[2]);
  if (norm == 0.0) throw ZeroMagnitude("magnetometer reading has zero magnitude");
  ImuSample out = s;
  for (int j = 0; j < 3; ++j) {
    out.acc[j] = s.acc[j] / kGravity;
    out.mag[j] = alpha * s.mag[j] / norm;
  }
  return out;
}

std::vector<double> savgol_coefficients(int window, int degree, int position) {
  if (window <= 0 || window % 2 == 0) throw BadWindow("window must be a positive odd number");
  if (degree < 0 || degree >= window) throw BadWindow("degree must be in [0, window)");
  const int half = window / 2;
  Eigen::MatrixXd vander(window, degree + 1);
  for (int i = 0; i < window; ++i) {
    double p = 1.0;
    for (int k = 0; k <= degree; ++k, p *= static_cast<double>(i - half)) vander(i, k) = p;
  }
  // Row of the hat matrix: evaluation basis at `position` times the pseudo-inverse.
  Eigen::RowVectorXd basis(degree + 1);
  double p = 1.0;
  for (int k = 0; k <= degree; ++k, p *= static_cast<double>(position - half)) basis(k) = p;
  const Eigen::MatrixXd pinv = vander.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(window, window));
  const Eigen::RowVectorXd row = basis * pinv;
  return std::vector<double>(row.data(), row.data() + window);
}

std::vector<double> savgol_filter(std::span<const double> series, int window, int degree) {
  if (window <= 0 || window % 2 == 0) throw BadWindow("window must be a positive odd number");
  if (degree < 0 || degree >= window) throw BadWindow("degree must be in [0, window)");
  const std::size_t n = series.size();
  if (n < static_cast<std::size_t>(window))
    throw BadWindow("series of length " + std::to_string(n) + " shorter than window " +
                    std::to_string(window));
  const int half = window / 2;
  std::vector<double> out(n);
  const auto center = savgol_coefficients(window, degree, half);
  for (std::size_t i = half; i + half < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < window; ++k) acc += center[k] * series[i - half + k];
    out[i] = acc;
  }
  for (int pos = 0; pos < half; ++pos) {
    const auto head = savgol_coefficients(window, degree, pos);
    const auto tail = savgol_coefficients(window, degree, window - 1 - pos);
    double a = 0.0, b = 0.0;
    for (int k = 0; k < window; ++k) {
      a += head[k] * series[k];
      b += tail[k] * series[n - window + k];
    }
    out[pos] = a;
    out[n - 1 - pos] = b;
  }
  return out;
}

std::vector<ImuRow> imu_features(const SyncTrack& track, const PreprocessConfig& cfg) {
  std::vector<ImuRow> rows;
  rows.reserve(track.frames.size());
  for (const auto& f : track.frames) {
    const ImuSample s = cfg.normalize ? normalize_imu(f.imu, cfg.mag_alpha) : f.imu;
    rows.push_back({s.acc[0], s.acc[1], s.acc[2], s.gyro[0], s.gyro[1], s.gyro[2], s.mag[0],
                    s.mag[1], s.mag[2]});
  }
  if (cfg.smooth) {
    std::vector<double> column(rows.size());
    for (std::size_t j = 0; j < 9; ++j) {
      for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i][j];
      const auto smoothed = savgol_filter(column, cfg.savgol_window, cfg.savgol_degree);
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i][j] = smoothed[i];
    }
  }
  return rows;
}

std::vector<FtmRow> ftm_features(const SyncTrack& track) {
  std::vector<FtmRow> rows;
  rows.reserve(track.frames.size());
  for (const auto& f : track.frames) rows.push_back({f.ftm.r, f.ftm.std});
  return rows;
}

std::size_t window_count(std::size_t frames, int wl, int ws) {
  if (wl <= 2) throw BadWindow("window length must exceed 2");
  if (ws < 1 || ws > wl) throw BadWindow("window stride must be in [1, WL]");
  if (frames < static_cast<std::size_t>(wl))
    throw TooShort(std::to_string(frames) + " frames is shorter than WL=" + std::to_string(wl));
  return (frames - static_cast<std::size_t>(wl)) / static_cast<std::size_t>(ws) + 1;
}

std::vector<WindowSample> make_windows(const SyncTrack& track, int wl, int ws,
                                       const PreprocessConfig& cfg) {
  const std::size_t count = window_count(track.frames.size(), wl, ws);
  const auto imu = imu_features(track, cfg);
  const auto ftm = ftm_features(track);
  std::vector<WindowSample> windows;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * static_cast<std::size_t>(ws);
    WindowSample s;
    s.start = start;
    s.first = track.frames[start].box;
    for (std::size_t i = start; i < start + static_cast<std::size_t>(wl); ++i) {
      s.imu.push_back(imu[i]);
      s.ftm.push_back(ftm[i]);
      s.truth.push_back(track.frames[i].box);
    }
    windows.push_back(std::move(s));
  }
  return windows;
}

}  // namespace trackfuse
