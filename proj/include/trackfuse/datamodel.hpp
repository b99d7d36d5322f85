#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace trackfuse {

using Vec3 = std::array<double, 3>;

/// One bounding box: centroid (x, y) and size (w, h) in pixels, centroid
/// depth d in meters.
struct BBox5 {
  double x = 0.0;
  double y = 0.0;
  double d = 0.0;
  double w = 1.0;
  double h = 1.0;

  std::array<double, 5> to_array() const { return {x, y, d, w, h}; }
  static BBox5 from_array(std::span<const double> v) { return {v[0], v[1], v[2], v[3], v[4]}; }
  bool operator==(const BBox5&) const = default;
};

/// A tracklet: one box per frame of a window.
using Tracklet = std::vector<BBox5>;

struct ImuSample {
  double t = 0.0;
  Vec3 acc{};   // m/s^2, includes the gravity reaction
  Vec3 gyro{};  // rad/s
  Vec3 mag{};   // uT
  bool operator==(const ImuSample&) const = default;
};

struct FtmSample {
  double t = 0.0;
  double r = 0.0;    // estimated range to the access point, m
  double std = 0.0;  // per-burst standard deviation, m
  bool operator==(const FtmSample&) const = default;
};

struct BoxSample {
  double t = 0.0;
  BBox5 box;
  bool operator==(const BoxSample&) const = default;
};

/// Raw streams of one subject, each sorted by strictly increasing time.
struct SubjectStreams {
  std::string id;
  std::vector<BoxSample> boxes;
  std::vector<ImuSample> imu;
  std::vector<FtmSample> ftm;
  bool operator==(const SubjectStreams&) const = default;
};

struct SceneSequence {
  std::string scene;
  double camera_fps = 10.0;
  std::vector<SubjectStreams> subjects;
  bool operator==(const SceneSequence&) const = default;
};

struct SyncConfig {
  double target_rate = 10.0;  // Hz
};

/// One camera frame with the phone samples nearest to it in time.
struct SyncFrame {
  double t = 0.0;
  BBox5 box;
  ImuSample imu;
  FtmSample ftm;
  bool operator==(const SyncFrame&) const = default;
};

struct SyncTrack {
  std::string subject;
  std::vector<SyncFrame> frames;
  bool operator==(const SyncTrack&) const = default;
};

// Downsamples the camera stream to cfg.target_rate, keeping the frame nearest
// each uniform tick, then pairs each kept frame with the IMU and FTM samples
// nearest in time. Ties go to the earlier sample. Throws EmptyStream.
SyncTrack synchronize(const SubjectStreams& streams, const SyncConfig& cfg = {});
std::vector<SyncTrack> synchronize(const SceneSequence& seq, const SyncConfig& cfg = {});

// Index of the sample nearest to t in a sorted list of times; ties pick the
// earlier sample.
std::size_t nearest_index(std::span<const double> times, double t);

inline constexpr double kGravity = 9.8;

// acc / 9.8, mag rescaled to alpha * mag / |mag|, gyro untouched.
ImuSample normalize_imu(const ImuSample& s, double alpha = 1.0);

// Savitzky-Golay smoothing. Interior points use the centered least-squares
// polynomial; the first and last window/2 points are evaluated on the
// polynomial fitted to the first (last) full window, so polynomials of degree
// <= `degree` are reproduced everywhere. Throws BadWindow.
std::vector<double> savgol_filter(std::span<const double> series, int window = 11, int degree = 2);

// Smoothing weights applied to a full window to get its value at `position`
// (0-based within the window).
std::vector<double> savgol_coefficients(int window, int degree, int position);

using ImuRow = std::array<double, 9>;  // acc, gyro, mag
using FtmRow = std::array<double, 2>;  // r, std

struct PreprocessConfig {
  bool normalize = true;
  double mag_alpha = 1.0;
  bool smooth = false;
  int savgol_window = 11;
  int savgol_degree = 2;
};

// Per-frame IMU feature rows for a synchronized track.
std::vector<ImuRow> imu_features(const SyncTrack& track, const PreprocessConfig& cfg = {});
std::vector<FtmRow> ftm_features(const SyncTrack& track);

/// Aligned training/evaluation unit for one window.
struct WindowSample {
  BBox5 first;               // first-frame observation
  std::vector<ImuRow> imu;   // WL x 9
  std::vector<FtmRow> ftm;   // WL x 2
  Tracklet truth;            // WL x 5 ground truth
  std::size_t start = 0;     // index of the first frame in the track

  std::size_t length() const { return truth.size(); }
};

// floor((F - wl) / ws) + 1 sliding windows. Throws BadWindow for wl <= 2 or
// ws outside [1, wl], TooShort when the track has fewer than wl frames.
std::vector<WindowSample> make_windows(const SyncTrack& track, int wl, int ws,
                                       const PreprocessConfig& cfg = {});

// Number of windows make_windows produces for F frames.
std::size_t window_count(std::size_t frames, int wl, int ws);

}  // namespace trackfuse
