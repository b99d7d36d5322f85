#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trackfuse/datamodel.hpp"

namespace trackfuse::sim {

// World frame: x, y on the flat ground, z up. The camera sits above the
// origin looking along +x. Headings are measured counter-clockwise from +x.
struct CameraModel {
  int width = 1280;
  int height = 720;
  double focal = 800.0;
  double mount_height = 2.5;  // m
  double pitch = 0.17;        // rad, positive tilts the view down
  Vec3 ap{0.0, 0.0, 2.5};     // Wi-Fi access point, next to the camera

  Vec3 position() const { return {0.0, 0.0, mount_height}; }
};

enum class MotionKind { ConstantVelocity, PiecewiseTurn, RandomWalk };

MotionKind parse_motion_kind(const std::string& name);
std::string to_string(MotionKind kind);

struct MotionModel {
  MotionKind kind = MotionKind::RandomWalk;
  double speed = 1.2;       // m/s, mean
  double turn_rate = 0.3;   // rad/s
  double segment_s = 3.0;   // piecewise-turn segment length
  double subject_height = 1.7;
  double subject_width = 0.5;
  double gait_acc = 6.5;    // peak surge acceleration while walking, m/s^2
  double x0 = 10.0, y0 = 0.0, heading0 = 1.5707963267948966;
  Vec3 mount_rpy{};         // fixed phone mounting rotation, rad
};

struct NoiseSpec {
  double acc_bias = 0.0, acc_sigma = 0.0;
  double gyro_bias = 0.0, gyro_sigma = 0.0;
  double mag_sigma = 0.0;
  double ftm_sigma0 = 0.0, ftm_slope = 0.0, ftm_bias = 0.0;

  static NoiseSpec none() { return {}; }
  // Phone-grade defaults.
  static NoiseSpec moderate() { return {0.05, 0.15, 0.002, 0.01, 0.5, 0.3, 0.05, 1.5}; }
};

struct PathPoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};
using Path = std::vector<PathPoint>;

// Walker on the ground plane, integrated with a forward Euler step. Kinds
// other than constant-velocity add a periodic surge (one acceleration peak per
// 0.6 m) and steer back when leaving the visible area.
Path gen_trajectory(std::uint64_t seed, double duration_s, double rate_hz, const MotionModel& motion);

// Phone readings at every path sample. Acceleration and heading rate come from
// forward differences so a strapdown integration reproduces the path.
std::vector<ImuSample> derive_imu(const Path& path, const NoiseSpec& noise, std::uint64_t seed,
                                  const Vec3& mount_rpy = {});

inline constexpr double kMagHorizontal = 22.0;  // uT
inline constexpr double kMagVertical = 40.0;

std::vector<FtmSample> derive_ftm(const Path& path, const CameraModel& cam, const NoiseSpec& noise,
                                  std::uint64_t seed, double phone_height, double rate_hz = 5.0);

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

// Pinhole projection of a world point. Throws BehindCamera.
Pixel project_point(const CameraModel& cam, const Vec3& p);

// Box of an upright subject at ground position (x, y): centred on the
// projected centroid, sized by the centroid's depth along the optical axis. d
// is the range from the camera to the centroid.
BBox5 project_subject(const CameraModel& cam, double x, double y, double subject_height,
                      double subject_width);

std::vector<BoxSample> project_bbx(const Path& path, const CameraModel& cam, double subject_height,
                                   double subject_width, double fps = 10.0);

struct GroundCorrespondence {
  double gx = 0.0, gy = 0.0;  // ground meters
  double u = 0.0, v = 0.0;    // pixels
};

// Four ground points spread over the walking area with their projections.
std::vector<GroundCorrespondence> ground_correspondences(const CameraModel& cam);

struct SceneConfig {
  std::string name = "sim";
  int subjects = 1;
  double duration_s = 60.0;
  double imu_rate = 100.0;
  double camera_fps = 10.0;
  double ftm_rate = 5.0;
  bool randomize_start = true;  // draw start pose and speed per subject
  CameraModel camera;
  MotionModel motion;
  NoiseSpec noise = NoiseSpec::moderate();
};

struct SimulatedSubject {
  std::string id;
  MotionModel motion;
  Path path;
};

struct Scene {
  SceneSequence sequence;
  std::vector<SimulatedSubject> truth;
};

Scene simulate_scene(std::uint64_t seed, const SceneConfig& cfg);

// simulate_scene + save_sequence. Throws IoError.
Scene emit_dataset(std::uint64_t seed, const SceneConfig& cfg, const std::filesystem::path& path);

}  // namespace trackfuse::sim
