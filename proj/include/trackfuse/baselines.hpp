#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <vector>

#include "trackfuse/datamodel.hpp"
#include "trackfuse/reconstructor.hpp"

namespace trackfuse::baselines {

// ---- strapdown integration ----

struct SinsState {
  Eigen::Matrix3d O = Eigen::Matrix3d::Identity();  // body -> navigation frame
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Vector3d L = Eigen::Vector3d::Zero();
};

// Rotation for a rotation vector (Rodrigues).
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w);

struct SinsResult {
  double dl = 0.0;    // |displacement|, m
  double dpsi = 0.0;  // heading change, rad
  Eigen::Vector3d displacement = Eigen::Vector3d::Zero();
};

// Closed-form displacement after acc.size() steps of length dt, starting with
// velocity v0 (initial body frame). acc rows carry the gravity reaction g0.
SinsResult sins_displacement(std::span<const Vec3> acc, std::span<const Vec3> gyro,
                             const Vec3& v0, const Vec3& g0, double dt);

// ---- pedestrian dead reckoning ----

struct ScaleModel {
  double kw = 0.0, bw = 1.0;
  double kh = 0.0, bh = 1.0;
  double kd = 0.0, bd = 0.0;  // d = kd * y^2 + bd
};

struct ScaleSample {
  double y = 0.0;  // image row of the subject's feet
  double w = 0.0, h = 0.0, d = 0.0;
};

// w, h linear in y; d quadratic in y without a linear term. Throws Degenerate.
ScaleModel fit_scale_model(std::span<const ScaleSample> samples);

struct ScaleEstimate {
  double w = 0.0, h = 0.0, d = 0.0;
};
ScaleEstimate predict_scale(double y, const ScaleModel& m);

struct Correspondence {
  double gx = 0.0, gy = 0.0;  // ground, m
  double u = 0.0, v = 0.0;    // image, px
};

// Direct linear transform from exactly (or at least) four pairs, normalized so
// H(2,2) = 1. Throws Degenerate.
Eigen::Matrix3d fit_homography(std::span<const Correspondence> pairs);

struct Point2 {
  double x = 0.0, y = 0.0;
};

// Projective mapping of ground points. Throws Singular, AtInfinity.
std::vector<Point2> ned_to_image(std::span<const Point2> points, const Eigen::Matrix3d& h);

struct PdrParams {
  double stride = 0.6;          // m
  double step_threshold = 10.8; // m/s^2
  double refractory_s = 0.3;
  double rate_hz = 10.0;        // row rate of the IMU tracklet
  double gyro_weight = 0.98;
  Eigen::Matrix3d homography = Eigen::Matrix3d::Identity();  // ground -> image
  ScaleModel scale;
};

struct PdrTrack {
  std::vector<Point2> positions;
  std::vector<bool> steps;
  std::vector<double> heading;
};

// Step flags from |acc| peaks, fused heading, and the stride updates.
// `imu` rows are normalized (acc in g, unit mag).
PdrTrack pdr_track(std::span<const ImuRow> imu, const Point2& origin, const PdrParams& params);

// Tilt-compensated magnetic heading given a gravity direction estimate.
double mag_heading(const Vec3& mag, const Vec3& gravity_dir);

// ---- Kalman filter ----

struct KfModel {
  Eigen::MatrixXd A, H, Q, R;
  // Constant velocity over BBox5 + per-frame velocities, all noise zero.
  static KfModel constant_velocity();
};

struct KfState {
  Eigen::VectorXd S;
  Eigen::MatrixXd P;
};

KfState kf_predict(const KfState& state, const KfModel& model);
// Throws NonInvertible when H P H^T + R is singular.
KfState kf_update(const KfState& state, const Eigen::VectorXd& y, const KfModel& model);

// ---- reconstructors ----

Tracklet reconstruct_bc(const BBox5& first, std::size_t wl);

class BroadcastReconstructor : public Reconstructor {
 public:
  std::string name() const override { return "bc"; }
  Tracklet reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                       std::span<const FtmRow> ftm) override;
};

Tracklet reconstruct_pdr(const BBox5& first, std::span<const ImuRow> imu, const PdrParams& params);

class PdrReconstructor : public Reconstructor {
 public:
  explicit PdrReconstructor(PdrParams params) : params_(std::move(params)) {}
  std::string name() const override { return "pdr"; }
  Tracklet reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                       std::span<const FtmRow> ftm) override;

 private:
  PdrParams params_;
};

// Window-to-window tracker: each window's first box is a measurement of the
// anchor state; the next anchor is predicted `stride` frames ahead and the
// window is filled by linear interpolation.
class KalmanReconstructor : public Reconstructor {
 public:
  explicit KalmanReconstructor(int stride) : stride_(stride) {}
  std::string name() const override { return "kf"; }
  void reset() override { started_ = false; }
  Tracklet reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                       std::span<const FtmRow> ftm) override;
  const KfState& state() const { return state_; }

 private:
  int stride_;
  bool started_ = false;
  KfModel model_ = KfModel::constant_velocity();
  KfState state_;
};

// ---- calibration file ----

struct Calibration {
  PdrParams pdr;
  std::vector<Correspondence> ground;
};

// key=value text; the homography is refitted from the ground pairs on load.
// Throws MissingCalibration, ConfigError.
Calibration load_calibration(const std::filesystem::path& path);
void save_calibration(const Calibration& calib, const std::filesystem::path& path);

}  // namespace trackfuse::baselines
