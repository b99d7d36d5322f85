#include "trackfuse/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "trackfuse/errors.hpp"
#include "trackfuse/sequence_io.hpp"

namespace trackfuse::sim {

namespace {

constexpr double kStride = 0.6;
constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) { return std::remainder(a, 2.0 * kPi); }

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Body -> world for yaw psi, then into the phone frame through the mount.
Vec3 world_to_body(const Vec3& w, double psi) {
  const double c = std::cos(psi), s = std::sin(psi);
  return {c * w[0] + s * w[1], -s * w[0] + c * w[1], w[2]};
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 rpy_matrix(const Vec3& rpy) {
  const double cr = std::cos(rpy[0]), sr = std::sin(rpy[0]);
  const double cp = std::cos(rpy[1]), sp = std::sin(rpy[1]);
  const double cy = std::cos(rpy[2]), sy = std::sin(rpy[2]);
  return {{{cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr},
           {sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr},
           {-sp, cp * sr, cp * cr}}};
}

Vec3 transpose_apply(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
          m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
          m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2]};
}

bool inside_area(double x, double y, double margin) {
  return x > 4.0 + margin && x < 16.0 - margin && std::abs(y) < 0.55 * x - margin;
}

}  // namespace

MotionKind parse_motion_kind(const std::string& name) {
  if (name == "constant-velocity") return MotionKind::ConstantVelocity;
  if (name == "piecewise-turn") return MotionKind::PiecewiseTurn;
  if (name == "random-walk") return MotionKind::RandomWalk;
  throw ConfigError("unknown motion kind '" + name + "'");
}

std::string to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::ConstantVelocity: return "constant-velocity";
    case MotionKind::PiecewiseTurn: return "piecewise-turn";
    case MotionKind::RandomWalk: return "random-walk";
  }
  return "?";
}

Path gen_trajectory(std::uint64_t seed, double duration_s, double rate_hz, const MotionModel& motion) {
  if (!(duration_s > 0.0)) throw ConfigError("duration must be positive");
  if (!(rate_hz > 0.0)) throw ConfigError("rate must be positive");
  if (motion.speed < 0.0) throw ConfigError("speed must be non-negative");
  auto rng = make_rng(seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double dt = 1.0 / rate_hz;
  const auto steps = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
  const bool walking = motion.kind != MotionKind::ConstantVelocity;

  // Surge: speed oscillates twice per 1.2 m gait cycle, giving one |acc| peak
  // per stride.
  double amp = 0.0, omega_gait = 0.0;
  const double phase = 2.0 * kPi * unit(rng);
  if (walking && motion.speed > 0.0 && motion.gait_acc > 0.0) {
    omega_gait = 2.0 * kPi * motion.speed / (2.0 * kStride);
    amp = std::min(motion.gait_acc / (motion.speed * omega_gait), 0.9);
  }

  Path path;
  path.reserve(steps + 1);
  PathPoint p{0.0, motion.x0, motion.y0, motion.heading0};
  double random_rate = 0.0;
  double next_change = 0.0;
  for (std::size_t k = 0;; ++k) {
    p.t = static_cast<double>(k) * dt;
    path.push_back(p);
    if (k == steps) break;

    double rate = 0.0;
    switch (motion.kind) {
      case MotionKind::ConstantVelocity: break;
      case MotionKind::PiecewiseTurn: {
        const auto seg = static_cast<long>(std::floor(p.t / motion.segment_s));
        if (seg % 2 == 0) rate = (seg % 4 == 0) ? motion.turn_rate : -motion.turn_rate;
        break;
      }
      case MotionKind::RandomWalk:
        if (p.t >= next_change) {
          random_rate = motion.turn_rate * (2.0 * unit(rng) - 1.0);
          next_change = p.t + 1.0 + 2.0 * unit(rng);
        }
        rate = random_rate;
        break;
    }
    if (walking && !inside_area(p.x, p.y, 2.0)) {
      const double want = std::atan2(-p.y, 10.0 - p.x);
      rate = std::clamp(3.0 * wrap_angle(want - p.heading), -1.5, 1.5);
    }

    const double speed = motion.speed * (1.0 + amp * std::sin(omega_gait * p.t + phase));
    p.x += speed * dt * std::cos(p.heading);
    p.y += speed * dt * std::sin(p.heading);
    p.heading += rate * dt;
  }
  return path;
}

std::vector<ImuSample> derive_imu(const Path& path, const NoiseSpec& noise, std::uint64_t seed,
                                  const Vec3& mount_rpy) {
  const std::size_t n = path.size();
  if (n < 3) throw TooShort("path needs at least 3 samples");
  const double dt = path[1].t - path[0].t;
  auto rng = make_rng(seed, 2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Mat3 mount = rpy_matrix(mount_rpy);
  const Vec3 mag_world{kMagHorizontal, 0.0, -kMagVertical};

  std::vector<ImuSample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Forward differences; the last two samples reuse the final stencil.
    const std::size_t i = std::min(k, n - 3);
    const std::size_t j = std::min(k, n - 2);
    const double ax = (path[i + 2].x - 2.0 * path[i + 1].x + path[i].x) / (dt * dt);
    const double ay = (path[i + 2].y - 2.0 * path[i + 1].y + path[i].y) / (dt * dt);
    const double psi = path[k].heading;

    ImuSample s;
    s.t = path[k].t;
    s.acc = transpose_apply(mount, world_to_body({ax, ay, kGravity}, psi));
    s.gyro = transpose_apply(mount, {0.0, 0.0, (path[j + 1].heading - path[j].heading) / dt});
    s.mag = transpose_apply(mount, world_to_body(mag_world, psi));
    for (int a = 0; a < 3; ++a) {
      s.acc[a] += noise.acc_bias + noise.acc_sigma * gauss(rng);
      s.gyro[a] += noise.gyro_bias + noise.gyro_sigma * gauss(rng);
      s.mag[a] += noise.mag_sigma * gauss(rng);
    }
    out.push_back(s);
  }
  return out;
}

std::vector<FtmSample> derive_ftm(const Path& path, const CameraModel& cam, const NoiseSpec& noise,
                                  std::uint64_t seed, double phone_height, double rate_hz) {
  if (path.empty()) return {};
  auto rng = make_rng(seed, 3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double period = 1.0 / rate_hz;
  std::vector<double> times;
  times.reserve(path.size());
  for (const auto& p : path) times.push_back(p.t);

  std::vector<FtmSample> out;
  for (std::size_t k = 0;; ++k) {
    const double t = path.front().t + static_cast<double>(k) * period;
    if (t > path.back().t + 1e-9) break;
    const auto& p = path[nearest_index(times, t)];
    const double range = norm(sub({p.x, p.y, phone_height}, cam.ap));
    const double sd = noise.ftm_sigma0 + noise.ftm_slope * range;
    out.push_back({p.t, range + noise.ftm_bias + sd * gauss(rng), sd});
  }
  return out;
}

Pixel project_point(const CameraModel& cam, const Vec3& p) {
  const Vec3 rel = sub(p, cam.position());
  const double cp = std::cos(cam.pitch), sp = std::sin(cam.pitch);
  const double z = rel[0] * cp - rel[2] * sp;   // forward
  const double x = -rel[1];                     // right
  const double y = -rel[0] * sp - rel[2] * cp;  // down
  if (z <= 1e-6) throw BehindCamera("point is behind the camera");
  return {0.5 * cam.width + cam.focal * x / z, 0.5 * cam.height + cam.focal * y / z};
}

BBox5 project_subject(const CameraModel& cam, double x, double y, double subject_height,
                      double subject_width) {
  // Weak perspective: the box is centred on the projected centroid and scaled
  // by the centroid's forward depth, so it varies smoothly with position.
  const Vec3 centroid{x, y, 0.5 * subject_height};
  const Vec3 rel = sub(centroid, cam.position());
  const Pixel c = project_point(cam, centroid);
  const double depth = rel[0] * std::cos(cam.pitch) - rel[2] * std::sin(cam.pitch);
  return {c.u, c.v, norm(rel), cam.focal * subject_width / depth, cam.focal * subject_height / depth};
}

std::vector<BoxSample> project_bbx(const Path& path, const CameraModel& cam, double subject_height,
                                   double subject_width, double fps) {
  std::vector<BoxSample> out;
  if (path.empty()) return out;
  std::vector<double> times;
  times.reserve(path.size());
  for (const auto& p : path) times.push_back(p.t);
  std::size_t last = path.size();
  for (std::size_t k = 0;; ++k) {
    const double t = path.front().t + static_cast<double>(k) / fps;
    if (t > path.back().t + 1e-9) break;
    const std::size_t i = nearest_index(times, t);
    if (i == last) continue;
    last = i;
    out.push_back({path[i].t, project_subject(cam, path[i].x, path[i].y, subject_height, subject_width)});
  }
  return out;
}

std::vector<GroundCorrespondence> ground_correspondences(const CameraModel& cam) {
  std::vector<GroundCorrespondence> out;
  for (auto [gx, gy] : {std::pair{5.0, -2.0}, {5.0, 2.0}, {15.0, -6.0}, {15.0, 6.0}}) {
    const Pixel px = project_point(cam, {gx, gy, 0.0});
    out.push_back({gx, gy, px.u, px.v});
  }
  return out;
}

Scene simulate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  if (cfg.subjects < 1) throw ConfigError("subjects must be at least 1");
  if (!(cfg.duration_s > 0.0)) throw ConfigError("duration must be positive");
  Scene scene;
  scene.sequence.scene = cfg.name;
  scene.sequence.camera_fps = cfg.camera_fps;
  auto rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < cfg.subjects; ++i) {
    MotionModel motion = cfg.motion;
    if (cfg.randomize_start) {
      motion.x0 = 6.0 + 8.0 * unit(rng);
      motion.y0 = (2.0 * unit(rng) - 1.0) * 0.4 * motion.x0;
      motion.heading0 = 2.0 * kPi * unit(rng) - kPi;
      if (motion.kind != MotionKind::ConstantVelocity) motion.speed = 0.9 + 0.7 * unit(rng);
    }
    const std::uint64_t sub_seed = rng();
    SimulatedSubject truth{"p" + std::to_string(i), motion,
                           gen_trajectory(sub_seed, cfg.duration_s, cfg.imu_rate, motion)};
    SubjectStreams s;
    s.id = truth.id;
    s.boxes = project_bbx(truth.path, cfg.camera, motion.subject_height, motion.subject_width,
                          cfg.camera_fps);
    s.imu = derive_imu(truth.path, cfg.noise, sub_seed, motion.mount_rpy);
    s.ftm = derive_ftm(truth.path, cfg.camera, cfg.noise, sub_seed, 0.5 * motion.subject_height,
                       cfg.ftm_rate);
    scene.sequence.subjects.push_back(std::move(s));
    scene.truth.push_back(std::move(truth));
  }
  return scene;
}

Scene emit_dataset(std::uint64_t seed, const SceneConfig& cfg, const std::filesystem::path& path) {
  Scene scene = simulate_scene(seed, cfg);
  save_sequence(scene.sequence, path);
  return scene;
}

}  // namespace trackfuse::sim
