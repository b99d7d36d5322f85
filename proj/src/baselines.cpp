#include "trackfuse/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "trackfuse/errors.hpp"

namespace trackfuse {

void check_contract(const Tracklet& out, const BBox5& first, std::size_t wl) {
  if (out.size() != wl)
    throw ShapeMismatch("reconstructor returned " + std::to_string(out.size()) + " rows, expected " +
                        std::to_string(wl));
  if (!(out.front() == first)) throw ShapeMismatch("reconstructor changed the first-frame box");
}

}  // namespace trackfuse

namespace trackfuse::baselines {

namespace {

Eigen::Vector3d to_eigen(const Vec3& v) { return {v[0], v[1], v[2]}; }

double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

// Keeps a reconstructed box drawable.
BBox5 clamp_box(BBox5 b) {
  b.w = std::max(b.w, 1.0);
  b.h = std::max(b.h, 1.0);
  b.d = std::max(b.d, 0.0);
  return b;
}

}  // namespace

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  Eigen::Matrix3d k;
  k << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  if (theta < 1e-8) return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  return Eigen::Matrix3d::Identity() + std::sin(theta) / theta * k +
         (1.0 - std::cos(theta)) / (theta * theta) * k * k;
}

SinsResult sins_displacement(std::span<const Vec3> acc, std::span<const Vec3> gyro,
                             const Vec3& v0, const Vec3& g0, double dt) {
  if (!(dt > 0.0)) throw BadWindow("dt must be positive");
  if (acc.size() != gyro.size()) throw ShapeMismatch("acc and gyro lengths differ");
  const std::size_t n = acc.size();
  SinsResult r;
  if (n == 0) return r;

  // T = sum_{k=0}^{n-2} (n-1-k) O_k a_k with O_{k+1} = O_k exp(w_k dt).
  Eigen::Matrix3d o = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  for (std::size_t k = 0; k + 1 < n; ++k) {
    t += static_cast<double>(n - 1 - k) * (o * to_eigen(acc[k]));
    o = o * so3_exp(to_eigen(gyro[k]) * dt);
    r.dpsi += gyro[k][2] * dt;
  }
  const double nn = static_cast<double>(n);
  r.displacement = nn * to_eigen(v0) * dt + t * dt * dt - 0.5 * nn * (nn - 1.0) * to_eigen(g0) * dt * dt;
  r.dl = r.displacement.norm();
  return r;
}

ScaleModel fit_scale_model(std::span<const ScaleSample> samples) {
  std::vector<double> ys, y2s;
  for (const auto& s : samples) {
    ys.push_back(s.y);
    y2s.push_back(s.y * s.y);
  }
  auto spread = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  if (samples.size() < 2 || spread(ys) == 0.0 || spread(y2s) == 0.0)
    throw Degenerate("scale fit needs at least two distinct image rows");

  // Ordinary least squares for v = k x + b.
  auto fit = [&](const std::vector<double>& x, auto value) {
    double mx = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      mv += value(samples[i]);
    }
    mx /= static_cast<double>(x.size());
    mv /= static_cast<double>(x.size());
    double sxx = 0.0, sxv = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxv += (x[i] - mx) * (value(samples[i]) - mv);
    }
    const double k = sxv / sxx;
    return std::pair{k, mv - k * mx};
  };
  ScaleModel m;
  std::tie(m.kw, m.bw) = fit(ys, [](const ScaleSample& s) { return s.w; });
  std::tie(m.kh, m.bh) = fit(ys, [](const ScaleSample& s) { return s.h; });
  std::tie(m.kd, m.bd) = fit(y2s, [](const ScaleSample& s) { return s.d; });
  return m;
}

ScaleEstimate predict_scale(double y, const ScaleModel& m) {
  return {m.kw * y + m.bw, m.kh * y + m.bh, m.kd * y * y + m.bd};
}

Eigen::Matrix3d fit_homography(std::span<const Correspondence> pairs) {
  if (pairs.size() < 4) throw Degenerate("homography needs four correspondences");
  Eigen::MatrixXd a(2 * pairs.size(), 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    a.row(2 * i) << p.gx, p.gy, 1.0, 0.0, 0.0, 0.0, -p.u * p.gx, -p.u * p.gy, -p.u;
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, p.gx, p.gy, 1.0, -p.v * p.gx, -p.v * p.gy, -p.v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(7) <= 1e-12 * sv(0)) throw Degenerate("correspondences are degenerate (collinear points?)");
  Eigen::VectorXd h = svd.matrixV().col(8);
  if (std::abs(h(8)) < 1e-15) throw Degenerate("homography maps the ground origin to infinity");
  h /= h(8);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return m;
}

std::vector<Point2> ned_to_image(std::span<const Point2> points, const Eigen::Matrix3d& h) {
  if (std::abs(h.determinant()) <= 1e-12 * std::pow(h.norm(), 3))
    throw Singular("homography is singular");
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const Eigen::Vector3d q = h * Eigen::Vector3d(p.x, p.y, 1.0);
    if (std::abs(q.z()) < 1e-12) throw AtInfinity("point maps to infinity");
    out.push_back({q.x() / q.z(), q.y() / q.z()});
  }
  return out;
}

double mag_heading(const Vec3& mag, const Vec3& gravity_dir) {
  const Eigen::Vector3d up = to_eigen(gravity_dir).normalized();
  const Eigen::Vector3d m = to_eigen(mag);
  const Eigen::Vector3d mh = m - m.dot(up) * up;
  Eigen::Vector3d fwd = Eigen::Vector3d::UnitX() - up.x() * up;
  fwd.normalize();
  const Eigen::Vector3d left = up.cross(fwd);
  return std::atan2(-mh.dot(left), mh.dot(fwd));
}

PdrTrack pdr_track(std::span<const ImuRow> imu, const Point2& origin, const PdrParams& params) {
  PdrTrack out;
  const std::size_t n = imu.size();
  if (n == 0) return out;
  const double dt = 1.0 / params.rate_hz;

  // Gravity direction from the per-axis median accelerometer reading, which
  // step spikes do not drag.
  Vec3 up{0.0, 0.0, 1.0};
  for (int a = 0; a < 3; ++a) {
    std::vector<double> column;
    for (const auto& r : imu) column.push_back(r[a]);
    std::nth_element(column.begin(), column.begin() + column.size() / 2, column.end());
    up[a] = column[column.size() / 2];
  }
  if (std::hypot(up[0], up[1], up[2]) == 0.0) up = {0.0, 0.0, 1.0};
  const Eigen::Vector3d up_dir = to_eigen(up).normalized();

  std::vector<double> mag_acc(n);
  for (std::size_t k = 0; k < n; ++k)
    mag_acc[k] = kGravity * std::hypot(imu[k][0], imu[k][1], imu[k][2]);

  out.steps.assign(n, false);
  double last_step = -1e300;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (mag_acc[k] > params.step_threshold && mag_acc[k] > mag_acc[k - 1] &&
        mag_acc[k] >= mag_acc[k + 1] && t - last_step >= params.refractory_s - 1e-9) {
      out.steps[k] = true;
      last_step = t;
    }
  }

  out.heading.resize(n);
  out.positions.resize(n);
  out.heading[0] = mag_heading({imu[0][6], imu[0][7], imu[0][8]}, up);
  out.positions[0] = origin;
  for (std::size_t k = 1; k < n; ++k) {
    const Eigen::Vector3d gyro(imu[k - 1][3], imu[k - 1][4], imu[k - 1][5]);
    const double predicted = out.heading[k - 1] + gyro.dot(up_dir) * dt;
    const double measured = mag_heading({imu[k][6], imu[k][7], imu[k][8]}, up);
    out.heading[k] = wrap_angle(predicted + (1.0 - params.gyro_weight) * wrap_angle(measured - predicted));
    Point2 p = out.positions[k - 1];
    if (out.steps[k]) {
      p.x += params.stride * std::cos(out.heading[k]);
      p.y += params.stride * std::sin(out.heading[k]);
    }
    out.positions[k] = p;
  }
  return out;
}

KfModel KfModel::constant_velocity() {
  KfModel m;
  m.A = Eigen::MatrixXd::Identity(10, 10);
  m.A.topRightCorner(5, 5) = Eigen::MatrixXd::Identity(5, 5);
  m.H = Eigen::MatrixXd::Zero(5, 10);
  m.H.leftCols(5) = Eigen::MatrixXd::Identity(5, 5);
  m.Q = Eigen::MatrixXd::Zero(10, 10);
  m.R = Eigen::MatrixXd::Zero(5, 5);
  return m;
}

KfState kf_predict(const KfState& state, const KfModel& model) {
  return {model.A * state.S, model.A * state.P * model.A.transpose() + model.Q};
}

KfState kf_update(const KfState& state, const Eigen::VectorXd& y, const KfModel& model) {
  const Eigen::MatrixXd innovation = model.H * state.P * model.H.transpose() + model.R;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(innovation);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw NonInvertible("Kalman gain denominator is singular");
  const Eigen::MatrixXd gain = state.P * model.H.transpose() * lu.inverse();
  KfState out;
  out.S = state.S + gain * (y - model.H * state.S);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(state.P.rows(), state.P.cols());
  out.P = (eye - gain * model.H) * state.P;
  out.P = 0.5 * (out.P + out.P.transpose());
  return out;
}

Tracklet reconstruct_bc(const BBox5& first, std::size_t wl) { return Tracklet(wl, first); }

Tracklet BroadcastReconstructor::reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                                             std::span<const FtmRow>) {
  return reconstruct_bc(first, imu.size());
}

Tracklet reconstruct_pdr(const BBox5& first, std::span<const ImuRow> imu, const PdrParams& params) {
  const std::size_t wl = imu.size();
  if (wl == 0) return {};
  // Ground position of the first frame's feet.
  const Eigen::Vector3d foot =
      params.homography.fullPivLu().solve(Eigen::Vector3d(first.x, first.y + 0.5 * first.h, 1.0));
  if (std::abs(foot.z()) < 1e-12) throw AtInfinity("first box maps to infinity on the ground");
  const PdrTrack track = pdr_track(imu, {foot.x() / foot.z(), foot.y() / foot.z()}, params);
  const auto pixels = ned_to_image(track.positions, params.homography);

  Tracklet out(wl);
  BBox5 offset;
  for (std::size_t j = 0; j < wl; ++j) {
    const ScaleEstimate s = predict_scale(pixels[j].y, params.scale);
    BBox5 b{pixels[j].x, pixels[j].y - 0.5 * s.h, s.d, s.w, s.h};
    if (j == 0)
      offset = {first.x - b.x, first.y - b.y, first.d - b.d, first.w - b.w, first.h - b.h};
    out[j] = clamp_box({b.x + offset.x, b.y + offset.y, b.d + offset.d, b.w + offset.w, b.h + offset.h});
  }
  out[0] = first;
  return out;
}

Tracklet PdrReconstructor::reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                                       std::span<const FtmRow>) {
  return reconstruct_pdr(first, imu, params_);
}

Tracklet KalmanReconstructor::reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                                          std::span<const FtmRow>) {
  const std::size_t wl = imu.size();
  Eigen::VectorXd y(5);
  y << first.x, first.y, first.d, first.w, first.h;
  if (!started_) {
    state_.S = Eigen::VectorXd::Zero(10);
    state_.S.head(5) = y;
    state_.P = Eigen::MatrixXd::Zero(10, 10);
    started_ = true;
  } else {
    // Without noise terms the update collapses P to zero, so each window
    // restarts from an uninformed velocity prior.
    state_.P = Eigen::MatrixXd::Zero(10, 10);
    state_.P.bottomRightCorner(5, 5) = Eigen::MatrixXd::Identity(5, 5);
    for (int k = 0; k < stride_; ++k) state_ = kf_predict(state_, model_);
    state_ = kf_update(state_, y, model_);
  }
  const Eigen::VectorXd vel = state_.S.tail(5);
  Tracklet out(wl);
  out[0] = first;
  for (std::size_t j = 1; j < wl; ++j) {
    const Eigen::VectorXd b = y + static_cast<double>(j) * vel;
    out[j] = clamp_box({b(0), b(1), b(2), b(3), b(4)});
  }
  return out;
}

namespace {

std::string join(std::initializer_list<double> values) {
  std::ostringstream os;
  os << std::setprecision(17);
  bool first = true;
  for (double v : values) {
    os << (first ? "" : " ") << v;
    first = false;
  }
  return os.str();
}

std::vector<double> numbers(const std::string& key, const std::string& text, std::size_t count) {
  std::istringstream is(text);
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  if (!is.eof() || out.size() != count)
    throw ConfigError("calibration key '" + key + "' expects " + std::to_string(count) + " numbers");
  return out;
}

}  // namespace

void save_calibration(const Calibration& calib, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& p = calib.pdr;
  out << "stride=" << join({p.stride}) << '\n'
      << "step_threshold=" << join({p.step_threshold}) << '\n'
      << "refractory_s=" << join({p.refractory_s}) << '\n'
      << "rate_hz=" << join({p.rate_hz}) << '\n'
      << "gyro_weight=" << join({p.gyro_weight}) << '\n';
  for (std::size_t i = 0; i < calib.ground.size(); ++i) {
    const auto& g = calib.ground[i];
    out << "ground" << i << '=' << join({g.gx, g.gy, g.u, g.v}) << '\n';
  }
  out << "scale_w=" << join({p.scale.kw, p.scale.bw}) << '\n'
      << "scale_h=" << join({p.scale.kh, p.scale.bh}) << '\n'
      << "scale_d=" << join({p.scale.kd, p.scale.bd}) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Calibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingCalibration("cannot open calibration file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("calibration line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto take = [&](const std::string& key, std::size_t count) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("calibration is missing '" + key + "'");
    return numbers(key, it->second, count);
  };

  Calibration c;
  c.pdr.stride = take("stride", 1)[0];
  c.pdr.step_threshold = take("step_threshold", 1)[0];
  c.pdr.refractory_s = take("refractory_s", 1)[0];
  c.pdr.rate_hz = take("rate_hz", 1)[0];
  c.pdr.gyro_weight = take("gyro_weight", 1)[0];
  for (int i = 0; i < 4; ++i) {
    auto g = take("ground" + std::to_string(i), 4);
    c.ground.push_back({g[0], g[1], g[2], g[3]});
  }
  auto w = take("scale_w", 2), h = take("scale_h", 2), d = take("scale_d", 2);
  c.pdr.scale = {w[0], w[1], h[0], h[1], d[0], d[1]};
  c.pdr.homography = fit_homography(c.ground);
  return c;
}

}  // namespace trackfuse::baselines
