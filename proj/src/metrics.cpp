#include "trackfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <ostream>

#include "trackfuse/errors.hpp"

namespace trackfuse::metrics {

namespace {

void check_box(const BBox5& b) {
  if (!(b.w > 0.0) || !(b.h > 0.0)) throw DegenerateBox("box width and height must be positive");
}

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ShapeMismatch(std::string(what) + ": lengths " + std::to_string(a) + " and " +
                        std::to_string(b) + " differ");
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double iou(const BBox5& a, const BBox5& b) {
  check_box(a);
  check_box(b);
  const double ix = std::min(a.x + 0.5 * a.w, b.x + 0.5 * b.w) - std::max(a.x - 0.5 * a.w, b.x - 0.5 * b.w);
  const double iy = std::min(a.y + 0.5 * a.h, b.y + 0.5 * b.h) - std::max(a.y - 0.5 * a.h, b.y - 0.5 * b.h);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

std::vector<double> per_frame_iou(const Tracklet& gt, const Tracklet& pred) {
  check_lengths(gt.size(), pred.size(), "per_frame_iou");
  std::vector<double> out(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) out[i] = iou(gt[i], pred[i]);
  return out;
}

double ap_at_tau(std::span<const double> ious, double tau) {
  if (ious.empty()) throw EmptySet("AP over an empty set of IoUs");
  const auto hits = std::count_if(ious.begin(), ious.end(), [tau](double v) { return v >= tau; });
  return static_cast<double>(hits) / static_cast<double>(ious.size());
}

std::vector<double> ap_thresholds() {
  std::vector<double> t;
  for (int k = 1; k <= 19; ++k) t.push_back(k / 20.0);
  return t;
}

double ap_mean(std::span<const double> ious) {
  if (ious.empty()) throw EmptySet("AP over an empty set of IoUs");
  double sum = 0.0;
  const auto taus = ap_thresholds();
  for (double t : taus) sum += ap_at_tau(ious, t);
  return sum / static_cast<double>(taus.size());
}

double euclidean_distance(const Tracklet& gt, const Tracklet& pred) {
  check_lengths(gt.size(), pred.size(), "euclidean_distance");
  if (gt.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) sum += std::hypot(gt[i].x - pred[i].x, gt[i].y - pred[i].y);
  return sum / static_cast<double>(gt.size());
}

double diou_loss(const Tracklet& gt, const Tracklet& pred) {
  check_lengths(gt.size(), pred.size(), "diou_loss");
  if (gt.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const BBox5& g = gt[i];
    const BBox5& p = pred[i];
    const double pw = std::max(p.w, 0.0), ph = std::max(p.h, 0.0);
    const double ix = std::max(0.0, std::min(g.x + 0.5 * g.w, p.x + 0.5 * pw) - std::max(g.x - 0.5 * g.w, p.x - 0.5 * pw));
    const double iy = std::max(0.0, std::min(g.y + 0.5 * g.h, p.y + 0.5 * ph) - std::max(g.y - 0.5 * g.h, p.y - 0.5 * ph));
    const double inter = ix * iy;
    const double value_iou = inter / (g.w * g.h + pw * ph - inter);
    const double cw = std::max(g.x + 0.5 * g.w, p.x + 0.5 * pw) - std::min(g.x - 0.5 * g.w, p.x - 0.5 * pw);
    const double ch = std::max(g.y + 0.5 * g.h, p.y + 0.5 * ph) - std::min(g.y - 0.5 * g.h, p.y - 0.5 * ph);
    const double rho2 = (g.x - p.x) * (g.x - p.x) + (g.y - p.y) * (g.y - p.y);
    sum += 1.0 - value_iou + rho2 / (cw * cw + ch * ch);
  }
  return sum / static_cast<double>(gt.size());
}

double mean_abs_error(std::span<const double> a, std::span<const double> b) {
  check_lengths(a.size(), b.size(), "mean_abs_error");
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

DepthCorrection depth_correction(std::span<const double> pred_d, std::span<const double> ftm_r,
                                 std::span<const double> gt_d) {
  check_lengths(pred_d.size(), gt_d.size(), "depth_correction");
  check_lengths(ftm_r.size(), gt_d.size(), "depth_correction");
  DepthCorrection c;
  c.eps_ftm = mean_abs_error(ftm_r, gt_d);
  c.eps_depth = mean_abs_error(pred_d, gt_d);
  c.dc = c.eps_ftm - c.eps_depth;
  return c;
}

MrfResult mrf(Reconstructor& rm, const SyncTrack& track, const MrfConfig& cfg,
              const PreprocessConfig& prep, const Tracklet* reference) {
  if (reference && reference->size() != track.frames.size())
    throw ShapeMismatch("reference boxes do not cover the track");
  const auto windows = make_windows(track, cfg.wl, cfg.ws, prep);
  auto ref_box = [&](std::size_t frame) {
    return reference ? (*reference)[frame] : track.frames[frame].box;
  };

  MrfResult r;
  r.windows = windows.size();
  rm.reset();
  Tracklet prev;
  double gate_sum = 0.0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const WindowSample& win = windows[w];
    MrfLogEntry entry{0, w, std::numeric_limits<double>::quiet_NaN(), true};
    BBox5 seed;
    if (w == 0) {
      seed = ref_box(win.start);
    } else {
      // Frame win.start inside the previous window; with WS = WL - 1 it is
      // that window's last frame.
      const std::size_t o = std::min<std::size_t>(static_cast<std::size_t>(cfg.ws), prev.size() - 1);
      const auto& prev_truth = windows[w - 1].truth;
      entry.gate_iou = cfg.window_mean_gate ? mean(per_frame_iou(prev_truth, prev))
                                            : iou(prev_truth[o], prev[o]);
      gate_sum += entry.gate_iou;
      entry.queried = !(entry.gate_iou >= cfg.tau);
      seed = entry.queried ? ref_box(win.start) : prev[o];
    }
    if (entry.queried) ++r.mrf;
    prev = rm.reconstruct(seed, win.imu, win.ftm);
    check_contract(prev, seed, win.length());
    r.log.push_back(entry);
  }
  r.mrfr = static_cast<double>(r.mrf) / static_cast<double>(r.windows);
  r.mean_gate_iou = r.windows > 1 ? gate_sum / static_cast<double>(r.windows - 1) : 1.0;
  return r;
}

void write_mrf_log_csv(std::ostream& out, std::span<const MrfLogEntry> log) {
  out << "track,window,gate_iou,queried\n";
  out << std::setprecision(17);
  for (const auto& e : log) {
    out << e.track << ',' << e.window << ',';
    if (!std::isnan(e.gate_iou)) out << e.gate_iou;
    out << ',' << (e.queried ? 1 : 0) << '\n';
  }
}

EvalReport evaluate(Reconstructor& rm, std::span<const SyncTrack> tracks, const MrfConfig& cfg,
                    const PreprocessConfig& prep) {
  EvalReport rep;
  rep.method = rm.name();
  rep.wl = cfg.wl;
  rep.ws = cfg.ws;
  double diou_sum = 0.0;
  std::size_t diou_windows = 0;
  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    const auto windows = make_windows(tracks[ti], cfg.wl, cfg.ws, prep);
    rm.reset();
    for (const auto& win : windows) {
      const Tracklet pred = rm.reconstruct(win.first, win.imu, win.ftm);
      check_contract(pred, win.first, win.length());
      const Tracklet gt_tail(win.truth.begin() + 1, win.truth.end());
      const Tracklet pred_tail(pred.begin() + 1, pred.end());
      for (std::size_t j = 1; j < win.length(); ++j) {
        rep.ious.push_back(iou(win.truth[j], pred[j]));
        rep.centroid_err.push_back(std::hypot(win.truth[j].x - pred[j].x, win.truth[j].y - pred[j].y));
        rep.pred_d.push_back(pred[j].d);
        rep.ftm_r.push_back(win.ftm[j][0]);
        rep.gt_d.push_back(win.truth[j].d);
      }
      diou_sum += diou_loss(gt_tail, pred_tail);
      ++diou_windows;
    }
    MrfResult m = mrf(rm, tracks[ti], cfg, prep);
    rep.mrf += m.mrf;
    rep.windows += m.windows;
    for (auto& e : m.log) {
      e.track = ti;
      rep.mrf_log.push_back(e);
    }
  }
  if (rep.ious.empty()) throw EmptySet("no windows to evaluate");
  rep.diou = diou_sum / static_cast<double>(diou_windows);
  finalize_report(rep);
  return rep;
}

void finalize_report(EvalReport& r) {
  r.mean_iou = mean(r.ious);
  r.ap50 = ap_at_tau(r.ious, 0.5);
  r.ap10 = ap_at_tau(r.ious, 0.1);
  r.ap_mean = ap_mean(r.ious);
  r.ap_curve.clear();
  for (double t : ap_thresholds()) r.ap_curve.push_back(ap_at_tau(r.ious, t));
  r.mean_ed = mean(r.centroid_err);
  const DepthCorrection dc = depth_correction(r.pred_d, r.ftm_r, r.gt_d);
  r.eps_depth = dc.eps_depth;
  r.eps_ftm = dc.eps_ftm;
  r.dc_f = dc.dc;
  r.mrfr = r.windows ? static_cast<double>(r.mrf) / static_cast<double>(r.windows) : 0.0;
}

std::string report_to_json(const EvalReport& r) {
  using nlohmann::ordered_json;
  ordered_json log = ordered_json::array();
  for (const auto& e : r.mrf_log) {
    log.push_back({{"track", e.track},
                   {"window", e.window},
                   {"gate_iou", std::isnan(e.gate_iou) ? ordered_json(nullptr) : ordered_json(e.gate_iou)},
                   {"queried", e.queried}});
  }
  ordered_json j = {
      {"method", r.method},   {"wl", r.wl},           {"ws", r.ws},
      {"mean_iou", r.mean_iou}, {"ap50", r.ap50},     {"ap10", r.ap10},
      {"ap_mean", r.ap_mean}, {"ap_thresholds", ap_thresholds()}, {"ap_curve", r.ap_curve},
      {"mean_ed", r.mean_ed}, {"diou", r.diou},       {"eps_depth", r.eps_depth},
      {"eps_ftm", r.eps_ftm}, {"dc_f", r.dc_f},       {"mrf", r.mrf},
      {"windows", r.windows}, {"mrfr", r.mrfr},       {"ious", r.ious},
      {"centroid_err", r.centroid_err}, {"pred_d", r.pred_d}, {"ftm_r", r.ftm_r},
      {"gt_d", r.gt_d},       {"mrf_log", log}};
  return j.dump(1) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("invalid report: ") + e.what());
  }
  EvalReport r;
  try {
    r.method = j.at("method").get<std::string>();
    r.wl = j.at("wl").get<int>();
    r.ws = j.at("ws").get<int>();
    r.ious = j.at("ious").get<std::vector<double>>();
    r.centroid_err = j.at("centroid_err").get<std::vector<double>>();
    r.pred_d = j.at("pred_d").get<std::vector<double>>();
    r.ftm_r = j.at("ftm_r").get<std::vector<double>>();
    r.gt_d = j.at("gt_d").get<std::vector<double>>();
    r.diou = j.at("diou").get<double>();
    r.mrf = j.at("mrf").get<std::size_t>();
    r.windows = j.at("windows").get<std::size_t>();
    for (const auto& e : j.at("mrf_log")) {
      const auto& g = e.at("gate_iou");
      r.mrf_log.push_back({e.at("track").get<std::size_t>(), e.at("window").get<std::size_t>(),
                           g.is_null() ? std::numeric_limits<double>::quiet_NaN() : g.get<double>(),
                           e.at("queried").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("report: ") + e.what());
  }
  if (r.ious.empty()) throw EmptySet("report has no frames");
  finalize_report(r);
  return r;
}

}  // namespace trackfuse::metrics
