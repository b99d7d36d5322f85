#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trackfuse/datamodel.hpp"
#include "trackfuse/reconstructor.hpp"

namespace trackfuse::metrics {

// Overlap / union of the (x, y, w, h) rectangles; depth is ignored.
// Throws DegenerateBox for a non-positive width or height.
double iou(const BBox5& a, const BBox5& b);

// Throws ShapeMismatch when the tracklets differ in length.
std::vector<double> per_frame_iou(const Tracklet& gt, const Tracklet& pred);

// Fraction of IoUs >= tau. Throws EmptySet.
double ap_at_tau(std::span<const double> ious, double tau);

// 0.05, 0.10, ..., 0.95
std::vector<double> ap_thresholds();
double ap_mean(std::span<const double> ious);

// Mean centroid distance in pixels. Throws ShapeMismatch.
double euclidean_distance(const Tracklet& gt, const Tracklet& pred);

// Mean over frames of 1 - IoU + rho^2 / s^2 in the image plane.
double diou_loss(const Tracklet& gt, const Tracklet& pred);

struct DepthCorrection {
  double eps_ftm = 0.0;
  double eps_depth = 0.0;
  double dc = 0.0;  // eps_ftm - eps_depth; positive when depth beats raw FTM
};

double mean_abs_error(std::span<const double> a, std::span<const double> b);
DepthCorrection depth_correction(std::span<const double> pred_d, std::span<const double> ftm_r,
                                 std::span<const double> gt_d);

// ---- minimum required frames ----

struct MrfConfig {
  int wl = 30;
  int ws = 29;
  double tau = 0.5;
  bool window_mean_gate = false;  // gate on the previous window's mean IoU
};

struct MrfLogEntry {
  std::size_t track = 0;
  std::size_t window = 0;
  double gate_iou = 0.0;  // NaN for window 0
  bool queried = false;
};

struct MrfResult {
  std::size_t mrf = 0;
  std::size_t windows = 0;
  double mrfr = 0.0;
  double mean_gate_iou = 0.0;
  std::vector<MrfLogEntry> log;
};

// Runs the reconstructor over consecutive windows of one track, re-seeding
// from the previous prediction while the gate holds and querying the
// reference box otherwise. `reference` defaults to the track's own boxes.
// Throws TooShort.
MrfResult mrf(Reconstructor& rm, const SyncTrack& track, const MrfConfig& cfg,
              const PreprocessConfig& prep = {}, const Tracklet* reference = nullptr);

// Columns: track, window, gate_iou (empty for window 0), queried.
void write_mrf_log_csv(std::ostream& out, std::span<const MrfLogEntry> log);

// ---- evaluation report ----

struct EvalReport {
  std::string method;
  int wl = 0;
  int ws = 0;
  std::vector<double> ious;         // per reconstructed frame
  std::vector<double> centroid_err; // px
  std::vector<double> pred_d, ftm_r, gt_d;
  double mean_iou = 0.0;
  double ap50 = 0.0;
  double ap10 = 0.0;
  double ap_mean = 0.0;
  std::vector<double> ap_curve;     // over ap_thresholds()
  double mean_ed = 0.0;
  double diou = 0.0;
  double eps_depth = 0.0;
  double eps_ftm = 0.0;
  double dc_f = 0.0;
  std::size_t mrf = 0;
  std::size_t windows = 0;
  double mrfr = 0.0;
  std::vector<MrfLogEntry> mrf_log;
};

// Windows of every track seeded with the true first box; metrics use frames
// 1..WL-1 of each window (frame 0 is the given box). Also runs mrf on each
// track; MRF and W are summed over tracks. Throws EmptySet when there are no
// windows.
EvalReport evaluate(Reconstructor& rm, std::span<const SyncTrack> tracks, const MrfConfig& cfg,
                    const PreprocessConfig& prep = {});

// Recomputes the aggregate fields from the per-frame arrays.
void finalize_report(EvalReport& report);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

}  // namespace trackfuse::metrics
