#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "svg.hpp"
#include "trackfuse/baselines.hpp"
#include "trackfuse/errors.hpp"
#include "trackfuse/metrics.hpp"
#include "trackfuse/sequence_io.hpp"
#include "trackfuse/simulator.hpp"
#include "trackfuse/vifit.hpp"

namespace trackfuse::cli {

namespace fs = std::filesystem;

fs::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? fs::path(out) / "vifit.ckpt" : fs::path(checkpoint);
}

fs::path RunConfig::calib_path() const {
  if (!calib.empty()) return calib;
  if (data.empty()) return fs::path(out) / "calib.kv";
  return fs::path(data.front()).parent_path() / "calib.kv";
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> split_methods(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") {
      for (const char* m : {"bc", "kf", "pdr", "vifit"}) out.emplace_back(m);
    } else {
      out.push_back(item);
    }
  }
  if (out.empty()) throw ConfigError("--method: no method given");
  return out;
}

// Tracks of every data file that cover at least one window.
std::vector<SyncTrack> load_tracks(const RunConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("--data: no dataset given");
  std::vector<SyncTrack> tracks;
  for (const auto& path : cfg.data) {
    const SceneSequence seq = load_sequence(path);
    for (auto& t : synchronize(seq)) {
      if (t.frames.size() < static_cast<std::size_t>(cfg.wl)) {
        spdlog::warn("{}: track {} has {} frames, shorter than WL={}; skipped", path, t.subject,
                     t.frames.size(), cfg.wl);
        continue;
      }
      tracks.push_back(std::move(t));
    }
  }
  if (tracks.empty()) throw EmptySet("no track is long enough for WL=" + std::to_string(cfg.wl));
  return tracks;
}

// Replays ground truth by looking up the first box among the known frames.
class OracleReconstructor : public Reconstructor {
 public:
  explicit OracleReconstructor(const std::vector<SyncTrack>& tracks) {
    for (std::size_t t = 0; t < tracks.size(); ++t)
      for (std::size_t i = 0; i < tracks[t].frames.size(); ++i)
        index_.emplace(tracks[t].frames[i].box.to_array(), std::make_pair(&tracks[t], i));
  }
  std::string name() const override { return "oracle"; }
  Tracklet reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                       std::span<const FtmRow>) override {
    Tracklet out(imu.size(), first);
    const auto it = index_.find(first.to_array());
    if (it == index_.end()) return out;
    const auto& [track, start] = it->second;
    for (std::size_t j = 1; j < out.size() && start + j < track->frames.size(); ++j)
      out[j] = track->frames[start + j].box;
    return out;
  }

 private:
  std::map<std::array<double, 5>, std::pair<const SyncTrack*, std::size_t>> index_;
};

std::unique_ptr<Reconstructor> make_method(const std::string& name, const RunConfig& cfg,
                                           const std::vector<SyncTrack>& tracks) {
  if (name == "bc") return std::make_unique<baselines::BroadcastReconstructor>();
  if (name == "kf") return std::make_unique<baselines::KalmanReconstructor>(cfg.stride());
  if (name == "pdr")
    return std::make_unique<baselines::PdrReconstructor>(baselines::load_calibration(cfg.calib_path()).pdr);
  if (name == "vifit") {
    vifit::Checkpoint ck = vifit::load_checkpoint(cfg.checkpoint_path());
    if (ck.params.dims.wl != cfg.wl)
      throw WLMismatch("checkpoint " + cfg.checkpoint_path().string() + " was trained for WL=" +
                       std::to_string(ck.params.dims.wl) + ", --wl is " + std::to_string(cfg.wl));
    return std::make_unique<vifit::VifitReconstructor>(std::move(ck.params));
  }
  if (name == "oracle") return std::make_unique<OracleReconstructor>(tracks);
  throw ConfigError("--method: unknown method '" + name + "' (expected vifit, bc, pdr, kf or oracle)");
}

metrics::MrfConfig mrf_config(const RunConfig& cfg) {
  if (cfg.tau <= 0.0 || cfg.tau >= 1.0) throw ConfigError("--tau must lie in (0, 1)");
  return {cfg.wl, cfg.stride(), cfg.tau, cfg.window_mean_gate};
}

std::string suffix(const RunConfig& cfg) { return "wl" + std::to_string(cfg.wl); }

}  // namespace

void cmd_simulate(const RunConfig& cfg) {
  if (cfg.subjects < 1) throw ConfigError("--subjects must be at least 1");
  if (!(cfg.duration > 0.0)) throw ConfigError("--duration must be positive");
  sim::SceneConfig sc;
  sc.subjects = cfg.subjects;
  sc.duration_s = cfg.duration;
  sc.randomize_start = !cfg.fixed_start;
  sc.motion.kind = sim::parse_motion_kind(cfg.motion);
  if (cfg.noise == "none")
    sc.noise = sim::NoiseSpec::none();
  else if (cfg.noise == "moderate")
    sc.noise = sim::NoiseSpec::moderate();
  else
    throw ConfigError("--noise: unknown noise level '" + cfg.noise + "' (expected none or moderate)");

  const fs::path dir(cfg.out);
  ensure_dir(dir);
  const sim::Scene scene = sim::emit_dataset(cfg.seed, sc, dir / "scene.jsonl");

  // Oracle calibration: surveyed ground points and a size-vs-row fit on the true boxes.
  baselines::Calibration calib;
  for (const auto& g : sim::ground_correspondences(sc.camera))
    calib.ground.push_back({g.gx, g.gy, g.u, g.v});
  calib.pdr.homography = baselines::fit_homography(calib.ground);
  std::vector<baselines::ScaleSample> samples;
  for (const auto& s : scene.sequence.subjects)
    for (const auto& b : s.boxes) samples.push_back({b.box.y + 0.5 * b.box.h, b.box.w, b.box.h, b.box.d});
  calib.pdr.scale = baselines::fit_scale_model(samples);
  calib.pdr.rate_hz = SyncConfig{}.target_rate;
  baselines::save_calibration(calib, dir / "calib.kv");
  spdlog::info("simulated {} subject(s) over {} s into {}", cfg.subjects, cfg.duration, dir.string());
}

void cmd_train(const RunConfig& cfg) {
  const vifit::LossKind loss = vifit::parse_loss(cfg.loss);
  const int stride = cfg.train_stride > 0 ? cfg.train_stride : cfg.stride();
  std::vector<WindowSample> windows;
  for (const auto& t : load_tracks(cfg)) {
    auto w = make_windows(t, cfg.wl, stride);
    windows.insert(windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }

  vifit::ModelParams params;
  tensor::AdamState opt;
  if (cfg.resume) {
    vifit::Checkpoint ck = vifit::load_checkpoint(cfg.checkpoint_path());
    params = std::move(ck.params);
    opt = std::move(ck.optimizer);
    spdlog::info("resuming from {} at step {}", cfg.checkpoint_path().string(), opt.step);
  } else {
    params = vifit::init_params({cfg.h_dim, cfg.f_dim, cfg.blocks, cfg.heads, cfg.wl}, cfg.seed);
  }
  spdlog::info("training on {} windows, {} parameters", windows.size(), params.count());

  vifit::TrainConfig tc{loss, cfg.epochs, cfg.batch, cfg.lr, cfg.seed, cfg.wl};
  const auto result = vifit::train(windows, tc, std::move(params), std::move(opt),
                                   [](const vifit::EpochStats& s) {
                                     spdlog::info("epoch {} loss {:.6f} train IoU {:.4f}", s.epoch,
                                                  s.loss, s.train_iou);
                                   });

  ensure_dir(cfg.out);
  std::ostringstream csv;
  csv << "epoch,loss,train_iou\n";
  for (const auto& s : result.history)
    csv << s.epoch << ',' << fmt(s.loss) << ',' << fmt(s.train_iou) << '\n';
  write_text(fs::path(cfg.out) / "train_history.csv", csv.str());
  vifit::save_checkpoint(cfg.checkpoint_path(), result.params, &result.optimizer);
  spdlog::info("checkpoint written to {} (step {})", cfg.checkpoint_path().string(),
               result.optimizer.step);
}

void cmd_eval(const RunConfig& cfg) {
  const auto methods = split_methods(cfg.method);
  const auto mc = mrf_config(cfg);
  const auto tracks = load_tracks(cfg);
  ensure_dir(cfg.out);
  for (const auto& m : methods) {
    auto rm = make_method(m, cfg, tracks);
    const metrics::EvalReport rep = metrics::evaluate(*rm, tracks, mc);
    write_text(fs::path(cfg.out) / ("eval_" + m + "_" + suffix(cfg) + ".json"),
               metrics::report_to_json(rep));
    spdlog::info("{}: mean IoU {:.4f} AP@0.5 {:.4f} ED {:.2f}px DC_f {:.3f}m MRFR {:.4f}", m,
                 rep.mean_iou, rep.ap50, rep.mean_ed, rep.dc_f, rep.mrfr);
  }
}

void cmd_mrf(const RunConfig& cfg) {
  const auto methods = split_methods(cfg.method);
  const auto mc = mrf_config(cfg);
  const auto tracks = load_tracks(cfg);
  ensure_dir(cfg.out);

  std::ostringstream table;
  table << "method,mrf,windows,mrfr,mean_gate_iou\n";
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& m : methods) {
    auto rm = make_method(m, cfg, tracks);
    std::size_t mrf = 0, windows = 0, gated = 0;
    double gate_sum = 0.0;
    std::vector<metrics::MrfLogEntry> log;
    for (std::size_t t = 0; t < tracks.size(); ++t) {
      rm->reset();
      const auto r = metrics::mrf(*rm, tracks[t], mc);
      mrf += r.mrf;
      windows += r.windows;
      for (auto e : r.log) {
        e.track = t;
        if (e.window > 0) {
          gate_sum += e.gate_iou;
          ++gated;
        }
        log.push_back(e);
      }
    }
    const double mrfr = static_cast<double>(mrf) / static_cast<double>(windows);
    const double gate = gated ? gate_sum / static_cast<double>(gated) : 0.0;
    table << m << ',' << mrf << ',' << windows << ',' << fmt(mrfr) << ',' << fmt(gate) << '\n';
    bars.emplace_back(m, mrfr);

    std::ostringstream csv;
    metrics::write_mrf_log_csv(csv, log);
    write_text(fs::path(cfg.out) / ("mrf_" + m + "_" + suffix(cfg) + ".csv"), csv.str());
    spdlog::info("{}: MRF {} of {} windows, MRFR {:.4f}", m, mrf, windows, mrfr);
  }
  write_text(fs::path(cfg.out) / ("mrf_" + suffix(cfg) + ".csv"), table.str());
  write_text(fs::path(cfg.out) / ("mrf_" + suffix(cfg) + ".svg"),
             bar_chart("MRFR at WL=" + std::to_string(cfg.wl) + ", tau=" + fmt(cfg.tau), "MRFR", bars));
  std::fputs(table.str().c_str(), stdout);
}

void cmd_report(const RunConfig& cfg) {
  const fs::path dir(cfg.out);
  std::vector<fs::path> evals, mrfs;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.starts_with("eval_") && name.ends_with(".json")) evals.push_back(e.path());
      if (name.starts_with("mrf_wl") && name.ends_with(".csv")) mrfs.push_back(e.path());
    }
  }
  if (evals.empty() && mrfs.empty())
    throw NothingToReport("no eval_*.json or mrf_wl*.csv in " + dir.string());
  std::sort(evals.begin(), evals.end());
  std::sort(mrfs.begin(), mrfs.end());

  std::vector<metrics::EvalReport> reports;
  for (const auto& p : evals) reports.push_back(metrics::report_from_json(read_text(p)));

  std::ostringstream md;
  md << "# Reconstruction report\n\n";
  std::set<int> wls;
  std::set<std::string> methods;
  for (const auto& r : reports) {
    wls.insert(r.wl);
    methods.insert(r.method);
  }
  const auto thresholds = metrics::ap_thresholds();
  for (int wl : wls) {
    md << "## WL = " << wl << "\n\n"
       << "| method | IoU | AP@0.5 | AP@0.1 | AP mean | ED (px) | DIoU | eps_depth (m) | DC_f (m) | MRF | MRFR |\n"
       << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    std::vector<Series> curves;
    for (const auto& r : reports) {
      if (r.wl != wl) continue;
      md << "| " << r.method << " | " << fmt(r.mean_iou) << " | " << fmt(r.ap50) << " | "
         << fmt(r.ap10) << " | " << fmt(r.ap_mean) << " | " << fmt(r.mean_ed) << " | "
         << fmt(r.diou) << " | " << fmt(r.eps_depth) << " | " << fmt(r.dc_f) << " | " << r.mrf
         << " | " << fmt(r.mrfr) << " |\n";
      Series s{r.method, {}};
      for (std::size_t i = 0; i < thresholds.size(); ++i) s.points.emplace_back(thresholds[i], r.ap_curve[i]);
      curves.push_back(std::move(s));
    }
    const std::string svg = "ap_curve_wl" + std::to_string(wl) + ".svg";
    write_text(dir / svg, line_chart("AP vs IoU threshold, WL=" + std::to_string(wl), "tau", "AP", curves));
    md << "\n![AP vs tau](" << svg << ")\n\n";
  }

  if (wls.size() > 1) {
    md << "## Mean IoU across window lengths\n\n| method |";
    for (int wl : wls) md << " WL=" << wl << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < wls.size(); ++i) md << "---|";
    md << '\n';
    for (const auto& m : methods) {
      md << "| " << m << " |";
      for (int wl : wls) {
        auto it = std::find_if(reports.begin(), reports.end(),
                               [&](const auto& r) { return r.method == m && r.wl == wl; });
        md << ' ' << (it == reports.end() ? std::string("-") : fmt(it->mean_iou)) << " |";
      }
      md << '\n';
    }
    md << '\n';
  }

  for (const auto& p : mrfs) {
    md << "## Minimum required frames (" << p.stem().string().substr(4) << ")\n\n";
    std::istringstream in(read_text(p));
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      std::string row = "| ";
      for (char c : line) row += (c == ',') ? std::string(" | ") : std::string(1, c);
      md << row << " |\n";
      if (header) {
        md << "|---|---|---|---|---|\n";
        header = false;
      }
    }
    const fs::path svg = fs::path(p).replace_extension(".svg");
    if (fs::exists(svg)) md << "\n![MRFR](" << svg.filename().string() << ")\n";
    md << '\n';
  }
  write_text(dir / "report.md", md.str());
  spdlog::info("report written to {}", (dir / "report.md").string());
}

}  // namespace trackfuse::cli
