#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace trackfuse::cli {

struct RunConfig {
  std::string command;
  std::vector<std::string> data;  // scene JSONL files
  std::string out = "out";
  int wl = 30;
  int ws = 0;  // 0 means WL - 1
  double tau = 0.5;
  bool window_mean_gate = false;
  std::string loss = "mse";
  std::string method = "bc,kf";
  std::uint64_t seed = 0;
  std::string checkpoint;  // default <out>/vifit.ckpt
  std::string calib;       // default calib.kv next to the first data file
  bool resume = false;

  // simulate
  int subjects = 1;
  double duration = 60.0;
  std::string motion = "random-walk";
  std::string noise = "moderate";
  bool fixed_start = false;

  // train
  int epochs = 50;
  int batch = 32;
  double lr = 1e-3;
  int train_stride = 0;  // 0 means WS
  int h_dim = 72;
  int f_dim = 144;
  int blocks = 4;
  int heads = 4;

  int stride() const { return ws > 0 ? ws : wl - 1; }
  std::filesystem::path checkpoint_path() const;
  std::filesystem::path calib_path() const;
};

// Each command throws library errors; main maps them to exit codes.
void cmd_simulate(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_mrf(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);

}  // namespace trackfuse::cli
