#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "trackfuse/errors.hpp"

using namespace trackfuse;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("trackfuse");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("TRACKFUSE_LOG");
  const std::string level = env ? env : "info";
  if (level == "error")
    spdlog::set_level(spdlog::level::err);
  else if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else
    spdlog::set_level(spdlog::level::info);
}

// 2 config, 3 I/O, 4 empty input.
int exit_code(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const WLMismatch*>(&e) ||
      dynamic_cast<const BadWindow*>(&e))
    return 2;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const MissingCheckpoint*>(&e) ||
      dynamic_cast<const MissingCalibration*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const SchemaError*>(&e))
    return 3;
  if (dynamic_cast<const NothingToReport*>(&e) || dynamic_cast<const EmptyDataset*>(&e) ||
      dynamic_cast<const EmptySet*>(&e) || dynamic_cast<const TooShort*>(&e) ||
      dynamic_cast<const EmptyStream*>(&e))
    return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  cli::RunConfig cfg;

  CLI::App app{"Multimodal tracklet reconstruction: simulate, train, evaluate, report"};
  app.set_config("--config", "", "key=value file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  app.add_option("--data", cfg.data, "Scene JSONL file(s)")->delimiter(',');
  app.add_option("--out", cfg.out, "Output directory")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  app.add_option("--wl", cfg.wl, "Window length in frames")->check(CLI::Range(3, 100000))->capture_default_str();
  app.add_option("--ws", cfg.ws, "Window stride (default WL-1)")->check(CLI::NonNegativeNumber);
  app.add_option("--tau", cfg.tau, "IoU gate for MRF")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_flag("--window-mean-gate", cfg.window_mean_gate, "Gate MRF on the window-mean IoU");
  app.add_option("--loss", cfg.loss, "Training loss")
      ->check(CLI::IsMember({"mse", "diou", "diou_d"}))
      ->capture_default_str();
  app.add_option("--method", cfg.method, "Comma list of vifit, bc, pdr, kf, oracle, or all")
      ->capture_default_str();
  app.add_option("--checkpoint", cfg.checkpoint, "Model checkpoint (default <out>/vifit.ckpt)");
  app.add_option("--calib", cfg.calib, "Calibration file (default calib.kv next to the data)");
  app.add_flag("--resume", cfg.resume, "Continue training from --checkpoint");

  app.add_option("--subjects", cfg.subjects, "Subjects per scene")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--duration", cfg.duration, "Scene length in seconds")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--motion", cfg.motion, "Walker model")
      ->check(CLI::IsMember({"constant-velocity", "piecewise-turn", "random-walk"}))
      ->capture_default_str();
  app.add_option("--noise", cfg.noise, "Sensor noise level")
      ->check(CLI::IsMember({"none", "moderate"}))
      ->capture_default_str();
  app.add_flag("--fixed-start", cfg.fixed_start, "Start every walker at the default pose");

  app.add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--batch", cfg.batch, "Mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--lr", cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--train-stride", cfg.train_stride, "Stride of training windows (default WS)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--h-dim", cfg.h_dim, "Hidden size")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--f-dim", cfg.f_dim, "Feed-forward size")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--blocks", cfg.blocks, "Transformer blocks per encoder")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--heads", cfg.heads, "Attention heads")->check(CLI::PositiveNumber)->capture_default_str();

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const cli::RunConfig&);
  };
  const Command commands[] = {
      {"simulate", "Write a synthetic scene and its calibration", cli::cmd_simulate},
      {"train", "Train the fusion model", cli::cmd_train},
      {"eval", "Evaluate reconstructors and write one JSON report each", cli::cmd_eval},
      {"mrf", "Count minimum required frames per method", cli::cmd_mrf},
      {"report", "Collect reports into report.md with plots", cli::cmd_report},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) {
        cfg.command = c.name;
        c.run(cfg);
      }
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
