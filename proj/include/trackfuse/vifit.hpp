#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trackfuse/datamodel.hpp"
#include "trackfuse/reconstructor.hpp"
#include "trackfuse/tensor.hpp"

namespace trackfuse::vifit {

using tensor::Tensor;

struct ModelDims {
  int h_dim = 72;
  int f_dim = 144;
  int blocks = 4;
  int heads = 4;
  int wl = 30;

  static constexpr int kVision = 5;
  static constexpr int kImu = 9;
  static constexpr int kFtm = 2;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

// Boxes and ranges are scaled into O(1) before entering the network. Image
// coordinates share one scale so the image plane keeps its aspect.
struct Normalization {
  double image_scale = 1280.0;  // px
  double depth_scale = 20.0;    // m
  bool operator==(const Normalization&) const = default;
};

struct BlockParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b;
  Tensor wp, bp;
  Tensor ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;
  Tensor ln3_g, ln3_b;
};

struct EncoderParams {
  Tensor w_in, b_in;
  Tensor ln_in_g, ln_in_b;
  Tensor ln_pe_g, ln_pe_b;
  std::vector<BlockParams> blocks;
};

enum Modality : std::size_t { kVisionEnc = 0, kImuEnc = 1, kFtmEnc = 2 };

struct ModelParams {
  ModelDims dims;
  Normalization norm;
  std::array<EncoderParams, 3> encoders;
  Tensor fuse_w, fuse_b;
  Tensor ln_g, ln_b;
  Tensor pred_w, pred_b;

  // Stable order; the tensors alias the model's storage.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  std::size_t count() const;
  ModelParams clone() const;
};

// Xavier-uniform matrices, zero biases, LayerNorm gamma 1 and beta 0.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed, const Normalization& norm = {});

// Fixed sinusoidal table, [len x dim].
Tensor positional_encoding(std::size_t len, std::size_t dim);

// x is [n*WL x D_m] holding n stacked windows; returns [n*WL x H].
// Throws ShapeMismatch.
Tensor encoder_forward(const Tensor& x, const EncoderParams& enc, const ModelDims& dims);

// Network inputs for a batch of windows, already normalized.
struct Batch {
  std::size_t n = 0;
  Tensor first;  // [n x 5]
  Tensor imu;    // [n*WL x 9]
  Tensor ftm;    // [n*WL x 2]
  Tensor truth;  // [n*WL x 5], empty when unknown
};

// Throws WLMismatch when a window's length differs from dims.wl.
Batch make_batch(std::span<const WindowSample* const> windows, const ModelParams& params);

// Normalized boxes [n*WL x 5]: the first box tiled over the window plus the
// decoder's offset.
Tensor forward(const ModelParams& params, const Batch& batch);

// One window in pixel units, unclamped. Throws ShapeMismatch.
Tracklet vifit_forward(const BBox5& first, std::span<const ImuRow> imu,
                       std::span<const FtmRow> ftm, const ModelParams& params);

// Columns of gt and pred follow BBox5 (x, y, d, w, h).
Tensor loss_mse(const Tensor& gt, const Tensor& pred);
Tensor loss_diou(const Tensor& gt, const Tensor& pred);
Tensor loss_diou_d(const Tensor& gt, const Tensor& pred);

enum class LossKind { Mse, Diou, DiouD };
LossKind parse_loss(const std::string& name);  // throws ConfigError
std::string to_string(LossKind kind);
Tensor compute_loss(LossKind kind, const Tensor& gt, const Tensor& pred);

struct TrainConfig {
  LossKind loss = LossKind::Mse;
  int epochs = 50;
  int batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int wl = 30;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double train_iou = 0.0;  // frames 1..WL-1, predictions before the update
};

struct TrainResult {
  ModelParams params;
  tensor::AdamState optimizer;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Shuffled mini-batch Adam. Continues from `optimizer` when its step is
// non-zero. Throws EmptyDataset, WLMismatch, ConfigError.
TrainResult train(std::span<const WindowSample> data, const TrainConfig& cfg, ModelParams params,
                  tensor::AdamState optimizer = {}, const EpochCallback& on_epoch = {});
TrainResult train(std::span<const WindowSample> data, const TrainConfig& cfg,
                  const ModelDims& dims, const EpochCallback& on_epoch = {});

// Mean per-frame IoU over frames 1..WL-1 with widths clamped to 1 px.
double mean_train_iou(const ModelParams& params, std::span<const WindowSample> data);

// Header line, JSON manifest line, then raw little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const tensor::AdamState* optimizer = nullptr);

struct Checkpoint {
  ModelParams params;
  tensor::AdamState optimizer;  // step 0 when the file holds no optimizer state
};

// Throws MissingCheckpoint, ParseError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

class VifitReconstructor : public Reconstructor {
 public:
  explicit VifitReconstructor(ModelParams params) : params_(std::move(params)) {}
  std::string name() const override { return "vifit"; }
  Tracklet reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                       std::span<const FtmRow> ftm) override;
  const ModelParams& params() const { return params_; }

 private:
  ModelParams params_;
};

}  // namespace trackfuse::vifit
