#include "trackfuse/vifit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "trackfuse/errors.hpp"
#include "trackfuse/metrics.hpp"

namespace trackfuse::vifit {

using namespace tensor;

namespace {

constexpr double kLnEps = 1e-5;
constexpr const char* kMagic = "trackfuse-vifit-checkpoint 1";

static_assert(std::endian::native == std::endian::little, "checkpoint payload is little-endian");

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor matrix(int rows, int cols) {
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-s, s);
    std::vector<double> v(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    for (double& x : v) x = dist(rng_);
    return Tensor({std::size_t(rows), std::size_t(cols)}, std::move(v), true);
  }
  static Tensor vector(int n, double value) { return Tensor::full({std::size_t(n)}, value, true); }

 private:
  std::mt19937_64 rng_;
};

EncoderParams init_encoder(Initializer& init, const ModelDims& d, int input_dim) {
  EncoderParams e;
  e.w_in = init.matrix(input_dim, d.h_dim);
  e.b_in = Initializer::vector(d.h_dim, 0.0);
  e.ln_in_g = Initializer::vector(d.h_dim, 1.0);
  e.ln_in_b = Initializer::vector(d.h_dim, 0.0);
  e.ln_pe_g = Initializer::vector(d.h_dim, 1.0);
  e.ln_pe_b = Initializer::vector(d.h_dim, 0.0);
  for (int b = 0; b < d.blocks; ++b) {
    BlockParams p;
    p.wq = init.matrix(d.h_dim, d.h_dim);
    p.bq = Initializer::vector(d.h_dim, 0.0);
    p.wk = init.matrix(d.h_dim, d.h_dim);
    p.bk = Initializer::vector(d.h_dim, 0.0);
    p.wv = init.matrix(d.h_dim, d.h_dim);
    p.bv = Initializer::vector(d.h_dim, 0.0);
    p.wo = init.matrix(d.h_dim, d.h_dim);
    p.bo = Initializer::vector(d.h_dim, 0.0);
    p.ln1_g = Initializer::vector(d.h_dim, 1.0);
    p.ln1_b = Initializer::vector(d.h_dim, 0.0);
    p.wp = init.matrix(d.h_dim, d.h_dim);
    p.bp = Initializer::vector(d.h_dim, 0.0);
    p.ln2_g = Initializer::vector(d.h_dim, 1.0);
    p.ln2_b = Initializer::vector(d.h_dim, 0.0);
    p.w1 = init.matrix(d.h_dim, d.f_dim);
    p.b1 = Initializer::vector(d.f_dim, 0.0);
    p.w2 = init.matrix(d.f_dim, d.h_dim);
    p.b2 = Initializer::vector(d.h_dim, 0.0);
    p.ln3_g = Initializer::vector(d.h_dim, 1.0);
    p.ln3_b = Initializer::vector(d.h_dim, 0.0);
    e.blocks.push_back(std::move(p));
  }
  return e;
}

// Same traversal for naming and for cloning/rebinding.
template <class F>
void visit(const ModelParams& p, F&& f) {
  static const char* kEnc[3] = {"vision", "imu", "ftm"};
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& e = p.encoders[m];
    const std::string pre = std::string(kEnc[m]) + ".";
    f(pre + "in.w", e.w_in);
    f(pre + "in.b", e.b_in);
    f(pre + "ln_in.g", e.ln_in_g);
    f(pre + "ln_in.b", e.ln_in_b);
    f(pre + "ln_pe.g", e.ln_pe_g);
    f(pre + "ln_pe.b", e.ln_pe_b);
    for (std::size_t b = 0; b < e.blocks.size(); ++b) {
      const auto& k = e.blocks[b];
      const std::string bp = pre + "block" + std::to_string(b) + ".";
      f(bp + "q.w", k.wq);
      f(bp + "q.b", k.bq);
      f(bp + "k.w", k.wk);
      f(bp + "k.b", k.bk);
      f(bp + "v.w", k.wv);
      f(bp + "v.b", k.bv);
      f(bp + "o.w", k.wo);
      f(bp + "o.b", k.bo);
      f(bp + "ln1.g", k.ln1_g);
      f(bp + "ln1.b", k.ln1_b);
      f(bp + "proj.w", k.wp);
      f(bp + "proj.b", k.bp);
      f(bp + "ln2.g", k.ln2_g);
      f(bp + "ln2.b", k.ln2_b);
      f(bp + "ffn1.w", k.w1);
      f(bp + "ffn1.b", k.b1);
      f(bp + "ffn2.w", k.w2);
      f(bp + "ffn2.b", k.b2);
      f(bp + "ln3.g", k.ln3_g);
      f(bp + "ln3.b", k.ln3_b);
    }
  }
  f("decoder.fuse.w", p.fuse_w);
  f("decoder.fuse.b", p.fuse_b);
  f("decoder.ln.g", p.ln_g);
  f("decoder.ln.b", p.ln_b);
  f("decoder.pred.w", p.pred_w);
  f("decoder.pred.b", p.pred_b);
}

std::array<double, 5> box_scale(const Normalization& n) {
  return {n.image_scale, n.image_scale, n.depth_scale, n.image_scale, n.image_scale};
}

std::array<double, 5> normalize_box(const BBox5& b, const Normalization& n) {
  const auto s = box_scale(n);
  auto a = b.to_array();
  for (std::size_t j = 0; j < 5; ++j) a[j] /= s[j];
  return a;
}

BBox5 denormalize_row(std::span<const double> row, const Normalization& n) {
  const auto s = box_scale(n);
  std::array<double, 5> a{};
  for (std::size_t j = 0; j < 5; ++j) a[j] = row[j] * s[j];
  return BBox5::from_array(a);
}

// [n*len x n] selector that repeats row i of an [n x D] matrix len times.
Tensor expansion(std::size_t n, std::size_t len) {
  std::vector<double> e(n * len * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < len; ++r) e[(i * len + r) * n + i] = 1.0;
  return Tensor({n * len, n}, std::move(e));
}

Tensor col(const Tensor& t, std::size_t j) { return slice_cols(t, j, 1); }

void require_boxes(const Tensor& gt, const Tensor& pred, const char* op) {
  if (gt.shape() != pred.shape() || gt.dim() != 2 || gt.cols() != 5)
    throw ShapeMismatch(std::string(op) + ": " + tensor::to_string(gt.shape()) + " vs " +
                        tensor::to_string(pred.shape()));
}

}  // namespace

void ModelDims::validate() const {
  if (h_dim <= 0 || f_dim <= 0 || blocks <= 0 || heads <= 0)
    throw ConfigError("model dimensions must be positive");
  if (h_dim % heads != 0) throw ConfigError("H_dim must be divisible by the head count");
  if (f_dim < h_dim) throw ConfigError("F_dim must be at least H_dim");
  if (wl <= 2) throw ConfigError("window length must exceed 2");
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  visit(*this, [&](const std::string& n, const Tensor& t) { out.emplace_back(n, t); });
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  visit(*this, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t total = 0;
  visit(*this, [&](const std::string&, const Tensor& t) { total += t.numel(); });
  return total;
}

ModelParams ModelParams::clone() const {
  ModelParams c = *this;
  visit(c, [](const std::string&, const Tensor& t) { const_cast<Tensor&>(t) = t.clone(); });
  return c;
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed, const Normalization& norm) {
  dims.validate();
  Initializer init(seed);
  ModelParams p;
  p.dims = dims;
  p.norm = norm;
  p.encoders[kVisionEnc] = init_encoder(init, dims, ModelDims::kVision);
  p.encoders[kImuEnc] = init_encoder(init, dims, ModelDims::kImu);
  p.encoders[kFtmEnc] = init_encoder(init, dims, ModelDims::kFtm);
  p.fuse_w = init.matrix(3 * dims.h_dim, dims.h_dim);
  p.fuse_b = Initializer::vector(dims.h_dim, 0.0);
  p.ln_g = Initializer::vector(dims.h_dim, 1.0);
  p.ln_b = Initializer::vector(dims.h_dim, 0.0);
  // Zero head: an untrained model repeats the first box.
  p.pred_w = Tensor::zeros({std::size_t(dims.h_dim), std::size_t(ModelDims::kVision)}, true);
  p.pred_b = Initializer::vector(ModelDims::kVision, 0.0);
  return p;
}

Tensor positional_encoding(std::size_t len, std::size_t dim) {
  std::vector<double> pe(len * dim);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / double(dim));
      const double a = static_cast<double>(pos) * rate;
      pe[pos * dim + i] = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  }
  return Tensor({len, dim}, std::move(pe));
}

Tensor encoder_forward(const Tensor& x, const EncoderParams& enc, const ModelDims& dims) {
  const std::size_t wl = static_cast<std::size_t>(dims.wl);
  if (x.dim() != 2 || x.rows() == 0 || x.rows() % wl != 0 || x.cols() != enc.w_in.rows())
    throw ShapeMismatch("encoder: input " + tensor::to_string(x.shape()) + " for WL=" +
                        std::to_string(wl) + " and " + std::to_string(enc.w_in.rows()) +
                        " features");
  const std::size_t n = x.rows() / wl;
  const std::size_t hd = static_cast<std::size_t>(dims.h_dim);

  const Tensor pe_one = positional_encoding(wl, hd);
  std::vector<double> pe_all;
  pe_all.reserve(n * wl * hd);
  for (std::size_t i = 0; i < n; ++i)
    pe_all.insert(pe_all.end(), pe_one.data().begin(), pe_one.data().end());
  const Tensor pe({n * wl, hd}, std::move(pe_all));

  Tensor z = layer_norm(linear(x, enc.w_in, enc.b_in), enc.ln_in_g, enc.ln_in_b, kLnEps);
  z = layer_norm(z + pe, enc.ln_pe_g, enc.ln_pe_b, kLnEps);
  for (const auto& b : enc.blocks) {
    Tensor att = multi_head_attention(linear(z, b.wq, b.bq), linear(z, b.wk, b.bk),
                                      linear(z, b.wv, b.bv), wl, std::size_t(dims.heads));
    z = layer_norm(z + linear(att, b.wo, b.bo), b.ln1_g, b.ln1_b, kLnEps);
    z = layer_norm(z + linear(z, b.wp, b.bp), b.ln2_g, b.ln2_b, kLnEps);
    Tensor ffn = linear(gelu(linear(z, b.w1, b.b1)), b.w2, b.b2);
    z = layer_norm(z + ffn, b.ln3_g, b.ln3_b, kLnEps);
  }
  return z;
}

Batch make_batch(std::span<const WindowSample* const> windows, const ModelParams& params) {
  const std::size_t wl = static_cast<std::size_t>(params.dims.wl);
  const std::size_t n = windows.size();
  const Normalization& nm = params.norm;
  std::vector<double> first, imu, ftm, truth;
  first.reserve(n * 5);
  imu.reserve(n * wl * 9);
  ftm.reserve(n * wl * 2);
  bool has_truth = true;
  for (const WindowSample* w : windows) {
    if (w->imu.size() != wl || w->ftm.size() != wl)
      throw WLMismatch("window has " + std::to_string(w->imu.size()) + " rows, model expects " +
                       std::to_string(wl));
    const auto f = normalize_box(w->first, nm);
    first.insert(first.end(), f.begin(), f.end());
    for (const auto& r : w->imu) imu.insert(imu.end(), r.begin(), r.end());
    for (const auto& r : w->ftm) {
      ftm.push_back(r[0] / nm.depth_scale);
      ftm.push_back(r[1] / nm.depth_scale);
    }
    if (w->truth.size() != wl) {
      has_truth = false;
      continue;
    }
    for (const auto& b : w->truth) {
      const auto a = normalize_box(b, nm);
      truth.insert(truth.end(), a.begin(), a.end());
    }
  }
  Batch batch;
  batch.n = n;
  batch.first = Tensor({n, 5}, std::move(first));
  batch.imu = Tensor({n * wl, 9}, std::move(imu));
  batch.ftm = Tensor({n * wl, 2}, std::move(ftm));
  if (has_truth) batch.truth = Tensor({n * wl, 5}, std::move(truth));
  return batch;
}

Tensor forward(const ModelParams& params, const Batch& batch) {
  const std::size_t wl = static_cast<std::size_t>(params.dims.wl);
  if (batch.first.dim() != 2 || batch.first.rows() != batch.n || batch.first.cols() != 5 ||
      batch.imu.rows() != batch.n * wl || batch.ftm.rows() != batch.n * wl)
    throw ShapeMismatch("forward: batch shapes do not match " + std::to_string(batch.n) +
                        " windows of WL=" + std::to_string(wl));
  // The first box is the vision sequence at every step.
  const Tensor anchor = matmul(expansion(batch.n, wl), batch.first);
  const Tensor xc = encoder_forward(anchor, params.encoders[kVisionEnc], params.dims);
  const Tensor xi = encoder_forward(batch.imu, params.encoders[kImuEnc], params.dims);
  const Tensor xf = encoder_forward(batch.ftm, params.encoders[kFtmEnc], params.dims);
  Tensor z = gelu(linear(concat_cols({xc, xi, xf}), params.fuse_w, params.fuse_b));
  z = layer_norm(z, params.ln_g, params.ln_b, kLnEps);
  return anchor + linear(z, params.pred_w, params.pred_b);
}

Tracklet vifit_forward(const BBox5& first, std::span<const ImuRow> imu,
                       std::span<const FtmRow> ftm, const ModelParams& params) {
  const std::size_t wl = static_cast<std::size_t>(params.dims.wl);
  if (imu.size() != wl || ftm.size() != wl)
    throw ShapeMismatch("vifit_forward: " + std::to_string(imu.size()) + " IMU and " +
                        std::to_string(ftm.size()) + " FTM rows for WL=" + std::to_string(wl));
  WindowSample w;
  w.first = first;
  w.imu.assign(imu.begin(), imu.end());
  w.ftm.assign(ftm.begin(), ftm.end());
  const WindowSample* ptr = &w;
  const Tensor out = forward(params, make_batch({&ptr, 1}, params));
  Tracklet t;
  t.reserve(wl);
  for (std::size_t r = 0; r < wl; ++r) t.push_back(denormalize_row(out.data().subspan(r * 5, 5), params.norm));
  return t;
}

// ---- losses ----------------------------------------------------------------

Tensor loss_mse(const Tensor& gt, const Tensor& pred) {
  require_boxes(gt, pred, "loss_mse");
  return mean(square(pred - gt));
}

Tensor loss_diou(const Tensor& gt, const Tensor& pred) {
  require_boxes(gt, pred, "loss_diou");
  for (std::size_t r = 0; r < gt.rows(); ++r)
    if (!(gt.at(r, 3) > 0.0) || !(gt.at(r, 4) > 0.0))
      throw DegenerateBox("loss_diou: ground-truth box " + std::to_string(r) + " has no area");
  const Tensor gx = col(gt, 0), gy = col(gt, 1), gw = col(gt, 3), gh = col(gt, 4);
  const Tensor px = col(pred, 0), py = col(pred, 1);
  const Tensor pw = relu(col(pred, 3)), ph = relu(col(pred, 4));

  const Tensor gl = gx - scale(gw, 0.5), gr = gx + scale(gw, 0.5);
  const Tensor gt_ = gy - scale(gh, 0.5), gb = gy + scale(gh, 0.5);
  const Tensor pl = px - scale(pw, 0.5), pr = px + scale(pw, 0.5);
  const Tensor pt = py - scale(ph, 0.5), pb = py + scale(ph, 0.5);

  const Tensor iw = relu(minimum(gr, pr) - maximum(gl, pl));
  const Tensor ih = relu(minimum(gb, pb) - maximum(gt_, pt));
  const Tensor inter = iw * ih;
  const Tensor uni = gw * gh + pw * ph - inter;
  const Tensor iou = inter / uni;

  const Tensor ew = maximum(gr, pr) - minimum(gl, pl);
  const Tensor eh = maximum(gb, pb) - minimum(gt_, pt);
  const Tensor rho2 = square(gx - px) + square(gy - py);
  const Tensor s2 = square(ew) + square(eh);
  return add_scalar(mean(rho2 / s2 - iou), 1.0);
}

Tensor loss_diou_d(const Tensor& gt, const Tensor& pred) {
  require_boxes(gt, pred, "loss_diou_d");
  const Tensor depth = mean(square(col(pred, 2) - col(gt, 2)));
  return scale(loss_diou(gt, pred), 0.5) + scale(depth, 0.5);
}

LossKind parse_loss(const std::string& name) {
  if (name == "mse") return LossKind::Mse;
  if (name == "diou") return LossKind::Diou;
  if (name == "diou_d") return LossKind::DiouD;
  throw ConfigError("unknown loss '" + name + "' (expected mse, diou or diou_d)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Mse: return "mse";
    case LossKind::Diou: return "diou";
    case LossKind::DiouD: return "diou_d";
  }
  return "?";
}

Tensor compute_loss(LossKind kind, const Tensor& gt, const Tensor& pred) {
  switch (kind) {
    case LossKind::Mse: return loss_mse(gt, pred);
    case LossKind::Diou: return loss_diou(gt, pred);
    case LossKind::DiouD: return loss_diou_d(gt, pred);
  }
  throw ConfigError("unknown loss");
}

// ---- training --------------------------------------------------------------

namespace {

// Sum of IoUs over frames 1..WL-1 of each window in a normalized prediction.
double iou_sum(const Tensor& pred, std::span<const WindowSample* const> windows,
               const ModelParams& params) {
  const std::size_t wl = static_cast<std::size_t>(params.dims.wl);
  double total = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (std::size_t r = 1; r < wl; ++r) {
      BBox5 b = denormalize_row(pred.data().subspan((i * wl + r) * 5, 5), params.norm);
      b.w = std::max(b.w, 1.0);
      b.h = std::max(b.h, 1.0);
      total += metrics::iou(windows[i]->truth[r], b);
    }
  }
  return total;
}

void check_dataset(std::span<const WindowSample> data, int wl) {
  if (data.empty()) throw EmptyDataset("training set has no windows");
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].length() != std::size_t(wl) || data[i].imu.size() != std::size_t(wl) ||
        data[i].ftm.size() != std::size_t(wl))
      throw WLMismatch("window " + std::to_string(i) + " has " +
                       std::to_string(data[i].length()) + " frames, expected WL=" +
                       std::to_string(wl));
}

}  // namespace

double mean_train_iou(const ModelParams& params, std::span<const WindowSample> data) {
  check_dataset(data, params.dims.wl);
  std::vector<const WindowSample*> ptrs;
  for (const auto& w : data) ptrs.push_back(&w);
  double total = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t s = 0; s < ptrs.size(); s += kChunk) {
    std::span<const WindowSample* const> chunk(ptrs.data() + s, std::min(kChunk, ptrs.size() - s));
    total += iou_sum(forward(params, make_batch(chunk, params)), chunk, params);
  }
  return total / static_cast<double>(data.size() * std::size_t(params.dims.wl - 1));
}

TrainResult train(std::span<const WindowSample> data, const TrainConfig& cfg, ModelParams params,
                  tensor::AdamState optimizer, const EpochCallback& on_epoch) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (cfg.batch < 1) throw ConfigError("batch size must be at least 1");
  if (cfg.wl != params.dims.wl)
    throw WLMismatch("training WL=" + std::to_string(cfg.wl) + " but the model was built for WL=" +
                     std::to_string(params.dims.wl));
  check_dataset(data, cfg.wl);

  std::vector<Tensor> list = params.tensors();
  for (auto& t : list) t.set_requires_grad(true);
  optimizer.lr = cfg.lr;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch);

  TrainResult result;
  std::vector<const WindowSample*> chunk;
  std::vector<std::vector<double>> grads(list.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_total = 0.0, iou_total = 0.0;
    for (std::size_t s = 0; s < order.size(); s += bs) {
      chunk.clear();
      for (std::size_t i = s; i < std::min(order.size(), s + bs); ++i) chunk.push_back(&data[order[i]]);
      const Batch batch = make_batch(chunk, params);
      Graph graph;
      Tensor pred, loss;
      {
        GraphScope scope(graph);
        pred = forward(params, batch);
        loss = compute_loss(cfg.loss, batch.truth, pred);
      }
      const Gradients g = graph.backward(loss);
      for (std::size_t i = 0; i < list.size(); ++i) grads[i] = g.of(list[i]);
      tensor::adam_step(list, grads, optimizer);
      loss_total += loss.item() * static_cast<double>(chunk.size());
      iou_total += iou_sum(pred, chunk, params);
    }
    EpochStats st;
    st.epoch = epoch;
    st.loss = loss_total / static_cast<double>(data.size());
    st.train_iou = iou_total / static_cast<double>(data.size() * std::size_t(cfg.wl - 1));
    result.history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  result.params = std::move(params);
  result.optimizer = std::move(optimizer);
  return result;
}

TrainResult train(std::span<const WindowSample> data, const TrainConfig& cfg,
                  const ModelDims& dims, const EpochCallback& on_epoch) {
  return train(data, cfg, init_params(dims, cfg.seed), {}, on_epoch);
}

// ---- checkpoint ------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const tensor::AdamState* optimizer) {
  using nlohmann::ordered_json;
  ordered_json manifest;
  const auto& d = params.dims;
  manifest["dims"] = {{"h_dim", d.h_dim}, {"f_dim", d.f_dim}, {"blocks", d.blocks},
                      {"heads", d.heads}, {"wl", d.wl}};
  manifest["norm"] = {{"image_scale", params.norm.image_scale},
                      {"depth_scale", params.norm.depth_scale}};
  ordered_json tensors = ordered_json::array();
  std::size_t offset = 0;
  const auto named = params.named();
  for (const auto& [name, t] : named) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel();
  }
  manifest["tensors"] = std::move(tensors);
  manifest["values"] = offset;
  const bool with_opt = optimizer != nullptr && optimizer->step > 0;
  if (with_opt)
    manifest["optimizer"] = {{"step", optimizer->step}, {"lr", optimizer->lr},
                             {"beta1", optimizer->beta1}, {"beta2", optimizer->beta2},
                             {"eps", optimizer->eps}};
  else
    manifest["optimizer"] = nullptr;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kMagic << '\n' << manifest.dump() << '\n';
  auto write = [&](std::span<const double> v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  for (const auto& [name, t] : named) write(t.data());
  if (with_opt) {
    for (const auto& m : optimizer->first_moment) write(m);
    for (const auto& v : optimizer->second_moment) write(v);
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingCheckpoint("no checkpoint at " + path.string());
  std::string magic, header;
  if (!std::getline(in, magic) || magic != kMagic)
    throw ParseError(1, "not a checkpoint file: " + path.string());
  if (!std::getline(in, header)) throw ParseError(2, "missing checkpoint manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(2, std::string("bad checkpoint manifest: ") + e.what());
  }

  Checkpoint ck;
  try {
    const auto& d = manifest.at("dims");
    ModelDims dims{d.at("h_dim").get<int>(), d.at("f_dim").get<int>(), d.at("blocks").get<int>(),
                   d.at("heads").get<int>(), d.at("wl").get<int>()};
    Normalization norm{manifest.at("norm").at("image_scale").get<double>(),
                       manifest.at("norm").at("depth_scale").get<double>()};
    ck.params = init_params(dims, 0, norm);
    const auto named = ck.params.named();
    const auto& entries = manifest.at("tensors");
    if (entries.size() != named.size())
      throw ParseError(2, "checkpoint lists " + std::to_string(entries.size()) +
                              " tensors, model has " + std::to_string(named.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
      if (entries[i].at("name").get<std::string>() != named[i].first ||
          entries[i].at("shape").get<Shape>() != named[i].second.shape())
        throw ParseError(2, "checkpoint tensor " + std::to_string(i) + " does not match " +
                                named[i].first);
    }
    auto read = [&](std::span<double> v) {
      in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
      if (!in) throw ParseError(3, "checkpoint payload is truncated");
    };
    for (const auto& [name, t] : named) read(Tensor(t).mutable_data());
    const auto& opt = manifest.at("optimizer");
    if (!opt.is_null()) {
      auto& o = ck.optimizer;
      o.step = opt.at("step").get<std::int64_t>();
      o.lr = opt.at("lr").get<double>();
      o.beta1 = opt.at("beta1").get<double>();
      o.beta2 = opt.at("beta2").get<double>();
      o.eps = opt.at("eps").get<double>();
      for (const auto& [name, t] : named) o.first_moment.emplace_back(t.numel());
      for (const auto& [name, t] : named) o.second_moment.emplace_back(t.numel());
      for (auto& m : o.first_moment) read(m);
      for (auto& v : o.second_moment) read(v);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(2, std::string("bad checkpoint manifest: ") + e.what());
  }
  return ck;
}

// ---- reconstructor -----------------------------------------------------------

Tracklet VifitReconstructor::reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                                         std::span<const FtmRow> ftm) {
  if (imu.size() != std::size_t(params_.dims.wl) || ftm.size() != std::size_t(params_.dims.wl))
    throw WLMismatch("vifit model expects WL=" + std::to_string(params_.dims.wl) + ", got " +
                     std::to_string(imu.size()));
  Tracklet out = vifit_forward(first, imu, ftm, params_);
  for (auto& b : out) {
    b.w = std::max(b.w, 1.0);
    b.h = std::max(b.h, 1.0);
    b.d = std::max(b.d, 0.0);
  }
  out.front() = first;
  return out;
}

}  // namespace trackfuse::vifit
