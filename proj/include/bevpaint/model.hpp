#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bevpaint/adam.hpp"
#include "bevpaint/conv.hpp"
#include "bevpaint/geometry.hpp"
#include "bevpaint/liftsplat.hpp"
#include "bevpaint/losses.hpp"
#include "bevpaint/tensor.hpp"

namespace bevpaint {

struct ModelConfig {
  std::int64_t context_channels = 64;  // C
  DepthBins depth{4.0, 45.0, 1.0};
  std::int64_t image_h = 128;
  std::int64_t image_w = 352;
  BevGridSpec grid;  // defaults to the 80m x 80m / 0.4m grid
  std::vector<std::string> classes = {"road", "vehicle", "lane"};
  std::int64_t color_channels = 3;
  std::int64_t width = 16;  // channel width of the encoder/decoder stacks
  double lambda_occ = 1.0;
  double lambda_app = 1.0;
  bool appearance_head_enabled = true;

  std::int64_t depth_bins() const { return depth.count(); }
  std::int64_t num_classes() const { return static_cast<std::int64_t>(classes.size()); }

  void validate() const {
    if (image_h % 16 != 0 || image_w % 16 != 0) {
      throw ConfigError("image size must be divisible by 16, got " + std::to_string(image_w) + "x" +
                        std::to_string(image_h));
    }
    if (grid.grid_x % 4 != 0 || grid.grid_y % 4 != 0) {
      throw ConfigError("grid dimensions must be divisible by 4 for the decoder stride/upsample chain");
    }
    if (classes.empty()) throw ConfigError("at least one occupancy class is required");
    if (lambda_occ < 0 || lambda_app < 0) throw ConfigError("loss weights must be non-negative");
    if (context_channels < 1 || width < 1 || color_channels < 1) {
      throw ConfigError("channel counts must be positive");
    }
    depth.count();  // validates the bin arithmetic
  }
};

// One training/eval batch. Images are stacked per (sample, camera) pair:
// index b * N + n. Targets are optional for pure inference.
template <class T>
struct SceneBatch {
  Tensor<T> images;  // (B*N) x 3 x H x W in [0,1]
  std::int64_t batch = 0;
  std::int64_t cameras = 0;
  Tensor<T> occupancy_target;   // B x |S| x X x Y, binary
  Tensor<T> appearance_target;  // B x n_c x X x Y in [0,1]
};

template <class T>
struct ForwardResult {
  Tensor<T> occ_logits;   // B x |S| x X x Y
  Tensor<T> appearance;   // B x n_c x X x Y in [0,1]; undefined when head off
  Tensor<T> bev_features; // B x C x X x Y (pooled, pre-decoder)
};

struct StepLosses {
  double occ = 0;
  double app = 0;
  double total = 0;
};

template <class T>
class Model {
 public:
  Model(ModelConfig config, CameraRig rig, Rng& init_rng)
      : cfg_(std::move(config)), rig_(std::move(rig)) {
    cfg_.validate();
    build(init_rng);
    rebuild_frustum_keys();
  }

  const ModelConfig& config() const { return cfg_; }
  const CameraRig& rig() const { return rig_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }

  // Trunk -> (context, depth distribution). The trunk emits C + D channels at
  // 1/16 resolution; the first C stay linear, the last D pass through a
  // per-pixel softmax.
  std::pair<Tensor<T>, Tensor<T>> encode(const Tensor<T>& images) const {
    if (images.ndim() != 4 || images.dim(1) != 3 || images.dim(2) != cfg_.image_h ||
        images.dim(3) != cfg_.image_w) {
      throw ShapeError("encode: expected M x 3 x " + std::to_string(cfg_.image_h) + " x " +
                       std::to_string(cfg_.image_w) + ", got " + shape_str(images.shape()));
    }
    Tensor<T> h = relu(stem_.apply(images));
    h = block1_.apply(h);
    h = block2_.apply(h);
    h = block3_.apply(h);
    h = head_.apply(h);
    const std::int64_t C = cfg_.context_channels;
    const std::int64_t D = cfg_.depth_bins();
    return {slice_channels(h, 0, C), softmax_over_channels(h, C, C + D)};
  }

  Tensor<T> decode_occupancy(const Tensor<T>& bev) const { return decode(occ_head_, bev); }
  Tensor<T> decode_appearance(const Tensor<T>& bev) const { return sigmoid(decode(app_head_, bev)); }

  ForwardResult<T> forward(const SceneBatch<T>& batch) const {
    if (batch.cameras != static_cast<std::int64_t>(rig_.size())) {
      throw ShapeError("forward: batch has " + std::to_string(batch.cameras) + " cameras, rig has " +
                       std::to_string(rig_.size()));
    }
    if (batch.images.dim(0) != batch.batch * batch.cameras) {
      throw ShapeError("forward: image stack " + shape_str(batch.images.shape()) + " does not match B*N");
    }
    auto [context, depth] = encode(batch.images);
    Tensor<T> lifted = lift(context, depth);
    ForwardResult<T> out;
    out.bev_features = voxel_pool_batched(lifted, batch.batch, batch.cameras, frustum_keys_, cfg_.grid);
    out.occ_logits = decode_occupancy(out.bev_features);
    if (cfg_.appearance_head_enabled) out.appearance = decode_appearance(out.bev_features);
    return out;
  }

  StepLosses compute_losses(const ForwardResult<T>& fwd, const SceneBatch<T>& batch,
                            Tensor<T>& total_out) const {
    Tensor<T> loss_occ = bce_with_logits_mean(fwd.occ_logits, batch.occupancy_target);
    Tensor<T> total = scale(loss_occ, static_cast<T>(cfg_.lambda_occ));
    StepLosses losses;
    losses.occ = static_cast<double>(loss_occ.item());
    if (cfg_.appearance_head_enabled) {
      Tensor<T> loss_app = l1_mean(fwd.appearance, batch.appearance_target);
      losses.app = static_cast<double>(loss_app.item());
      total = add(total, scale(loss_app, static_cast<T>(cfg_.lambda_app)));
    }
    losses.total = static_cast<double>(total.item());
    total_out = total;
    return losses;
  }

  // Forward, losses, backward, Adam. Throws NumericError on a non-finite
  // loss before any parameter is touched.
  StepLosses train_step(const SceneBatch<T>& batch, AdamState<T>& adam) {
    ForwardResult<T> fwd = forward(batch);
    Tensor<T> total;
    StepLosses losses = compute_losses(fwd, batch, total);
    if (!std::isfinite(losses.total) || !std::isfinite(losses.occ) || !std::isfinite(losses.app)) {
      throw NumericError("train_step: non-finite loss (occ=" + std::to_string(losses.occ) +
                         ", app=" + std::to_string(losses.app) + ", step=" + std::to_string(adam.step) + ")");
    }
    total.backward();
    for (auto& p : params_) p.value.ensure_grad();
    adam_update(params_, adam);
    return losses;
  }

  void set_rig(CameraRig rig) {
    rig_ = std::move(rig);
    rebuild_frustum_keys();
  }

 private:
  struct ConvLayer {
    Tensor<T> w, b;
    std::int64_t stride = 1, pad = 0;
    Tensor<T> apply(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }
  };

  // Two 3x3 convs with a skip; the skip is a 1x1 projection when stride or
  // channel count changes.
  struct ResidualBlock {
    ConvLayer conv1, conv2;
    std::optional<ConvLayer> proj;
    Tensor<T> apply(const Tensor<T>& x) const {
      Tensor<T> h = relu(conv1.apply(x));
      h = conv2.apply(h);
      Tensor<T> skip = proj ? proj->apply(x) : x;
      return relu(add(h, skip));
    }
  };

  struct DecoderHead {
    ResidualBlock stage1, stage2, stage3;
    ConvLayer final1x1;
  };

  Tensor<T> decode(const DecoderHead& head, const Tensor<T>& bev) const {
    Tensor<T> h = head.stage1.apply(bev);
    h = head.stage2.apply(h);
    h = head.stage3.apply(h);
    h = upsample_bilinear_x2(h);
    h = upsample_bilinear_x2(h);
    return head.final1x1.apply(h);
  }

  Tensor<T> add_param(const std::string& name, Shape shape, double stddev, Rng& rng) {
    auto t = Tensor<T>::zeros(shape, true);
    if (stddev > 0) {
      for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.normal(0.0, stddev));
    }
    params_.push_back({name, t});
    return t;
  }

  ConvLayer make_conv(const std::string& name, std::int64_t in_ch, std::int64_t out_ch, std::int64_t k,
                      std::int64_t stride, Rng& rng, bool zero_init = false) {
    ConvLayer layer;
    const double stddev = zero_init ? 0.0 : std::sqrt(2.0 / static_cast<double>(in_ch * k * k));
    layer.w = add_param(name + ".w", {out_ch, in_ch, k, k}, stddev, rng);
    layer.b = add_param(name + ".b", {out_ch}, 0.0, rng);
    layer.stride = stride;
    layer.pad = k / 2;
    return layer;
  }

  ResidualBlock make_block(const std::string& name, std::int64_t in_ch, std::int64_t out_ch,
                           std::int64_t stride, Rng& rng) {
    ResidualBlock b;
    b.conv1 = make_conv(name + ".conv1", in_ch, out_ch, 3, stride, rng);
    b.conv2 = make_conv(name + ".conv2", out_ch, out_ch, 3, 1, rng);
    if (stride != 1 || in_ch != out_ch) {
      b.proj = make_conv(name + ".proj", in_ch, out_ch, 1, stride, rng);
    }
    return b;
  }

  void build(Rng& rng) {
    const std::int64_t w = cfg_.width;
    const std::int64_t trunk_out = cfg_.context_channels + cfg_.depth_bins();
    stem_ = make_conv("encoder.stem", 3, w, 3, 2, rng);
    block1_ = make_block("encoder.block1", w, 2 * w, 2, rng);
    block2_ = make_block("encoder.block2", 2 * w, 3 * w, 2, rng);
    block3_ = make_block("encoder.block3", 3 * w, 4 * w, 2, rng);
    head_ = make_conv("encoder.head", 4 * w, trunk_out, 1, 1, rng);
    occ_head_ = make_decoder("occ_head", cfg_.num_classes(), rng);
    app_head_ = make_decoder("app_head", cfg_.color_channels, rng);
  }

  DecoderHead make_decoder(const std::string& name, std::int64_t out_ch, Rng& rng) {
    const std::int64_t w = cfg_.width;
    DecoderHead head;
    head.stage1 = make_block(name + ".stage1", cfg_.context_channels, w, 1, rng);
    head.stage2 = make_block(name + ".stage2", w, 2 * w, 2, rng);
    head.stage3 = make_block(name + ".stage3", 2 * w, 2 * w, 2, rng);
    // Zero-initialized output layer: step-0 logits are exactly zero.
    head.final1x1 = make_conv(name + ".final", 2 * w, out_ch, 1, 1, rng, /*zero_init=*/true);
    return head;
  }

  void rebuild_frustum_keys() {
    frustum_keys_.clear();
    const auto ranks = camera_canonical_ranks(rig_);
    for (std::size_t n = 0; n < rig_.size(); ++n) {
      const auto frustum = build_frustum(rig_.cameras[n].intrinsics, rig_.cameras[n].extrinsics, 16, cfg_.depth);
      if (frustum.grid_h != cfg_.image_h / 16 || frustum.grid_w != cfg_.image_w / 16) {
        throw ShapeError("rig camera " + std::to_string(n) + " image size does not match the model config");
      }
      frustum_keys_.push_back(frustum_point_keys(frustum, cfg_.grid, ranks[n]));
    }
  }

  ModelConfig cfg_;
  CameraRig rig_;
  std::vector<Parameter<T>> params_;
  ConvLayer stem_, head_;
  ResidualBlock block1_, block2_, block3_;
  DecoderHead occ_head_, app_head_;
  std::vector<PointBatchKeys> frustum_keys_;
};

}  // namespace bevpaint
