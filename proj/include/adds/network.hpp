// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// The domain-separated depth architecture: per-domain first-layer stems
// feeding a weight-shared residual trunk (invariant path), fully separate
// private encoders, a shared U-Net depth decoder, per-domain image
// reconstruction decoders, 1x1 feature reducers, and a pose network.
// Day and night depth share every parameter except the stem.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "adds/domain.hpp"
#include "adds/geometry.hpp"
#include "adds/losses.hpp"

namespace adds {

/// Which learned 1x1 reducer to apply to a deepest-scale feature map.
enum class ReducerId { day_inv, day_priv, night_inv, night_priv };

struct NetworkConfig {
  int encoder_depth = 18;  // residual layer schedule: 18 (2 blocks/stage) or 10 (1 block/stage)
  int num_scales = 4;      // decoder sigmoid heads, finest at input resolution
  int cr = 16;             // reduced channel count for the orthogonality losses

  void validate() const {
    if (encoder_depth != 18 && encoder_depth != 10)
      throw ConfigError("encoder_depth must be 18 or 10");
    if (num_scales < 1 || num_scales > 4) throw ConfigError("num_scales must lie in [1,4]");
    if (cr < 1) throw ConfigError("cr must be >= 1");
  }

  int blocks_per_stage() const { return encoder_depth == 18 ? 2 : 1; }
};

/// Encoder channel schedule at strides {2,4,8,16,32}.
inline const std::vector<int64_t>& encoder_channels() {
  static const std::vector<int64_t> ch{64, 64, 128, 256, 512};
  return ch;
}

/// Multi-scale encoder features. levels[i] has stride 2^(i+1) and the channel
/// count of encoder_channels()[i].
struct FeaturePyramid {
  std::vector<Var> levels;

  void validate(int64_t input_h, int64_t input_w) const {
    const auto& ch = encoder_channels();
    if (levels.size() != ch.size()) throw InvalidInputError("feature pyramid: wrong level count");
    for (size_t i = 0; i < levels.size(); ++i) {
      const Tensor& v = levels[i]->value;
      const int64_t stride = int64_t{2} << i;
      if (v.ndim() != 4 || v.dim(1) != ch[i] || v.dim(2) != input_h / stride ||
          v.dim(3) != input_w / stride)
        throw InvalidInputError("feature pyramid: level " + std::to_string(i) +
                                " has shape " + v.shape_str());
    }
  }

  const Var& deepest() const { return levels.back(); }
};

// ---------------------------------------------------------------------------
// Parameter registry: a flat, ordered list of named leaves plus named
// normalization buffers; group membership is the name prefix before '/'.
// ---------------------------------------------------------------------------

struct ParamEntry {
  std::string name;
  Var param;
};

struct BufferEntry {
  std::string name;
  Tensor* tensor;  // owned by a layer; stable while the model lives
};

class ParamRegistry {
 public:
  Var add(const std::string& name, Tensor init) {
    Var v = make_leaf(std::move(init), true);
    params_.push_back({name, v});
    return v;
  }
  void add_buffer(const std::string& name, Tensor* t) { buffers_.push_back({name, t}); }

  const std::vector<ParamEntry>& params() const { return params_; }
  const std::vector<BufferEntry>& buffers() const { return buffers_; }

 private:
  std::vector<ParamEntry> params_;
  std::vector<BufferEntry> buffers_;
};

// ---------------------------------------------------------------------------
// Layers.
// ---------------------------------------------------------------------------

struct Conv2dLayer {
  Var weight, bias;
  int64_t stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry& reg, const std::string& name, int64_t cin, int64_t cout, int64_t k,
              int64_t stride_, int64_t pad_, bool with_bias, Rng& rng) {
    stride = stride_;
    pad = pad_;
    const double std = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    weight = reg.add(name + ".weight", rng.randn({cout, cin, k, k}, 0.0, std));
    if (with_bias) bias = reg.add(name + ".bias", Tensor::zeros({cout}));
  }

  void zero_init() {
    std::fill(weight->value.data(), weight->value.data() + weight->value.numel(), 0.0);
    if (bias) std::fill(bias->value.data(), bias->value.data() + bias->value.numel(), 0.0);
  }

  Var forward(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct BatchNorm2dLayer {
  Var gamma, beta;
  std::unique_ptr<Tensor> running_mean, running_var;  // stable addresses for the registry

  BatchNorm2dLayer() = default;
  BatchNorm2dLayer(ParamRegistry& reg, const std::string& name, int64_t c) {
    gamma = reg.add(name + ".gamma", Tensor::ones({c}));
    beta = reg.add(name + ".beta", Tensor::zeros({c}));
    running_mean = std::make_unique<Tensor>(Tensor::zeros({c}));
    running_var = std::make_unique<Tensor>(Tensor::ones({c}));
    reg.add_buffer(name + ".running_mean", running_mean.get());
    reg.add_buffer(name + ".running_var", running_var.get());
  }

  Var forward(const Var& x, bool training) const {
    return batch_norm(x, gamma, beta, *running_mean, *running_var, training);
  }
};

/// First convolution layer of a depth branch: 7x7 stride-2 conv + batch
/// normalization + ReLU. This is the only part of the invariant path that is
/// not weight-shared across domains.
struct Stem {
  Conv2dLayer conv;
  BatchNorm2dLayer bn;

  Stem() = default;
  Stem(ParamRegistry& reg, const std::string& name, Rng& rng)
      : conv(reg, name + ".conv", 3, encoder_channels()[0], 7, 2, 3, false, rng),
        bn(reg, name + ".bn", encoder_channels()[0]) {}

  Var forward(const Var& x, bool training) const {
    return relu(bn.forward(conv.forward(x), training));
  }
};

struct BasicBlock {
  Conv2dLayer conv1, conv2;
  BatchNorm2dLayer bn1, bn2;
  std::optional<Conv2dLayer> down_conv;
  std::optional<BatchNorm2dLayer> down_bn;

  BasicBlock() = default;
  BasicBlock(ParamRegistry& reg, const std::string& name, int64_t cin, int64_t cout,
             int64_t stride, Rng& rng)
      : conv1(reg, name + ".conv1", cin, cout, 3, stride, 1, false, rng),
        conv2(reg, name + ".conv2", cout, cout, 3, 1, 1, false, rng),
        bn1(reg, name + ".bn1", cout),
        bn2(reg, name + ".bn2", cout) {
    if (stride != 1 || cin != cout) {
      down_conv.emplace(reg, name + ".down", cin, cout, 1, stride, 0, false, rng);
      down_bn.emplace(reg, name + ".down_bn", cout);
    }
  }

  Var forward(const Var& x, bool training) const {
    Var out = bn2.forward(conv2.forward(relu(bn1.forward(conv1.forward(x), training))), training);
    Var skip = down_conv ? down_bn->forward(down_conv->forward(x), training) : x;
    return relu(add(out, skip));
  }
};

/// Everything after the stem: max pool plus four residual stages. Produces
/// pyramid levels 1..4 given the stem output (level 0).
struct EncoderTrunk {
  std::vector<std::vector<BasicBlock>> stages;

  EncoderTrunk() = default;
  EncoderTrunk(ParamRegistry& reg, const std::string& name, int blocks_per_stage, Rng& rng) {
    const auto& ch = encoder_channels();
    stages.resize(4);
    for (int s = 0; s < 4; ++s) {
      const int64_t cin = ch[s], cout = ch[s + 1];
      const int64_t stride = (s == 0) ? 1 : 2;  // stage 1 follows the stride-2 max pool
      for (int b = 0; b < blocks_per_stage; ++b)
        stages[s].emplace_back(reg, name + ".stage" + std::to_string(s + 1) + ".block" +
                                        std::to_string(b),
                               b == 0 ? cin : cout, cout, b == 0 ? stride : 1, rng);
    }
  }

  std::vector<Var> forward(const Var& stem_out, bool training) const {
    std::vector<Var> levels;
    Var x = max_pool_3x3_s2(stem_out);
    for (const auto& stage : stages) {
      for (const auto& block : stage) x = block.forward(x, training);
      levels.push_back(x);
    }
    return levels;
  }
};

/// A full private encoder: own stem + own trunk, nothing shared.
struct PrivateEncoder {
  Stem stem;
  EncoderTrunk trunk;

  PrivateEncoder() = default;
  PrivateEncoder(ParamRegistry& reg, const std::string& name, int blocks_per_stage, Rng& rng)
      : stem(reg, name + ".stem", rng), trunk(reg, name + ".trunk", blocks_per_stage, rng) {}
};

/// U-Net style decoder over a feature pyramid. Shared topology between the
/// depth decoder (1-channel heads at num_scales scales) and the image
/// reconstruction decoders (one 3-channel head at full resolution).
struct PyramidDecoder {
  static const std::vector<int64_t>& decoder_channels() {
    static const std::vector<int64_t> ch{16, 32, 64, 128, 256};
    return ch;
  }

  std::vector<Conv2dLayer> upconv_pre;   // index i in 0..4, applied coarsest-first
  std::vector<Conv2dLayer> upconv_post;  // after upsample + skip concat
  std::vector<Conv2dLayer> heads;        // heads[s] emits at scale s (0 finest)
  int64_t head_channels = 1;
  int num_heads = 4;

  PyramidDecoder() = default;
  PyramidDecoder(ParamRegistry& reg, const std::string& name, int num_heads_,
                 int64_t head_channels_, Rng& rng) {
    const auto& enc = encoder_channels();
    const auto& dec = decoder_channels();
    head_channels = head_channels_;
    num_heads = num_heads_;
    upconv_pre.resize(5);
    upconv_post.resize(5);
    for (int i = 4; i >= 0; --i) {
      const int64_t cin_pre = (i == 4) ? enc[4] : dec[i + 1];
      upconv_pre[i] = Conv2dLayer(reg, name + ".up" + std::to_string(i) + "_pre", cin_pre, dec[i],
                                  3, 1, 1, true, rng);
      const int64_t cin_post = dec[i] + (i > 0 ? enc[i - 1] : 0);
      upconv_post[i] = Conv2dLayer(reg, name + ".up" + std::to_string(i) + "_post", cin_post,
                                   dec[i], 3, 1, 1, true, rng);
    }
    for (int s = 0; s < num_heads; ++s)
      heads.emplace_back(reg, name + ".head" + std::to_string(s), dec[s], head_channels, 3, 1, 1,
                         true, rng);
  }

  /// Outputs indexed by scale: out[s] has spatial size (H/2^s, W/2^s) of the
  /// decoder input resolution; sigmoid range (0,1).
  std::vector<Var> forward(const FeaturePyramid& f) const {
    std::vector<Var> outputs(static_cast<size_t>(num_heads));
    Var x = f.levels[4];
    for (int i = 4; i >= 0; --i) {
      x = elu(upconv_pre[static_cast<size_t>(i)].forward(x));
      x = upsample_nearest2(x);
      if (i > 0) x = concat_channels({x, f.levels[static_cast<size_t>(i - 1)]});
      x = elu(upconv_post[static_cast<size_t>(i)].forward(x));
      if (i < num_heads) outputs[static_cast<size_t>(i)] = sigmoid(heads[static_cast<size_t>(i)].forward(x));
    }
    return outputs;
  }
};

/// Pose regressor: consumes a channel-concatenated image pair and emits a
/// 6-vector (axis-angle | translation) scaled by 0.01. The final convolution
/// is zero-initialized so training starts from the identity transform.
struct PoseNet {
  std::vector<Conv2dLayer> convs;
  Conv2dLayer head;

  PoseNet() = default;
  PoseNet(ParamRegistry& reg, const std::string& name, Rng& rng) {
    const int64_t ch[6] = {16, 32, 64, 128, 256, 256};
    int64_t cin = 6;
    for (int i = 0; i < 6; ++i) {
      const int64_t k = (i == 0) ? 7 : (i == 1 ? 5 : 3);
      const int64_t stride = (i == 5) ? 1 : 2;
      convs.emplace_back(reg, name + ".conv" + std::to_string(i), cin, ch[i], k, stride, k / 2,
                         true, rng);
      cin = ch[i];
    }
    head = Conv2dLayer(reg, name + ".head", cin, 6, 1, 1, 0, true, rng);
    head.zero_init();
  }

  /// [N,6] pose vector for the pair (a, b), already scaled by 0.01.
  Var forward(const Var& a, const Var& b) const {
    Var x = concat_channels({a, b});
    for (const auto& c : convs) x = relu(c.forward(x));
    return mul_scalar(spatial_mean(head.forward(x)), 0.01);
  }
};

// ---------------------------------------------------------------------------
// The full model.
// ---------------------------------------------------------------------------

class DomainSeparatedModel {
 public:
  explicit DomainSeparatedModel(NetworkConfig config = {}, uint64_t seed = 0)
      : config_(config) {
    config_.validate();
    Rng rng(seed);
    const int bps = config_.blocks_per_stage();
    stem_day_ = Stem(registry_, "stem_day/stem", rng);
    stem_night_ = Stem(registry_, "stem_night/stem", rng);
    shared_trunk_ = EncoderTrunk(registry_, "shared_encoder/trunk", bps, rng);
    private_day_ = PrivateEncoder(registry_, "private_day/encoder", bps, rng);
    private_night_ = PrivateEncoder(registry_, "private_night/encoder", bps, rng);
    depth_decoder_ = PyramidDecoder(registry_, "depth_decoder/dec", config_.num_scales, 1, rng);
    recon_day_ = PyramidDecoder(registry_, "recon_day/dec", 1, 3, rng);
    recon_night_ = PyramidDecoder(registry_, "recon_night/dec", 1, 3, rng);
    const int64_t c_deep = encoder_channels().back();
    reducer_day_inv_ =
        Conv2dLayer(registry_, "reducers/day_inv", c_deep, config_.cr, 1, 1, 0, true, rng);
    reducer_day_priv_ =
        Conv2dLayer(registry_, "reducers/day_priv", c_deep, config_.cr, 1, 1, 0, true, rng);
    reducer_night_inv_ =
        Conv2dLayer(registry_, "reducers/night_inv", c_deep, config_.cr, 1, 1, 0, true, rng);
    reducer_night_priv_ =
        Conv2dLayer(registry_, "reducers/night_priv", c_deep, config_.cr, 1, 1, 0, true, rng);
    pose_net_ = PoseNet(registry_, "pose_net/net", rng);
  }

  DomainSeparatedModel(const DomainSeparatedModel&) = delete;
  DomainSeparatedModel& operator=(const DomainSeparatedModel&) = delete;

  const NetworkConfig& config() const { return config_; }

  /// Invariant features: per-domain stem, then the shared trunk.
  FeaturePyramid invariant_encode(const Var& image, Domain d, bool training) const {
    check_input(image);
    const Stem& stem = (d == Domain::day) ? stem_day_ : stem_night_;
    Var l0 = stem.forward(image, training);
    FeaturePyramid f;
    f.levels.push_back(l0);
    for (Var& v : shared_trunk_.forward(l0, training)) f.levels.push_back(std::move(v));
    f.validate(image->value.dim(2), image->value.dim(3));
    return f;
  }

  /// Private features: a fully separate per-domain encoder.
  FeaturePyramid private_encode(const Var& image, Domain d, bool training) const {
    check_input(image);
    const PrivateEncoder& enc = (d == Domain::day) ? private_day_ : private_night_;
    Var l0 = enc.stem.forward(image, training);
    FeaturePyramid f;
    f.levels.push_back(l0);
    for (Var& v : enc.trunk.forward(l0, training)) f.levels.push_back(std::move(v));
    f.validate(image->value.dim(2), image->value.dim(3));
    return f;
  }

  /// Shared depth decoder; outputs sigmoid disparities, index 0 finest (input
  /// resolution).
  std::vector<Var> decode_depth(const FeaturePyramid& f_i) const {
    check_pyramid(f_i, "decode_depth");
    return depth_decoder_.forward(f_i);
  }

  /// Per-domain image reconstruction from the level-wise sum f_p + f_i.
  Var reconstruct_image(const FeaturePyramid& f_p, const FeaturePyramid& f_i, Domain d) const {
    check_pyramid(f_p, "reconstruct_image");
    check_pyramid(f_i, "reconstruct_image");
    FeaturePyramid summed;
    for (size_t i = 0; i < f_p.levels.size(); ++i) {
      require_same_shape(f_p.levels[i]->value, f_i.levels[i]->value, "reconstruct_image");
      summed.levels.push_back(add(f_p.levels[i], f_i.levels[i]));
    }
    const PyramidDecoder& dec = (d == Domain::day) ? recon_day_ : recon_night_;
    return dec.forward(summed)[0];
  }

  /// Transform from frame_b's camera coordinates into frame_a's, as a [N,12]
  /// tape node. Feeding (source, target) yields the matrix warp() expects.
  Var estimate_pose_transform(const Var& frame_a, const Var& frame_b) const {
    require_same_shape(frame_a->value, frame_b->value, "estimate_pose");
    return se3_exp(pose_net_.forward(frame_a, frame_b));
  }

  /// Single-image convenience form returning a validated PoseSE3.
  PoseSE3 estimate_pose(const Tensor& frame_a, const Tensor& frame_b) const {
    if (frame_a.ndim() != 3 || !frame_a.same_shape(frame_b))
      throw InvalidInputError("estimate_pose: expects two CHW frames of equal shape");
    Var a = constant(frame_a.reshaped({1, frame_a.dim(0), frame_a.dim(1), frame_a.dim(2)}));
    Var b = constant(frame_b.reshaped({1, frame_b.dim(0), frame_b.dim(1), frame_b.dim(2)}));
    Var t = estimate_pose_transform(a, b);
    PoseSE3 pose;
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) pose.rotation[j * 3 + k] = t->value[j * 4 + k];
      pose.translation[j] = t->value[j * 4 + 3];
    }
    pose.validate();
    return pose;
  }

  /// Learned 1x1 reduction of a deepest-scale feature map to cr channels.
  Var reduce_features(const Var& deepest, ReducerId id) const {
    if (deepest->value.ndim() != 4 || deepest->value.dim(1) != encoder_channels().back())
      throw InvalidInputError("reduce_features expects the deepest-scale feature map");
    switch (id) {
      case ReducerId::day_inv:
        return reducer_day_inv_.forward(deepest);
      case ReducerId::day_priv:
        return reducer_day_priv_.forward(deepest);
      case ReducerId::night_inv:
        return reducer_night_inv_.forward(deepest);
      case ReducerId::night_priv:
        return reducer_night_priv_.forward(deepest);
    }
    throw ConfigError("unknown reducer id");
  }

  // -- parameter access ------------------------------------------------------

  static const std::vector<std::string>& group_names() {
    static const std::vector<std::string> names{
        "stem_day",   "stem_night", "shared_encoder", "private_day", "private_night",
        "depth_decoder", "recon_day",  "recon_night",    "reducers",    "pose_net"};
    return names;
  }

  static std::string group_of(const std::string& param_name) {
    return param_name.substr(0, param_name.find('/'));
  }

  const std::vector<ParamEntry>& parameters() const { return registry_.params(); }
  const std::vector<BufferEntry>& buffers() const { return registry_.buffers(); }

  std::vector<Var> group(const std::string& group_name) const {
    std::vector<Var> out;
    for (const auto& e : registry_.params())
      if (group_of(e.name) == group_name) out.push_back(e.param);
    if (out.empty()) throw ConfigError("unknown parameter group: " + group_name);
    return out;
  }

  void zero_grad() const {
    for (const auto& e : registry_.params()) e.param->zero_grad();
  }

 private:
  static void check_input(const Var& image) {
    const Tensor& v = image->value;
    if (v.ndim() != 4 || v.dim(1) != 3) throw InvalidInputError("encoder expects [N,3,H,W]");
    if (v.dim(2) % 32 != 0 || v.dim(3) % 32 != 0)
      throw InvalidInputError("encoder input dims must be divisible by 32, got " + v.shape_str());
  }

  void check_pyramid(const FeaturePyramid& f, const char* what) const {
    if (f.levels.size() != encoder_channels().size())
      throw InvalidInputError(std::string(what) + ": pyramid level count mismatch");
    for (size_t i = 0; i < f.levels.size(); ++i)
      if (f.levels[i]->value.dim(1) != encoder_channels()[i])
        throw InvalidInputError(std::string(what) + ": pyramid channel mismatch at level " +
                                std::to_string(i));
  }

  NetworkConfig config_;
  ParamRegistry registry_;
  Stem stem_day_, stem_night_;
  EncoderTrunk shared_trunk_;
  PrivateEncoder private_day_, private_night_;
  PyramidDecoder depth_decoder_, recon_day_, recon_night_;
  Conv2dLayer reducer_day_inv_, reducer_day_priv_, reducer_night_inv_, reducer_night_priv_;
  PoseNet pose_net_;
};

}  // namespace adds
