// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end optimization: loss wiring over both domains, the cumulative
// ablation ladder (U/P/PR/PRF/PRFG/PRFGS), Adam with the two-stage learning
// rate schedule, per-epoch checkpointing with exact resume, and the
// stem+trunk+decoder inference path.

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "adds/checkpoint.hpp"
#include "adds/data.hpp"
#include "adds/eval.hpp"
#include "adds/losses.hpp"
#include "adds/network.hpp"

namespace adds {

/// Photometric source-frame policy: `min_both` takes the per-pixel minimum
/// reprojection error over both neighbours; `eq8_literal` uses only t-1 with
/// a plain masked mean.
enum class PmPolicy { min_both, eq8_literal };

inline PmPolicy pm_policy_from_string(const std::string& s) {
  if (s == "min_both") return PmPolicy::min_both;
  if (s == "eq8_literal") return PmPolicy::eq8_literal;
  throw ConfigError("unknown pm_policy: " + s);
}

/// Which inputs/losses an ablation id enables. The ladder is cumulative.
struct AblationConfig {
  bool paired = true;
  bool recons = false;
  bool ortho_f = false;
  bool ortho_g = false;
  bool simi = false;
};

inline AblationConfig ablation_config(const std::string& id) {
  if (id == "U") return {false, false, false, false, false};
  if (id == "P") return {true, false, false, false, false};
  if (id == "PR") return {true, true, false, false, false};
  if (id == "PRF") return {true, true, true, false, false};
  if (id == "PRFG") return {true, true, true, true, false};
  if (id == "PRFGS") return {true, true, true, true, true};
  throw ConfigError("unknown ablation id: " + id + " (expected U|P|PR|PRF|PRFG|PRFGS)");
}

struct TrainConfig {
  int epochs = 20;
  int batch_size = 6;
  double lr = 1e-4;
  double lr_late = 1e-5;
  int lr_drop_epoch = 16;  // 1-based epoch at which lr_late takes over
  double beta1 = 0.9, beta2 = 0.999;
  LossWeights weights;
  std::string ablation = "PRFGS";
  uint64_t seed = 1;
  std::string device = "cpu";
  int num_scales = 4;
  PmPolicy pm_policy = PmPolicy::min_both;
  OrthoMode ortho_mode = OrthoMode::squared;
  ReconsSign recons_sign = ReconsSign::plus;
  double min_depth = 0.1, max_depth = 100.0;
  int checkpoint_keep = 0;  // keep the newest k epoch checkpoints; 0 = all
  NetworkConfig network;

  void validate() const {
    std::vector<std::string> problems;
    if (epochs < 1) problems.push_back("epochs must be >= 1");
    if (batch_size < 1) problems.push_back("batch_size must be >= 1");
    if (lr <= 0 || lr_late <= 0) problems.push_back("learning rates must be positive");
    try {
      weights.validate();
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
    try {
      ablation_config(ablation);
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
    try {
      NetworkConfig nc = network;
      nc.num_scales = num_scales;
      nc.validate();
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
    if (!(0 < min_depth && min_depth < max_depth))
      problems.push_back("require 0 < min_depth < max_depth");
    if (!problems.empty()) {
      std::string joined = "invalid train config:";
      for (const auto& p : problems) joined += "\n  - " + p;
      throw ConfigError(joined);
    }
  }

  double lr_for_epoch(int epoch /*1-based*/) const {
    return epoch >= lr_drop_epoch ? lr_late : lr;
  }
};

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

class Adam {
 public:
  Adam(const std::vector<ParamEntry>& params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& e : params_) {
      state_.m.push_back(Tensor::zeros(e.param->value.shape()));
      state_.v.push_back(Tensor::zeros(e.param->value.shape()));
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void zero_grad() {
    for (const auto& e : params_) e.param->zero_grad();
  }

  /// One update from the currently accumulated gradients (absent gradient
  /// buffers count as zero).
  void step() {
    ++state_.step_count;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step_count));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step_count));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& theta = params_[i].param->value;
      const Tensor& g = params_[i].param->grad_or_zero();
      Tensor& m = state_.m[i];
      Tensor& v = state_.v[i];
      for (int64_t j = 0; j < theta.numel(); ++j) {
        const double gj = g.empty() ? 0.0 : g[j];
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
        theta[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
      }
    }
  }

  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  const std::vector<ParamEntry>& params_;
  AdamState state_;
  double lr_, beta1_, beta2_, eps_;
};

// ---------------------------------------------------------------------------
// Forward pass and losses for one batch.
// ---------------------------------------------------------------------------

/// One optimizer step's worth of triplets. In paired ablations day[i] and
/// night[i] are counterparts; in the unpaired ablation they come from
/// different sequence positions.
struct Batch {
  std::vector<ImageTriplet> day;
  std::vector<ImageTriplet> night;
};

namespace detail {

inline Tensor stack_frames(const std::vector<ImageTriplet>& trips, int frame /*0,1,2*/) {
  const Tensor& f0 = trips[0].frames[static_cast<size_t>(frame)];
  Tensor out({static_cast<int64_t>(trips.size()), f0.dim(0), f0.dim(1), f0.dim(2)});
  for (size_t i = 0; i < trips.size(); ++i) {
    const Tensor& f = trips[i].frames[static_cast<size_t>(frame)];
    require_same_shape(f, f0, "batch frames");
    std::copy_n(f.data(), f.numel(), out.data() + static_cast<int64_t>(i) * f.numel());
  }
  return out;
}

/// Multi-scale photometric term for one domain. Disparities are upsampled to
/// full resolution before warping; scale losses are averaged.
inline Var photometric_term(const DomainSeparatedModel& model, const std::vector<Var>& disps,
                            const std::vector<ImageTriplet>& trips, const Var& target,
                            const TrainConfig& cfg) {
  const CameraIntrinsics& K = trips[0].intrinsics;
  const int64_t H = target->value.dim(2), W = target->value.dim(3);
  Var prev = constant(stack_frames(trips, 0));
  Var next = constant(stack_frames(trips, 2));
  Var t_prev = model.estimate_pose_transform(prev, target);
  Var t_next =
      cfg.pm_policy == PmPolicy::min_both ? model.estimate_pose_transform(next, target) : nullptr;

  std::vector<Var> scale_losses;
  for (int s = 0; s < cfg.num_scales; ++s) {
    Var disp_full = resize_bilinear(disps[static_cast<size_t>(s)], H, W);
    if (!disp_full->value.all_finite())
      throw DivergenceError("depth decoder produced non-finite disparity at scale " +
                            std::to_string(s));
    Var depth = disparity_to_depth_op(disp_full, cfg.min_depth, cfg.max_depth);
    WarpedImage wp = warp(prev, depth, t_prev, K);
    Var pe_prev = photometric_error_map(wp.image, target, cfg.weights.alpha);
    if (cfg.pm_policy == PmPolicy::eq8_literal) {
      const double valid = wp.mask.sum();
      if (valid <= 0.0) throw DegenerateInputError("photometric: fully invalid warp");
      scale_losses.push_back(
          mul_scalar(sum_all(mul(pe_prev, constant(wp.mask))), 1.0 / valid));
      continue;
    }
    WarpedImage wn = warp(next, depth, t_next, K);
    Var pe_next = photometric_error_map(wn.image, target, cfg.weights.alpha);
    // Invalid sources are pushed out of the minimum; pixels invalid in both
    // are excluded by the union mask.
    constexpr double kBig = 1e6;
    Tensor bias_prev(wp.mask.shape()), bias_next(wn.mask.shape()), unions(wp.mask.shape());
    for (int64_t i = 0; i < wp.mask.numel(); ++i) {
      bias_prev[i] = (1.0 - wp.mask[i]) * kBig;
      bias_next[i] = (1.0 - wn.mask[i]) * kBig;
      unions[i] = std::max(wp.mask[i], wn.mask[i]);
    }
    const double valid = unions.sum();
    if (valid <= 0.0) throw DegenerateInputError("photometric: fully invalid warp");
    Var pe = min_elem(add(pe_prev, constant(bias_prev)), add(pe_next, constant(bias_next)));
    scale_losses.push_back(mul_scalar(sum_all(mul(pe, constant(unions))), 1.0 / valid));
  }
  return mul_scalar(add_n(scale_losses), 1.0 / static_cast<double>(cfg.num_scales));
}

}  // namespace detail

/// Forward both domains, assemble the enabled losses, and (optionally) run
/// one optimizer update. Exposed separately from fit() for tests.
inline LossBundle train_step(DomainSeparatedModel& model, Adam& adam, const Batch& batch,
                             const TrainConfig& cfg) {
  if (batch.day.empty() || batch.night.empty())
    throw InvalidInputError("train_step: empty batch");
  const AblationConfig ab = ablation_config(cfg.ablation);
  const bool need_private = ab.recons || ab.ortho_f || ab.ortho_g;

  adam.zero_grad();

  Var day_x = constant(detail::stack_frames(batch.day, 1));
  Var night_x = constant(detail::stack_frames(batch.night, 1));

  FeaturePyramid fi_day = model.invariant_encode(day_x, Domain::day, /*training=*/true);
  FeaturePyramid fi_night = model.invariant_encode(night_x, Domain::night, true);
  std::vector<Var> disps_day = model.decode_depth(fi_day);
  std::vector<Var> disps_night = model.decode_depth(fi_night);

  Var recons, ortho_f, ortho_g, simi;
  if (need_private) {
    FeaturePyramid fp_day = model.private_encode(day_x, Domain::day, true);
    FeaturePyramid fp_night = model.private_encode(night_x, Domain::night, true);
    if (ab.recons) {
      Var rec_day = model.reconstruct_image(fp_day, fi_day, Domain::day);
      Var rec_night = model.reconstruct_image(fp_night, fi_night, Domain::night);
      recons = reconstruction_loss(rec_day, day_x, rec_night, night_x, cfg.recons_sign);
    }
    if (ab.ortho_f || ab.ortho_g) {
      Var vi_d = model.reduce_features(fi_day.deepest(), ReducerId::day_inv);
      Var vp_d = model.reduce_features(fp_day.deepest(), ReducerId::day_priv);
      Var vi_n = model.reduce_features(fi_night.deepest(), ReducerId::night_inv);
      Var vp_n = model.reduce_features(fp_night.deepest(), ReducerId::night_priv);
      if (ab.ortho_f)
        ortho_f = feature_orthogonality_loss(vi_d, vp_d, vi_n, vp_n, cfg.ortho_mode);
      if (ab.ortho_g)
        ortho_g = gram_orthogonality_loss(vi_d, vp_d, vi_n, vp_n, cfg.ortho_mode);
    }
  }
  if (ab.simi) {
    const int64_t H = day_x->value.dim(2), W = day_x->value.dim(3);
    std::vector<Var> per_scale;
    for (int s = 0; s < cfg.num_scales; ++s) {
      Var dn = resize_bilinear(disps_night[static_cast<size_t>(s)], H, W);
      Var dd = detach(resize_bilinear(disps_day[static_cast<size_t>(s)], H, W));
      per_scale.push_back(similarity_loss(dn, dd));
    }
    simi = mul_scalar(add_n(per_scale), 1.0 / static_cast<double>(cfg.num_scales));
  }

  Var pm_day = detail::photometric_term(model, disps_day, batch.day, day_x, cfg);
  Var pm_night = detail::photometric_term(model, disps_night, batch.night, night_x, cfg);
  Var photometric = add(pm_day, pm_night);

  LossBundle bundle = total_loss(std::move(recons), std::move(simi), std::move(ortho_f),
                                 std::move(ortho_g), std::move(photometric), cfg.weights);
  backward(bundle.total);
  adam.step();
  return bundle;
}

// ---------------------------------------------------------------------------
// fit(): epoch loop, schedule, logging, checkpointing, resume.
// ---------------------------------------------------------------------------

struct FitResult {
  int64_t steps = 0;
  std::vector<std::string> checkpoints;
  std::string log_path;
  double final_total = 0.0;
};

namespace detail {

inline void log_header(std::ofstream& os) {
  os << "step,epoch,lr,recons,simi,ortho_f,ortho_g,pm,total\n";
}

inline void log_step(std::ofstream& os, int64_t step, int epoch, double lr,
                     const LossBundle& b) {
  os.precision(17);
  auto cell = [&os](const Var& v) {
    if (v) os << v->value[0];
    os << ",";
  };
  os << step << "," << epoch << "," << lr << ",";
  cell(b.recons);
  cell(b.simi);
  cell(b.ortho_f);
  cell(b.ortho_g);
  cell(b.photometric);
  os << b.total->value[0] << "\n";
  os.flush();
}

/// Deterministic sample order for one epoch.
inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed ^ (0x51ed2700e1a5c7f3ULL + static_cast<uint64_t>(epoch) * 0x9e3779b97f4a7c15ULL));
  rng.shuffle(idx);
  return idx;
}

}  // namespace detail

/// Trains over the split records under `root` according to the config.
/// Writes per-step loss rows to train_log.csv and one checkpoint per epoch
/// under out_dir. `resume_from` restarts from an epoch-boundary checkpoint
/// and reproduces the uninterrupted run exactly.
inline FitResult fit(DomainSeparatedModel& model, const std::string& root,
                     const std::vector<SplitRecord>& records, const TrainConfig& cfg,
                     const std::string& out_dir, const std::string& resume_from = {},
                     const nlohmann::json& config_snapshot = nlohmann::json::object()) {
  cfg.validate();
  if (records.empty()) throw DegenerateInputError("fit: empty dataset");
  fsys::create_directories(out_dir);
  const AblationConfig ab = ablation_config(cfg.ablation);

  Adam adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2);
  int start_epoch = 0;  // completed epochs
  int64_t step = 0;
  if (!resume_from.empty()) {
    AdamState state;
    CheckpointMeta meta = load_checkpoint(resume_from, model, &state);
    adam.state() = std::move(state);
    start_epoch = static_cast<int>(meta.epoch);
    step = meta.step;
  }

  const std::string log_path = (fsys::path(out_dir) / "train_log.csv").string();
  std::ofstream log(log_path, start_epoch > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write training log: " + log_path);
  if (start_epoch == 0) detail::log_header(log);

  FitResult result;
  result.log_path = log_path;
  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    adam.set_lr(cfg.lr_for_epoch(epoch));
    const auto order = detail::epoch_order(records.size(), cfg.seed, epoch);
    // In the unpaired ablation, night triplets come from a rotated position
    // of the same split, never the day frame's counterpart.
    const auto night_order = detail::epoch_order(records.size(), cfg.seed ^ 0xabcd1234ULL, epoch);

    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch_size)) {
      const size_t take = std::min(static_cast<size_t>(cfg.batch_size), order.size() - pos);
      Batch batch;
      for (size_t b = 0; b < take; ++b) {
        const SplitRecord& day_rec = records[order[pos + b]];
        if (ab.paired) {
          PairedSample s = load_paired_triplet(root, day_rec.sequence, day_rec.index);
          batch.day.push_back(std::move(s.day));
          batch.night.push_back(std::move(s.night));
        } else {
          const SplitRecord& night_rec =
              records[night_order[(pos + b + 1) % night_order.size()]];
          batch.day.push_back(load_triplet(root, Domain::day, day_rec.sequence, day_rec.index));
          batch.night.push_back(
              load_triplet(root, Domain::night, night_rec.sequence, night_rec.index));
        }
      }
      LossBundle bundle = train_step(model, adam, batch, cfg);
      ++step;
      detail::log_step(log, step, epoch, adam.lr(), bundle);
      result.final_total = bundle.total_value();
    }

    CheckpointMeta meta;
    meta.epoch = epoch;
    meta.step = step;
    meta.config = config_snapshot;
    char name[64];
    std::snprintf(name, sizeof name, "checkpoint_epoch_%03d.ckpt", epoch);
    const std::string ckpt = (fsys::path(out_dir) / name).string();
    save_checkpoint(ckpt, model, &adam.state(), meta);
    result.checkpoints.push_back(ckpt);
    if (cfg.checkpoint_keep > 0) {
      const int64_t extra =
          static_cast<int64_t>(result.checkpoints.size()) - cfg.checkpoint_keep;
      for (int64_t i = 0; i < extra; ++i)
        if (fsys::exists(result.checkpoints[static_cast<size_t>(i)]))
          fsys::remove(result.checkpoints[static_cast<size_t>(i)]);
    }
  }
  result.steps = step;
  return result;
}

// ---------------------------------------------------------------------------
// Inference (stem -> shared trunk -> depth decoder only).
// ---------------------------------------------------------------------------

/// Depth for a single preprocessed [3,H,W] image. Only the domain stem, the
/// shared trunk, and the depth decoder execute; private, reconstruction, and
/// pose parameters are never touched.
inline DepthMap infer(const DomainSeparatedModel& model, const Tensor& image, Domain domain,
                      double min_depth = 0.1, double max_depth = 100.0) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw InvalidInputError("infer expects a [3,H,W] image");
  Var x = constant(image.reshaped({1, 3, image.dim(1), image.dim(2)}));
  FeaturePyramid fi = model.invariant_encode(x, domain, /*training=*/false);
  Var disp = model.decode_depth(fi)[0];  // finest scale, input resolution
  Var depth = disparity_to_depth_op(disp, min_depth, max_depth);
  return DepthMap{depth->value.reshaped({image.dim(1), image.dim(2)})};
}

/// Predictor adapter for evaluate_split().
inline DepthPredictor model_predictor(const DomainSeparatedModel& model, double min_depth = 0.1,
                                      double max_depth = 100.0) {
  return [&model, min_depth, max_depth](const Tensor& image, Domain domain) {
    return infer(model, image, domain, min_depth, max_depth);
  };
}

}  // namespace adds
