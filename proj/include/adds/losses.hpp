// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// The four training loss families: image reconstruction, cross-domain depth
// similarity, feature/Gram orthogonality, and the SSIM+L1 photometric term,
// plus their weighted combination.

#pragma once

#include <optional>
#include <string>

#include "adds/autodiff.hpp"
#include "adds/nn.hpp"

namespace adds {

/// Weights of the total loss and the SSIM mix factor.
struct LossWeights {
  double lambda1 = 0.1;  // reconstruction
  double lambda2 = 1.0;  // similarity
  double lambda3 = 1.0;  // orthogonality (feature + Gram)
  double lambda4 = 1.0;  // photometric
  double alpha = 0.85;   // SSIM fraction inside the photometric term

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0)
      throw InvalidInputError("loss weights must be non-negative");
    if (alpha < 0.0 || alpha > 1.0) throw InvalidInputError("alpha must lie in [0,1]");
  }
};

/// Sign of the mean-residual term in the reconstruction loss. `plus` follows
/// the printed formula; `minus` is the scale-invariant variant.
enum class ReconsSign { plus, minus };

/// How a raw inner product becomes an orthogonality penalty. The raw inner
/// product is unbounded below under minimization; `squared` (default)
/// normalizes by vector length and is zero exactly at orthogonality.
enum class OrthoMode { squared, abs, raw };

inline OrthoMode ortho_mode_from_string(const std::string& s) {
  if (s == "squared") return OrthoMode::squared;
  if (s == "abs") return OrthoMode::abs;
  if (s == "raw") return OrthoMode::raw;
  throw ConfigError("unknown orthogonality mode: " + s);
}

namespace detail {
/// Per-domain reconstruction term: mean(r^2) +/- mean(r)^2 with r = recon - target.
inline Var recons_term(const Var& recon, const Var& target, ReconsSign sign) {
  require_same_shape(recon->value, target->value, "reconstruction_loss");
  Var r = sub(recon, target);
  Var quad = mean_all(square(r));
  Var mean_sq = square(mean_all(r));
  return sign == ReconsSign::plus ? add(quad, mean_sq) : sub(quad, mean_sq);
}
}  // namespace detail

/// Reconstruction loss summed over both domains. N counts every element of
/// the image tensor (channels included), so a constant residual c yields
/// c^2 + c^2 per domain.
inline Var reconstruction_loss(const Var& recon_day, const Var& day, const Var& recon_night,
                               const Var& night, ReconsSign sign = ReconsSign::plus) {
  return add(detail::recons_term(recon_day, day, sign),
             detail::recons_term(recon_night, night, sign));
}

/// Mean squared difference between the night disparity and the day disparity
/// pseudo-label. The caller detaches the day input; this function performs no
/// detach of its own so the stop-gradient stays visible at the call site.
inline Var similarity_loss(const Var& d_night, const Var& d_day_detached) {
  require_same_shape(d_night->value, d_day_detached->value, "similarity_loss");
  return mean_all(square(sub(d_night, d_day_detached)));
}

namespace detail {
inline Var ortho_penalty(const Var& a, const Var& b, OrthoMode mode) {
  require_same_shape(a->value, b->value, "orthogonality loss");
  Var s = dot_all(a, b);
  switch (mode) {
    case OrthoMode::raw:
      return s;
    case OrthoMode::abs:
      return abs_val(s);
    case OrthoMode::squared:
      return mul_scalar(square(s), 1.0 / static_cast<double>(a->value.numel()));
  }
  throw ConfigError("unhandled orthogonality mode");
}
}  // namespace detail

/// Direct feature orthogonality: flatten each reduced feature map to a vector
/// and penalize the invariant/private inner product, day + night.
inline Var feature_orthogonality_loss(const Var& vi_day, const Var& vp_day, const Var& vi_night,
                                      const Var& vp_night,
                                      OrthoMode mode = OrthoMode::squared) {
  return add(detail::ortho_penalty(vi_day, vp_day, mode),
             detail::ortho_penalty(vi_night, vp_night, mode));
}

/// Channel Gram matrix of a feature map (see gram() for the definition).
inline Var gram_matrix(const Var& f) { return gram(f); }

/// Gram orthogonality: inner product between the flattened Gram matrices of
/// the invariant and private (reduced) features, day + night.
inline Var gram_orthogonality_loss(const Var& fi_day, const Var& fp_day, const Var& fi_night,
                                   const Var& fp_night, OrthoMode mode = OrthoMode::squared) {
  return add(detail::ortho_penalty(gram(fi_day), gram(fp_day), mode),
             detail::ortho_penalty(gram(fi_night), gram(fp_night), mode));
}

/// Per-channel SSIM map with a 3x3 mean filter (edge-replicate padding),
/// C1 = 0.01^2, C2 = 0.03^2. Symmetric in its arguments; ssim(x,x) = 1.
inline Var ssim(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "ssim");
  if (a->value.ndim() != 4) throw InvalidInputError("ssim expects NCHW");
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  Var mu_a = avg_pool_3x3_replicate(a);
  Var mu_b = avg_pool_3x3_replicate(b);
  Var sigma_a = sub(avg_pool_3x3_replicate(mul(a, a)), mul(mu_a, mu_a));
  Var sigma_b = sub(avg_pool_3x3_replicate(mul(b, b)), mul(mu_b, mu_b));
  Var sigma_ab = sub(avg_pool_3x3_replicate(mul(a, b)), mul(mu_a, mu_b));
  Var num = mul(add_scalar(mul_scalar(mul(mu_a, mu_b), 2.0), C1),
                add_scalar(mul_scalar(sigma_ab, 2.0), C2));
  Var den = mul(add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), C1),
                add_scalar(add(sigma_a, sigma_b), C2));
  return div(num, den);
}

/// Per-pixel photometric error map [N,1,H,W] (no masking applied):
/// alpha/2 (1 - SSIM) + (1 - alpha) |w - t|, channel-mean per pixel.
inline Var photometric_error_map(const Var& warped, const Var& target, double alpha) {
  require_same_shape(warped->value, target->value, "photometric_error_map");
  Var ssim_term = mean_channels(rsub_scalar(1.0, ssim(warped, target)));
  Var l1_term = mean_channels(abs_val(sub(warped, target)));
  return add(mul_scalar(ssim_term, alpha * 0.5), mul_scalar(l1_term, 1.0 - alpha));
}

/// Photometric error averaged over the valid mask. Throws
/// DegenerateInputError when no pixel is valid.
inline Var photometric_loss(const Var& warped, const Var& target, const Tensor& mask,
                            double alpha) {
  require_same_shape(warped->value, target->value, "photometric_loss");
  if (alpha < 0.0 || alpha > 1.0) throw InvalidInputError("photometric_loss: alpha outside [0,1]");
  Var pe = photometric_error_map(warped, target, alpha);
  require_same_shape(pe->value, mask, "photometric_loss mask");
  const double valid = mask.sum();
  if (valid <= 0.0) throw DegenerateInputError("photometric_loss: empty validity mask");
  return mul_scalar(sum_all(mul(pe, constant(mask))), 1.0 / valid);
}

/// Per-term losses plus the weighted total. Terms left null are disabled:
/// they contribute nothing and receive no gradient.
struct LossBundle {
  Var recons, simi, ortho_f, ortho_g, photometric;
  Var total;

  static double value_of(const Var& v) { return v ? v->value[0] : 0.0; }
  double total_value() const { return value_of(total); }
};

/// Weighted sum of exactly the enabled (non-null) terms:
/// lambda1 recons + lambda2 simi + lambda3 (ortho_f + ortho_g) + lambda4 pm.
inline LossBundle total_loss(Var recons, Var simi, Var ortho_f, Var ortho_g, Var photometric,
                             const LossWeights& w) {
  w.validate();
  auto check_finite = [](const Var& v, const char* name) {
    if (v && !std::isfinite(v->value[0]))
      throw DivergenceError(std::string("loss term '") + name + "' is non-finite");
  };
  check_finite(recons, "recons");
  check_finite(simi, "simi");
  check_finite(ortho_f, "ortho_f");
  check_finite(ortho_g, "ortho_g");
  check_finite(photometric, "photometric");

  std::vector<Var> parts;
  if (recons) parts.push_back(mul_scalar(recons, w.lambda1));
  if (simi) parts.push_back(mul_scalar(simi, w.lambda2));
  if (ortho_f) parts.push_back(mul_scalar(ortho_f, w.lambda3));
  if (ortho_g) parts.push_back(mul_scalar(ortho_g, w.lambda3));
  if (photometric) parts.push_back(mul_scalar(photometric, w.lambda4));
  if (parts.empty()) throw InvalidInputError("total_loss: no enabled terms");

  LossBundle bundle;
  bundle.recons = std::move(recons);
  bundle.simi = std::move(simi);
  bundle.ortho_f = std::move(ortho_f);
  bundle.ortho_g = std::move(ortho_g);
  bundle.photometric = std::move(photometric);
  bundle.total = add_n(parts);
  return bundle;
}

}  // namespace adds
