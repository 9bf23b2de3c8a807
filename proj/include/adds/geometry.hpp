// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole camera model, rigid motion, and differentiable view synthesis:
// backproject -> rigid transform -> project -> bilinear sample. This is the
// warp operator used by the photometric loss.

#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "adds/nn.hpp"

namespace adds {

/// Points closer than this (in meters, along +z) count as behind the camera.
inline constexpr double kBehindCameraEps = 1e-3;

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;  // focal lengths, pixels
  double cx = 0.0, cy = 0.0;  // principal point, pixels
  int64_t width = 0, height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInputError("intrinsics: focal must be positive");
    if (!(cx > 0.0 && cx < static_cast<double>(width)) ||
        !(cy > 0.0 && cy < static_cast<double>(height)))
      throw InvalidInputError("intrinsics: principal point outside image");
  }

  /// Rescale for a resized image: fx,fy,cx,cy scale exactly with (sx, sy).
  CameraIntrinsics scaled(double sx, double sy, int64_t new_w, int64_t new_h) const {
    return {fx * sx, fy * sy, cx * sx, cy * sy, new_w, new_h};
  }

  /// Shift for a crop whose top-left corner is (x0, y0).
  CameraIntrinsics cropped(int64_t x0, int64_t y0, int64_t new_w, int64_t new_h) const {
    return {fx, fy, cx - static_cast<double>(x0), cy - static_cast<double>(y0), new_w, new_h};
  }
};

/// Rigid transform: x -> R x + t. Rotation is row-major 3x3.
struct PoseSE3 {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> translation{0, 0, 0};

  static PoseSE3 identity() { return {}; }

  void validate(double tol = 1e-6) const {
    const auto& R = rotation;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += R[k * 3 + i] * R[k * 3 + j];
        const double expect = (i == j) ? 1.0 : 0.0;
        if (std::fabs(dot - expect) > tol)
          throw InvalidInputError("pose: rotation is not orthonormal");
      }
    const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                       R[2] * (R[3] * R[7] - R[4] * R[6]);
    if (std::fabs(det - 1.0) > tol) throw InvalidInputError("pose: rotation determinant != 1");
  }

  PoseSE3 inverse() const {
    PoseSE3 inv;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) inv.rotation[i * 3 + j] = rotation[j * 3 + i];
    for (int i = 0; i < 3; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 3; ++j) acc += inv.rotation[i * 3 + j] * translation[j];
      inv.translation[i] = -acc;
    }
    return inv;
  }

  /// Composition (this ∘ other): first apply `other`, then `this`.
  PoseSE3 compose(const PoseSE3& other) const {
    PoseSE3 out;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) acc += rotation[i * 3 + k] * other.rotation[k * 3 + j];
        out.rotation[i * 3 + j] = acc;
      }
      double acc = translation[i];
      for (int k = 0; k < 3; ++k) acc += rotation[i * 3 + k] * other.translation[k];
      out.translation[i] = acc;
    }
    return out;
  }

  std::array<double, 3> apply(const std::array<double, 3>& p) const {
    std::array<double, 3> out;
    for (int i = 0; i < 3; ++i)
      out[i] = rotation[i * 3 + 0] * p[0] + rotation[i * 3 + 1] * p[1] +
               rotation[i * 3 + 2] * p[2] + translation[i];
    return out;
  }

  /// Pack as a [1,12] row-major [R|t] tensor (the tape-side format).
  Tensor as_tensor() const {
    Tensor t({1, 12});
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) t[j * 4 + k] = rotation[j * 3 + k];
      t[j * 4 + 3] = translation[j];
    }
    return t;
  }
};

/// Sigmoid disparity in (0,1) at some pyramid level.
struct DisparityMap {
  Tensor values;  // [H,W]
  int scale_index = 0;

  void validate() const {
    for (int64_t i = 0; i < values.numel(); ++i) {
      const double v = values[i];
      if (!std::isfinite(v) || v <= 0.0 || v >= 1.0)
        throw InvalidInputError("disparity values must be finite and strictly in (0,1)");
    }
  }
};

/// Metric depth in meters.
struct DepthMap {
  Tensor values;  // [H,W]
};

// ---------------------------------------------------------------------------
// Operations. Each exists in a tape form (Var in / Var out, batched NCHW)
// used during training, plus a plain form matching the batch-free data types.
// ---------------------------------------------------------------------------

/// depth = 1 / (1/max + (1/min - 1/max) * disp); monotone decreasing in disp.
inline Var disparity_to_depth_op(const Var& disp, double min_depth, double max_depth) {
  if (!(0.0 < min_depth && min_depth < max_depth))
    throw InvalidInputError("disparity_to_depth: require 0 < min_depth < max_depth");
  if (!disp->value.all_finite())
    throw InvalidInputError("disparity_to_depth: non-finite disparity value");
  const double a = 1.0 / max_depth;
  const double b = 1.0 / min_depth - 1.0 / max_depth;
  return detail::unary_op(
      disp, [a, b](double d) { return 1.0 / (a + b * d); },
      [b](double, double y) { return -b * y * y; });
}

inline DepthMap disparity_to_depth(const DisparityMap& disp, double min_depth, double max_depth) {
  disp.validate();
  Var d = disparity_to_depth_op(constant(disp.values), min_depth, max_depth);
  return DepthMap{std::move(d->value)};
}

/// Axis-angle + translation -> PoseSE3. `invert` returns the inverse transform.
inline PoseSE3 pose_vector_to_se3(const std::array<double, 3>& axis_angle,
                                  const std::array<double, 3>& translation,
                                  bool invert = false) {
  PoseSE3 pose;
  double R[9];
  detail::rodrigues(axis_angle.data(), R);
  std::copy(R, R + 9, pose.rotation.begin());
  pose.translation = translation;
  return invert ? pose.inverse() : pose;
}

/// Backproject per-pixel depth to camera-space points.
/// depth [N,1,H,W] -> points [N,3,H,W], point = depth * K^-1 (u,v,1)^T.
inline Var backproject_op(const Var& depth, const CameraIntrinsics& K) {
  const Tensor& dv = depth->value;
  if (dv.ndim() != 4 || dv.dim(1) != 1) throw InvalidInputError("backproject expects [N,1,H,W]");
  const int64_t N = dv.dim(0), H = dv.dim(2), W = dv.dim(3);
  Tensor out({N, 3, H, W});
  const int64_t HW = H * W;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        const int64_t s = y * W + x;
        const double d = dv[n * HW + s];
        out[(n * 3 + 0) * HW + s] = d * (static_cast<double>(x) - K.cx) / K.fx;
        out[(n * 3 + 1) * HW + s] = d * (static_cast<double>(y) - K.cy) / K.fy;
        out[(n * 3 + 2) * HW + s] = d;
      }
  return make_op(std::move(out), {depth}, [depth, K, N, H, W, HW](Node& n) {
    Tensor& gd = depth->grad();
    for (int64_t b = 0; b < N; ++b)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          const int64_t s = y * W + x;
          gd[b * HW + s] +=
              n.grad()[(b * 3 + 0) * HW + s] * (static_cast<double>(x) - K.cx) / K.fx +
              n.grad()[(b * 3 + 1) * HW + s] * (static_cast<double>(y) - K.cy) / K.fy +
              n.grad()[(b * 3 + 2) * HW + s];
        }
  });
}

/// Result of projecting a point grid: a normalized sampling grid plus the
/// out-of-view mask (0 where the transformed point lies behind the camera).
struct ProjectedGrid {
  Var grid;         // [N,H,W,2], (gx,gy) in [-1,1]
  Tensor in_front;  // [N,1,H,W], constant
};

/// Transform camera-space points and project them through K.
/// points [N,3,H,W], transform [N,12] row-major [R|t].
inline ProjectedGrid project_op(const Var& points, const CameraIntrinsics& K,
                                const Var& transform) {
  const Tensor& pv = points->value;
  const Tensor& tv = transform->value;
  if (pv.ndim() != 4 || pv.dim(1) != 3) throw InvalidInputError("project expects [N,3,H,W]");
  if (tv.ndim() != 2 || tv.dim(1) != 12 || tv.dim(0) != pv.dim(0))
    throw InvalidInputError("project expects [N,12] transforms matching the batch");
  const int64_t N = pv.dim(0), H = pv.dim(2), W = pv.dim(3), HW = H * W;

  Tensor grid({N, H, W, 2});
  Tensor in_front({N, 1, H, W});
  for (int64_t n = 0; n < N; ++n) {
    const double* T = tv.data() + n * 12;
    for (int64_t s = 0; s < HW; ++s) {
      const double px = pv[(n * 3 + 0) * HW + s];
      const double py = pv[(n * 3 + 1) * HW + s];
      const double pz = pv[(n * 3 + 2) * HW + s];
      const double X = T[0] * px + T[1] * py + T[2] * pz + T[3];
      const double Y = T[4] * px + T[5] * py + T[6] * pz + T[7];
      const double Z = T[8] * px + T[9] * py + T[10] * pz + T[11];
      if (Z <= kBehindCameraEps) {
        grid[(n * HW + s) * 2 + 0] = -2.0;
        grid[(n * HW + s) * 2 + 1] = -2.0;
        in_front[n * HW + s] = 0.0;
      } else {
        const double u = K.fx * X / Z + K.cx;
        const double v = K.fy * Y / Z + K.cy;
        grid[(n * HW + s) * 2 + 0] = 2.0 * u / static_cast<double>(K.width - 1) - 1.0;
        grid[(n * HW + s) * 2 + 1] = 2.0 * v / static_cast<double>(K.height - 1) - 1.0;
        in_front[n * HW + s] = 1.0;
      }
    }
  }

  Var grid_var = make_op(
      std::move(grid), {points, transform}, [points, transform, K, N, HW](Node& n) {
        const Tensor& pv = points->value;
        const Tensor& tv = transform->value;
        const double su = 2.0 / static_cast<double>(K.width - 1);
        const double sv = 2.0 / static_cast<double>(K.height - 1);
        for (int64_t b = 0; b < N; ++b) {
          const double* T = tv.data() + b * 12;
          for (int64_t s = 0; s < HW; ++s) {
            const double px = pv[(b * 3 + 0) * HW + s];
            const double py = pv[(b * 3 + 1) * HW + s];
            const double pz = pv[(b * 3 + 2) * HW + s];
            const double X = T[0] * px + T[1] * py + T[2] * pz + T[3];
            const double Y = T[4] * px + T[5] * py + T[6] * pz + T[7];
            const double Z = T[8] * px + T[9] * py + T[10] * pz + T[11];
            if (Z <= kBehindCameraEps) continue;  // sentinel output, no gradient
            const double gu = n.grad()[(b * HW + s) * 2 + 0] * su;
            const double gv = n.grad()[(b * HW + s) * 2 + 1] * sv;
            // d(u,v)/d(X,Y,Z)
            const double dX = gu * K.fx / Z;
            const double dY = gv * K.fy / Z;
            const double dZ = -(gu * K.fx * X + gv * K.fy * Y) / (Z * Z);
            if (points->requires_grad) {
              Tensor& gp = points->grad();
              gp[(b * 3 + 0) * HW + s] += dX * T[0] + dY * T[4] + dZ * T[8];
              gp[(b * 3 + 1) * HW + s] += dX * T[1] + dY * T[5] + dZ * T[9];
              gp[(b * 3 + 2) * HW + s] += dX * T[2] + dY * T[6] + dZ * T[10];
            }
            if (transform->requires_grad) {
              Tensor& gt = transform->grad();
              const double dRow[3] = {dX, dY, dZ};
              const double pcol[3] = {px, py, pz};
              for (int j = 0; j < 3; ++j) {
                for (int k = 0; k < 3; ++k) gt[b * 12 + j * 4 + k] += dRow[j] * pcol[k];
                gt[b * 12 + j * 4 + 3] += dRow[j];
              }
            }
          }
        }
      });
  return {std::move(grid_var), std::move(in_front)};
}

/// The identity sampling grid for an HxW image, in normalized coordinates.
inline Tensor identity_grid(int64_t N, int64_t H, int64_t W) {
  Tensor grid({N, H, W, 2});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        grid[((n * H + y) * W + x) * 2 + 0] =
            2.0 * static_cast<double>(x) / static_cast<double>(W - 1) - 1.0;
        grid[((n * H + y) * W + x) * 2 + 1] =
            2.0 * static_cast<double>(y) / static_cast<double>(H - 1) - 1.0;
      }
  return grid;
}

/// Sampled image plus validity mask (in-bounds AND in-front-of-camera).
struct WarpedImage {
  Var image;    // [N,C,H,W]
  Tensor mask;  // [N,1,H,W], constant
};

/// Bilinear sampling with border clamp; mask is 0 where the grid falls
/// outside the image.
inline WarpedImage bilinear_sample(const Var& image, const Var& grid) {
  Var out = grid_sample_border(image, grid);
  return {std::move(out), grid_inbounds_mask(grid->value)};
}

/// The full warp operator: synthesize the target view from `source` using the
/// target's depth and the target->source rigid transform.
inline WarpedImage warp(const Var& source, const Var& depth, const Var& transform,
                        const CameraIntrinsics& K) {
  const Tensor& sv = source->value;
  const Tensor& dv = depth->value;
  if (sv.ndim() != 4 || dv.ndim() != 4 || sv.dim(0) != dv.dim(0) || sv.dim(2) != dv.dim(2) ||
      sv.dim(3) != dv.dim(3) || dv.dim(1) != 1)
    throw InvalidInputError("warp: source/depth shape mismatch");
  if (sv.dim(2) != K.height || sv.dim(3) != K.width)
    throw InvalidInputError("warp: intrinsics do not match image size");
  Var points = backproject_op(depth, K);
  ProjectedGrid proj = project_op(points, K, transform);
  WarpedImage sampled = bilinear_sample(source, proj.grid);
  // Valid only where sampled in-bounds and in front of the camera.
  for (int64_t i = 0; i < sampled.mask.numel(); ++i) sampled.mask[i] *= proj.in_front[i];
  return sampled;
}

/// Plain-tensor convenience wrapper for single images ([C,H,W] source).
inline std::pair<Tensor, Tensor> warp_image(const Tensor& source, const DepthMap& depth,
                                            const PoseSE3& pose, const CameraIntrinsics& K) {
  if (source.ndim() != 3) throw InvalidInputError("warp_image expects CHW source");
  const int64_t C = source.dim(0), H = source.dim(1), W = source.dim(2);
  Var src = constant(source.reshaped({1, C, H, W}));
  Var dep = constant(depth.values.reshaped({1, 1, H, W}));
  Var tf = constant(pose.as_tensor());
  WarpedImage w = warp(src, dep, tf, K);
  return {w.image->value.reshaped({C, H, W}), w.mask.reshaped({H, W})};
}

}  // namespace adds
