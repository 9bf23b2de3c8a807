// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// Structured tape ops: convolution (im2col + GEMM), batch normalization,
// pooling, resampling, channel concat, Gram matrices, and the SE(3)
// exponential used by the pose path. Everything here is differentiable.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <utility>
#include <vector>

#include "adds/autodiff.hpp"

namespace adds {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline void im2col(const double* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                   int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, RowMat& col) {
  col.resize(C * kh * kw, Ho * Wo);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t dy = 0; dy < kh; ++dy)
      for (int64_t dx = 0; dx < kw; ++dx) {
        double* row = col.row((c * kh + dy) * kw + dx).data();
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * stride + dy - pad;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const int64_t ix = ox * stride + dx - pad;
            row[oy * Wo + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                    ? x[(c * H + iy) * W + ix]
                                    : 0.0;
          }
        }
      }
}

inline void col2im_accum(const RowMat& col, double* gx, int64_t C, int64_t H, int64_t W,
                         int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t Ho,
                         int64_t Wo) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t dy = 0; dy < kh; ++dy)
      for (int64_t dx = 0; dx < kw; ++dx) {
        const double* row = col.row((c * kh + dy) * kw + dx).data();
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * stride + dy - pad;
          if (iy < 0 || iy >= H) continue;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const int64_t ix = ox * stride + dx - pad;
            if (ix >= 0 && ix < W) gx[(c * H + iy) * W + ix] += row[oy * Wo + ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D convolution, zero padding. x: [N,Ci,H,W], w: [Co,Ci,kh,kw], optional
/// bias [Co]. The im2col buffer is recomputed in the backward pass rather
/// than saved, trading FLOPs for graph memory.
inline Var conv2d(const Var& x, const Var& w, const Var& b, int64_t stride, int64_t pad) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.ndim() != 4 || wv.ndim() != 4)
    throw InvalidInputError("conv2d expects NCHW input and OIHW weight");
  const int64_t N = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int64_t Co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != Ci)
    throw InvalidInputError("conv2d: weight expects " + std::to_string(wv.dim(1)) +
                            " input channels, got " + std::to_string(Ci));
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw InvalidInputError("conv2d: empty output");
  const bool has_bias = b && b->value.numel() > 0;
  if (has_bias && b->value.numel() != Co) throw InvalidInputError("conv2d: bias size mismatch");

  Tensor out({N, Co, Ho, Wo});
  {
    RowMat col;
    Eigen::Map<const RowMat> wm(wv.data(), Co, Ci * kh * kw);
    for (int64_t n = 0; n < N; ++n) {
      detail::im2col(xv.data() + n * Ci * H * W, Ci, H, W, kh, kw, stride, pad, Ho, Wo, col);
      Eigen::Map<RowMat> om(out.data() + n * Co * Ho * Wo, Co, Ho * Wo);
      om.noalias() = wm * col;
      if (has_bias)
        om.colwise() += Eigen::Map<const Eigen::VectorXd>(b->value.data(), Co);
    }
  }

  std::vector<Var> parents = has_bias ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_op(std::move(out), std::move(parents),
                 [x, w, b, has_bias, N, Ci, H, W, Co, kh, kw, stride, pad, Ho, Wo](Node& n) {
                   RowMat col;
                   Eigen::Map<const RowMat> wm(w->value.data(), Co, Ci * kh * kw);
                   for (int64_t s = 0; s < N; ++s) {
                     Eigen::Map<const RowMat> go(n.grad().data() + s * Co * Ho * Wo, Co, Ho * Wo);
                     if (x->requires_grad || w->requires_grad)
                       detail::im2col(x->value.data() + s * Ci * H * W, Ci, H, W, kh, kw, stride,
                                      pad, Ho, Wo, col);
                     if (w->requires_grad) {
                       Eigen::Map<RowMat> gw(w->grad().data(), Co, Ci * kh * kw);
                       gw.noalias() += go * col.transpose();
                     }
                     if (x->requires_grad) {
                       RowMat dcol = wm.transpose() * go;
                       detail::col2im_accum(dcol, x->grad().data() + s * Ci * H * W, Ci, H, W, kh,
                                            kw, stride, pad, Ho, Wo);
                     }
                     if (has_bias && b->requires_grad) {
                       Eigen::Map<Eigen::VectorXd> gb(b->grad().data(), Co);
                       gb.noalias() += go.rowwise().sum();
                     }
                   }
                 });
}

inline Var conv2d(const Var& x, const Var& w, int64_t stride, int64_t pad) {
  return conv2d(x, w, nullptr, stride, pad);
}

/// Batch normalization over (N,H,W) per channel. In training mode the batch
/// statistics enter the tape and the running estimates (owned by the calling
/// layer) are updated in place; in eval mode the running estimates are used
/// as constants.
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
                      Tensor& running_var, bool training, double momentum = 0.1,
                      double eps = 1e-5) {
  const Tensor& xv = x->value;
  if (xv.ndim() != 4) throw InvalidInputError("batch_norm expects NCHW");
  const int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  if (gamma->value.numel() != C || beta->value.numel() != C ||
      running_mean.numel() != C || running_var.numel() != C)
    throw InvalidInputError("batch_norm: parameter size mismatch");

  const int64_t M = N * HW;
  Tensor mean({C}), invstd({C});
  if (training) {
    for (int64_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const double* p = xv.data() + (n * C + c) * HW;
        for (int64_t s = 0; s < HW; ++s) acc += p[s];
      }
      mean[c] = acc / static_cast<double>(M);
    }
    for (int64_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const double* p = xv.data() + (n * C + c) * HW;
        for (int64_t s = 0; s < HW; ++s) {
          const double d = p[s] - mean[c];
          acc += d * d;
        }
      }
      const double var = acc / static_cast<double>(M);
      invstd[c] = 1.0 / std::sqrt(var + eps);
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      mean[c] = running_mean[c];
      invstd[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }

  Tensor out(xv.shape());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double* p = xv.data() + (n * C + c) * HW;
      double* o = out.data() + (n * C + c) * HW;
      const double g = gamma->value[c], bta = beta->value[c], m = mean[c], is = invstd[c];
      for (int64_t s = 0; s < HW; ++s) o[s] = (p[s] - m) * is * g + bta;
    }

  return make_op(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, mean = std::move(mean), invstd = std::move(invstd), training, N, C,
       HW](Node& n) {
        const int64_t M = N * HW;
        for (int64_t c = 0; c < C; ++c) {
          const double m = mean[c], is = invstd[c], g = gamma->value[c];
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int64_t b = 0; b < N; ++b) {
            const double* dy = n.grad().data() + (b * C + c) * HW;
            const double* px = x->value.data() + (b * C + c) * HW;
            for (int64_t s = 0; s < HW; ++s) {
              sum_dy += dy[s];
              sum_dy_xhat += dy[s] * (px[s] - m) * is;
            }
          }
          if (gamma->requires_grad) gamma->grad()[c] += sum_dy_xhat;
          if (beta->requires_grad) beta->grad()[c] += sum_dy;
          if (!x->requires_grad) continue;
          for (int64_t b = 0; b < N; ++b) {
            const double* dy = n.grad().data() + (b * C + c) * HW;
            const double* px = x->value.data() + (b * C + c) * HW;
            double* gx = x->grad().data() + (b * C + c) * HW;
            if (training) {
              const double k = g * is / static_cast<double>(M);
              for (int64_t s = 0; s < HW; ++s) {
                const double xhat = (px[s] - m) * is;
                gx[s] += k * (static_cast<double>(M) * dy[s] - sum_dy - xhat * sum_dy_xhat);
              }
            } else {
              for (int64_t s = 0; s < HW; ++s) gx[s] += dy[s] * g * is;
            }
          }
        }
      });
}

/// 3x3 stride-2 max pooling with single-pixel zero-agnostic padding
/// (out-of-range taps are simply skipped). Halves even spatial dims exactly.
inline Var max_pool_3x3_s2(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.ndim() != 4) throw InvalidInputError("max_pool expects NCHW");
  const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int64_t Ho = (H + 2 - 3) / 2 + 1, Wo = (W + 2 - 3) / 2 + 1;
  Tensor out({N, C, Ho, Wo});
  std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
  int64_t oi = 0;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double* p = xv.data() + (n * C + c) * H * W;
      for (int64_t oy = 0; oy < Ho; ++oy)
        for (int64_t ox = 0; ox < Wo; ++ox, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_i = -1;
          for (int64_t dy = 0; dy < 3; ++dy) {
            const int64_t iy = oy * 2 + dy - 1;
            if (iy < 0 || iy >= H) continue;
            for (int64_t dx = 0; dx < 3; ++dx) {
              const int64_t ix = ox * 2 + dx - 1;
              if (ix < 0 || ix >= W) continue;
              const double v = p[iy * W + ix];
              if (v > best) {
                best = v;
                best_i = (n * C + c) * H * W + iy * W + ix;
              }
            }
          }
          out[oi] = best;
          argmax[static_cast<size_t>(oi)] = best_i;
        }
    }
  return make_op(std::move(out), {x}, [x, argmax = std::move(argmax)](Node& n) {
    Tensor& gx = x->grad();
    for (int64_t i = 0; i < n.value.numel(); ++i) gx[argmax[static_cast<size_t>(i)]] += n.grad()[i];
  });
}

/// Nearest-neighbour x2 upsampling.
inline Var upsample_nearest2(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.ndim() != 4) throw InvalidInputError("upsample expects NCHW");
  const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  Tensor out({N, C, H * 2, W * 2});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const double* p = xv.data() + nc * H * W;
    double* o = out.data() + nc * 4 * H * W;
    for (int64_t y = 0; y < 2 * H; ++y)
      for (int64_t x2 = 0; x2 < 2 * W; ++x2) o[y * 2 * W + x2] = p[(y / 2) * W + (x2 / 2)];
  }
  return make_op(std::move(out), {x}, [x, N, C, H, W](Node& n) {
    Tensor& gx = x->grad();
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const double* g = n.grad().data() + nc * 4 * H * W;
      double* gp = gx.data() + nc * H * W;
      for (int64_t y = 0; y < 2 * H; ++y)
        for (int64_t x2 = 0; x2 < 2 * W; ++x2) gp[(y / 2) * W + (x2 / 2)] += g[y * 2 * W + x2];
    }
  });
}

namespace detail {

// Shared bilinear-resize kernel (half-pixel centers, edge clamp). Writes the
// four tap indices/weights per output pixel through `emit`.
template <typename Emit>
void bilinear_taps(int64_t Hi, int64_t Wi, int64_t Ho, int64_t Wo, Emit&& emit) {
  const double sy = static_cast<double>(Hi) / static_cast<double>(Ho);
  const double sx = static_cast<double>(Wi) / static_cast<double>(Wo);
  for (int64_t oy = 0; oy < Ho; ++oy) {
    double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(Hi - 1));
    const int64_t y0 = std::min(static_cast<int64_t>(fy), Hi - 1);
    const int64_t y1 = std::min(y0 + 1, Hi - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int64_t ox = 0; ox < Wo; ++ox) {
      double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(Wi - 1));
      const int64_t x0 = std::min(static_cast<int64_t>(fx), Wi - 1);
      const int64_t x1 = std::min(x0 + 1, Wi - 1);
      const double wx = fx - static_cast<double>(x0);
      emit(oy * Wo + ox, y0 * Wi + x0, y0 * Wi + x1, y1 * Wi + x0, y1 * Wi + x1,
           (1.0 - wy) * (1.0 - wx), (1.0 - wy) * wx, wy * (1.0 - wx), wy * wx);
    }
  }
}

}  // namespace detail

/// Plain-tensor bilinear resize of a [C,H,W] or [N,C,H,W] tensor.
inline Tensor resize_bilinear_tensor(const Tensor& x, int64_t Ho, int64_t Wo) {
  const bool batched = x.ndim() == 4;
  if (!batched && x.ndim() != 3) throw InvalidInputError("resize expects CHW or NCHW");
  const int64_t NC = batched ? x.dim(0) * x.dim(1) : x.dim(0);
  const int64_t Hi = x.dim(batched ? 2 : 1), Wi = x.dim(batched ? 3 : 2);
  Tensor out(batched ? std::vector<int64_t>{x.dim(0), x.dim(1), Ho, Wo}
                     : std::vector<int64_t>{x.dim(0), Ho, Wo});
  detail::bilinear_taps(Hi, Wi, Ho, Wo,
                        [&](int64_t o, int64_t i00, int64_t i01, int64_t i10, int64_t i11,
                            double w00, double w01, double w10, double w11) {
                          for (int64_t c = 0; c < NC; ++c) {
                            const double* p = x.data() + c * Hi * Wi;
                            out.data()[c * Ho * Wo + o] =
                                w00 * p[i00] + w01 * p[i01] + w10 * p[i10] + w11 * p[i11];
                          }
                        });
  return out;
}

/// Differentiable bilinear resize (fixed grid, gradients flow to the input).
inline Var resize_bilinear(const Var& x, int64_t Ho, int64_t Wo) {
  const Tensor& xv = x->value;
  if (xv.ndim() != 4) throw InvalidInputError("resize_bilinear expects NCHW");
  const int64_t NC = xv.dim(0) * xv.dim(1), Hi = xv.dim(2), Wi = xv.dim(3);
  if (Hi == Ho && Wi == Wo) return x;
  Tensor out = resize_bilinear_tensor(xv, Ho, Wo);
  return make_op(std::move(out), {x}, [x, NC, Hi, Wi, Ho, Wo](Node& n) {
    Tensor& gx = x->grad();
    detail::bilinear_taps(Hi, Wi, Ho, Wo,
                          [&](int64_t o, int64_t i00, int64_t i01, int64_t i10, int64_t i11,
                              double w00, double w01, double w10, double w11) {
                            for (int64_t c = 0; c < NC; ++c) {
                              const double g = n.grad().data()[c * Ho * Wo + o];
                              double* gp = gx.data() + c * Hi * Wi;
                              gp[i00] += w00 * g;
                              gp[i01] += w01 * g;
                              gp[i10] += w10 * g;
                              gp[i11] += w11 * g;
                            }
                          });
  });
}

/// 3x3 stride-1 mean filter with edge-replicate padding (the SSIM window).
inline Var avg_pool_3x3_replicate(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.ndim() != 4) throw InvalidInputError("avg_pool expects NCHW");
  const int64_t NC = xv.dim(0) * xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  auto clampi = [](int64_t v, int64_t hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  Tensor out(xv.shape());
  for (int64_t c = 0; c < NC; ++c) {
    const double* p = xv.data() + c * H * W;
    double* o = out.data() + c * H * W;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x2 = 0; x2 < W; ++x2) {
        double acc = 0.0;
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx)
            acc += p[clampi(y + dy, H - 1) * W + clampi(x2 + dx, W - 1)];
        o[y * W + x2] = acc / 9.0;
      }
  }
  return make_op(std::move(out), {x}, [x, NC, H, W, clampi](Node& n) {
    Tensor& gx = x->grad();
    for (int64_t c = 0; c < NC; ++c) {
      const double* g = n.grad().data() + c * H * W;
      double* gp = gx.data() + c * H * W;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x2 = 0; x2 < W; ++x2) {
          const double gv = g[y * W + x2] / 9.0;
          for (int64_t dy = -1; dy <= 1; ++dy)
            for (int64_t dx = -1; dx <= 1; ++dx)
              gp[clampi(y + dy, H - 1) * W + clampi(x2 + dx, W - 1)] += gv;
        }
    }
  });
}

inline Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInputError("concat_channels: empty list");
  const int64_t N = xs[0]->value.dim(0), H = xs[0]->value.dim(2), W = xs[0]->value.dim(3);
  int64_t Ctot = 0;
  for (const auto& v : xs) {
    if (v->value.ndim() != 4 || v->value.dim(0) != N || v->value.dim(2) != H ||
        v->value.dim(3) != W)
      throw InvalidInputError("concat_channels: incompatible shapes");
    Ctot += v->value.dim(1);
  }
  Tensor out({N, Ctot, H, W});
  const int64_t HW = H * W;
  for (int64_t n = 0; n < N; ++n) {
    int64_t coff = 0;
    for (const auto& v : xs) {
      const int64_t C = v->value.dim(1);
      std::copy_n(v->value.data() + n * C * HW, C * HW, out.data() + (n * Ctot + coff) * HW);
      coff += C;
    }
  }
  return make_op(std::move(out), xs, [xs, N, Ctot, HW](Node& n) {
    for (int64_t b = 0; b < N; ++b) {
      int64_t coff = 0;
      for (const auto& v : xs) {
        const int64_t C = v->value.dim(1);
        if (v->requires_grad) {
          double* gp = v->grad().data() + b * C * HW;
          const double* g = n.grad().data() + (b * Ctot + coff) * HW;
          for (int64_t i = 0; i < C * HW; ++i) gp[i] += g[i];
        }
        coff += C;
      }
    }
  });
}

/// Channel Gram matrix G = F F^T / (H W) per sample: [N,C,H,W] -> [N,C,C].
inline Var gram(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.ndim() != 4) throw InvalidInputError("gram expects NCHW");
  const int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  if (HW < 1) throw InvalidInputError("gram: empty spatial extent");
  Tensor out({N, C, C});
  const double inv = 1.0 / static_cast<double>(HW);
  for (int64_t n = 0; n < N; ++n) {
    Eigen::Map<const RowMat> f(xv.data() + n * C * HW, C, HW);
    Eigen::Map<RowMat> g(out.data() + n * C * C, C, C);
    g.noalias() = f * f.transpose() * inv;
  }
  return make_op(std::move(out), {x}, [x, N, C, HW, inv](Node& n) {
    for (int64_t b = 0; b < N; ++b) {
      Eigen::Map<const RowMat> f(x->value.data() + b * C * HW, C, HW);
      Eigen::Map<const RowMat> gG(n.grad().data() + b * C * C, C, C);
      Eigen::Map<RowMat> gf(x->grad().data() + b * C * HW, C, HW);
      gf.noalias() += (gG + gG.transpose()) * f * inv;
    }
  });
}

// ---------------------------------------------------------------------------
// Differentiable bilinear sampling on a normalized grid.
// Convention: grid is [N,Hg,Wg,2] with (gx,gy) in [-1,1] and (-1,-1) at the
// CENTER of pixel (0,0) (align-corners). Sampling clamps to the border; the
// companion in-bounds mask is computed from the unclamped coordinates.
// ---------------------------------------------------------------------------

inline Var grid_sample_border(const Var& image, const Var& grid) {
  const Tensor& iv = image->value;
  const Tensor& gv = grid->value;
  if (iv.ndim() != 4 || gv.ndim() != 4 || gv.dim(3) != 2)
    throw InvalidInputError("grid_sample: image must be NCHW and grid NHW2");
  if (gv.dim(0) != iv.dim(0)) throw InvalidInputError("grid_sample: batch mismatch");
  const int64_t N = iv.dim(0), C = iv.dim(1), H = iv.dim(2), W = iv.dim(3);
  const int64_t Hg = gv.dim(1), Wg = gv.dim(2);

  Tensor out({N, C, Hg, Wg});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t s = 0; s < Hg * Wg; ++s) {
      const double gx = gv[(n * Hg * Wg + s) * 2 + 0];
      const double gy = gv[(n * Hg * Wg + s) * 2 + 1];
      const double u = (gx + 1.0) * 0.5 * static_cast<double>(W - 1);
      const double v = (gy + 1.0) * 0.5 * static_cast<double>(H - 1);
      const double uc = std::min(std::max(u, 0.0), static_cast<double>(W - 1));
      const double vc = std::min(std::max(v, 0.0), static_cast<double>(H - 1));
      const int64_t x0 = std::min(static_cast<int64_t>(uc), W > 1 ? W - 2 : 0);
      const int64_t y0 = std::min(static_cast<int64_t>(vc), H > 1 ? H - 2 : 0);
      const int64_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double wx = uc - static_cast<double>(x0), wy = vc - static_cast<double>(y0);
      for (int64_t c = 0; c < C; ++c) {
        const double* p = iv.data() + (n * C + c) * H * W;
        out[(n * C + c) * Hg * Wg + s] =
            (1.0 - wy) * ((1.0 - wx) * p[y0 * W + x0] + wx * p[y0 * W + x1]) +
            wy * ((1.0 - wx) * p[y1 * W + x0] + wx * p[y1 * W + x1]);
      }
    }

  return make_op(std::move(out), {image, grid}, [image, grid, N, C, H, W, Hg, Wg](Node& n) {
    const Tensor& gv = grid->value;
    const Tensor& iv = image->value;
    for (int64_t b = 0; b < N; ++b)
      for (int64_t s = 0; s < Hg * Wg; ++s) {
        const double gx = gv[(b * Hg * Wg + s) * 2 + 0];
        const double gy = gv[(b * Hg * Wg + s) * 2 + 1];
        const double u = (gx + 1.0) * 0.5 * static_cast<double>(W - 1);
        const double v = (gy + 1.0) * 0.5 * static_cast<double>(H - 1);
        const double uc = std::min(std::max(u, 0.0), static_cast<double>(W - 1));
        const double vc = std::min(std::max(v, 0.0), static_cast<double>(H - 1));
        const int64_t x0 = std::min(static_cast<int64_t>(uc), W > 1 ? W - 2 : 0);
        const int64_t y0 = std::min(static_cast<int64_t>(vc), H > 1 ? H - 2 : 0);
        const int64_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        const double wx = uc - static_cast<double>(x0), wy = vc - static_cast<double>(y0);
        double du = 0.0, dv = 0.0;
        for (int64_t c = 0; c < C; ++c) {
          const double g = n.grad()[(b * C + c) * Hg * Wg + s];
          const double* p = iv.data() + (b * C + c) * H * W;
          if (image->requires_grad) {
            double* gi = image->grad().data() + (b * C + c) * H * W;
            gi[y0 * W + x0] += g * (1.0 - wy) * (1.0 - wx);
            gi[y0 * W + x1] += g * (1.0 - wy) * wx;
            gi[y1 * W + x0] += g * wy * (1.0 - wx);
            gi[y1 * W + x1] += g * wy * wx;
          }
          if (grid->requires_grad) {
            du += g * ((1.0 - wy) * (p[y0 * W + x1] - p[y0 * W + x0]) +
                       wy * (p[y1 * W + x1] - p[y1 * W + x0]));
            dv += g * ((1.0 - wx) * (p[y1 * W + x0] - p[y0 * W + x0]) +
                       wx * (p[y1 * W + x1] - p[y0 * W + x1]));
          }
        }
        if (grid->requires_grad) {
          // Clamped samples have zero derivative wrt the grid.
          const bool live_u = (u >= 0.0 && u <= static_cast<double>(W - 1));
          const bool live_v = (v >= 0.0 && v <= static_cast<double>(H - 1));
          Tensor& gg = grid->grad();
          if (live_u) gg[(b * Hg * Wg + s) * 2 + 0] += du * 0.5 * static_cast<double>(W - 1);
          if (live_v) gg[(b * Hg * Wg + s) * 2 + 1] += dv * 0.5 * static_cast<double>(H - 1);
        }
      }
  });
}

/// 1 where the normalized grid falls inside the source image, else 0.
/// Shape [N,1,Hg,Wg]; constant (masks never carry gradients).
inline Tensor grid_inbounds_mask(const Tensor& grid) {
  if (grid.ndim() != 4 || grid.dim(3) != 2) throw InvalidInputError("mask expects NHW2 grid");
  const int64_t N = grid.dim(0), Hg = grid.dim(1), Wg = grid.dim(2);
  Tensor mask({N, 1, Hg, Wg});
  for (int64_t i = 0; i < N * Hg * Wg; ++i) {
    const double gx = grid[i * 2 + 0], gy = grid[i * 2 + 1];
    mask[i] = (gx >= -1.0 && gx <= 1.0 && gy >= -1.0 && gy <= 1.0) ? 1.0 : 0.0;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// SE(3) from a 6-vector (axis-angle rotation, direct translation).
// ---------------------------------------------------------------------------

namespace detail {

inline void rodrigues(const double r[3], double R[9]) {
  const double th2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  const double th = std::sqrt(th2);
  double a, b;  // sin(th)/th, (1-cos(th))/th^2
  if (th < 1e-8) {
    a = 1.0 - th2 / 6.0;
    b = 0.5 - th2 / 24.0;
  } else {
    a = std::sin(th) / th;
    b = (1.0 - std::cos(th)) / th2;
  }
  const double x = r[0], y = r[1], z = r[2];
  R[0] = 1.0 + b * (-z * z - y * y);
  R[1] = -a * z + b * x * y;
  R[2] = a * y + b * x * z;
  R[3] = a * z + b * x * y;
  R[4] = 1.0 + b * (-z * z - x * x);
  R[5] = -a * x + b * y * z;
  R[6] = -a * y + b * x * z;
  R[7] = a * x + b * y * z;
  R[8] = 1.0 + b * (-y * y - x * x);
}

// dR/dr_i per Gallego & Yezzi: (r_i [r]x + [r x ((I - R) e_i)]x) / |r|^2 * R,
// with the |r| -> 0 limit [e_i]x.
inline void rodrigues_jacobian(const double r[3], const double R[9], double dR[3][9]) {
  const double th2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  auto skew = [](const double v[3], double S[9]) {
    S[0] = 0.0;   S[1] = -v[2]; S[2] = v[1];
    S[3] = v[2];  S[4] = 0.0;   S[5] = -v[0];
    S[6] = -v[1]; S[7] = v[0];  S[8] = 0.0;
  };
  if (th2 < 1e-12) {
    for (int i = 0; i < 3; ++i) {
      double e[3] = {0, 0, 0};
      e[i] = 1.0;
      double S[9];
      skew(e, S);
      // [e_i]x * R keeps the limit exact at r = 0 and first-order nearby.
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          dR[i][j * 3 + k] = S[j * 3 + 0] * R[0 * 3 + k] + S[j * 3 + 1] * R[1 * 3 + k] +
                             S[j * 3 + 2] * R[2 * 3 + k];
    }
    return;
  }
  for (int i = 0; i < 3; ++i) {
    double e[3] = {0, 0, 0};
    e[i] = 1.0;
    // w = r x ((I - R) e_i)
    double imre[3];
    for (int j = 0; j < 3; ++j)
      imre[j] = e[j] - (R[j * 3 + 0] * e[0] + R[j * 3 + 1] * e[1] + R[j * 3 + 2] * e[2]);
    const double w[3] = {r[1] * imre[2] - r[2] * imre[1], r[2] * imre[0] - r[0] * imre[2],
                         r[0] * imre[1] - r[1] * imre[0]};
    double A[9], Sr[9], Sw[9];
    skew(r, Sr);
    skew(w, Sw);
    for (int j = 0; j < 9; ++j) A[j] = (r[i] * Sr[j] + Sw[j]) / th2;
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        dR[i][j * 3 + k] = A[j * 3 + 0] * R[0 * 3 + k] + A[j * 3 + 1] * R[1 * 3 + k] +
                           A[j * 3 + 2] * R[2 * 3 + k];
  }
}

}  // namespace detail

/// Maps [N,6] pose vectors (axis-angle | translation) to [N,12] row-major
/// [R | t] transforms, differentiably.
inline Var se3_exp(const Var& v) {
  const Tensor& vv = v->value;
  if (vv.ndim() != 2 || vv.dim(1) != 6) throw InvalidInputError("se3_exp expects [N,6]");
  const int64_t N = vv.dim(0);
  Tensor out({N, 12});
  for (int64_t n = 0; n < N; ++n) {
    double R[9];
    detail::rodrigues(vv.data() + n * 6, R);
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) out[n * 12 + j * 4 + k] = R[j * 3 + k];
      out[n * 12 + j * 4 + 3] = vv[n * 6 + 3 + j];
    }
  }
  return make_op(std::move(out), {v}, [v, N](Node& n) {
    Tensor& gv = v->grad();
    for (int64_t b = 0; b < N; ++b) {
      double R[9];
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) R[j * 3 + k] = n.value[b * 12 + j * 4 + k];
      double dR[3][9];
      detail::rodrigues_jacobian(v->value.data() + b * 6, R, dR);
      for (int i = 0; i < 3; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 3; ++j)
          for (int k = 0; k < 3; ++k) acc += n.grad()[b * 12 + j * 4 + k] * dR[i][j * 3 + k];
        gv[b * 6 + i] += acc;
      }
      for (int j = 0; j < 3; ++j) gv[b * 6 + 3 + j] += n.grad()[b * 12 + j * 4 + 3];
    }
  });
}

}  // namespace adds
