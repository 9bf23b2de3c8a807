// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "adds/geometry.hpp"
#include "oracles.hpp"

using namespace adds;

namespace {

CameraIntrinsics test_K(int64_t h = 8, int64_t w = 12) {
  return {0.6 * static_cast<double>(w), 0.6 * static_cast<double>(w),
          0.5 * static_cast<double>(w) - 0.5, 0.5 * static_cast<double>(h) - 0.5, w, h};
}

PoseSE3 random_pose(Rng& rng, double rot_scale = 0.3, double trans_scale = 0.5) {
  return pose_vector_to_se3(
      {rng.uniform(-rot_scale, rot_scale), rng.uniform(-rot_scale, rot_scale),
       rng.uniform(-rot_scale, rot_scale)},
      {rng.uniform(-trans_scale, trans_scale), rng.uniform(-trans_scale, trans_scale),
       rng.uniform(-trans_scale, trans_scale)});
}

}  // namespace

TEST_CASE("disparity_to_depth endpoints and closed form") {
  DisparityMap d;
  d.values = Tensor({1, 3}, {1.0 - 1e-12, 1e-12, 0.5});
  DepthMap depth = disparity_to_depth(d, 0.1, 100.0);
  REQUIRE(depth.values[0] == Catch::Approx(0.1).epsilon(1e-6));
  REQUIRE(depth.values[1] == Catch::Approx(100.0).epsilon(1e-6));
  REQUIRE(depth.values[2] == Catch::Approx(1.0 / (0.01 + 9.99 * 0.5)).epsilon(1e-12));
  // monotone decreasing in disparity
  DisparityMap d2;
  d2.values = Tensor({1, 2}, {0.3, 0.31});
  DepthMap dep2 = disparity_to_depth(d2, 0.1, 100.0);
  REQUIRE(dep2.values[1] < dep2.values[0]);

  DisparityMap bad;
  bad.values = Tensor({1, 1}, {std::nan("")});
  REQUIRE_THROWS_AS(disparity_to_depth(bad, 0.1, 100.0), InvalidInputError);
  DisparityMap edge;
  edge.values = Tensor({1, 1}, {0.5});
  REQUIRE_THROWS_AS(disparity_to_depth(edge, 100.0, 0.1), InvalidInputError);
}

TEST_CASE("pose_vector_to_se3: identity, quarter turn, inverse round trip") {
  PoseSE3 id = pose_vector_to_se3({0, 0, 0}, {0, 0, 0});
  id.validate();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) REQUIRE(id.rotation[i * 3 + j] == (i == j ? 1.0 : 0.0));

  PoseSE3 quarter = pose_vector_to_se3({0, 0, M_PI / 2}, {0, 0, 0});
  auto mapped = quarter.apply({1, 0, 0});
  REQUIRE(std::fabs(mapped[0] - 0.0) < 1e-9);
  REQUIRE(std::fabs(mapped[1] - 1.0) < 1e-9);
  REQUIRE(std::fabs(mapped[2] - 0.0) < 1e-9);

  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    std::array<double, 3> aa{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::array<double, 3> tr{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    PoseSE3 fwd = pose_vector_to_se3(aa, tr);
    fwd.validate();
    PoseSE3 inv = pose_vector_to_se3(aa, tr, /*invert=*/true);
    PoseSE3 comp = fwd.compose(inv);
    for (int i = 0; i < 9; ++i)
      REQUIRE(std::fabs(comp.rotation[i] - (i % 4 == 0 ? 1.0 : 0.0)) < 1e-8);
    for (int i = 0; i < 3; ++i) REQUIRE(std::fabs(comp.translation[i]) < 1e-8);
  }
}

TEST_CASE("backproject principal ray and unit-normalized pixel") {
  CameraIntrinsics K{7.2, 7.2, 6.0, 4.0, 12, 8};  // integer principal point
  Tensor depth({1, 1, K.height, K.width});
  for (int64_t i = 0; i < depth.numel(); ++i) depth[i] = 5.0;
  const int64_t ucx = 6;
  Var pts = backproject_op(constant(depth), K);
  const int64_t HW = K.height * K.width;
  const int64_t s0 = static_cast<int64_t>(K.cy) * K.width + ucx;
  REQUIRE(pts->value[0 * HW + s0] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(pts->value[1 * HW + s0] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(pts->value[2 * HW + s0] == Catch::Approx(5.0));

  // pixel (cx + fx, cy) at depth 2 -> point (2, 0, 2); use a camera whose
  // cx + fx lands on a real pixel column
  CameraIntrinsics K2{4.0, 4.0, 3.0, 3.5, 12, 8};
  Tensor d2({1, 1, K2.height, K2.width});
  for (int64_t i = 0; i < d2.numel(); ++i) d2[i] = 2.0;
  Var pts2 = backproject_op(constant(d2), K2);
  const int64_t s1 = 3 * K2.width + 7;  // v=3 (cy=3.5 not integral; y component nonzero), u=cx+fx=7
  const int64_t HW2 = K2.height * K2.width;
  REQUIRE(pts2->value[0 * HW2 + s1] == Catch::Approx(2.0));
  REQUIRE(pts2->value[2 * HW2 + s1] == Catch::Approx(2.0));
}

TEST_CASE("project: identity pose reproduces the pixel grid") {
  Rng rng(21);
  CameraIntrinsics K = test_K();
  Tensor depth({1, 1, K.height, K.width});
  for (int64_t i = 0; i < depth.numel(); ++i) depth[i] = rng.uniform(0.5, 20.0);
  Var pts = backproject_op(constant(depth), K);
  ProjectedGrid pg = project_op(pts, K, constant(PoseSE3::identity().as_tensor()));
  Tensor id = identity_grid(1, K.height, K.width);
  for (int64_t i = 0; i < id.numel(); ++i) REQUIRE(std::fabs(pg.grid->value[i] - id[i]) < 1e-9);
  for (int64_t i = 0; i < pg.in_front.numel(); ++i) REQUIRE(pg.in_front[i] == 1.0);
}

TEST_CASE("project matches the scalar per-point oracle") {
  Rng rng(22);
  CameraIntrinsics K = test_K();
  oracle::ScalarCamera sk{K.fx, K.fy, K.cx, K.cy, K.width, K.height};
  for (int rep = 0; rep < 30; ++rep) {
    PoseSE3 pose = random_pose(rng);
    Tensor depth({1, 1, K.height, K.width});
    for (int64_t i = 0; i < depth.numel(); ++i) depth[i] = rng.uniform(1.0, 30.0);
    ProjectedGrid pg =
        project_op(backproject_op(constant(depth), K), K, constant(pose.as_tensor()));
    for (int64_t y = 0; y < K.height; ++y)
      for (int64_t x = 0; x < K.width; ++x) {
        double gx, gy;
        const bool front =
            oracle::project_point(sk, pose.rotation.data(), pose.translation.data(),
                                  static_cast<double>(x), static_cast<double>(y),
                                  depth[y * K.width + x], gx, gy);
        const int64_t s = y * K.width + x;
        REQUIRE((pg.in_front[s] > 0.5) == front);
        if (front) {
          REQUIRE(std::fabs(pg.grid->value[s * 2 + 0] - gx) < 1e-9);
          REQUIRE(std::fabs(pg.grid->value[s * 2 + 1] - gy) < 1e-9);
        }
      }
  }
}

TEST_CASE("projecting backprojected points round-trips the pixel grid") {
  Rng rng(23);
  for (int rep = 0; rep < 10; ++rep) {
    CameraIntrinsics K = test_K(8 + 2 * (rep % 3), 10 + 2 * (rep % 4));
    Tensor depth({1, 1, K.height, K.width});
    for (int64_t i = 0; i < depth.numel(); ++i) depth[i] = rng.uniform(0.2, 50.0);
    ProjectedGrid pg = project_op(backproject_op(constant(depth), K), K,
                                  constant(PoseSE3::identity().as_tensor()));
    Tensor id = identity_grid(1, K.height, K.width);
    double max_err = 0;
    for (int64_t i = 0; i < id.numel(); ++i)
      max_err = std::max(max_err, std::fabs(pg.grid->value[i] - id[i]));
    REQUIRE(max_err < 1e-6);
  }
}

TEST_CASE("bilinear_sample: identity grid is exact, shifts reproduce ramps") {
  Rng rng(24);
  Tensor img = rng.rand({1, 3, 8, 12});
  Var grid = constant(identity_grid(1, 8, 12));
  WarpedImage out = bilinear_sample(constant(img), grid);
  for (int64_t i = 0; i < img.numel(); ++i)
    REQUIRE(out.image->value[i] == Catch::Approx(img[i]).margin(1e-12));
  for (int64_t i = 0; i < out.mask.numel(); ++i) REQUIRE(out.mask[i] == 1.0);

  // linear ramp shifted by one pixel: bilinear reproduces linear functions
  Tensor ramp({1, 1, 8, 12});
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t x = 0; x < 12; ++x) ramp.at(0, 0, y, x) = 0.25 * x + 0.125 * y;
  Tensor shifted = identity_grid(1, 8, 12);
  for (int64_t i = 0; i < 8 * 12; ++i) shifted[i * 2] += 2.0 / 11.0;  // +1 pixel in x
  WarpedImage sh = bilinear_sample(constant(ramp), constant(shifted));
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t x = 0; x < 11; ++x)  // interior: last column falls off the edge
      REQUIRE(std::fabs(sh.image->value[y * 12 + x] - ramp.at(0, 0, y, x + 1)) < 1e-9);
  for (int64_t y = 0; y < 8; ++y) REQUIRE(sh.mask[y * 12 + 11] == 0.0);
}

TEST_CASE("warp: identity pose is the identity on interior pixels") {
  Rng rng(25);
  CameraIntrinsics K = test_K();
  Tensor src = rng.rand({1, 3, K.height, K.width});
  Tensor depth = rng.rand({1, 1, K.height, K.width}, 1.0, 10.0);
  WarpedImage w =
      warp(constant(src), constant(depth), constant(PoseSE3::identity().as_tensor()), K);
  double max_err = 0.0;
  for (int64_t i = 0; i < src.numel(); ++i)
    max_err = std::max(max_err, std::fabs(w.image->value[i] - src[i]));
  REQUIRE(max_err < 1e-6);
}

TEST_CASE("warp shape mismatch raises invalid input") {
  CameraIntrinsics K = test_K();
  Tensor src({1, 3, K.height, K.width});
  Tensor depth({1, 1, K.height, K.width + 2});
  REQUIRE_THROWS_AS(
      warp(constant(src), constant(depth), constant(PoseSE3::identity().as_tensor()), K),
      InvalidInputError);
}

TEST_CASE("warp of a fronto-parallel plane under x-translation is a pixel shift") {
  // depth d everywhere, camera translated by t_x: the sampling position is
  // u + fx t_x / d. Choose t_x so the shift is exactly 3 pixels, and verify
  // against an analytic sinusoid both at the integer shift and off-grid.
  CameraIntrinsics K{20.0, 20.0, 7.5, 5.5, 16, 12};
  const double d = 4.0;
  auto f = [](double u, double v) {
    return 0.4 + 0.2 * std::sin(0.14 * u) + 0.15 * std::cos(0.12 * v + 0.4);
  };
  Tensor src({1, 1, K.height, K.width});
  for (int64_t y = 0; y < K.height; ++y)
    for (int64_t x = 0; x < K.width; ++x)
      src.at(0, 0, y, x) = f(static_cast<double>(x), static_cast<double>(y));
  Tensor depth = Tensor::full({1, 1, K.height, K.width}, d);

  for (double shift_px : {3.0, 1.7}) {
    PoseSE3 pose;
    pose.translation = {shift_px * d / K.fx, 0.0, 0.0};
    WarpedImage w = warp(constant(src), constant(depth), constant(pose.as_tensor()), K);
    double max_err = 0.0;
    for (int64_t y = 1; y + 1 < K.height; ++y)
      for (int64_t x = 1; x + 4 < K.width; ++x)
        if (w.mask.at(0, 0, y, x) > 0.5)
          max_err = std::max(max_err, std::fabs(w.image->value[y * K.width + x] -
                                                f(static_cast<double>(x) + shift_px,
                                                  static_cast<double>(y))));
    REQUIRE(max_err < 1e-3);
  }
}

TEST_CASE("monocular scale ambiguity: scaling depth and translation cancels") {
  Rng rng(26);
  CameraIntrinsics K = test_K();
  for (int rep = 0; rep < 10; ++rep) {
    PoseSE3 pose = random_pose(rng);
    Tensor depth({1, 1, K.height, K.width});
    for (int64_t i = 0; i < depth.numel(); ++i) depth[i] = rng.uniform(1.0, 20.0);
    const double s = rng.uniform(0.2, 5.0);
    PoseSE3 scaled_pose = pose;
    for (auto& t : scaled_pose.translation) t *= s;
    Tensor scaled_depth = depth;
    for (int64_t i = 0; i < depth.numel(); ++i) scaled_depth[i] *= s;

    ProjectedGrid a =
        project_op(backproject_op(constant(depth), K), K, constant(pose.as_tensor()));
    ProjectedGrid b = project_op(backproject_op(constant(scaled_depth), K), K,
                                 constant(scaled_pose.as_tensor()));
    for (int64_t i = 0; i < a.grid->value.numel(); ++i)
      if (a.in_front[i / 2] > 0.5)
        REQUIRE(std::fabs(a.grid->value[i] - b.grid->value[i]) < 1e-9);
  }
}

TEST_CASE("warp operator gradients match finite differences") {
  Rng rng(27);
  CameraIntrinsics K = test_K(6, 8);
  Var src = make_leaf(rng.rand({1, 2, K.height, K.width}), true);
  Var depth = make_leaf(rng.rand({1, 1, K.height, K.width}, 2.0, 6.0), true);
  Var pose_vec = make_leaf(rng.rand({1, 6}, -0.05, 0.05), true);

  auto build = [&] {
    WarpedImage w = warp(src, depth, se3_exp(pose_vec), K);
    return mul_scalar(sum_all(mul(w.image, constant(w.mask))), 1.0 / 96.0);
  };
  REQUIRE(oracle::fd_max_err(build, {src, depth, pose_vec}) < 1e-4);
}

TEST_CASE("behind-camera points are flagged out of view, not thrown") {
  CameraIntrinsics K = test_K();
  Tensor depth = Tensor::full({1, 1, K.height, K.width}, 1.0);
  PoseSE3 pose;
  pose.translation = {0.0, 0.0, -5.0};  // everything lands behind the camera
  ProjectedGrid pg = project_op(backproject_op(constant(depth), K), K, constant(pose.as_tensor()));
  for (int64_t i = 0; i < pg.in_front.numel(); ++i) REQUIRE(pg.in_front[i] == 0.0);
}
