// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "adds/data.hpp"
#include "adds/losses.hpp"
#include "oracles.hpp"

using namespace adds;

namespace {

struct TempDir {
  fsys::path path;
  TempDir() {
    path = fsys::temp_directory_path() /
           ("adds_test_" + std::to_string(Catch::rngSeed()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fsys::create_directories(path);
  }
  ~TempDir() { fsys::remove_all(path); }
  std::string str() const { return path.string(); }
};

/// Writes a toy paired dataset: `frames` frames per sequence at 32x64.
void write_toy_dataset(const std::string& root, int frames, uint64_t seed = 5) {
  Rng rng(seed);
  CameraIntrinsics K{37.0, 37.0, 31.5, 15.5, 64, 32};
  save_intrinsics(root, K);
  fsys::create_directories(fsys::path(root) / "day" / "seq00");
  fsys::create_directories(fsys::path(root) / "night" / "seq00");
  fsys::create_directories(fsys::path(root) / "gt" / "seq00");
  for (int t = 0; t < frames; ++t) {
    Tensor img = rng.rand({3, 32, 64});
    write_png_rgb8(frame_path(root, Domain::day, "seq00", t), img);
    write_png_rgb8(frame_path(root, Domain::night, "seq00", t), relight_night(img, 9));
    Tensor gt({32, 64});
    for (int64_t i = 0; i < gt.numel(); ++i) gt[i] = 5000.0 + 100.0 * (i % 7);
    write_png_gray16(gt_path(root, "seq00", t), gt);
  }
  std::vector<SplitRecord> recs;
  for (int t = 1; t + 1 < frames; ++t) recs.push_back({"seq00", t});
  fsys::create_directories(fsys::path(root) / "splits");
  write_split((fsys::path(root) / "splits" / "train.txt").string(), recs);
}

}  // namespace

TEST_CASE("png rgb8 round-trip is exact on quantized values") {
  TempDir tmp;
  Rng rng(51);
  Tensor img = rng.rand({3, 10, 14});
  for (int64_t i = 0; i < img.numel(); ++i)
    img[i] = std::round(img[i] * 255.0) / 255.0;  // representable exactly in 8 bits
  const std::string p = (tmp.path / "x.png").string();
  write_png_rgb8(p, img);
  Tensor back = read_png_rgb8(p);
  REQUIRE(back.same_shape(img));
  for (int64_t i = 0; i < img.numel(); ++i)
    REQUIRE(back[i] == Catch::Approx(img[i]).margin(1e-12));
}

TEST_CASE("png gray16 round-trip and gt depth semantics") {
  TempDir tmp;
  Tensor mm({3, 4});
  const double vals[12] = {0, 5000, 65535, 1, 123, 9999, 40000, 60000, 2, 7, 30000, 12345};
  for (int64_t i = 0; i < 12; ++i) mm[i] = vals[i];
  const std::string p = (tmp.path / "d.png").string();
  write_png_gray16(p, mm);
  Tensor back = read_png_gray16(p);
  for (int64_t i = 0; i < 12; ++i) REQUIRE(back[i] == vals[i]);

  GroundTruthDepth gt = load_gt_depth(p);
  REQUIRE(gt.values[1] == Catch::Approx(5.0));   // 5000 mm -> 5 m, valid
  REQUIRE(gt.mask[1] == 1.0);
  REQUIRE(gt.mask[0] == 0.0);                    // 0 -> invalid sentinel
  REQUIRE(gt.values[2] == Catch::Approx(65.535));  // uint16 ceiling covers the 60 m cap
  REQUIRE(gt.valid_count() == 11);

  // an 8-bit file is the wrong bit depth for ground truth
  Tensor img = Tensor::full({3, 4, 4}, 0.5);
  const std::string p8 = (tmp.path / "rgb.png").string();
  write_png_rgb8(p8, img);
  REQUIRE_THROWS_AS(load_gt_depth(p8), FormatError);
  REQUIRE_THROWS_AS(read_png_rgb8((tmp.path / "missing.png").string()), IoError);
}

TEST_CASE("preprocess: shape, constants, checker oracle, intrinsics arithmetic") {
  Rng rng(52);
  REQUIRE_THROWS_AS(preprocess(Tensor::zeros({3, 720, 1280})), InvalidInputError);

  Tensor flat = Tensor::full({3, 960, 1280}, 0.37);
  Tensor out = preprocess(flat);
  REQUIRE(out.shape() == std::vector<int64_t>{3, 256, 512});
  for (int64_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == Catch::Approx(0.37).margin(1e-12));

  // checker-ish pattern: compare against an independent crop + bilinear loop
  Tensor raw({3, 960, 1280});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < 960; ++y)
      for (int64_t x = 0; x < 1280; ++x)
        raw.at(c, y, x) = 0.5 + 0.5 * std::sin(0.21 * y + 0.13 * x + c);
  Tensor crop({3, 640, 1280});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < 640; ++y)
      for (int64_t x = 0; x < 1280; ++x) crop.at(c, y, x) = raw.at(c, y + 160, x);
  Tensor expect = oracle::resize_bilinear(crop, 256, 512);
  Tensor got = preprocess(raw);
  double max_err = 0;
  for (int64_t i = 0; i < got.numel(); ++i)
    max_err = std::max(max_err, std::fabs(got[i] - expect[i]));
  REQUIRE(max_err < 1e-6);

  // a fixed 3D point projects consistently through the adjusted intrinsics
  CameraIntrinsics K{983.0, 983.0, 643.7, 484.2, 1280, 960};
  CameraIntrinsics Kp = preprocess_intrinsics(K);
  REQUIRE(Kp.fx == Catch::Approx(983.0 * 0.4));
  REQUIRE(Kp.cy == Catch::Approx((484.2 - 160.0) * 0.4));
  REQUIRE(Kp.width == 512);
  const double X = 1.3, Y = -0.4, Z = 7.0;
  const double u_raw = K.fx * X / Z + K.cx, v_raw = K.fy * Y / Z + K.cy;
  const double u_net = Kp.fx * X / Z + Kp.cx, v_net = Kp.fy * Y / Z + Kp.cy;
  REQUIRE(u_net == Catch::Approx(u_raw * 0.4).margin(1e-9));
  REQUIRE(v_net == Catch::Approx((v_raw - 160.0) * 0.4).margin(1e-9));
}

TEST_CASE("triplet loading: pairing, ranges, io and sequence errors") {
  TempDir tmp;
  write_toy_dataset(tmp.str(), 5);
  PairedSample s = load_paired_triplet(tmp.str(), "seq00", 2);
  s.validate();
  REQUIRE(s.day.index == 2);
  REQUIRE(s.night.sequence == "seq00");
  for (const auto& f : s.day.frames) {
    REQUIRE(f.min() >= 0.0);
    REQUIRE(f.max() <= 1.0);
  }

  // missing tail frame -> io error naming the path
  REQUIRE_THROWS_MATCHES(load_paired_triplet(tmp.str(), "seq00", 4), IoError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("000005.png")));

  // pairing audit is clean before any file goes missing
  REQUIRE(audit_pairing(tmp.str(), {{"seq00", 1}, {"seq00", 2}}) == 0);

  // a hole inside the sequence -> sequence error
  fsys::remove(frame_path(tmp.str(), Domain::night, "seq00", 2));
  REQUIRE_THROWS_AS(load_paired_triplet(tmp.str(), "seq00", 2), SequenceError);

  // pairing audit counts the violation
  REQUIRE(audit_pairing(tmp.str(), {{"seq00", 2}}) > 0);
}

TEST_CASE("split file round-trip") {
  TempDir tmp;
  std::vector<SplitRecord> recs{{"seq00", 1}, {"seq00", 2}, {"seq01", 7}};
  const std::string p = (tmp.path / "split.txt").string();
  write_split(p, recs);
  auto back = read_split(p);
  REQUIRE(back.size() == 3);
  REQUIRE(back[2].sequence == "seq01");
  REQUIRE(back[2].index == 7);
  REQUIRE_THROWS_AS(read_split((tmp.path / "none.txt").string()), IoError);
}

TEST_CASE("synthetic scenes are deterministic and geometrically exact") {
  SyntheticSequence a = generate_synthetic_scene(12, 3, 32, 64);
  SyntheticSequence b = generate_synthetic_scene(12, 3, 32, 64);
  for (int t = 0; t < 3; ++t) {
    REQUIRE(std::equal(a.frames[t].data(), a.frames[t].data() + a.frames[t].numel(),
                       b.frames[t].data()));
    REQUIRE(std::equal(a.gt_depth[t].data(), a.gt_depth[t].data() + a.gt_depth[t].numel(),
                       b.gt_depth[t].data()));
  }
  SyntheticSequence c = generate_synthetic_scene(13, 3, 32, 64);
  REQUIRE(!std::equal(a.frames[0].data(), a.frames[0].data() + a.frames[0].numel(),
                      c.frames[0].data()));
  REQUIRE_THROWS_AS(generate_synthetic_scene(1, 2), InvalidInputError);

  // a rectangle placed at exactly 10 m reads 10.0 in the depth map
  SyntheticScene scene = make_scene(1, 32, 64);
  scene.rects.clear();
  scene.ground_y = 1e9;  // push the ground out of every ray
  SceneRect r;
  r.z = 10.0;
  r.x0 = -50.0;
  r.x1 = 50.0;
  r.y0 = -50.0;
  r.y1 = 50.0;
  scene.rects.push_back(r);
  Tensor depth = render_depth(scene, 0.0);
  for (int64_t i = 0; i < depth.numel(); ++i) REQUIRE(depth[i] == 10.0);
}

TEST_CASE("warping the previous frame with exact depth and pose matches the next frame") {
  for (uint64_t seed : {101ULL, 202ULL, 303ULL}) {
    SyntheticSequence seq = generate_synthetic_scene(seed, 4, 64, 128);
    for (int t = 1; t < 4; ++t) {
      DepthMap d;
      d.values = seq.gt_depth[static_cast<size_t>(t)];
      // depth 0 marks sky; give it the backwall distance so warp stays defined
      for (int64_t i = 0; i < d.values.numel(); ++i)
        if (d.values[i] <= 0.0) d.values[i] = 1000.0;
      auto [synth, mask] = warp_image(seq.frames[static_cast<size_t>(t - 1)], d,
                                      seq.pose_prev_from_curr(), seq.intrinsics);
      double err = 0, count = 0;
      for (int64_t y = 0; y < 64; ++y)
        for (int64_t x = 0; x < 128; ++x)
          if (mask.at(y, x) > 0.5)
            for (int64_t ch = 0; ch < 3; ++ch) {
              err += std::fabs(synth.at(ch, y, x) -
                               seq.frames[static_cast<size_t>(t)].at(ch, y, x));
              count += 1;
            }
      REQUIRE(count > 0.5 * 3 * 64 * 128);
      INFO("seed " << seed << " frame " << t << " mae " << err / count);
      REQUIRE(err / count < 0.02);
    }
  }
}

TEST_CASE("relight_night darkens, is deterministic, and preserves structure") {
  SyntheticSequence seq = generate_synthetic_scene(55, 3, 64, 128);
  const Tensor& day = seq.frames[1];
  Tensor night = relight_night(day, 77);
  REQUIRE(night.mean() < day.mean());
  Tensor night2 = relight_night(day, 77);
  REQUIRE(std::equal(night.data(), night.data() + night.numel(), night2.data()));
  Tensor night3 = relight_night(day, 78);
  REQUIRE(!std::equal(night.data(), night.data() + night.numel(), night3.data()));
  for (int64_t i = 0; i < night.numel(); ++i) {
    REQUIRE(night[i] >= 0.0);
    REQUIRE(night[i] <= 1.0);
  }

  // content edges survive: SSIM between day and night stays positive on a
  // textured interior region
  Var s = ssim(constant(day.reshaped({1, 3, 64, 128})),
               constant(night.reshaped({1, 3, 64, 128})));
  double acc = 0;
  int64_t n = 0;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 40; y < 60; ++y)  // ground region, textured
      for (int64_t x = 30; x < 100; ++x) {
        acc += s->value.at(0, c, y, x);
        ++n;
      }
  REQUIRE(acc / static_cast<double>(n) > 0.0);
}

TEST_CASE("intrinsics json round-trip") {
  TempDir tmp;
  CameraIntrinsics K{74.2, 74.2, 63.5, 31.5, 128, 64};
  save_intrinsics(tmp.str(), K);
  CameraIntrinsics back = load_intrinsics(tmp.str());
  REQUIRE(back.fx == K.fx);
  REQUIRE(back.cy == K.cy);
  REQUIRE(back.width == 128);
  REQUIRE_THROWS_AS(load_intrinsics((tmp.path / "nowhere").string()), IoError);
}
