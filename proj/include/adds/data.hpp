// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset layout, PNG ingestion, preprocessing, paired day/night triplet
// loading, ground-truth depth, and the procedural test scenes: a textured
// rectangle world with exact depth, plus a photometric day->night relighting
// transform that stands in for GAN-translated night frames.
//
// On-disk layout (normative for this project):
//   root/day/<sequence>/<6-digit index>.png
//   root/night/<sequence>/<6-digit index>.png
//   root/gt/<sequence>/<6-digit index>.png     16-bit grayscale, millimeters
//   root/splits/<name>.txt                     lines of "<sequence> <index>"
//   root/intrinsics.json                       pinhole model of stored images

#pragma once

#include <png.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adds/domain.hpp"
#include "adds/geometry.hpp"

namespace adds {

// ---------------------------------------------------------------------------
// PNG I/O.
// ---------------------------------------------------------------------------

namespace detail {

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

inline void open_png_read(PngReader& r, const std::string& path) {
  r.fp = std::fopen(path.c_str(), "rb");
  if (!r.fp) throw IoError("cannot open file: " + path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (!r.png || !r.info) throw IoError("libpng init failed for " + path);
}

}  // namespace detail

/// 8-bit RGB PNG -> [3,H,W] tensor in [0,1]. Grayscale/palette/alpha inputs
/// are converted; 16-bit inputs are rejected.
inline Tensor read_png_rgb8(const std::string& path) {
  detail::PngReader r;
  detail::open_png_read(r, path);
  if (setjmp(png_jmpbuf(r.png))) throw FormatError("corrupt PNG: " + path);
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);
  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);
  if (bit_depth != 8)
    throw FormatError("expected 8-bit RGB PNG, got bit depth " + std::to_string(bit_depth) +
                      ": " + path);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(r.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(r.png);
  png_read_update_info(r.png, r.info);
  const int64_t W = png_get_image_width(r.png, r.info);
  const int64_t H = png_get_image_height(r.png, r.info);
  std::vector<png_byte> rowbuf(static_cast<size_t>(W) * 3);
  Tensor out({3, H, W});
  for (int64_t y = 0; y < H; ++y) {
    png_read_row(r.png, rowbuf.data(), nullptr);
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c)
        out.at(c, y, x) = static_cast<double>(rowbuf[static_cast<size_t>(x * 3 + c)]) / 255.0;
  }
  return out;
}

/// [3,H,W] in [0,1] -> 8-bit RGB PNG (values clamped and rounded).
inline void write_png_rgb8(const std::string& path, const Tensor& img) {
  if (img.ndim() != 3 || img.dim(0) != 3) throw InvalidInputError("write_png_rgb8 expects [3,H,W]");
  detail::PngWriter w;
  w.fp = std::fopen(path.c_str(), "wb");
  if (!w.fp) throw IoError("cannot write file: " + path);
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  if (!w.png || !w.info) throw IoError("libpng init failed for " + path);
  if (setjmp(png_jmpbuf(w.png))) throw IoError("PNG write failed: " + path);
  png_init_io(w.png, w.fp);
  const int64_t H = img.dim(1), W = img.dim(2);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<png_byte> rowbuf(static_cast<size_t>(W) * 3);
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        const double v = std::min(std::max(img.at(c, y, x), 0.0), 1.0);
        rowbuf[static_cast<size_t>(x * 3 + c)] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    png_write_row(w.png, rowbuf.data());
  }
  png_write_end(w.png, w.info);
}

/// 16-bit single-channel PNG -> [H,W] tensor of raw code values (0..65535).
inline Tensor read_png_gray16(const std::string& path) {
  detail::PngReader r;
  detail::open_png_read(r, path);
  if (setjmp(png_jmpbuf(r.png))) throw FormatError("corrupt PNG: " + path);
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);
  if (png_get_bit_depth(r.png, r.info) != 16 ||
      png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY)
    throw FormatError("expected 16-bit grayscale PNG: " + path);
  png_read_update_info(r.png, r.info);
  const int64_t W = png_get_image_width(r.png, r.info);
  const int64_t H = png_get_image_height(r.png, r.info);
  std::vector<png_byte> rowbuf(static_cast<size_t>(W) * 2);
  Tensor out({H, W});
  for (int64_t y = 0; y < H; ++y) {
    png_read_row(r.png, rowbuf.data(), nullptr);
    for (int64_t x = 0; x < W; ++x)  // network byte order
      out.at(y, x) = static_cast<double>((static_cast<int>(rowbuf[2 * x]) << 8) |
                                         static_cast<int>(rowbuf[2 * x + 1]));
  }
  return out;
}

/// [H,W] of code values (clamped to 0..65535) -> 16-bit grayscale PNG.
inline void write_png_gray16(const std::string& path, const Tensor& img) {
  if (img.ndim() != 2) throw InvalidInputError("write_png_gray16 expects [H,W]");
  detail::PngWriter w;
  w.fp = std::fopen(path.c_str(), "wb");
  if (!w.fp) throw IoError("cannot write file: " + path);
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  if (!w.png || !w.info) throw IoError("libpng init failed for " + path);
  if (setjmp(png_jmpbuf(w.png))) throw IoError("PNG write failed: " + path);
  png_init_io(w.png, w.fp);
  const int64_t H = img.dim(0), W = img.dim(1);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<png_byte> rowbuf(static_cast<size_t>(W) * 2);
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      const long v = std::lround(std::min(std::max(img.at(y, x), 0.0), 65535.0));
      rowbuf[2 * x] = static_cast<png_byte>((v >> 8) & 0xff);
      rowbuf[2 * x + 1] = static_cast<png_byte>(v & 0xff);
    }
    png_write_row(w.png, rowbuf.data());
  }
  png_write_end(w.png, w.info);
}

/// [H,W] in [0,1] -> 8-bit grayscale PNG.
inline void write_png_gray8(const std::string& path, const Tensor& img) {
  if (img.ndim() != 2) throw InvalidInputError("write_png_gray8 expects [H,W]");
  Tensor rgb({3, img.dim(0), img.dim(1)});
  for (int64_t c = 0; c < 3; ++c)
    std::copy_n(img.data(), img.numel(), rgb.data() + c * img.numel());
  write_png_rgb8(path, rgb);
}

// ---------------------------------------------------------------------------
// Preprocessing (960x1280 -> 256x512) and intrinsics bookkeeping.
// ---------------------------------------------------------------------------

inline constexpr int64_t kRawHeight = 960, kRawWidth = 1280;
inline constexpr int64_t kCropHeight = 640, kCropTop = 160;
inline constexpr int64_t kNetHeight = 256, kNetWidth = 512;

/// Center-crop a raw [3,960,1280] frame to 640x1280 (rows 160..799), then
/// bilinearly resize to 256x512.
inline Tensor preprocess(const Tensor& raw) {
  if (raw.ndim() != 3 || raw.dim(0) != 3 || raw.dim(1) != kRawHeight || raw.dim(2) != kRawWidth)
    throw InvalidInputError("preprocess expects [3,960,1280], got " + raw.shape_str());
  Tensor crop({3, kCropHeight, kRawWidth});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < kCropHeight; ++y)
      std::copy_n(raw.data() + (c * kRawHeight + y + kCropTop) * kRawWidth, kRawWidth,
                  crop.data() + (c * kCropHeight + y) * kRawWidth);
  return resize_bilinear_tensor(crop, kNetHeight, kNetWidth);
}

/// Intrinsics update matching preprocess(): cy shifts by -160, then all
/// four parameters scale by 0.4.
inline CameraIntrinsics preprocess_intrinsics(const CameraIntrinsics& K) {
  return K.cropped(0, kCropTop, kRawWidth, kCropHeight)
      .scaled(static_cast<double>(kNetWidth) / static_cast<double>(kRawWidth),
              static_cast<double>(kNetHeight) / static_cast<double>(kCropHeight), kNetWidth,
              kNetHeight);
}

// ---------------------------------------------------------------------------
// Sample types.
// ---------------------------------------------------------------------------

/// Three consecutive frames of one domain plus the camera model.
struct ImageTriplet {
  std::array<Tensor, 3> frames;  // t-1, t, t+1, each [3,H,W] in [0,1]
  Domain domain = Domain::day;
  CameraIntrinsics intrinsics;
  std::string sequence;
  int64_t index = 0;  // frame index of the center frame

  const Tensor& prev() const { return frames[0]; }
  const Tensor& center() const { return frames[1]; }
  const Tensor& next() const { return frames[2]; }

  void validate() const {
    if (!frames[0].same_shape(frames[1]) || !frames[1].same_shape(frames[2]))
      throw InvalidInputError("triplet frames must share one shape");
  }
};

/// A day triplet with its generated night counterpart at identical indices.
struct PairedSample {
  ImageTriplet day;
  ImageTriplet night;

  void validate() const {
    day.validate();
    night.validate();
    if (day.sequence != night.sequence || day.index != night.index)
      throw SequenceError("paired sample: day/night sequence or index mismatch");
  }
};

/// Sparse metric depth; 0 marks pixels without a measurement.
struct GroundTruthDepth {
  Tensor values;  // [H,W] meters
  Tensor mask;    // [H,W], 1 where valid

  int64_t valid_count() const {
    int64_t n = 0;
    for (int64_t i = 0; i < mask.numel(); ++i) n += mask[i] > 0.5 ? 1 : 0;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Dataset layout.
// ---------------------------------------------------------------------------

namespace fsys = std::filesystem;

inline std::string frame_name(int64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06lld.png", static_cast<long long>(index));
  return buf;
}

inline std::string frame_path(const std::string& root, Domain d, const std::string& sequence,
                              int64_t index) {
  return (fsys::path(root) / to_string(d) / sequence / frame_name(index)).string();
}

inline std::string gt_path(const std::string& root, const std::string& sequence, int64_t index) {
  return (fsys::path(root) / "gt" / sequence / frame_name(index)).string();
}

inline void save_intrinsics(const std::string& root, const CameraIntrinsics& K) {
  nlohmann::json j{{"fx", K.fx}, {"fy", K.fy},       {"cx", K.cx},
                   {"cy", K.cy}, {"width", K.width}, {"height", K.height}};
  std::ofstream os(fsys::path(root) / "intrinsics.json");
  if (!os) throw IoError("cannot write intrinsics.json under " + root);
  os << j.dump(2) << "\n";
}

inline CameraIntrinsics load_intrinsics(const std::string& root) {
  const auto p = fsys::path(root) / "intrinsics.json";
  std::ifstream is(p);
  if (!is) throw IoError("missing intrinsics file: " + p.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad intrinsics json: " + std::string(e.what()));
  }
  CameraIntrinsics K{j.at("fx"), j.at("fy"), j.at("cx"), j.at("cy"), j.at("width"), j.at("height")};
  K.validate();
  return K;
}

struct SplitRecord {
  std::string sequence;
  int64_t index = 0;
};

inline std::vector<SplitRecord> read_split(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open split file: " + path);
  std::vector<SplitRecord> records;
  std::string seq;
  int64_t idx;
  while (is >> seq >> idx) records.push_back({seq, idx});
  return records;
}

inline void write_split(const std::string& path, const std::vector<SplitRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write split file: " + path);
  for (const auto& r : records) os << r.sequence << " " << r.index << "\n";
}

namespace detail {
/// Loads one frame; distinguishes a truly absent tail frame (io error) from a
/// hole inside an otherwise continuing sequence (sequence error).
inline Tensor load_frame_checked(const std::string& root, Domain d, const std::string& sequence,
                                 int64_t index) {
  const std::string path = frame_path(root, d, sequence, index);
  if (!fsys::exists(path)) {
    const fsys::path dir = fsys::path(path).parent_path();
    if (fsys::exists(dir))
      for (const auto& entry : fsys::directory_iterator(dir)) {
        const std::string stem = entry.path().stem().string();
        char* end = nullptr;
        const long long v = std::strtoll(stem.c_str(), &end, 10);
        if (end && *end == '\0' && v > index)
          throw SequenceError("index gap in sequence '" + sequence + "': missing frame " +
                              std::to_string(index) + " before existing frame " +
                              std::to_string(v));
      }
    throw IoError("missing frame: " + path);
  }
  Tensor img = read_png_rgb8(path);
  return (img.dim(1) == kRawHeight && img.dim(2) == kRawWidth) ? preprocess(img) : img;
}
}  // namespace detail

/// Loads the triplet (t-1, t, t+1) of one domain. Raw 960x1280 frames are
/// preprocessed; anything else is assumed already network-sized.
inline ImageTriplet load_triplet(const std::string& root, Domain d, const std::string& sequence,
                                 int64_t t) {
  ImageTriplet trip;
  trip.domain = d;
  trip.sequence = sequence;
  trip.index = t;
  for (int k = -1; k <= 1; ++k)
    trip.frames[static_cast<size_t>(k + 1)] = detail::load_frame_checked(root, d, sequence, t + k);
  CameraIntrinsics K = load_intrinsics(root);
  trip.intrinsics = (K.height == kRawHeight && K.width == kRawWidth) ? preprocess_intrinsics(K) : K;
  trip.validate();
  if (trip.intrinsics.height != trip.center().dim(1) ||
      trip.intrinsics.width != trip.center().dim(2))
    throw InvalidInputError("intrinsics do not match loaded frame size");
  return trip;
}

/// Loads matching day and night triplets at identical indices.
inline PairedSample load_paired_triplet(const std::string& root, const std::string& sequence,
                                        int64_t t) {
  PairedSample s;
  s.day = load_triplet(root, Domain::day, sequence, t);
  s.night = load_triplet(root, Domain::night, sequence, t);
  s.validate();
  return s;
}

/// 16-bit millimeter PNG -> meters; zero code values are flagged invalid.
inline GroundTruthDepth load_gt_depth(const std::string& path) {
  Tensor raw = read_png_gray16(path);
  GroundTruthDepth gt;
  gt.values = Tensor(raw.shape());
  gt.mask = Tensor(raw.shape());
  for (int64_t i = 0; i < raw.numel(); ++i) {
    gt.values[i] = raw[i] / 1000.0;
    gt.mask[i] = raw[i] > 0.0 ? 1.0 : 0.0;
  }
  return gt;
}

/// Checks that every split record has day/night/GT frames for the whole
/// triplet with matching indices; returns the number of violations.
inline int64_t audit_pairing(const std::string& root, const std::vector<SplitRecord>& split) {
  int64_t mismatches = 0;
  for (const auto& r : split)
    for (int k = -1; k <= 1; ++k) {
      const bool day_ok = fsys::exists(frame_path(root, Domain::day, r.sequence, r.index + k));
      const bool night_ok = fsys::exists(frame_path(root, Domain::night, r.sequence, r.index + k));
      if (day_ok != night_ok || !day_ok) ++mismatches;
    }
  return mismatches;
}

// ---------------------------------------------------------------------------
// Procedural scenes: textured fronto-parallel rectangles over a ground plane,
// viewed by a forward-translating pinhole camera. Colors are band-limited
// sums of sinusoids anchored in world coordinates so that view synthesis from
// true depth and pose reproduces frames almost exactly.
// ---------------------------------------------------------------------------

struct SceneRect {
  double z = 10.0;                       // plane depth in world coordinates
  double x0 = -1, x1 = 1, y0 = -1, y1 = 1;  // extent, meters
  std::array<double, 3> base{0.5, 0.5, 0.5};
  std::array<double, 4> freq{0.2, 0.1, 0.15, 0.25};  // two plane waves (fx1,fy1,fx2,fy2)
  std::array<double, 2> phase{0.0, 0.0};
  double amplitude = 0.2;

  std::array<double, 3> color_at(double x, double y) const {
    const double w1 = std::sin(2.0 * M_PI * (freq[0] * x + freq[1] * y) + phase[0]);
    const double w2 = std::sin(2.0 * M_PI * (freq[2] * x + freq[3] * y) + phase[1]);
    std::array<double, 3> c;
    for (int i = 0; i < 3; ++i) {
      const double v = base[i] + amplitude * 0.5 * (w1 + w2 * (i == 1 ? -1.0 : 1.0));
      c[i] = std::min(std::max(v, 0.02), 0.98);
    }
    return c;
  }
};

struct SyntheticScene {
  std::vector<SceneRect> rects;  // sorted near to far; the last one is the back wall
  double ground_y = 1.5;         // camera height above ground (y points down)
  SceneRect ground_tex;          // reused for the ground pattern, in (x,z)
  CameraIntrinsics intrinsics;
  double step_m = 0.5;  // forward camera travel per frame
};

/// Ray through pixel (u,v) at camera z-position cam_z; returns z-depth and color.
inline double trace_depth(const SyntheticScene& s, double u, double v, double cam_z,
                          std::array<double, 3>* color = nullptr) {
  const double dx = (u - s.intrinsics.cx) / s.intrinsics.fx;
  const double dy = (v - s.intrinsics.cy) / s.intrinsics.fy;
  double best = -1.0;
  const SceneRect* hit = nullptr;
  double hx = 0, hy = 0;
  for (const auto& r : s.rects) {
    const double t = r.z - cam_z;
    if (t <= 0.25) continue;  // behind or grazing the camera
    const double x = dx * t, y = dy * t;
    if (x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1 && (best < 0 || t < best)) {
      best = t;
      hit = &r;
      hx = x;
      hy = y;
    }
  }
  if (dy > 1e-9) {  // ground plane
    const double t = s.ground_y / dy;
    if (t > 0.25 && (best < 0 || t < best)) {
      best = t;
      hit = &s.ground_tex;
      hx = dx * t;
      hy = t + cam_z;  // texture the ground in world (x, z)
    }
  }
  if (color) {
    if (hit)
      *color = hit->color_at(hx, hy);
    else
      *color = {0.30, 0.35, 0.45 + 0.2 * std::max(-dy, 0.0)};  // sky gradient
  }
  return best > 0 ? best : 0.0;
}

/// Renders color (with supersampling) for the camera at z = cam_z.
inline Tensor render_frame(const SyntheticScene& s, double cam_z, int supersample = 2) {
  const int64_t H = s.intrinsics.height, W = s.intrinsics.width;
  Tensor img({3, H, W});
  const double inv = 1.0 / static_cast<double>(supersample);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      std::array<double, 3> acc{0, 0, 0};
      for (int sy = 0; sy < supersample; ++sy)
        for (int sx = 0; sx < supersample; ++sx) {
          std::array<double, 3> c;
          trace_depth(s, static_cast<double>(x) + (sx + 0.5) * inv - 0.5,
                      static_cast<double>(y) + (sy + 0.5) * inv - 0.5, cam_z, &c);
          for (int i = 0; i < 3; ++i) acc[i] += c[i];
        }
      for (int64_t c = 0; c < 3; ++c)
        img.at(c, y, x) = acc[static_cast<size_t>(c)] * inv * inv;
    }
  return img;
}

/// Exact z-depth through each pixel center; 0 where the ray escapes to the sky.
inline Tensor render_depth(const SyntheticScene& s, double cam_z) {
  const int64_t H = s.intrinsics.height, W = s.intrinsics.width;
  Tensor depth({H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      depth.at(y, x) =
          trace_depth(s, static_cast<double>(x), static_cast<double>(y), cam_z, nullptr);
  return depth;
}

/// Builds a random scene: 4-6 textured rectangles standing on the ground at
/// depths in [2,60] m, plus a far back wall so depth is dense everywhere.
inline SyntheticScene make_scene(uint64_t seed, int64_t height, int64_t width) {
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 1);
  SyntheticScene s;
  s.intrinsics = {0.58 * static_cast<double>(width), 0.58 * static_cast<double>(width),
                  0.5 * static_cast<double>(width) - 0.5, 0.5 * static_cast<double>(height) - 0.5,
                  width, height};
  auto random_tex = [&rng](SceneRect& r, double freq_scale) {
    for (int i = 0; i < 3; ++i) r.base[i] = rng.uniform(0.35, 0.65);
    for (int i = 0; i < 4; ++i) r.freq[i] = rng.uniform(0.5, 1.4) * freq_scale;
    r.phase = {rng.uniform(0.0, 2.0 * M_PI), rng.uniform(0.0, 2.0 * M_PI)};
    r.amplitude = rng.uniform(0.15, 0.30);
  };

  const int num_rects = 4 + static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < num_rects; ++i) {
    SceneRect r;
    r.z = 2.0 * std::pow(30.0, rng.uniform());  // log-uniform in [2, 60]
    const double h = rng.uniform(1.0, 4.0);
    const double w = rng.uniform(1.0, 5.0) * (1.0 + r.z / 20.0);
    const double half_view = r.z * 0.5 * static_cast<double>(width) / s.intrinsics.fx;
    const double xc = rng.uniform(-0.8, 0.8) * half_view;
    r.x0 = xc - 0.5 * w;
    r.x1 = xc + 0.5 * w;
    r.y1 = s.ground_y;  // standing on the ground
    r.y0 = s.ground_y - h;
    // pattern scale ~ 1/z keeps the on-screen texture period roughly constant
    random_tex(r, 3.0 / r.z);
    s.rects.push_back(r);
  }
  SceneRect wall;
  wall.z = 80.0;
  wall.x0 = -200.0;
  wall.x1 = 200.0;
  wall.y0 = -100.0;
  wall.y1 = s.ground_y;
  random_tex(wall, 3.0 / wall.z);
  s.rects.push_back(wall);
  random_tex(s.ground_tex, 0.4);
  return s;
}

/// A rendered forward-motion sequence with dense exact depth.
struct SyntheticSequence {
  std::vector<Tensor> frames;    // [3,H,W]
  std::vector<Tensor> gt_depth;  // [H,W] meters, 0 = sky
  CameraIntrinsics intrinsics;
  double step_m = 0.5;

  /// Transform from frame t's camera coordinates to frame t-1's: pure forward
  /// motion by step_m means the same point lies step_m further along +z in
  /// the earlier camera's frame.
  PoseSE3 pose_prev_from_curr() const {
    PoseSE3 p;
    p.translation = {0.0, 0.0, step_m};
    return p;
  }
  PoseSE3 pose_next_from_curr() const {
    PoseSE3 p;
    p.translation = {0.0, 0.0, -step_m};
    return p;
  }
};

inline SyntheticSequence generate_synthetic_scene(uint64_t seed, int num_frames,
                                                  int64_t height = 64, int64_t width = 128) {
  if (num_frames < 3) throw InvalidInputError("generate_synthetic_scene: num_frames must be >= 3");
  SyntheticScene scene = make_scene(seed, height, width);
  SyntheticSequence seq;
  seq.intrinsics = scene.intrinsics;
  seq.step_m = scene.step_m;
  for (int t = 0; t < num_frames; ++t) {
    const double cam_z = scene.step_m * static_cast<double>(t);
    seq.frames.push_back(render_frame(scene, cam_z));
    seq.gt_depth.push_back(render_depth(scene, cam_z));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Day -> night relighting: a smooth low-brightness illumination field with a
// few bright point-light blobs, gamma 2.0, and additive Gaussian noise. A
// pure per-pixel photometric transform; geometry and content are untouched.
// ---------------------------------------------------------------------------

struct NightRelightParams {
  double base_level = 0.18;
  double field_variation = 0.06;
  double gamma = 2.0;
  double noise_sigma = 0.02;
};

inline Tensor relight_night(const Tensor& day, uint64_t seed,
                            const NightRelightParams& params = {}) {
  if (day.ndim() != 3 || day.dim(0) != 3) throw InvalidInputError("relight_night expects [3,H,W]");
  const int64_t H = day.dim(1), W = day.dim(2);
  Rng rng(seed * 0x2545f4914f6cdd1dULL + 7);

  // Smooth illumination field in [~0.05, 1].
  const double ax = rng.uniform(0.5, 1.5), ay = rng.uniform(0.5, 1.5);
  const double phi = rng.uniform(0.0, 2.0 * M_PI);
  const int num_blobs = 1 + static_cast<int>(rng.uniform_int(3));
  struct Blob {
    double u, v, sigma, intensity;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < num_blobs; ++i)
    blobs.push_back({rng.uniform(0.1, 0.9) * static_cast<double>(W),
                     rng.uniform(0.1, 0.9) * static_cast<double>(H),
                     rng.uniform(0.08, 0.25) * static_cast<double>(std::min(H, W)),
                     rng.uniform(0.5, 1.0)});

  Tensor field({H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double L = params.base_level +
                 params.field_variation *
                     std::cos(2.0 * M_PI * (ax * static_cast<double>(x) / static_cast<double>(W) +
                                            ay * static_cast<double>(y) / static_cast<double>(H)) +
                              phi);
      for (const auto& b : blobs) {
        const double du = static_cast<double>(x) - b.u, dv = static_cast<double>(y) - b.v;
        L += b.intensity * std::exp(-(du * du + dv * dv) / (2.0 * b.sigma * b.sigma));
      }
      field.at(y, x) = std::min(std::max(L, 0.05), 1.0);
    }

  Tensor night(day.shape());
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < H * W; ++i) {
      const double lit = day[c * H * W + i] * field[i];
      const double v = std::pow(lit, params.gamma) + params.noise_sigma * rng.normal();
      night[c * H * W + i] = std::min(std::max(v, 0.0), 1.0);
    }
  return night;
}

}  // namespace adds
