// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// Depth metrics (abs rel / sq rel / RMSE / RMSE log / delta thresholds) with
// per-image median scaling and depth caps, split-level aggregation with CSV
// reports, and ranked feature-map export.

#pragma once

#include <algorithm>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "adds/data.hpp"
#include "adds/network.hpp"

namespace adds {

struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double a1 = 0, a2 = 0, a3 = 0;
  int64_t n_pixels = 0;
  double cap = 0;
};

/// Minimum evaluated depth; predictions are clamped to [this, cap] so the
/// log metric is always defined.
inline constexpr double kMinEvalDepth = 0.1;

namespace detail {
inline double median_of(std::vector<double> v) {
  if (v.empty()) throw DegenerateInputError("median of empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

/// Rescales the prediction by median(gt)/median(pred) over the valid mask,
/// resolving the monocular scale ambiguity. Returns the scaled map and the
/// applied ratio.
inline std::pair<DepthMap, double> median_scale(const DepthMap& pred,
                                                const GroundTruthDepth& gt) {
  require_same_shape(pred.values, gt.values, "median_scale");
  std::vector<double> gv, pv;
  for (int64_t i = 0; i < gt.values.numel(); ++i)
    if (gt.mask[i] > 0.5) {
      gv.push_back(gt.values[i]);
      pv.push_back(pred.values[i]);
    }
  if (gv.empty()) throw DegenerateInputError("median_scale: no valid ground-truth pixels");
  const double ratio = detail::median_of(gv) / detail::median_of(pv);
  DepthMap scaled;
  scaled.values = pred.values;
  for (int64_t i = 0; i < scaled.values.numel(); ++i) scaled.values[i] *= ratio;
  return {std::move(scaled), ratio};
}

/// Standard capped depth metrics over valid ground-truth pixels with
/// gt <= cap; predictions clamped to [kMinEvalDepth, cap].
inline DepthMetrics compute_metrics(const DepthMap& pred, const GroundTruthDepth& gt,
                                    double cap) {
  require_same_shape(pred.values, gt.values, "compute_metrics");
  DepthMetrics m;
  m.cap = cap;
  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
  int64_t n = 0, c1 = 0, c2 = 0, c3 = 0;
  for (int64_t i = 0; i < gt.values.numel(); ++i) {
    const double g = gt.values[i];
    if (gt.mask[i] <= 0.5 || g > cap) continue;
    const double p = std::min(std::max(pred.values[i], kMinEvalDepth), cap);
    const double d = p - g;
    abs_rel += std::fabs(d) / g;
    sq_rel += d * d / g;
    sq += d * d;
    const double dl = std::log(p) - std::log(g);
    sq_log += dl * dl;
    const double r = std::max(p / g, g / p);
    if (r < 1.25) ++c1;
    if (r < 1.25 * 1.25) ++c2;
    if (r < 1.25 * 1.25 * 1.25) ++c3;
    ++n;
  }
  if (n == 0) throw DegenerateInputError("compute_metrics: no valid pixels under cap");
  const double inv = 1.0 / static_cast<double>(n);
  m.abs_rel = abs_rel * inv;
  m.sq_rel = sq_rel * inv;
  m.rmse = std::sqrt(sq * inv);
  m.rmse_log = std::sqrt(sq_log * inv);
  m.a1 = static_cast<double>(c1) * inv;
  m.a2 = static_cast<double>(c2) * inv;
  m.a3 = static_cast<double>(c3) * inv;
  m.n_pixels = n;
  return m;
}

/// Anything that can map an image to metric depth; evaluate_split is
/// predictor-agnostic so oracles can stand in for the network in tests.
using DepthPredictor = std::function<DepthMap(const Tensor& image, Domain domain)>;

struct SplitEvaluation {
  // one row per (image, cap), in split order
  std::vector<std::pair<std::string, DepthMetrics>> per_image;
  std::map<double, DepthMetrics> aggregate;  // keyed by cap; mean over images
  int64_t evaluated = 0;
  int64_t skipped = 0;
};

namespace detail {
inline void write_metrics_csv(const std::string& path, const SplitEvaluation& ev) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report: " + path);
  os << "image_id,cap,abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3\n";
  os.precision(12);
  auto row = [&os](const std::string& id, const DepthMetrics& m) {
    os << id << "," << m.cap << "," << m.abs_rel << "," << m.sq_rel << "," << m.rmse << ","
       << m.rmse_log << "," << m.a1 << "," << m.a2 << "," << m.a3 << "\n";
  };
  for (const auto& [id, m] : ev.per_image) row(id, m);
  for (const auto& [cap, m] : ev.aggregate) row("aggregate", m);
}
}  // namespace detail

/// Evaluates a predictor over a split at each depth cap: per-image median
/// scaling, per-image metrics, unweighted mean aggregation. Images without
/// ground truth are skipped with a warning; an entirely skipped split is a
/// degenerate input.
inline SplitEvaluation evaluate_split(const DepthPredictor& predict, const std::string& root,
                                      const std::vector<SplitRecord>& split,
                                      const std::vector<double>& caps, Domain domain,
                                      const std::string& csv_path = {}) {
  if (split.empty()) throw DegenerateInputError("evaluate_split: empty split");
  SplitEvaluation ev;
  std::map<double, std::vector<DepthMetrics>> collected;
  for (const auto& rec : split) {
    const std::string id = rec.sequence + "_" + std::to_string(rec.index);
    const std::string gtp = gt_path(root, rec.sequence, rec.index);
    const std::string imgp = frame_path(root, domain, rec.sequence, rec.index);
    if (!fsys::exists(gtp) || !fsys::exists(imgp)) {
      std::cerr << "warning: skipping " << id << " (missing "
                << (fsys::exists(gtp) ? imgp : gtp) << ")\n";
      ++ev.skipped;
      continue;
    }
    GroundTruthDepth gt = load_gt_depth(gtp);
    Tensor img = read_png_rgb8(imgp);
    if (img.dim(1) == kRawHeight && img.dim(2) == kRawWidth) img = preprocess(img);
    DepthMap pred = predict(img, domain);
    if (!pred.values.same_shape(gt.values))
      pred.values = resize_bilinear_tensor(
                        pred.values.reshaped({1, pred.values.dim(0), pred.values.dim(1)}),
                        gt.values.dim(0), gt.values.dim(1))
                        .reshaped({gt.values.dim(0), gt.values.dim(1)});
    auto [scaled, ratio] = median_scale(pred, gt);
    (void)ratio;
    for (double cap : caps) {
      DepthMetrics m = compute_metrics(scaled, gt, cap);
      ev.per_image.emplace_back(id, m);
      collected[cap].push_back(m);
    }
    ++ev.evaluated;
  }
  if (ev.evaluated == 0)
    throw DegenerateInputError("evaluate_split: every image was skipped");
  for (auto& [cap, ms] : collected) {
    DepthMetrics agg;
    agg.cap = cap;
    for (const auto& m : ms) {
      agg.abs_rel += m.abs_rel;
      agg.sq_rel += m.sq_rel;
      agg.rmse += m.rmse;
      agg.rmse_log += m.rmse_log;
      agg.a1 += m.a1;
      agg.a2 += m.a2;
      agg.a3 += m.a3;
      agg.n_pixels += m.n_pixels;
    }
    const double inv = 1.0 / static_cast<double>(ms.size());
    agg.abs_rel *= inv;
    agg.sq_rel *= inv;
    agg.rmse *= inv;
    agg.rmse_log *= inv;
    agg.a1 *= inv;
    agg.a2 *= inv;
    agg.a3 *= inv;
    ev.aggregate[cap] = agg;
  }
  if (!csv_path.empty()) detail::write_metrics_csv(csv_path, ev);
  return ev;
}

/// Parses a report written by evaluate_split back into per-image rows and
/// aggregate rows.
inline SplitEvaluation read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open report: " + path);
  SplitEvaluation ev;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t pos = 0;
    while (true) {
      const size_t comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != 9) throw FormatError("bad report row: " + line);
    DepthMetrics m;
    m.cap = std::stod(cells[1]);
    m.abs_rel = std::stod(cells[2]);
    m.sq_rel = std::stod(cells[3]);
    m.rmse = std::stod(cells[4]);
    m.rmse_log = std::stod(cells[5]);
    m.a1 = std::stod(cells[6]);
    m.a2 = std::stod(cells[7]);
    m.a3 = std::stod(cells[8]);
    if (cells[0] == "aggregate")
      ev.aggregate[m.cap] = m;
    else
      ev.per_image.emplace_back(cells[0], m);
  }
  return ev;
}

/// Channel indices of a [1,C,h,w] feature map ordered by descending spatial
/// activation energy (sum of absolute values); ties keep channel order.
inline std::vector<int64_t> rank_channels_by_energy(const Tensor& deep) {
  if (deep.ndim() != 4 || deep.dim(0) != 1)
    throw InvalidInputError("rank_channels_by_energy expects [1,C,h,w]");
  const int64_t C = deep.dim(1), hw = deep.dim(2) * deep.dim(3);
  std::vector<std::pair<double, int64_t>> energy;
  for (int64_t c = 0; c < C; ++c) {
    double e = 0.0;
    for (int64_t s = 0; s < hw; ++s) e += std::fabs(deep[c * hw + s]);
    energy.emplace_back(e, c);
  }
  std::stable_sort(energy.begin(), energy.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int64_t> order;
  for (const auto& [e, c] : energy) order.push_back(c);
  return order;
}

/// Exports the k deepest-scale feature channels with the highest activation
/// energy (sum of absolute values), per extractor, normalized to [0,1] as
/// 8-bit PNGs named <image_id>_<extractor>_<rank>.png. Returns written paths.
inline std::vector<std::string> export_feature_maps(const DomainSeparatedModel& model,
                                                    const Tensor& image, Domain domain, int k,
                                                    const std::string& out_dir,
                                                    const std::string& image_id) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw InvalidInputError("export_feature_maps expects a [3,H,W] image");
  Var x = constant(image.reshaped({1, 3, image.dim(1), image.dim(2)}));
  fsys::create_directories(out_dir);
  std::vector<std::string> written;

  auto dump = [&](const FeaturePyramid& f, const std::string& extractor) {
    const Tensor& deep = f.deepest()->value;  // [1,C,h,w]
    const int64_t C = deep.dim(1), hw = deep.dim(2) * deep.dim(3);
    if (k > C) throw InvalidInputError("export_feature_maps: k exceeds channel count");
    const std::vector<int64_t> order = rank_channels_by_energy(deep);
    for (int r = 0; r < k; ++r) {
      const int64_t c = order[static_cast<size_t>(r)];
      Tensor map({deep.dim(2), deep.dim(3)});
      double lo = deep[c * hw], hi = deep[c * hw];
      for (int64_t s = 0; s < hw; ++s) {
        map[s] = deep[c * hw + s];
        lo = std::min(lo, map[s]);
        hi = std::max(hi, map[s]);
      }
      if (hi > lo)
        for (int64_t s = 0; s < hw; ++s) map[s] = (map[s] - lo) / (hi - lo);
      else
        for (int64_t s = 0; s < hw; ++s) map[s] = 0.0;
      const std::string path =
          (fsys::path(out_dir) / (image_id + "_" + extractor + "_" + std::to_string(r) + ".png"))
              .string();
      write_png_gray8(path, map);
      written.push_back(path);
    }
  };

  dump(model.private_encode(x, domain, /*training=*/false), "private");
  dump(model.invariant_encode(x, domain, /*training=*/false), "invariant");
  return written;
}

}  // namespace adds
