// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry points: synth | train | eval | infer.
// Every failure exits nonzero with a single-line "<E_CODE>: message" on
// stderr. ADDS_DETERMINISTIC=1 pins deterministic execution (the CPU
// implementation is deterministic by construction; the variable is honored
// for interface compatibility and recorded in the run banner).

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "adds/eval.hpp"
#include "adds/run_config.hpp"
#include "adds/trainer.hpp"

namespace {

using namespace adds;

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

bool deterministic_mode() {
  const char* v = std::getenv("ADDS_DETERMINISTIC");
  return v && std::string(v) == "1";
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int sequences = 2;
  int frames = 10;
  uint64_t seed = 1;
  int64_t height = 64, width = 128;
};

int cmd_synth(const SynthArgs& a) {
  if (a.frames < 3) throw ConfigError("--frames must be >= 3");
  fsys::create_directories(a.out);
  std::vector<SplitRecord> centers;
  CameraIntrinsics K;
  for (int s = 0; s < a.sequences; ++s) {
    char name[16];
    std::snprintf(name, sizeof name, "seq%02d", s);
    SyntheticSequence seq =
        generate_synthetic_scene(mix_seed(a.seed, static_cast<uint64_t>(s)), a.frames, a.height,
                                 a.width);
    K = seq.intrinsics;
    const uint64_t relight_seed = mix_seed(a.seed, 0x1000 + static_cast<uint64_t>(s));
    fsys::create_directories(fsys::path(a.out) / "day" / name);
    fsys::create_directories(fsys::path(a.out) / "night" / name);
    fsys::create_directories(fsys::path(a.out) / "gt" / name);
    for (int t = 0; t < a.frames; ++t) {
      write_png_rgb8(frame_path(a.out, Domain::day, name, t), seq.frames[t]);
      // One illumination field per sequence keeps night triplets consistent.
      write_png_rgb8(frame_path(a.out, Domain::night, name, t),
                     relight_night(seq.frames[t], relight_seed));
      Tensor mm(seq.gt_depth[t].shape());
      for (int64_t i = 0; i < mm.numel(); ++i)
        mm[i] = std::min(seq.gt_depth[t][i] * 1000.0, 65535.0);
      write_png_gray16(gt_path(a.out, name, t), mm);
    }
    for (int t = 1; t + 1 < a.frames; ++t) centers.push_back({name, t});
  }
  save_intrinsics(a.out, K);
  fsys::create_directories(fsys::path(a.out) / "splits");
  write_split((fsys::path(a.out) / "splits" / "train.txt").string(), centers);
  write_split((fsys::path(a.out) / "splits" / "test.txt").string(), centers);
  const int64_t bad = audit_pairing(a.out, centers);
  if (bad != 0) throw IoError("pairing audit failed on generated data");
  std::cout << "wrote " << a.sequences << " sequences x " << a.frames << " frames ("
            << a.height << "x" << a.width << ") under " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string data, out, split, ablation, resume;
  int epochs = -1, batch_size = -1;
  int64_t seed = -1;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc;
  if (!a.config_path.empty()) rc = load_run_config(a.config_path);
  if (!a.data.empty()) rc.data_root = a.data;
  if (!a.out.empty()) rc.output_dir = a.out;
  if (!a.split.empty()) rc.train_split = a.split;
  if (!a.ablation.empty()) rc.train.ablation = a.ablation;
  if (!a.resume.empty()) rc.resume = a.resume;
  if (a.epochs > 0) rc.train.epochs = a.epochs;
  if (a.batch_size > 0) rc.train.batch_size = a.batch_size;
  if (a.seed >= 0) rc.train.seed = static_cast<uint64_t>(a.seed);
  rc.train.validate();
  rc.validate_paths();

  const auto records = read_split(rc.split_path());
  DomainSeparatedModel model(rc.train.network, rc.train.seed);
  if (!rc.resume.empty()) {
    // fit() reloads parameters; constructing from the snapshot catches
    // architecture mismatches early.
    (void)peek_checkpoint(rc.resume);
  }
  std::cout << "training ablation=" << rc.train.ablation << " epochs=" << rc.train.epochs
            << " batch=" << rc.train.batch_size << " samples=" << records.size()
            << " deterministic=" << (deterministic_mode() ? "1" : "0 (cpu path is deterministic)")
            << "\n";
  FitResult fr =
      fit(model, rc.data_root, records, rc.train, rc.output_dir, rc.resume,
          run_config_to_json(rc));
  std::cout << "done: " << fr.steps << " steps, final total " << fr.final_total << "\n"
            << "log: " << fr.log_path << "\n"
            << "checkpoint: " << (fr.checkpoints.empty() ? "-" : fr.checkpoints.back()) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

std::unique_ptr<DomainSeparatedModel> model_from_checkpoint(const std::string& path,
                                                            TrainConfig* out_cfg = nullptr) {
  CheckpointMeta meta = peek_checkpoint(path);
  TrainConfig cfg;
  if (!meta.config.empty()) {
    RunConfig rc = parse_run_config(meta.config);
    cfg = rc.train;
  }
  auto model = std::make_unique<DomainSeparatedModel>(cfg.network, cfg.seed);
  load_checkpoint(path, *model);
  if (out_cfg) *out_cfg = cfg;
  return model;
}

struct EvalArgs {
  std::string checkpoint, data, split, caps = "40,60", domain = "day", csv;
};

int cmd_eval(const EvalArgs& a) {
  std::vector<double> caps;
  {
    std::stringstream ss(a.caps);
    std::string tok;
    while (std::getline(ss, tok, ',')) caps.push_back(std::stod(tok));
    if (caps.empty()) throw ConfigError("--caps must list at least one depth cap");
  }
  const Domain domain = domain_from_string(a.domain);
  TrainConfig cfg;
  auto model = model_from_checkpoint(a.checkpoint, &cfg);
  const auto records = read_split(a.split);
  const std::string csv = a.csv.empty() ? ("metrics_" + a.domain + ".csv") : a.csv;
  SplitEvaluation ev = evaluate_split(model_predictor(*model, cfg.min_depth, cfg.max_depth),
                                      a.data, records, caps, domain, csv);
  std::cout << "domain=" << a.domain << " images=" << ev.evaluated << " skipped=" << ev.skipped
            << "\ncap,abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3\n";
  for (const auto& [cap, m] : ev.aggregate) {
    std::printf("%g,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n", cap, m.abs_rel, m.sq_rel, m.rmse,
                m.rmse_log, m.a1, m.a2, m.a3);
  }
  std::cout << "report: " << csv << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint, image, domain = "day", out;
  int features = 0;
  std::string features_out;
};

int cmd_infer(const InferArgs& a) {
  const Domain domain = domain_from_string(a.domain);
  TrainConfig cfg;
  auto model = model_from_checkpoint(a.checkpoint, &cfg);
  Tensor img = read_png_rgb8(a.image);
  if (img.dim(1) == kRawHeight && img.dim(2) == kRawWidth) img = preprocess(img);
  DepthMap depth = infer(*model, img, domain, cfg.min_depth, cfg.max_depth);
  // 16-bit millimeters, saturating at the uint16 ceiling (65.535 m).
  Tensor mm(depth.values.shape());
  for (int64_t i = 0; i < mm.numel(); ++i) mm[i] = std::min(depth.values[i] * 1000.0, 65535.0);
  if (auto dir = fsys::path(a.out).parent_path(); !dir.empty()) fsys::create_directories(dir);
  write_png_gray16(a.out, mm);
  std::cout << "depth: " << a.out << "\n";
  if (a.features > 0) {
    const std::string dir =
        a.features_out.empty() ? (fsys::path(a.out).parent_path() / "features").string()
                               : a.features_out;
    const std::string id = fsys::path(a.image).stem().string();
    auto written = export_feature_maps(*model, img, domain, a.features, dir, id);
    std::cout << "features: " << written.size() << " maps under " << dir << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adds: domain-separated self-supervised all-day depth"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic paired day/night dataset");
  s->add_option("--out", synth.out, "output dataset root")->required();
  s->add_option("--sequences", synth.sequences, "number of sequences");
  s->add_option("--frames", synth.frames, "frames per sequence");
  s->add_option("--seed", synth.seed, "generator seed");
  s->add_option("--height", synth.height, "frame height (divisible by 32)");
  s->add_option("--width", synth.width, "frame width (divisible by 32)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model from a run config");
  t->add_option("--config", train.config_path, "run config JSON");
  t->add_option("--data", train.data, "dataset root (overrides config)");
  t->add_option("--out", train.out, "output directory (overrides config)");
  t->add_option("--split", train.split, "train split file (overrides config)");
  t->add_option("--ablation", train.ablation, "U|P|PR|PRF|PRFG|PRFGS");
  t->add_option("--epochs", train.epochs, "override epochs");
  t->add_option("--batch-size", train.batch_size, "override batch size");
  t->add_option("--seed", train.seed, "override seed");
  t->add_option("--resume", train.resume, "resume from checkpoint");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint against ground-truth depth");
  e->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  e->add_option("--data", eval.data, "dataset root")->required();
  e->add_option("--split", eval.split, "split file")->required();
  e->add_option("--caps", eval.caps, "comma-separated depth caps (default 40,60)");
  e->add_option("--domain", eval.domain, "day|night");
  e->add_option("--csv", eval.csv, "report path (default metrics_<domain>.csv)");

  InferArgs infer_args;
  auto* i = app.add_subcommand("infer", "predict depth for one image");
  i->add_option("--checkpoint", infer_args.checkpoint, "checkpoint file")->required();
  i->add_option("--image", infer_args.image, "input PNG")->required();
  i->add_option("--domain", infer_args.domain, "day|night");
  i->add_option("--out", infer_args.out, "output 16-bit depth PNG (millimeters)")->required();
  i->add_option("--features", infer_args.features, "also export top-k feature maps");
  i->add_option("--features-out", infer_args.features_out, "feature map directory");

  try {
    app.parse(argc, argv);
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (i->parsed()) return cmd_infer(infer_args);
    return 1;
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& pe) {
    std::cerr << "E_USAGE: " << pe.what() << "\n";
    const int code = app.exit(pe);
    return code == 0 ? 1 : code;
  } catch (const adds::Error& err) {
    std::cerr << err.code() << ": " << err.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "E_INTERNAL: " << ex.what() << "\n";
    return 1;
  }
}
