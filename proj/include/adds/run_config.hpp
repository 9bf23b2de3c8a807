// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// The JSON run-config document binding data paths to a TrainConfig. Unknown
// keys are rejected and every violation is reported at once.

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "adds/trainer.hpp"

namespace adds {

struct RunConfig {
  std::string data_root;
  std::string train_split;  // defaults to <data_root>/splits/train.txt
  std::string output_dir;
  std::string resume;
  TrainConfig train;

  void validate_paths() const {
    std::vector<std::string> problems;
    if (data_root.empty())
      problems.push_back("data_root is required");
    else if (!fsys::exists(data_root))
      problems.push_back("data_root does not exist: " + data_root);
    if (output_dir.empty()) problems.push_back("output_dir is required");
    const std::string split = split_path();
    if (!split.empty() && !fsys::exists(split))
      problems.push_back("train split does not exist: " + split);
    if (!resume.empty() && !fsys::exists(resume))
      problems.push_back("resume checkpoint does not exist: " + resume);
    if (!problems.empty()) {
      std::string joined = "invalid run config:";
      for (const auto& p : problems) joined += "\n  - " + p;
      throw ConfigError(joined);
    }
  }

  std::string split_path() const {
    if (!train_split.empty()) return train_split;
    if (data_root.empty()) return {};
    return (fsys::path(data_root) / "splits" / "train.txt").string();
  }
};

inline nlohmann::json run_config_to_json(const RunConfig& rc) {
  const TrainConfig& t = rc.train;
  return nlohmann::json{
      {"data_root", rc.data_root},
      {"train_split", rc.train_split},
      {"output_dir", rc.output_dir},
      {"resume", rc.resume},
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"learning_rate", t.lr},
      {"lr_late", t.lr_late},
      {"lr_drop_epoch", t.lr_drop_epoch},
      {"beta1", t.beta1},
      {"beta2", t.beta2},
      {"weights",
       {{"lambda1", t.weights.lambda1},
        {"lambda2", t.weights.lambda2},
        {"lambda3", t.weights.lambda3},
        {"lambda4", t.weights.lambda4},
        {"alpha", t.weights.alpha}}},
      {"ablation", t.ablation},
      {"seed", t.seed},
      {"device", t.device},
      {"num_scales", t.num_scales},
      {"pm_policy", t.pm_policy == PmPolicy::min_both ? "min_both" : "eq8_literal"},
      {"ortho_mode", t.ortho_mode == OrthoMode::squared
                         ? "squared"
                         : (t.ortho_mode == OrthoMode::abs ? "abs" : "raw")},
      {"recons_sign", t.recons_sign == ReconsSign::plus ? "plus" : "minus"},
      {"min_depth", t.min_depth},
      {"max_depth", t.max_depth},
      {"encoder_depth", t.network.encoder_depth},
      {"checkpoint_keep", t.checkpoint_keep},
  };
}

/// Parses a run-config document. Unknown keys and bad values are collected
/// and reported together; the embedded TrainConfig is validated afterwards by
/// the caller (TrainConfig::validate()).
inline RunConfig parse_run_config(const nlohmann::json& j) {
  static const std::vector<std::string> known{
      "data_root",  "train_split", "output_dir", "resume",     "epochs",     "batch_size",
      "learning_rate", "lr_late",  "lr_drop_epoch", "beta1",   "beta2",      "weights",
      "ablation",   "seed",        "device",     "num_scales", "pm_policy",  "ortho_mode",
      "recons_sign", "min_depth",  "max_depth",  "encoder_depth", "checkpoint_keep"};
  static const std::vector<std::string> known_weights{"lambda1", "lambda2", "lambda3", "lambda4",
                                                      "alpha"};
  std::vector<std::string> problems;
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      problems.push_back("unknown key: " + key);
  }
  if (j.contains("weights")) {
    if (!j["weights"].is_object())
      problems.push_back("weights must be an object");
    else
      for (const auto& [key, value] : j["weights"].items()) {
        (void)value;
        if (std::find(known_weights.begin(), known_weights.end(), key) == known_weights.end())
          problems.push_back("unknown key: weights." + key);
      }
  }

  RunConfig rc;
  auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const nlohmann::json::exception&) {
      problems.push_back(std::string("bad value for key: ") + key);
    }
  };
  get("data_root", rc.data_root);
  get("train_split", rc.train_split);
  get("output_dir", rc.output_dir);
  get("resume", rc.resume);
  get("epochs", rc.train.epochs);
  get("batch_size", rc.train.batch_size);
  get("learning_rate", rc.train.lr);
  get("lr_late", rc.train.lr_late);
  get("lr_drop_epoch", rc.train.lr_drop_epoch);
  get("beta1", rc.train.beta1);
  get("beta2", rc.train.beta2);
  get("ablation", rc.train.ablation);
  get("seed", rc.train.seed);
  get("device", rc.train.device);
  get("num_scales", rc.train.num_scales);
  get("min_depth", rc.train.min_depth);
  get("max_depth", rc.train.max_depth);
  get("encoder_depth", rc.train.network.encoder_depth);
  get("checkpoint_keep", rc.train.checkpoint_keep);
  if (j.contains("weights") && j["weights"].is_object()) {
    const auto& w = j["weights"];
    auto getw = [&](const char* key, double& out) {
      if (!w.contains(key)) return;
      try {
        out = w.at(key).get<double>();
      } catch (const nlohmann::json::exception&) {
        problems.push_back(std::string("bad value for key: weights.") + key);
      }
    };
    getw("lambda1", rc.train.weights.lambda1);
    getw("lambda2", rc.train.weights.lambda2);
    getw("lambda3", rc.train.weights.lambda3);
    getw("lambda4", rc.train.weights.lambda4);
    getw("alpha", rc.train.weights.alpha);
  }
  try {
    if (j.contains("pm_policy")) rc.train.pm_policy = pm_policy_from_string(j.at("pm_policy"));
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  try {
    if (j.contains("ortho_mode")) rc.train.ortho_mode = ortho_mode_from_string(j.at("ortho_mode"));
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  if (j.contains("recons_sign")) {
    const std::string s = j.at("recons_sign");
    if (s == "plus")
      rc.train.recons_sign = ReconsSign::plus;
    else if (s == "minus")
      rc.train.recons_sign = ReconsSign::minus;
    else
      problems.push_back("recons_sign must be 'plus' or 'minus'");
  }
  rc.train.network.num_scales = rc.train.num_scales;

  if (!problems.empty()) {
    std::string joined = "invalid run config:";
    for (const auto& p : problems) joined += "\n  - " + p;
    throw ConfigError(joined);
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_run_config(j);
}

}  // namespace adds
