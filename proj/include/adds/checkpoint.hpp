// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: a JSON manifest (epoch, step, config snapshot, tensor
// directory) followed by raw little-endian doubles. Tensor names follow the
// model's parameter-group naming ("<group>/<path>"); optimizer moments are
// stored under the same names with an adam_m/adam_v kind.

#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adds/network.hpp"

namespace adds {

inline constexpr char kCheckpointMagic[9] = "ADDSCKPT";
inline constexpr uint32_t kCheckpointVersion = 1;

struct AdamState {
  std::vector<Tensor> m, v;  // parallel to the model parameter list
  int64_t step_count = 0;
};

struct CheckpointMeta {
  int64_t epoch = 0;  // completed epochs
  int64_t step = 0;   // completed optimizer steps
  nlohmann::json config;
};

namespace detail {

inline void write_tensor_blob(std::ofstream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

inline void read_tensor_blob(std::ifstream& is, Tensor& t) {
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

inline nlohmann::json tensor_entry(const std::string& name, const std::string& kind,
                                   const Tensor& t) {
  return nlohmann::json{{"name", name}, {"kind", kind}, {"shape", t.shape()}};
}

}  // namespace detail

/// Writes model parameters, normalization buffers, optional optimizer state,
/// and the run metadata.
inline void save_checkpoint(const std::string& path, const DomainSeparatedModel& model,
                            const AdamState* adam, const CheckpointMeta& meta) {
  nlohmann::json manifest;
  manifest["epoch"] = meta.epoch;
  manifest["step"] = meta.step;
  manifest["config"] = meta.config;
  manifest["adam_step_count"] = adam ? adam->step_count : 0;
  manifest["has_adam"] = adam != nullptr;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : model.parameters())
    tensors.push_back(detail::tensor_entry(e.name, "param", e.param->value));
  for (const auto& e : model.buffers())
    tensors.push_back(detail::tensor_entry(e.name, "buffer", *e.tensor));
  if (adam) {
    const auto& params = model.parameters();
    if (adam->m.size() != params.size() || adam->v.size() != params.size())
      throw InvalidInputError("save_checkpoint: optimizer state does not match the model");
    for (size_t i = 0; i < params.size(); ++i)
      tensors.push_back(detail::tensor_entry(params[i].name, "adam_m", adam->m[i]));
    for (size_t i = 0; i < params.size(); ++i)
      tensors.push_back(detail::tensor_entry(params[i].name, "adam_v", adam->v[i]));
  }
  manifest["tensors"] = tensors;
  const std::string mstr = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write(kCheckpointMagic, 8);
  const uint32_t version = kCheckpointVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  const uint64_t mlen = mstr.size();
  os.write(reinterpret_cast<const char*>(&mlen), sizeof mlen);
  os.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& e : model.parameters()) detail::write_tensor_blob(os, e.param->value);
  for (const auto& e : model.buffers()) detail::write_tensor_blob(os, *e.tensor);
  if (adam) {
    for (const auto& t : adam->m) detail::write_tensor_blob(os, t);
    for (const auto& t : adam->v) detail::write_tensor_blob(os, t);
  }
  if (!os) throw IoError("checkpoint write failed: " + path);
}

/// Reads only the manifest (epoch/step/config) without touching tensors;
/// used to reconstruct the model before a full load.
inline CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError("not a checkpoint file: " + path);
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  uint64_t mlen = 0;
  is.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
  std::string mstr(mlen, '\0');
  is.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw FormatError("truncated checkpoint: " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mstr);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint manifest: " + std::string(e.what()));
  }
  CheckpointMeta meta;
  meta.epoch = manifest.value("epoch", int64_t{0});
  meta.step = manifest.value("step", int64_t{0});
  meta.config = manifest.value("config", nlohmann::json::object());
  return meta;
}

/// Loads a checkpoint into an existing model (and optimizer state, when both
/// the file and the caller provide it). Names and shapes must match the
/// model exactly; mismatches raise VersionError.
inline CheckpointMeta load_checkpoint(const std::string& path, DomainSeparatedModel& model,
                                      AdamState* adam = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError("not a checkpoint file: " + path);
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  uint64_t mlen = 0;
  is.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
  std::string mstr(mlen, '\0');
  is.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw FormatError("truncated checkpoint: " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mstr);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint manifest: " + std::string(e.what()));
  }

  // Expected directory, in write order.
  std::vector<std::pair<std::string, Tensor*>> slots;
  for (const auto& e : model.parameters()) slots.emplace_back("param:" + e.name, &e.param->value);
  for (const auto& e : model.buffers()) slots.emplace_back("buffer:" + e.name, e.tensor);
  const bool has_adam = manifest.value("has_adam", false);
  if (adam && !has_adam)
    throw VersionError("checkpoint has no optimizer state, cannot resume from " + path);
  if (adam && has_adam) {
    adam->m.clear();
    adam->v.clear();
    for (const auto& e : model.parameters()) adam->m.push_back(Tensor::zeros(e.param->value.shape()));
    for (const auto& e : model.parameters()) adam->v.push_back(Tensor::zeros(e.param->value.shape()));
    const auto& params = model.parameters();
    for (size_t i = 0; i < params.size(); ++i)
      slots.emplace_back("adam_m:" + params[i].name, &adam->m[i]);
    for (size_t i = 0; i < params.size(); ++i)
      slots.emplace_back("adam_v:" + params[i].name, &adam->v[i]);
    adam->step_count = manifest.value("adam_step_count", int64_t{0});
  }

  const auto& tensors = manifest.at("tensors");
  const size_t expected = slots.size() + ((adam == nullptr && has_adam)
                                              ? 2 * model.parameters().size()
                                              : 0);
  if (tensors.size() != expected)
    throw VersionError("checkpoint tensor count " + std::to_string(tensors.size()) +
                       " does not match model (" + std::to_string(expected) + ")");
  for (size_t i = 0; i < tensors.size(); ++i) {
    const std::string key =
        tensors[i].at("kind").get<std::string>() + ":" + tensors[i].at("name").get<std::string>();
    const auto shape = tensors[i].at("shape").get<std::vector<int64_t>>();
    if (i < slots.size()) {
      if (key != slots[i].first)
        throw VersionError("checkpoint entry '" + key + "' does not match model entry '" +
                           slots[i].first + "'");
      if (shape != slots[i].second->shape())
        throw VersionError("checkpoint shape mismatch for " + key);
      detail::read_tensor_blob(is, *slots[i].second);
    } else {
      // Optimizer state present in the file but not requested: skip bytes.
      int64_t n = 1;
      for (int64_t d : shape) n *= d;
      is.seekg(n * static_cast<int64_t>(sizeof(double)), std::ios::cur);
    }
  }
  if (!is) throw FormatError("truncated checkpoint payload: " + path);

  CheckpointMeta meta;
  meta.epoch = manifest.value("epoch", int64_t{0});
  meta.step = manifest.value("step", int64_t{0});
  meta.config = manifest.value("config", nlohmann::json::object());
  return meta;
}

}  // namespace adds
