// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint, little-endian:
//   "M3D1" | u32 version | u32 json_len | json | u32 tensor_count |
//   per tensor: u32 name_len | name | u32 rank | u32 dims[rank] | f32 data[]
#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "mask3d/model.hpp"
#include "mask3d/trainer.hpp"

namespace mask3d {

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json to_json(const ViTConfig& config);
nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct Checkpoint {
  Mask3dModel<float> model;
  nlohmann::json meta;  // {"model": ..., "train": ..., "summary": ...}
};

/// Writes model parameters (and the constant mask token) plus a JSON blob
/// holding the model config, the training config and a metrics summary. The
/// blob excludes wall-clock data so identical runs give identical files.
void save_checkpoint(const Mask3dModel<float>& model, const TrainConfig* train, const RunMetrics& metrics,
                     const std::filesystem::path& path);

/// Throws CheckpointError on bad magic, unknown version, truncation, missing
/// or misshapen tensors. No model is returned unless everything validates.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mask3d
