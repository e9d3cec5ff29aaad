// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mask3d/probe.hpp"
#include "mask3d/trainer.hpp"

namespace mask3d {

struct KeepRatio {
  double p_c = 0;
  double p_d = 0;
};

struct AblationRow {
  double p_c = 0;
  double p_d = 0;
  double val_loss = 0;
  double val_rmse = 0;
  double probe_miou = 0;
  std::uint64_t seed = 0;
  std::string label;  // "pure-depth-baseline" for (1, 0)
};

/// The 20 (color, depth) keep-ratio pairs: every color ratio in
/// {0.2, 0.5, 0.8, 1.0} with every depth ratio in {0, 0.2, 0.5, 0.8, 1.0}.
std::vector<KeepRatio> appendix_grid();

/// Parses "0.2:0.2,1:0" into pairs; throws ContractError on bad syntax or
/// ratios outside [0,1].
std::vector<KeepRatio> parse_grid(const std::string& text);

std::string row_label(const KeepRatio& ratio);

using RowCallback = std::function<void(const AblationRow&)>;

/// One pre-training run per pair from the same seed, then validation
/// loss/RMSE and a linear probe (train split -> val split).
std::vector<AblationRow> ablation_sweep(std::span<const RgbdFrame> train, std::span<const RgbdFrame> val,
                                        std::span<const KeepRatio> grid, const ModelConfig& model_config,
                                        const TrainConfig& train_config, const ProbeConfig& probe_config,
                                        const RowCallback& on_row = {});

/// Header `p_c,p_d,val_loss,val_rmse,probe_miou,seed,label`.
void write_ablation_csv(std::span<const AblationRow> rows, const std::filesystem::path& path);

}  // namespace mask3d
