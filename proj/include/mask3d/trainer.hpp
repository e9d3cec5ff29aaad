// SPDX-License-Identifier: Apache-2.0
//
// Pre-training loop: SGD with momentum, step-decayed learning rate and
// gradient accumulation over micro-batches.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mask3d/data.hpp"
#include "mask3d/error.hpp"
#include "mask3d/model.hpp"

namespace mask3d {

struct TrainConfig {
  double lr0 = 0.05;
  double decay = 0.99;
  std::size_t decay_every = 1000;
  std::size_t epochs = 50;
  std::size_t micro_batch = 8;
  std::size_t accum = 2;
  double p_c = 0.2;
  double p_d = 0.2;
  double lambda_rgb = 0.0;
  double momentum = 0.9;
  bool masked_only = false;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Validate every this many epochs; 0 validates only after the last one.
  std::size_t val_every = 1;

  std::size_t effective_batch() const { return micro_batch * accum; }
  void validate() const;
};

/// Optimizer settings of the full-scale recipe: lr 0.1, 64 x 2 accumulation,
/// 100 epochs.
TrainConfig full_scale_train_config();

/// lr0 * decay^floor(step / decay_every).
double lr_at(std::size_t step, const TrainConfig& config);

struct StepRecord {
  std::size_t step = 0;
  double lr = 0;
  double loss = 0;
  double wall_ms = 0;
};

struct ValRecord {
  std::size_t epoch = 0;
  double loss = 0;
  double rmse = 0;
};

struct RunMetrics {
  std::vector<StepRecord> steps;
  std::vector<ValRecord> validation;

  /// `step,lr,loss,wall_ms` and `val_epoch,val_loss,val_rmse`.
  void write_csv(const std::filesystem::path& steps_csv, const std::filesystem::path& val_csv) const;
};

/// Non-finite training loss. what() holds the step and the config.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t step, const std::string& config_dump);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Heavy-ball SGD: v <- momentum * v + g; p <- p - lr * v.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor<T>> params, double momentum);
  /// grads[i] matches params[i] element-wise.
  void step(double lr, const std::vector<std::vector<T>>& grads);
  /// Uses the parameters' own accumulated gradients.
  void step(double lr);

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> velocity_;
  double momentum_;
};

/// Fixed plan for validation frame i (independent of the training stream).
MaskPlan validation_plan(const TrainConfig& config, const PatchGrid& grid, std::size_t index);

struct Evaluation {
  double loss = 0;
  double rmse = 0;
};

/// Mean reconstruction loss and depth RMSE over `frames` with their
/// validation plans.
template <typename T>
Evaluation evaluate(const Mask3dModel<T>& model, std::span<const RgbdFrame> frames, const TrainConfig& config);

using StepCallback = std::function<void(const StepRecord&)>;

/// Trains `model` in place. Each optimizer step consumes effective_batch()
/// frames in `accum` micro-batches, samples a fresh plan per frame, and
/// averages the loss over the step's frames. Per-frame gradients are summed
/// in frame order, so the update is independent of the micro-batch split and
/// of the thread count. Throws DivergenceError on a non-finite loss.
template <typename T>
RunMetrics train(Mask3dModel<T>& model, std::span<const RgbdFrame> corpus, const TrainConfig& config,
                 std::span<const RgbdFrame> validation = {}, const StepCallback& on_step = {});

}  // namespace mask3d
