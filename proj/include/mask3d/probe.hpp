// SPDX-License-Identifier: Apache-2.0
//
// Downstream evaluation of the color encoder: per-patch semantic
// segmentation with a linear probe (or full fine-tuning), mIoU, and
// reconstruction image dumps.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mask3d/data.hpp"
#include "mask3d/model.hpp"

namespace mask3d {

struct ProbeConfig {
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 20;
  std::size_t batch_frames = 2;
  std::size_t n_classes = kNumClasses;
  double train_fraction = 1.0;  // leading fraction of the train frames used
  bool fine_tune = false;       // train encoder + decoder blocks + head
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct ProbeResult {
  double miou = 0;
  std::vector<double> class_iou;  // NaN for classes that are not scored
  std::vector<std::vector<std::int32_t>> predictions;  // one id per patch per test frame
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  std::string descriptor;
};

/// Mean over classes present in `truth` of |pred & truth| / |pred | truth|.
double miou(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, std::size_t n_classes);

/// Per-class IoU; NaN where the class does not occur in `truth`.
std::vector<double> class_iou(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                              std::size_t n_classes);

/// Trains a per-patch classifier on the frozen color encoder (full color
/// input, no depth), then scores mIoU on `test`. Classes missing from the
/// train labels are warned about and left out of the mIoU. The model is
/// never modified; fine-tuning works on a private copy.
ProbeResult linear_probe(const Mask3dModel<float>& model, std::span<const RgbdFrame> train,
                         std::span<const RgbdFrame> test, const ProbeConfig& config);

struct ReconstructionDump {
  std::filesystem::path input_pgm;   // visible input depth (mm), 0 where masked
  std::filesystem::path pred_pgm;
  std::filesystem::path truth_pgm;
  std::filesystem::path input_ppm;   // visible input color, black where masked
  std::vector<std::uint16_t> input_mm, pred_mm, truth_mm;
  double rmse = 0;  // prediction vs truth over valid pixels, meters
};

/// Writes `<stem>.input.pgm`, `<stem>.pred.pgm`, `<stem>.truth.pgm` (16-bit,
/// millimeters) and `<stem>.input.ppm` into `dir`.
ReconstructionDump dump_reconstruction(const Mask3dModel<float>& model, const RgbdFrame& frame, const MaskPlan& plan,
                                       const std::filesystem::path& dir, const std::string& stem);

/// Rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace mask3d
