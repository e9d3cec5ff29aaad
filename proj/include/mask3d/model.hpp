// SPDX-License-Identifier: Apache-2.0
//
// The masked RGB-D reconstruction network: a color encoder over the kept
// color patches, a depth encoder over the kept depth patches, a full-grid
// fusion sequence padded with a constant mask token, and a decoder that
// predicts every depth patch.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mask3d/data.hpp"
#include "mask3d/masking.hpp"
#include "mask3d/vit.hpp"

namespace mask3d {

struct ModelConfig {
  std::size_t image_h = 48;
  std::size_t image_w = 64;
  ViTConfig vit;
  bool rgb_head = false;  // auxiliary color reconstruction head

  PatchGrid grid() const { return PatchGrid(image_h, image_w, vit.patch); }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// The configuration used by the full-scale experiments: 240x320 frames cut
/// into 300 patches of 16x16, ViT-B width.
ModelConfig full_scale_config();

// Depth enters the depth encoder in units of 5 m.
inline constexpr double kDepthInputScale = 0.2;
inline constexpr double kPatchNormEps = 1e-6;
// Patches with fewer valid target pixels than this fraction are not scored.
inline constexpr double kMinValidFraction = 0.25;

template <typename T>
struct Mask3dModel {
  ModelConfig config;
  LinearParams<T> color_proj;  // [3 p^2, d]
  LinearParams<T> depth_proj;  // [p^2, d]
  StackParams<T> color_encoder;
  StackParams<T> depth_encoder;
  StackParams<T> decoder;
  LinearParams<T> depth_head;  // [d, p^2]
  LinearParams<T> rgb_head;    // [d, 3 p^2], defined iff config.rgb_head
  Tensor<T> mask_token;        // [d] zeros; constant, never trained
  Tensor<T> pos;               // [n, d] fixed sin-cos embedding

  /// Visits trainable tensors in a stable order with dotted names.
  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    mask3d::for_each_parameter(color_proj, "color_proj", fn);
    mask3d::for_each_parameter(depth_proj, "depth_proj", fn);
    mask3d::for_each_parameter(color_encoder, "color_encoder", fn);
    mask3d::for_each_parameter(depth_encoder, "depth_encoder", fn);
    mask3d::for_each_parameter(decoder, "decoder", fn);
    mask3d::for_each_parameter(depth_head, "depth_head", fn);
    if (config.rgb_head) mask3d::for_each_parameter(rgb_head, "rgb_head", fn);
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  std::size_t parameter_count() const;
  /// Shares parameter storage but owns fresh gradient buffers.
  Mask3dModel replica() const;
  /// Independent copy of every parameter value.
  Mask3dModel clone() const;
  void zero_grad();
};

/// Closed-form trainable parameter count for a configuration.
std::size_t model_parameter_count(const ModelConfig& config);

template <typename T>
Mask3dModel<T> init_model(const ModelConfig& config, std::uint64_t seed);

std::size_t count_source(std::span<const TokenSource> provenance, TokenSource source);

template <typename T>
struct FusedSequence {
  Tensor<T> tokens;  // [n, d], one token per grid position
  std::vector<TokenSource> provenance;
};

template <typename T>
struct ForwardResult {
  Tensor<T> depth_patches;  // [n, p^2]
  Tensor<T> rgb_patches;    // [n, 3 p^2] when the model has an rgb head
  FusedSequence<T> fused;
};

template <typename T>
ForwardResult<T> forward(const Mask3dModel<T>& model, const RgbdFrame& frame, const MaskPlan& plan);

/// Color encoder output over all patches, as used downstream. [n, d].
template <typename T>
Tensor<T> encode_color(const Mask3dModel<T>& model, const RgbdFrame& frame);

/// Per-element validity of depth patches ([n * p^2], 1 = valid).
std::vector<std::uint8_t> patch_validity(const RgbdFrame& frame, const PatchGrid& grid);

/// Mean squared difference of per-patch standardized prediction and target.
/// Each row of both is standardized over its valid elements; rows with less
/// than kMinValidFraction valid elements, or excluded by `rows`, are skipped
/// and the remaining rows are weighted equally. Gradients flow into `pred`
/// only. `valid` may be empty (all valid). Throws ContractError when no row
/// qualifies.
template <typename T>
Tensor<T> normalized_patch_l2(const Tensor<T>& pred, const Tensor<T>& target, std::span<const std::uint8_t> valid,
                              double eps = kPatchNormEps, std::span<const std::uint8_t> rows = {});

struct LossOptions {
  double lambda_rgb = 0.0;
  /// Score only positions whose depth was not given as input.
  bool masked_only = false;
};

/// depth_loss + lambda_rgb * normalized_patch_l2(pred_rgb, target_rgb). With
/// lambda_rgb == 0 the depth loss tensor is returned unchanged.
template <typename T>
Tensor<T> combine_losses(const Tensor<T>& depth_loss, const Tensor<T>& pred_rgb, const Tensor<T>& target_rgb,
                         double lambda_rgb);

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  Tensor<T> depth;
  Tensor<T> rgb;  // undefined when lambda_rgb == 0
};

/// Forward pass plus reconstruction objective for one frame.
template <typename T>
LossBreakdown<T> joint_loss(const Mask3dModel<T>& model, const RgbdFrame& frame, const MaskPlan& plan,
                            const LossOptions& options = {});

/// Depth image [1,h,w] from the standardized predictions. Each patch is
/// rescaled by its own input-depth statistics when that patch was given as
/// depth input; otherwise by the statistics of all visible input depth, or
/// of the whole frame's valid depth when no depth patch was kept. Throws
/// DataError when the frame has no valid depth.
template <typename T>
Tensor<T> reconstruct_depth(const Mask3dModel<T>& model, const RgbdFrame& frame, const MaskPlan& plan);

/// Root mean squared error over the frame's valid pixels.
template <typename T>
double depth_rmse(const Tensor<T>& predicted, const RgbdFrame& frame);

}  // namespace mask3d
