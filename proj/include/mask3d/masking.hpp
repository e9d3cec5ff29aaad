// SPDX-License-Identifier: Apache-2.0
//
// Patch grids, complementary color/depth keep plans and fixed 2-D sin-cos
// positional embeddings.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mask3d/rng.hpp"
#include "mask3d/tensor.hpp"

namespace mask3d {

struct PatchGrid {
  std::size_t image_h = 0;
  std::size_t image_w = 0;
  std::size_t patch = 0;

  /// Throws DimensionError unless patch divides both image sides.
  PatchGrid(std::size_t h, std::size_t w, std::size_t p);
  PatchGrid() = default;

  std::size_t rows() const { return image_h / patch; }
  std::size_t cols() const { return image_w / patch; }
  std::size_t count() const { return rows() * cols(); }

  bool operator==(const PatchGrid&) const = default;
};

enum class TokenSource : std::uint8_t { kMasked = 0, kColor = 1, kDepth = 2 };

/// Kept patch indices for one frame. Both index lists are sorted.
struct MaskPlan {
  PatchGrid grid;
  std::vector<std::size_t> color_kept;
  std::vector<std::size_t> depth_kept;
  double p_c = 0;
  double p_d = 0;

  /// Owner of every grid position in the fused sequence. Depth wins where
  /// both modalities were kept.
  std::vector<TokenSource> provenance() const;
  /// Color indices that survive fusion (color_kept minus depth_kept).
  std::vector<std::size_t> color_fused() const;
};

/// round-half-up(fraction * n).
std::size_t keep_count(double fraction, std::size_t n);

/// Uniform color subset of size keep_count(p_c), then a uniform depth subset
/// of the complement. When the complement is too small, depth takes all of it
/// and tops up uniformly from the color set.
MaskPlan sample_mask_plan(Rng& rng, const PatchGrid& grid, double p_c, double p_d);

/// Plan from explicit index lists (sorted on return). Throws on out-of-range
/// or duplicate indices.
MaskPlan make_mask_plan(const PatchGrid& grid, std::vector<std::size_t> color_kept,
                        std::vector<std::size_t> depth_kept);

/// image[c,h,w] -> patches[n, c*patch*patch]; row i is the block at
/// (i / cols, i % cols), channel-major within a row.
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, const PatchGrid& grid);

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, const PatchGrid& grid, std::size_t channels);

/// Fixed 2-D sin-cos embedding [n, dim]. The first dim/2 columns encode the
/// patch row, the rest the column; each half is [sin(pos*w_k) | cos(pos*w_k)]
/// with w_k = 10000^(-k/(dim/4)).
template <typename T>
Tensor<T> positional_embedding(const PatchGrid& grid, std::size_t dim);

}  // namespace mask3d
