// SPDX-License-Identifier: Apache-2.0
#include "mask3d/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mask3d/error.hpp"

namespace mask3d {

PatchGrid::PatchGrid(std::size_t h, std::size_t w, std::size_t p) : image_h(h), image_w(w), patch(p) {
  if (p == 0 || h == 0 || w == 0 || h % p != 0 || w % p != 0) {
    throw DimensionError("patch size " + std::to_string(p) + " does not tile a " + std::to_string(h) + "x" +
                         std::to_string(w) + " image");
  }
}

std::vector<TokenSource> MaskPlan::provenance() const {
  std::vector<TokenSource> out(grid.count(), TokenSource::kMasked);
  for (auto i : color_kept) out[i] = TokenSource::kColor;
  for (auto i : depth_kept) out[i] = TokenSource::kDepth;
  return out;
}

std::vector<std::size_t> MaskPlan::color_fused() const {
  std::vector<std::size_t> out;
  std::set_difference(color_kept.begin(), color_kept.end(), depth_kept.begin(), depth_kept.end(),
                      std::back_inserter(out));
  return out;
}

std::size_t keep_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

namespace {

// First k entries of a partial Fisher-Yates shuffle, sorted.
std::vector<std::size_t> sample_subset(Rng& rng, std::vector<std::size_t> pool, std::size_t k) {
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

void check_fraction(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ContractError(std::string(name) + " must lie in [0,1], got " + std::to_string(p));
  }
}

}  // namespace

MaskPlan sample_mask_plan(Rng& rng, const PatchGrid& grid, double p_c, double p_d) {
  check_fraction(p_c, "p_c");
  check_fraction(p_d, "p_d");
  const std::size_t n = grid.count();
  const std::size_t nc = keep_count(p_c, n);
  const std::size_t nd = keep_count(p_d, n);

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  MaskPlan plan;
  plan.grid = grid;
  plan.p_c = p_c;
  plan.p_d = p_d;
  plan.color_kept = sample_subset(rng, all, nc);

  std::vector<std::size_t> complement;
  std::set_difference(all.begin(), all.end(), plan.color_kept.begin(), plan.color_kept.end(),
                      std::back_inserter(complement));
  if (nd <= complement.size()) {
    plan.depth_kept = sample_subset(rng, std::move(complement), nd);
  } else {
    auto extra = sample_subset(rng, plan.color_kept, nd - complement.size());
    plan.depth_kept = std::move(complement);
    plan.depth_kept.insert(plan.depth_kept.end(), extra.begin(), extra.end());
    std::sort(plan.depth_kept.begin(), plan.depth_kept.end());
  }
  return plan;
}

MaskPlan make_mask_plan(const PatchGrid& grid, std::vector<std::size_t> color_kept,
                        std::vector<std::size_t> depth_kept) {
  const std::size_t n = grid.count();
  for (auto* set : {&color_kept, &depth_kept}) {
    std::sort(set->begin(), set->end());
    if (std::adjacent_find(set->begin(), set->end()) != set->end())
      throw ContractError("mask plan: duplicate patch index");
    if (!set->empty() && set->back() >= n)
      throw DimensionError("mask plan: patch index " + std::to_string(set->back()) + " outside grid of " +
                           std::to_string(n));
  }
  MaskPlan plan;
  plan.grid = grid;
  plan.p_c = static_cast<double>(color_kept.size()) / static_cast<double>(n);
  plan.p_d = static_cast<double>(depth_kept.size()) / static_cast<double>(n);
  plan.color_kept = std::move(color_kept);
  plan.depth_kept = std::move(depth_kept);
  return plan;
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, const PatchGrid& grid) {
  if (image.rank() != 3 || image.dim(1) != grid.image_h || image.dim(2) != grid.image_w) {
    throw DimensionError("patchify: image " + shape_str(image.shape()) + " does not match grid " +
                         std::to_string(grid.image_h) + "x" + std::to_string(grid.image_w));
  }
  const std::size_t c = image.dim(0), h = grid.image_h, w = grid.image_w, p = grid.patch;
  const std::size_t cols = grid.cols(), row_len = c * p * p;
  const auto src = image.data();
  std::vector<T> out(grid.count() * row_len);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const std::size_t y0 = (i / cols) * p, x0 = (i % cols) * p;
    T* dst = out.data() + i * row_len;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) *dst++ = src[(ch * h + y0 + y) * w + x0 + x];
  }
  return Tensor<T>::from({grid.count(), row_len}, std::move(out));
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, const PatchGrid& grid, std::size_t channels) {
  const std::size_t p = grid.patch, row_len = channels * p * p;
  if (patches.rank() != 2 || patches.dim(0) != grid.count() || patches.dim(1) != row_len) {
    throw DimensionError("unpatchify: patches " + shape_str(patches.shape()) + " do not match " +
                         std::to_string(grid.count()) + " rows of " + std::to_string(row_len));
  }
  const std::size_t h = grid.image_h, w = grid.image_w, cols = grid.cols();
  const auto src = patches.data();
  std::vector<T> out(channels * h * w);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const std::size_t y0 = (i / cols) * p, x0 = (i % cols) * p;
    const T* row = src.data() + i * row_len;
    for (std::size_t ch = 0; ch < channels; ++ch)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) out[(ch * h + y0 + y) * w + x0 + x] = *row++;
  }
  return Tensor<T>::from({channels, h, w}, std::move(out));
}

template <typename T>
Tensor<T> positional_embedding(const PatchGrid& grid, std::size_t dim) {
  if (dim == 0 || dim % 4 != 0) {
    throw DimensionError("positional embedding dim " + std::to_string(dim) + " is not divisible by 4");
  }
  const std::size_t quarter = dim / 4;
  std::vector<T> out(grid.count() * dim);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const double pos[2] = {static_cast<double>(i / grid.cols()), static_cast<double>(i % grid.cols())};
    T* row = out.data() + i * dim;
    for (std::size_t axis = 0; axis < 2; ++axis) {
      for (std::size_t k = 0; k < quarter; ++k) {
        const double omega = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(quarter));
        row[axis * 2 * quarter + k] = static_cast<T>(std::sin(pos[axis] * omega));
        row[axis * 2 * quarter + quarter + k] = static_cast<T>(std::cos(pos[axis] * omega));
      }
    }
  }
  return Tensor<T>::from({grid.count(), dim}, std::move(out));
}

template Tensor<float> patchify(const Tensor<float>&, const PatchGrid&);
template Tensor<double> patchify(const Tensor<double>&, const PatchGrid&);
template Tensor<float> unpatchify(const Tensor<float>&, const PatchGrid&, std::size_t);
template Tensor<double> unpatchify(const Tensor<double>&, const PatchGrid&, std::size_t);
template Tensor<float> positional_embedding(const PatchGrid&, std::size_t);
template Tensor<double> positional_embedding(const PatchGrid&, std::size_t);

}  // namespace mask3d
