// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm transformer building blocks shared by the color encoder, the depth
// encoder and the depth decoder. There is no class token; every token is a
// patch token.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mask3d/rng.hpp"
#include "mask3d/tensor.hpp"

namespace mask3d {

struct ViTConfig {
  std::size_t token_dim = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers_color = 4;
  std::size_t n_layers_depth = 2;
  std::size_t n_layers_decoder = 2;
  double mlp_ratio = 4.0;
  std::size_t patch = 8;

  std::size_t mlp_dim() const;
  /// Throws ContractError on zero sizes, zero layer counts or token_dim not
  /// divisible by n_heads.
  void validate() const;

  bool operator==(const ViTConfig&) const = default;
};

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]
};

template <typename T>
struct NormParams {
  Tensor<T> gain;
  Tensor<T> bias;
};

template <typename T>
struct BlockParams {
  NormParams<T> norm1;
  LinearParams<T> qkv;
  LinearParams<T> proj;
  NormParams<T> norm2;
  LinearParams<T> fc1;
  LinearParams<T> fc2;
};

/// A stack of blocks followed by a final layer norm.
template <typename T>
struct StackParams {
  std::vector<BlockParams<T>> blocks;
  NormParams<T> norm;
};

// Weights ~ truncated normal(0, 0.02) clipped at 2 sigma, biases 0, gains 1.
inline constexpr double kInitStd = 0.02;

template <typename T>
LinearParams<T> init_linear(Rng& rng, std::size_t in, std::size_t out);
template <typename T>
NormParams<T> init_norm(std::size_t dim);
template <typename T>
BlockParams<T> init_block(Rng& rng, std::size_t dim, std::size_t mlp_dim);
template <typename T>
StackParams<T> init_stack(Rng& rng, std::size_t layers, std::size_t dim, std::size_t mlp_dim);

/// Parameters in one block: 4d^2 + 2dm + 9d + m (d = token_dim, m = mlp_dim).
std::size_t block_parameter_count(std::size_t dim, std::size_t mlp_dim);
/// layers * block + 2d for the final norm.
std::size_t stack_parameter_count(std::size_t layers, std::size_t dim, std::size_t mlp_dim);

/// patches[k, p] * W + b + pos[k, d]. k may be zero.
template <typename T>
Tensor<T> project_tokens(const Tensor<T>& patches, const LinearParams<T>& proj, const Tensor<T>& pos);

/// x + MHSA(LN(x)), then x + MLP(LN(x)) with a gelu hidden layer.
template <typename T>
Tensor<T> transformer_block(const Tensor<T>& tokens, const BlockParams<T>& params, std::size_t n_heads);

/// All blocks then the final norm. An empty token sequence passes through.
template <typename T>
Tensor<T> run_stack(const Tensor<T>& tokens, const StackParams<T>& stack, std::size_t n_heads);

template <typename T, typename Fn>
void for_each_parameter(LinearParams<T>& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".weight", p.weight);
  fn(prefix + ".bias", p.bias);
}

template <typename T, typename Fn>
void for_each_parameter(NormParams<T>& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".gain", p.gain);
  fn(prefix + ".bias", p.bias);
}

template <typename T, typename Fn>
void for_each_parameter(BlockParams<T>& p, const std::string& prefix, Fn&& fn) {
  for_each_parameter(p.norm1, prefix + ".norm1", fn);
  for_each_parameter(p.qkv, prefix + ".qkv", fn);
  for_each_parameter(p.proj, prefix + ".proj", fn);
  for_each_parameter(p.norm2, prefix + ".norm2", fn);
  for_each_parameter(p.fc1, prefix + ".fc1", fn);
  for_each_parameter(p.fc2, prefix + ".fc2", fn);
}

template <typename T, typename Fn>
void for_each_parameter(StackParams<T>& p, const std::string& prefix, Fn&& fn) {
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    for_each_parameter(p.blocks[i], prefix + ".blocks." + std::to_string(i), fn);
  for_each_parameter(p.norm, prefix + ".norm", fn);
}

}  // namespace mask3d
