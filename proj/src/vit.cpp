// SPDX-License-Identifier: Apache-2.0
#include "mask3d/vit.hpp"

#include <cmath>

#include "mask3d/error.hpp"
#include "mask3d/ops.hpp"

namespace mask3d {

std::size_t ViTConfig::mlp_dim() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(token_dim) * mlp_ratio));
}

void ViTConfig::validate() const {
  if (token_dim == 0 || n_heads == 0 || patch == 0 || !(mlp_ratio > 0) || mlp_dim() == 0)
    throw ContractError("vit config: sizes must be positive");
  if (token_dim % n_heads != 0)
    throw ContractError("vit config: token_dim " + std::to_string(token_dim) + " not divisible by " +
                        std::to_string(n_heads) + " heads");
  if (n_layers_color == 0 || n_layers_depth == 0 || n_layers_decoder == 0)
    throw ContractError("vit config: every stack needs at least one layer");
}

template <typename T>
LinearParams<T> init_linear(Rng& rng, std::size_t in, std::size_t out) {
  std::vector<T> w(in * out);
  for (auto& v : w) v = static_cast<T>(truncated_normal(rng, kInitStd));
  return {Tensor<T>::from({in, out}, std::move(w), true), Tensor<T>::zeros({out}, true)};
}

template <typename T>
NormParams<T> init_norm(std::size_t dim) {
  return {Tensor<T>::full({dim}, T(1), true), Tensor<T>::zeros({dim}, true)};
}

template <typename T>
BlockParams<T> init_block(Rng& rng, std::size_t dim, std::size_t mlp_dim) {
  BlockParams<T> b;
  b.norm1 = init_norm<T>(dim);
  b.qkv = init_linear<T>(rng, dim, 3 * dim);
  b.proj = init_linear<T>(rng, dim, dim);
  b.norm2 = init_norm<T>(dim);
  b.fc1 = init_linear<T>(rng, dim, mlp_dim);
  b.fc2 = init_linear<T>(rng, mlp_dim, dim);
  return b;
}

template <typename T>
StackParams<T> init_stack(Rng& rng, std::size_t layers, std::size_t dim, std::size_t mlp_dim) {
  StackParams<T> s;
  for (std::size_t i = 0; i < layers; ++i) s.blocks.push_back(init_block<T>(rng, dim, mlp_dim));
  s.norm = init_norm<T>(dim);
  return s;
}

std::size_t block_parameter_count(std::size_t d, std::size_t m) {
  return 4 * d * d + 2 * d * m + 9 * d + m;
}

std::size_t stack_parameter_count(std::size_t layers, std::size_t d, std::size_t m) {
  return layers * block_parameter_count(d, m) + 2 * d;
}

template <typename T>
Tensor<T> project_tokens(const Tensor<T>& patches, const LinearParams<T>& proj, const Tensor<T>& pos) {
  if (patches.rank() != 2 || pos.rank() != 2 || patches.dim(0) != pos.dim(0) ||
      pos.dim(1) != proj.weight.dim(1)) {
    throw DimensionError("project_tokens: patches " + shape_str(patches.shape()) + ", weight " +
                         shape_str(proj.weight.shape()) + ", positions " + shape_str(pos.shape()));
  }
  return add(linear(patches, proj.weight, proj.bias), pos);
}

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& tokens, const BlockParams<T>& p, std::size_t n_heads) {
  if (tokens.rank() != 2 || tokens.dim(0) == 0) {
    throw DimensionError("transformer_block: needs k >= 1 tokens, got " + shape_str(tokens.shape()));
  }
  const std::size_t d = tokens.dim(1);
  if (d % n_heads != 0) throw DimensionError("transformer_block: width not divisible by head count");
  const std::size_t hd = d / n_heads;
  const T inv_sqrt = T(1) / std::sqrt(T(hd));

  const auto h = layer_norm(tokens, p.norm1.gain, p.norm1.bias);
  const auto qkv = linear(h, p.qkv.weight, p.qkv.bias);
  std::vector<Tensor<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t i = 0; i < n_heads; ++i) {
    const auto q = slice_cols(qkv, i * hd, (i + 1) * hd);
    const auto k = slice_cols(qkv, d + i * hd, d + (i + 1) * hd);
    const auto v = slice_cols(qkv, 2 * d + i * hd, 2 * d + (i + 1) * hd);
    const auto attn = softmax_lastaxis(scale(matmul(q, transpose(k)), inv_sqrt));
    heads.push_back(matmul(attn, v));
  }
  const auto mixed = n_heads == 1 ? heads.front() : concat_cols(heads);
  const auto x = add(tokens, linear(mixed, p.proj.weight, p.proj.bias));

  const auto h2 = layer_norm(x, p.norm2.gain, p.norm2.bias);
  const auto hidden = gelu(linear(h2, p.fc1.weight, p.fc1.bias));
  return add(x, linear(hidden, p.fc2.weight, p.fc2.bias));
}

template <typename T>
Tensor<T> run_stack(const Tensor<T>& tokens, const StackParams<T>& stack, std::size_t n_heads) {
  if (tokens.dim(0) == 0) return tokens;
  Tensor<T> x = tokens;
  for (const auto& b : stack.blocks) x = transformer_block(x, b, n_heads);
  return layer_norm(x, stack.norm.gain, stack.norm.bias);
}

#define MASK3D_INSTANTIATE_VIT(T)                                                              \
  template LinearParams<T> init_linear<T>(Rng&, std::size_t, std::size_t);                     \
  template NormParams<T> init_norm<T>(std::size_t);                                            \
  template BlockParams<T> init_block<T>(Rng&, std::size_t, std::size_t);                       \
  template StackParams<T> init_stack<T>(Rng&, std::size_t, std::size_t, std::size_t);          \
  template Tensor<T> project_tokens(const Tensor<T>&, const LinearParams<T>&, const Tensor<T>&); \
  template Tensor<T> transformer_block(const Tensor<T>&, const BlockParams<T>&, std::size_t);  \
  template Tensor<T> run_stack(const Tensor<T>&, const StackParams<T>&, std::size_t);

MASK3D_INSTANTIATE_VIT(float)
MASK3D_INSTANTIATE_VIT(double)

}  // namespace mask3d
