// SPDX-License-Identifier: Apache-2.0
#include "mask3d/model.hpp"

#include <algorithm>
#include <cmath>

#include "mask3d/error.hpp"
#include "mask3d/ops.hpp"

namespace mask3d {

void ModelConfig::validate() const {
  vit.validate();
  (void)grid();
  if (vit.token_dim % 4 != 0) throw ContractError("token_dim must be divisible by 4 for the positional embedding");
}

ModelConfig full_scale_config() {
  ModelConfig c;
  c.image_h = 240;
  c.image_w = 320;
  c.vit.patch = 16;
  c.vit.token_dim = 768;
  c.vit.n_heads = 12;
  c.vit.n_layers_color = 12;
  c.vit.n_layers_depth = 6;
  c.vit.n_layers_decoder = 8;
  return c;
}

std::size_t count_source(std::span<const TokenSource> provenance, TokenSource source) {
  return static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), source));
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Mask3dModel<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  const_cast<Mask3dModel*>(this)->for_each_parameter(
      [&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
  return out;
}

template <typename T>
std::size_t Mask3dModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

template <typename T>
Mask3dModel<T> Mask3dModel<T>::replica() const {
  Mask3dModel copy = *this;
  copy.for_each_parameter([](const std::string&, Tensor<T>& t) { t = t.alias_leaf(); });
  return copy;
}

template <typename T>
Mask3dModel<T> Mask3dModel<T>::clone() const {
  Mask3dModel copy = *this;
  copy.for_each_parameter([](const std::string&, Tensor<T>& t) { t = t.clone(); });
  copy.mask_token = mask_token.clone();
  return copy;
}

template <typename T>
void Mask3dModel<T>::zero_grad() {
  for_each_parameter([](const std::string&, Tensor<T>& t) { t.zero_grad(); });
}

std::size_t model_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.vit.token_dim, m = c.vit.mlp_dim(), p2 = c.vit.patch * c.vit.patch;
  std::size_t n = (3 * p2 * d + d) + (p2 * d + d);
  n += stack_parameter_count(c.vit.n_layers_color, d, m);
  n += stack_parameter_count(c.vit.n_layers_depth, d, m);
  n += stack_parameter_count(c.vit.n_layers_decoder, d, m);
  n += d * p2 + p2;
  if (c.rgb_head) n += d * 3 * p2 + 3 * p2;
  return n;
}

template <typename T>
Mask3dModel<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.vit.token_dim, m = config.vit.mlp_dim(), p2 = config.vit.patch * config.vit.patch;
  auto rng = make_rng(seed, "init");
  Mask3dModel<T> model;
  model.config = config;
  model.color_proj = init_linear<T>(rng, 3 * p2, d);
  model.depth_proj = init_linear<T>(rng, p2, d);
  model.color_encoder = init_stack<T>(rng, config.vit.n_layers_color, d, m);
  model.depth_encoder = init_stack<T>(rng, config.vit.n_layers_depth, d, m);
  model.decoder = init_stack<T>(rng, config.vit.n_layers_decoder, d, m);
  model.depth_head = init_linear<T>(rng, d, p2);
  if (config.rgb_head) model.rgb_head = init_linear<T>(rng, d, 3 * p2);
  model.mask_token = Tensor<T>::zeros({d});
  model.pos = positional_embedding<T>(config.grid(), d);
  return model;
}

namespace {

template <typename T>
void check_frame(const Mask3dModel<T>& model, const RgbdFrame& frame) {
  const auto grid = model.config.grid();
  if (frame.height() != grid.image_h || frame.width() != grid.image_w) {
    throw DimensionError("frame " + std::to_string(frame.height()) + "x" + std::to_string(frame.width()) +
                         " does not match model grid " + std::to_string(grid.image_h) + "x" +
                         std::to_string(grid.image_w));
  }
}

// Rows of a constant matrix, no graph.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  NoGradGuard guard;
  return gather_rows(x, rows);
}

template <typename T>
Tensor<T> depth_input(const RgbdFrame& frame, const PatchGrid& grid) {
  auto scaled = frame.depth.template cast<T>();
  for (auto& v : scaled.mutable_data()) v *= T(kDepthInputScale);
  return patchify(scaled, grid);
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const Mask3dModel<T>& model, const RgbdFrame& frame, const MaskPlan& plan) {
  check_frame(model, frame);
  const auto grid = model.config.grid();
  if (!(plan.grid == grid)) throw DimensionError("mask plan grid does not match the model grid");
  const std::size_t n = grid.count(), d = model.config.vit.token_dim, heads = model.config.vit.n_heads;

  ForwardResult<T> out;
  out.fused.provenance = plan.provenance();

  std::vector<T> base(n * d);
  {
    const auto pos = model.pos.data(), tok = model.mask_token.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) base[i * d + j] = tok[j] + pos[i * d + j];
  }
  Tensor<T> fused = Tensor<T>::from({n, d}, std::move(base));

  if (!plan.color_kept.empty()) {
    const auto patches = take_rows(patchify(frame.color.template cast<T>(), grid), plan.color_kept);
    const auto tokens = project_tokens(patches, model.color_proj, take_rows(model.pos, plan.color_kept));
    const auto encoded = run_stack(tokens, model.color_encoder, heads);
    const auto survivors = plan.color_fused();
    if (survivors.size() == plan.color_kept.size()) {
      fused = scatter_rows(fused, encoded, survivors);
    } else if (!survivors.empty()) {
      std::vector<std::size_t> local;
      for (std::size_t k = 0; k < plan.color_kept.size(); ++k)
        if (std::binary_search(survivors.begin(), survivors.end(), plan.color_kept[k])) local.push_back(k);
      fused = scatter_rows(fused, gather_rows(encoded, local), survivors);
    }
  }
  if (!plan.depth_kept.empty()) {
    const auto patches = take_rows(depth_input<T>(frame, grid), plan.depth_kept);
    const auto tokens = project_tokens(patches, model.depth_proj, take_rows(model.pos, plan.depth_kept));
    fused = scatter_rows(fused, run_stack(tokens, model.depth_encoder, heads), plan.depth_kept);
  }
  out.fused.tokens = fused;

  const auto decoded = run_stack(fused, model.decoder, heads);
  out.depth_patches = linear(decoded, model.depth_head.weight, model.depth_head.bias);
  if (model.config.rgb_head) out.rgb_patches = linear(decoded, model.rgb_head.weight, model.rgb_head.bias);
  return out;
}

template <typename T>
Tensor<T> encode_color(const Mask3dModel<T>& model, const RgbdFrame& frame) {
  check_frame(model, frame);
  const auto grid = model.config.grid();
  const auto patches = patchify(frame.color.template cast<T>(), grid);
  return run_stack(project_tokens(patches, model.color_proj, model.pos), model.color_encoder,
                   model.config.vit.n_heads);
}

std::vector<std::uint8_t> patch_validity(const RgbdFrame& frame, const PatchGrid& grid) {
  std::vector<float> mask(frame.valid.begin(), frame.valid.end());
  const auto patches = patchify(Tensor<float>::from({1, frame.height(), frame.width()}, std::move(mask)), grid);
  std::vector<std::uint8_t> out(patches.numel());
  std::transform(patches.data().begin(), patches.data().end(), out.begin(),
                 [](float v) { return static_cast<std::uint8_t>(v > 0.5f); });
  return out;
}

namespace {

// Standardizes `row` over its valid elements into `out` (invalid slots 0).
template <typename T>
T standardize_row(const T* row, const std::uint8_t* valid, std::size_t len, std::size_t count, double eps, T* out) {
  T mu = 0;
  for (std::size_t j = 0; j < len; ++j)
    if (!valid || valid[j]) mu += row[j];
  mu /= T(count);
  T var = 0;
  for (std::size_t j = 0; j < len; ++j)
    if (!valid || valid[j]) var += (row[j] - mu) * (row[j] - mu);
  var /= T(count);
  const T rstd = T(1) / std::sqrt(var + T(eps));
  for (std::size_t j = 0; j < len; ++j) out[j] = (!valid || valid[j]) ? (row[j] - mu) * rstd : T(0);
  return rstd;
}

}  // namespace

template <typename T>
Tensor<T> normalized_patch_l2(const Tensor<T>& pred, const Tensor<T>& target, std::span<const std::uint8_t> valid,
                              double eps, std::span<const std::uint8_t> rows) {
  if (pred.rank() != 2 || pred.shape() != target.shape()) {
    throw DimensionError("normalized_patch_l2: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  if (!(eps > 0)) throw ContractError("normalized_patch_l2: eps must be positive");
  const std::size_t n = pred.dim(0), len = pred.dim(1);
  if (!valid.empty() && valid.size() != n * len) throw DimensionError("normalized_patch_l2: validity mask size");
  if (!rows.empty() && rows.size() != n) throw DimensionError("normalized_patch_l2: row selection size");

  std::vector<std::size_t> scored, counts;
  for (std::size_t r = 0; r < n; ++r) {
    if (!rows.empty() && !rows[r]) continue;
    std::size_t c = len;
    if (!valid.empty()) c = static_cast<std::size_t>(std::count(valid.begin() + r * len, valid.begin() + (r + 1) * len, 1));
    if (c == 0 || static_cast<double>(c) < kMinValidFraction * static_cast<double>(len)) continue;
    scored.push_back(r);
    counts.push_back(c);
  }
  if (scored.empty()) throw ContractError("normalized_patch_l2: no patch has enough valid pixels");

  const auto pd = pred.data(), td = target.data();
  std::vector<T> phat(n * len, T(0)), rstd(n, T(0));
  T total = 0;
  std::vector<T> that(len);
  for (std::size_t k = 0; k < scored.size(); ++k) {
    const std::size_t r = scored[k];
    const std::uint8_t* v = valid.empty() ? nullptr : valid.data() + r * len;
    rstd[r] = standardize_row(pd.data() + r * len, v, len, counts[k], eps, phat.data() + r * len);
    standardize_row(td.data() + r * len, v, len, counts[k], eps, that.data());
    T row_sum = 0;
    for (std::size_t j = 0; j < len; ++j) {
      if (v && !v[j]) continue;
      const T diff = phat[r * len + j] - that[j];
      row_sum += diff * diff;
    }
    total += row_sum / T(counts[k]);
  }
  const T loss = total / T(scored.size());

  // The standardized target is recomputed in backward.
  auto pi = pred.impl();
  auto ti = target.impl();
  std::vector<std::uint8_t> mask(valid.begin(), valid.end());
  return make_result<T>(
      {1}, {loss}, {pred}, "normalized_patch_l2",
      [pi, ti, scored, counts, phat = std::move(phat), rstd = std::move(rstd), mask = std::move(mask), len,
       eps](const TensorImpl<T>& o) {
        auto g = pi->ensure_grad();
        const auto td = ti->data();
        std::vector<T> that(len), gh(len);
        const T outer = o.grad[0] / T(scored.size());
        for (std::size_t k = 0; k < scored.size(); ++k) {
          const std::size_t r = scored[k];
          const std::uint8_t* v = mask.empty() ? nullptr : mask.data() + r * len;
          const T* ph = phat.data() + r * len;
          standardize_row(td.data() + r * len, v, len, counts[k], eps, that.data());
          const T cnt = T(counts[k]);
          T mean_g = 0, mean_gh = 0;
          for (std::size_t j = 0; j < len; ++j) {
            if (v && !v[j]) {
              gh[j] = 0;
              continue;
            }
            gh[j] = outer * T(2) * (ph[j] - that[j]) / cnt;
            mean_g += gh[j];
            mean_gh += gh[j] * ph[j];
          }
          mean_g /= cnt;
          mean_gh /= cnt;
          for (std::size_t j = 0; j < len; ++j) {
            if (v && !v[j]) continue;
            g[r * len + j] += rstd[r] * (gh[j] - mean_g - ph[j] * mean_gh);
          }
        }
      });
}

template <typename T>
Tensor<T> combine_losses(const Tensor<T>& depth_loss, const Tensor<T>& pred_rgb, const Tensor<T>& target_rgb,
                         double lambda_rgb) {
  if (!(lambda_rgb >= 0)) throw ContractError("lambda_rgb must be non-negative");
  if (lambda_rgb == 0) return depth_loss;
  return add(depth_loss, scale(normalized_patch_l2<T>(pred_rgb, target_rgb, {}), T(lambda_rgb)));
}

template <typename T>
LossBreakdown<T> joint_loss(const Mask3dModel<T>& model, const RgbdFrame& frame, const MaskPlan& plan,
                            const LossOptions& options) {
  if (!(options.lambda_rgb >= 0)) throw ContractError("lambda_rgb must be non-negative");
  if (options.lambda_rgb > 0 && !model.config.rgb_head)
    throw ContractError("lambda_rgb > 0 needs a model built with an rgb head");
  const auto grid = model.config.grid();
  const auto result = forward(model, frame, plan);
  const auto target = patchify(frame.depth.template cast<T>(), grid);
  const auto valid = patch_validity(frame, grid);
  std::vector<std::uint8_t> rows;
  if (options.masked_only) {
    rows.resize(grid.count());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = result.fused.provenance[i] != TokenSource::kDepth;
  }
  LossBreakdown<T> out;
  out.depth = normalized_patch_l2<T>(result.depth_patches, target, valid, kPatchNormEps, rows);
  if (options.lambda_rgb > 0) {
    const auto color_target = patchify(frame.color.template cast<T>(), grid);
    out.rgb = normalized_patch_l2<T>(result.rgb_patches, color_target, {});
    out.total = add(out.depth, scale(out.rgb, T(options.lambda_rgb)));
  } else {
    out.total = out.depth;
  }
  return out;
}

template <typename T>
Tensor<T> reconstruct_depth(const Mask3dModel<T>& model, const RgbdFrame& frame, const MaskPlan& plan) {
  NoGradGuard guard;
  const auto grid = model.config.grid();
  const std::size_t n = grid.count(), len = grid.patch * grid.patch;
  if (std::none_of(frame.valid.begin(), frame.valid.end(), [](std::uint8_t v) { return v != 0; }))
    throw DataError("frame " + frame.frame_id + " has no valid depth");

  const auto result = forward(model, frame, plan);
  const auto target = patchify(frame.depth.template cast<double>(), grid);
  const auto valid = patch_validity(frame, grid);
  const auto td = target.data();

  auto stats = [&](auto&& include) {
    double s = 0, s2 = 0;
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!include(i)) continue;
      for (std::size_t j = 0; j < len; ++j) {
        if (!valid[i * len + j]) continue;
        s += td[i * len + j];
        s2 += td[i * len + j] * td[i * len + j];
        ++c;
      }
    }
    if (c == 0) return std::pair<double, double>{0.0, -1.0};
    const double mu = s / static_cast<double>(c);
    return std::pair<double, double>{mu, std::max(0.0, s2 / static_cast<double>(c) - mu * mu)};
  };
  const auto& prov = result.fused.provenance;
  auto global = stats([&](std::size_t i) { return prov[i] == TokenSource::kDepth; });
  if (global.second < 0) global = stats([](std::size_t) { return true; });

  const auto pd = result.depth_patches.data();
  std::vector<T> out(n * len), norm(len);
  for (std::size_t i = 0; i < n; ++i) {
    auto s = global;
    if (prov[i] == TokenSource::kDepth) {
      const auto own = stats([i](std::size_t k) { return k == i; });
      if (own.second >= 0) s = own;
    }
    standardize_row<T>(pd.data() + i * len, nullptr, len, len, kPatchNormEps, norm.data());
    const double sd = std::sqrt(s.second + kPatchNormEps);
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = static_cast<T>(s.first + sd * static_cast<double>(norm[j]));
  }
  return unpatchify(Tensor<T>::from({n, len}, std::move(out)), grid, 1);
}

template <typename T>
double depth_rmse(const Tensor<T>& predicted, const RgbdFrame& frame) {
  if (predicted.numel() != frame.valid.size()) throw DimensionError("depth_rmse: size mismatch");
  const auto p = predicted.data();
  const auto g = frame.depth.data();
  double s = 0;
  std::size_t c = 0;
  for (std::size_t i = 0; i < frame.valid.size(); ++i) {
    if (!frame.valid[i]) continue;
    const double e = static_cast<double>(p[i]) - static_cast<double>(g[i]);
    s += e * e;
    ++c;
  }
  if (c == 0) throw DataError("depth_rmse: frame " + frame.frame_id + " has no valid depth");
  return std::sqrt(s / static_cast<double>(c));
}

#define MASK3D_INSTANTIATE_MODEL(T)                                                                          \
  template struct Mask3dModel<T>;                                                                            \
  template Mask3dModel<T> init_model<T>(const ModelConfig&, std::uint64_t);                                  \
  template ForwardResult<T> forward(const Mask3dModel<T>&, const RgbdFrame&, const MaskPlan&);               \
  template Tensor<T> encode_color(const Mask3dModel<T>&, const RgbdFrame&);                                  \
  template Tensor<T> normalized_patch_l2(const Tensor<T>&, const Tensor<T>&, std::span<const std::uint8_t>,  \
                                         double, std::span<const std::uint8_t>);                             \
  template Tensor<T> combine_losses(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);           \
  template LossBreakdown<T> joint_loss(const Mask3dModel<T>&, const RgbdFrame&, const MaskPlan&,             \
                                       const LossOptions&);                                                  \
  template Tensor<T> reconstruct_depth(const Mask3dModel<T>&, const RgbdFrame&, const MaskPlan&);            \
  template double depth_rmse(const Tensor<T>&, const RgbdFrame&);

MASK3D_INSTANTIATE_MODEL(float)
MASK3D_INSTANTIATE_MODEL(double)

}  // namespace mask3d
