// SPDX-License-Identifier: Apache-2.0
#include "mask3d/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mask3d/error.hpp"
#include "mask3d/netpbm.hpp"
#include "mask3d/ops.hpp"
#include "mask3d/parallel.hpp"
#include "mask3d/trainer.hpp"

namespace mask3d {

namespace fs = std::filesystem;

std::vector<double> class_iou(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                              std::size_t n_classes) {
  if (pred.size() != truth.size()) throw DimensionError("miou: prediction and truth lengths differ");
  std::vector<std::size_t> inter(n_classes, 0), uni(n_classes, 0), present(n_classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = pred[i], t = truth[i];
    if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= n_classes || static_cast<std::size_t>(t) >= n_classes)
      throw ContractError("miou: class id out of range");
    ++present[t];
    if (p == t) {
      ++inter[t];
      ++uni[t];
    } else {
      ++uni[t];
      ++uni[p];
    }
  }
  std::vector<double> iou(n_classes, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < n_classes; ++c)
    if (present[c]) iou[c] = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
  return iou;
}

double miou(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, std::size_t n_classes) {
  const auto iou = class_iou(pred, truth, n_classes);
  double s = 0;
  std::size_t k = 0;
  for (double v : iou) {
    if (std::isnan(v)) continue;
    s += v;
    ++k;
  }
  return k ? s / static_cast<double>(k) : 0.0;
}

namespace {

void require_labels(std::span<const RgbdFrame> frames, std::size_t n) {
  for (const auto& f : frames)
    if (f.labels.size() != n)
      throw ContractError("probe: frame " + f.frame_id + " has " + std::to_string(f.labels.size()) +
                          " patch labels, expected " + std::to_string(n));
}

std::vector<std::int32_t> argmax_rows(const Tensor<float>& logits) {
  const std::size_t m = logits.dim(0), c = logits.dim(1);
  const auto d = logits.data();
  std::vector<std::int32_t> out(m);
  for (std::size_t i = 0; i < m; ++i)
    out[i] = static_cast<std::int32_t>(std::max_element(d.begin() + i * c, d.begin() + (i + 1) * c) -
                                       (d.begin() + i * c));
  return out;
}

Tensor<float> stack_rows(const std::vector<const Tensor<float>*>& parts) {
  const std::size_t d = parts.front()->dim(1);
  std::vector<float> out;
  for (const auto* p : parts) out.insert(out.end(), p->data().begin(), p->data().end());
  const std::size_t rows = out.size() / d;
  return Tensor<float>::from({rows, d}, std::move(out));
}

}  // namespace

ProbeResult linear_probe(const Mask3dModel<float>& model, std::span<const RgbdFrame> train_all,
                         std::span<const RgbdFrame> test, const ProbeConfig& config) {
  if (!(config.train_fraction > 0 && config.train_fraction <= 1))
    throw ContractError("probe: train_fraction must lie in (0,1]");
  if (config.batch_frames < 1 || config.n_classes < 1) throw ContractError("probe: bad batch size or class count");
  const std::size_t n = model.config.grid().count(), d = model.config.vit.token_dim, nc = config.n_classes;
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(train_all.size()))));
  const auto train = train_all.first(std::min(keep, train_all.size()));
  if (train.empty() || test.empty()) throw ContractError("probe: needs train and test frames");
  require_labels(train, n);
  require_labels(test, n);

  ProbeResult result;
  result.seed = config.seed;
  result.descriptor = config.fine_tune ? "fine-tune" : "linear-probe";

  std::vector<std::size_t> train_count(nc, 0);
  for (const auto& f : train)
    for (auto l : f.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= nc) throw ContractError("probe: label out of range");
      ++train_count[l];
    }

  auto init_rng = make_rng(config.seed, "probe-init");
  LinearParams<float> head = init_linear<float>(init_rng, d, nc);
  std::vector<std::size_t> order(train.size());

  std::vector<std::vector<std::int32_t>> predictions(test.size());

  if (!config.fine_tune) {
    std::vector<Tensor<float>> train_feat(train.size()), test_feat(test.size());
    {
      NoGradGuard guard;
      parallel_for(train.size(), config.threads, [&](std::size_t i) { train_feat[i] = encode_color(model, train[i]); });
      parallel_for(test.size(), config.threads, [&](std::size_t i) { test_feat[i] = encode_color(model, test[i]); });
    }
    SgdMomentum<float> opt({head.weight, head.bias}, config.momentum);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      auto rng = make_rng(config.seed, "probe-shuffle", epoch);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      for (std::size_t s = 0; s < order.size(); s += config.batch_frames) {
        const std::size_t e = std::min(order.size(), s + config.batch_frames);
        std::vector<const Tensor<float>*> parts;
        std::vector<std::int32_t> labels;
        for (std::size_t k = s; k < e; ++k) {
          parts.push_back(&train_feat[order[k]]);
          labels.insert(labels.end(), train[order[k]].labels.begin(), train[order[k]].labels.end());
        }
        const auto loss = cross_entropy(linear(stack_rows(parts), head.weight, head.bias), labels);
        backward(loss);
        opt.step(config.lr);
        head.weight.zero_grad();
        head.bias.zero_grad();
      }
    }
    NoGradGuard guard;
    for (std::size_t i = 0; i < test.size(); ++i)
      predictions[i] = argmax_rows(linear(test_feat[i], head.weight, head.bias));
  } else {
    auto tuned = model.clone();
    std::vector<Tensor<float>> params;
    auto collect = [&](const std::string&, Tensor<float>& t) { params.push_back(t); };
    for_each_parameter(tuned.color_proj, "color_proj", collect);
    for_each_parameter(tuned.color_encoder, "color_encoder", collect);
    for_each_parameter(tuned.decoder, "decoder", collect);
    for_each_parameter(head, "head", collect);
    SgdMomentum<float> opt(params, config.momentum);
    const auto heads = tuned.config.vit.n_heads;
    auto logits_of = [&](const RgbdFrame& f) {
      return linear(run_stack(encode_color(tuned, f), tuned.decoder, heads), head.weight, head.bias);
    };
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      auto rng = make_rng(config.seed, "probe-shuffle", epoch);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      for (std::size_t s = 0; s < order.size(); s += config.batch_frames) {
        const std::size_t e = std::min(order.size(), s + config.batch_frames);
        for (std::size_t k = s; k < e; ++k) {
          const auto& f = train[order[k]];
          backward(scale(cross_entropy(logits_of(f), f.labels), 1.0f / static_cast<float>(e - s)));
        }
        opt.step(config.lr);
        for (auto& p : params) p.zero_grad();
      }
    }
    NoGradGuard guard;
    for (std::size_t i = 0; i < test.size(); ++i) predictions[i] = argmax_rows(logits_of(test[i]));
  }

  std::vector<std::int32_t> flat_pred, flat_truth;
  for (std::size_t i = 0; i < test.size(); ++i) {
    flat_pred.insert(flat_pred.end(), predictions[i].begin(), predictions[i].end());
    flat_truth.insert(flat_truth.end(), test[i].labels.begin(), test[i].labels.end());
  }
  result.class_iou = class_iou(flat_pred, flat_truth, nc);
  double s = 0;
  std::size_t k = 0;
  for (std::size_t c = 0; c < nc; ++c) {
    if (std::isnan(result.class_iou[c])) continue;
    if (train_count[c] == 0) {
      result.warnings.push_back("class " + std::to_string(c) + " absent from probe training set; excluded from mIoU");
      result.class_iou[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    s += result.class_iou[c];
    ++k;
  }
  result.miou = k ? s / static_cast<double>(k) : 0.0;
  result.predictions = std::move(predictions);
  return result;
}

namespace {

std::uint16_t to_mm(double meters) {
  return static_cast<std::uint16_t>(std::clamp<long>(std::lround(meters * 1000.0), 0, 65535));
}

}  // namespace

ReconstructionDump dump_reconstruction(const Mask3dModel<float>& model, const RgbdFrame& frame, const MaskPlan& plan,
                                       const fs::path& dir, const std::string& stem) {
  const auto pred = reconstruct_depth(model, frame, plan);
  const std::size_t h = frame.height(), w = frame.width(), p = plan.grid.patch, cols = plan.grid.cols();
  ReconstructionDump out;
  out.rmse = depth_rmse(pred, frame);
  const auto pd = pred.data(), td = frame.depth.data(), cd = frame.color.data();
  out.pred_mm.resize(h * w);
  out.truth_mm.resize(h * w);
  out.input_mm.assign(h * w, 0);
  RgbImage8 color{w, h, std::vector<std::uint8_t>(3 * h * w, 0)};
  for (std::size_t i = 0; i < h * w; ++i) {
    out.pred_mm[i] = to_mm(pd[i]);
    out.truth_mm[i] = to_mm(td[i]);
  }
  const auto prov = plan.provenance();
  for (std::size_t k = 0; k < plan.grid.count(); ++k) {
    const std::size_t y0 = (k / cols) * p, x0 = (k % cols) * p;
    for (std::size_t y = y0; y < y0 + p; ++y)
      for (std::size_t x = x0; x < x0 + p; ++x) {
        const std::size_t i = y * w + x;
        if (prov[k] == TokenSource::kDepth) out.input_mm[i] = out.truth_mm[i];
        if (prov[k] == TokenSource::kColor)
          for (std::size_t c = 0; c < 3; ++c)
            color.pixels[3 * i + c] = static_cast<std::uint8_t>(std::lround(std::clamp(cd[c * h * w + i], 0.0f, 1.0f) * 255.0f));
      }
  }
  fs::create_directories(dir);
  out.input_pgm = dir / (stem + ".input.pgm");
  out.pred_pgm = dir / (stem + ".pred.pgm");
  out.truth_pgm = dir / (stem + ".truth.pgm");
  out.input_ppm = dir / (stem + ".input.ppm");
  write_pgm16(out.input_pgm, {w, h, out.input_mm});
  write_pgm16(out.pred_pgm, {w, h, out.pred_mm});
  write_pgm16(out.truth_pgm, {w, h, out.truth_mm});
  write_ppm(out.input_ppm, color);
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("spearman: need two equal-length series");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace mask3d
