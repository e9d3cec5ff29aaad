// SPDX-License-Identifier: Apache-2.0
#include "mask3d/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "mask3d/checkpoint.hpp"
#include "mask3d/ops.hpp"
#include "mask3d/parallel.hpp"

namespace mask3d {

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ContractError("lr0 must be positive");
  if (!(decay > 0 && decay <= 1)) throw ContractError("decay must lie in (0,1]");
  if (decay_every < 1) throw ContractError("decay_every must be >= 1");
  if (micro_batch < 1 || accum < 1) throw ContractError("micro_batch and accum must be >= 1");
  if (!(p_c >= 0 && p_c <= 1) || !(p_d >= 0 && p_d <= 1)) throw ContractError("keep fractions must lie in [0,1]");
  if (!(lambda_rgb >= 0)) throw ContractError("lambda_rgb must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) throw ContractError("momentum must lie in [0,1)");
  if (threads < 1) throw ContractError("threads must be >= 1");
}

TrainConfig full_scale_train_config() {
  TrainConfig c;
  c.lr0 = 0.1;
  c.micro_batch = 64;
  c.accum = 2;
  c.epochs = 100;
  return c;
}

double lr_at(std::size_t step, const TrainConfig& config) {
  return config.lr0 * std::pow(config.decay, static_cast<double>(step / config.decay_every));
}

void RunMetrics::write_csv(const std::filesystem::path& steps_csv, const std::filesystem::path& val_csv) const {
  std::ofstream s(steps_csv);
  s << "step,lr,loss,wall_ms\n" << std::setprecision(10);
  for (const auto& r : steps) s << r.step << ',' << r.lr << ',' << r.loss << ',' << r.wall_ms << '\n';
  std::ofstream v(val_csv);
  v << "val_epoch,val_loss,val_rmse\n" << std::setprecision(10);
  for (const auto& r : validation) v << r.epoch << ',' << r.loss << ',' << r.rmse << '\n';
  if (!s || !v) throw DataError("cannot write metrics to " + steps_csv.parent_path().string());
}

DivergenceError::DivergenceError(std::size_t step, const std::string& config_dump)
    : NumericError("non-finite loss at step " + std::to_string(step) + "; config: " + config_dump), step_(step) {}

template <typename T>
SgdMomentum<T>::SgdMomentum(std::vector<Tensor<T>> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), T(0));
}

template <typename T>
void SgdMomentum<T>::step(double lr, const std::vector<std::vector<T>>& grads) {
  if (grads.size() != params_.size()) throw ContractError("optimizer: gradient count mismatch");
  const T mu = T(momentum_), rate = T(lr);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto data = params_[k].mutable_data();
    auto& vel = velocity_[k];
    const auto& g = grads[k];
    if (g.size() != data.size()) throw ContractError("optimizer: gradient size mismatch");
    for (std::size_t i = 0; i < data.size(); ++i) {
      vel[i] = mu * vel[i] + g[i];
      data[i] -= rate * vel[i];
    }
  }
}

template <typename T>
void SgdMomentum<T>::step(double lr) {
  std::vector<std::vector<T>> grads;
  grads.reserve(params_.size());
  for (const auto& p : params_) grads.push_back(p.grad());
  step(lr, grads);
}

MaskPlan validation_plan(const TrainConfig& config, const PatchGrid& grid, std::size_t index) {
  auto rng = make_rng(config.seed, "val-mask", index);
  return sample_mask_plan(rng, grid, config.p_c, config.p_d);
}

template <typename T>
Evaluation evaluate(const Mask3dModel<T>& model, std::span<const RgbdFrame> frames, const TrainConfig& config) {
  Evaluation ev;
  if (frames.empty()) return ev;
  const auto grid = model.config.grid();
  std::vector<double> losses(frames.size()), rmses(frames.size());
  LossOptions opts{config.lambda_rgb, config.masked_only};
  parallel_for(frames.size(), config.threads, [&](std::size_t i) {
    NoGradGuard guard;
    const auto plan = validation_plan(config, grid, i);
    losses[i] = static_cast<double>(joint_loss(model, frames[i], plan, opts).total.item());
    rmses[i] = depth_rmse(reconstruct_depth(model, frames[i], plan), frames[i]);
  });
  ev.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(frames.size());
  ev.rmse = std::accumulate(rmses.begin(), rmses.end(), 0.0) / static_cast<double>(frames.size());
  return ev;
}

template <typename T>
RunMetrics train(Mask3dModel<T>& model, std::span<const RgbdFrame> corpus, const TrainConfig& config,
                 std::span<const RgbdFrame> validation, const StepCallback& on_step) {
  config.validate();
  if (corpus.empty()) throw ContractError("train: empty corpus");
  if (config.lambda_rgb > 0 && !model.config.rgb_head)
    throw ContractError("train: lambda_rgb > 0 needs a model with an rgb head");

  RunMetrics metrics;
  const auto grid = model.config.grid();
  const LossOptions opts{config.lambda_rgb, config.masked_only};
  const std::size_t batch = config.effective_batch();

  std::vector<Tensor<T>> params;
  model.for_each_parameter([&](const std::string&, Tensor<T>& t) { params.push_back(t); });
  SgdMomentum<T> optimizer(params, config.momentum);

  auto mask_rng = make_rng(config.seed, "mask");
  std::vector<std::size_t> order(corpus.size());
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = make_rng(config.seed, "shuffle", epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t count = std::min(batch, order.size() - start);
      std::vector<MaskPlan> plans;
      plans.reserve(count);
      for (std::size_t k = 0; k < count; ++k) plans.push_back(sample_mask_plan(mask_rng, grid, config.p_c, config.p_d));

      std::vector<std::vector<T>> step_grad;
      for (const auto& p : params) step_grad.emplace_back(p.numel(), T(0));
      const T weight = T(1) / T(count);
      double loss_sum = 0;

      for (std::size_t mb = 0; mb < count; mb += config.micro_batch) {
        const std::size_t mcount = std::min(config.micro_batch, count - mb);
        std::vector<Mask3dModel<T>> replicas;
        replicas.reserve(mcount);
        for (std::size_t k = 0; k < mcount; ++k) replicas.push_back(model.replica());
        std::vector<double> losses(mcount);
        parallel_for(mcount, config.threads, [&](std::size_t k) {
          const auto& frame = corpus[order[start + mb + k]];
          const auto loss = joint_loss(replicas[k], frame, plans[mb + k], opts).total;
          losses[k] = static_cast<double>(loss.item());
          backward(scale(loss, weight));
        });
        // Ordered reduction keeps the update bitwise independent of threads.
        for (std::size_t k = 0; k < mcount; ++k) {
          loss_sum += losses[k];
          std::size_t idx = 0;
          replicas[k].for_each_parameter([&](const std::string&, Tensor<T>& t) {
            const auto g = t.grad_view();
            auto& acc = step_grad[idx++];
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
          });
        }
      }

      const double loss = loss_sum / static_cast<double>(count);
      if (!std::isfinite(loss)) throw DivergenceError(step, to_json(config).dump());
      const double lr = lr_at(step, config);
      optimizer.step(lr, step_grad);
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      metrics.steps.push_back({step, lr, loss, ms});
      if (on_step) on_step(metrics.steps.back());
      ++step;
    }

    const bool last = epoch + 1 == config.epochs;
    const bool due = config.val_every == 0 ? last : ((epoch + 1) % config.val_every == 0 || last);
    if (!validation.empty() && due) {
      const auto ev = evaluate(model, validation, config);
      metrics.validation.push_back({epoch, ev.loss, ev.rmse});
    }
  }
  return metrics;
}

template class SgdMomentum<float>;
template class SgdMomentum<double>;
template Evaluation evaluate(const Mask3dModel<float>&, std::span<const RgbdFrame>, const TrainConfig&);
template Evaluation evaluate(const Mask3dModel<double>&, std::span<const RgbdFrame>, const TrainConfig&);
template RunMetrics train(Mask3dModel<float>&, std::span<const RgbdFrame>, const TrainConfig&,
                          std::span<const RgbdFrame>, const StepCallback&);
template RunMetrics train(Mask3dModel<double>&, std::span<const RgbdFrame>, const TrainConfig&,
                          std::span<const RgbdFrame>, const StepCallback&);

}  // namespace mask3d
