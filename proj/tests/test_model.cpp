// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "gradcheck_suite.hpp"
#include "oracles.hpp"
#include "mask3d/error.hpp"
#include "mask3d/model.hpp"
#include "mask3d/ops.hpp"
#include "mask3d/trainer.hpp"

using namespace mask3d;

namespace {

ModelConfig micro_config(std::size_t h = 16, std::size_t w = 16, std::size_t p = 4) {
  ModelConfig c;
  c.image_h = h;
  c.image_w = w;
  c.vit.patch = p;
  c.vit.token_dim = 16;
  c.vit.n_heads = 2;
  c.vit.n_layers_color = 1;
  c.vit.n_layers_depth = 1;
  c.vit.n_layers_decoder = 1;
  c.vit.mlp_ratio = 2;
  return c;
}

RgbdFrame scene_frame(std::uint64_t seed, std::size_t h, std::size_t w, std::size_t holes = 0) {
  return render_frame(random_scene(seed, holes), h, w);
}

}  // namespace

TEST_CASE("patch loss: identity, affine invariance and naive oracle") {
  auto rng = make_rng(1, "loss");
  const std::size_t rows = 12, len = 16;
  auto target = test::random_tensor(rng, {rows, len}, 0, 10);
  CHECK(normalized_patch_l2<double>(target, target, {}).item() == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    auto pred = test::random_tensor(rng, {rows, len}, -3, 3);
    std::vector<std::uint8_t> valid(rows * len, 1);
    for (auto& v : valid) v = uniform01(rng) < 0.85;
    for (std::size_t j = 0; j < len; ++j) valid[3 * len + j] = j < 3;  // below 25%: dropped
    const double loss = normalized_patch_l2<double>(pred, target, valid).item();
    const double oracle = test::naive_patch_loss({pred.data().begin(), pred.data().end()},
                                           {target.data().begin(), target.data().end()}, valid, rows, len, 1e-6);
    CHECK(std::abs(loss - oracle) <= 1e-6 * std::abs(oracle));

    auto moved = target.clone();
    auto m = moved.mutable_data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double a = uniform(rng, 0.5, 3), b = uniform(rng, -5, 5);
      for (std::size_t j = 0; j < len; ++j) m[r * len + j] = a * m[r * len + j] + b;
    }
    const double moved_loss = normalized_patch_l2<double>(pred, moved, valid).item();
    CHECK(std::abs(moved_loss - loss) < 1e-6 * loss);
  }
  std::vector<std::uint8_t> none(rows * len, 0);
  CHECK_THROWS_AS(normalized_patch_l2<double>(target, target, none), ContractError);
  CHECK_THROWS_AS(normalized_patch_l2<double>(target, Tensor<double>::zeros({rows, len + 1}), {}), DimensionError);
}

TEST_CASE("patch loss gradient flows into the prediction only") {
  auto rng = make_rng(2, "lossgrad");
  auto pred = test::random_tensor(rng, {4, 9});
  auto target = test::random_tensor(rng, {4, 9}, 0, 5);
  pred.set_requires_grad(true);
  target.set_requires_grad(true);
  backward(normalized_patch_l2<double>(pred, target, {}));
  CHECK(pred.has_grad());
  CHECK_FALSE(target.has_grad());
}

TEST_CASE("forward contracts") {
  const auto cfg = micro_config();
  auto model = init_model<float>(cfg, 3);
  const auto grid = cfg.grid();
  auto a = scene_frame(10, 16, 16), b = scene_frame(11, 16, 16);
  auto rng = make_rng(3, "mask");

  SUBCASE("fully masked input ignores the frame") {
    const auto plan = sample_mask_plan(rng, grid, 0, 0);
    auto pa = forward(model, a, plan).depth_patches, pb = forward(model, b, plan).depth_patches;
    CHECK(std::equal(pa.data().begin(), pa.data().end(), pb.data().begin()));
  }
  SUBCASE("pure color plan") {
    const auto plan = sample_mask_plan(rng, grid, 1.0, 0.0);
    const auto r = forward(model, a, plan);
    for (auto s : r.fused.provenance) CHECK(s == TokenSource::kColor);
    CHECK(r.depth_patches.shape() == Shape{grid.count(), 16});
  }
  SUBCASE("fusion covers every position once") {
    for (int i = 0; i < 20; ++i) {
      const auto plan = sample_mask_plan(rng, grid, uniform01(rng), uniform01(rng));
      const auto r = forward(model, a, plan);
      const auto& p = r.fused.provenance;
      CHECK(r.fused.tokens.shape() == Shape{grid.count(), 16});
      CHECK(count_source(p, TokenSource::kColor) + count_source(p, TokenSource::kDepth) +
                count_source(p, TokenSource::kMasked) ==
            grid.count());
      CHECK(count_source(p, TokenSource::kDepth) == plan.depth_kept.size());
      CHECK(count_source(p, TokenSource::kColor) == plan.color_fused().size());
    }
  }
  SUBCASE("grid mismatch") {
    auto wrong = scene_frame(12, 16, 20);
    CHECK_THROWS(forward(model, wrong, sample_mask_plan(rng, grid, 0.5, 0.2)));
    CHECK_THROWS(forward(model, a, sample_mask_plan(rng, PatchGrid(16, 16, 8), 0.5, 0.2)));
  }
}

TEST_CASE("full-size grid partitions into 300 positions") {
  auto cfg = micro_config(240, 320, 16);
  cfg.vit.token_dim = 8;
  auto model = init_model<float>(cfg, 4);
  auto frame = scene_frame(13, 240, 320);
  auto rng = make_rng(4, "mask");
  const auto r = forward(model, frame, sample_mask_plan(rng, cfg.grid(), 0.2, 0.2));
  const auto& p = r.fused.provenance;
  CHECK(count_source(p, TokenSource::kColor) + count_source(p, TokenSource::kDepth) +
            count_source(p, TokenSource::kMasked) ==
        300);
  CHECK(count_source(p, TokenSource::kColor) == 60);
  CHECK(reconstruct_depth(model, frame, sample_mask_plan(rng, cfg.grid(), 0.2, 0.2)).shape() == Shape{1, 240, 320});
}

TEST_CASE("inputs reach the decoder only through their own encoder") {
  const auto cfg = micro_config();
  auto model = init_model<float>(cfg, 5);
  auto frame = scene_frame(14, 16, 16);
  auto rng = make_rng(5, "mask");
  const auto plan = sample_mask_plan(rng, cfg.grid(), 0.25, 0.25);
  const auto base = forward(model, frame, plan).depth_patches;
  const auto prov = plan.provenance();

  auto edit_patches = [&](const Tensor<float>& image, std::size_t channels, TokenSource keep_src, bool inside) {
    auto patches = patchify(image, cfg.grid()).clone();
    auto d = patches.mutable_data();
    const std::size_t len = patches.dim(1);
    for (std::size_t k = 0; k < cfg.grid().count(); ++k)
      if ((prov[k] == keep_src) == inside)
        for (std::size_t j = 0; j < len; ++j) d[k * len + j] = d[k * len + j] * 0.5f + 0.25f;
    return unpatchify(patches, cfg.grid(), channels);
  };
  auto same = [&](const RgbdFrame& f) {
    const auto out = forward(model, f, plan).depth_patches;
    return std::equal(out.data().begin(), out.data().end(), base.data().begin());
  };
  CHECK(same(make_frame(frame.color, edit_patches(frame.depth, 1, TokenSource::kDepth, false), "x")));
  CHECK(same(make_frame(edit_patches(frame.color, 3, TokenSource::kColor, false), frame.depth, "x")));
  CHECK_FALSE(same(make_frame(frame.color, edit_patches(frame.depth, 1, TokenSource::kDepth, true), "x")));
  CHECK_FALSE(same(make_frame(edit_patches(frame.color, 3, TokenSource::kColor, true), frame.depth, "x")));
}

TEST_CASE("joint objective") {
  auto cfg = micro_config();
  auto plain = init_model<double>(cfg, 6);
  cfg.rgb_head = true;
  auto model = init_model<double>(cfg, 6);
  auto frame = scene_frame(15, 16, 16);
  auto rng = make_rng(6, "mask");
  const auto plan = sample_mask_plan(rng, cfg.grid(), 0.5, 0.2);

  const auto l0 = joint_loss(model, frame, plan, {0.0, false});
  const auto r = forward(model, frame, plan);
  const auto target = patchify(frame.depth.cast<double>(), cfg.grid());
  CHECK(l0.total.item() ==
        normalized_patch_l2<double>(r.depth_patches, target, patch_validity(frame, cfg.grid())).item());
  CHECK(joint_loss(plain, frame, plan).total.item() == joint_loss(plain, frame, plan, {0.0, false}).depth.item());

  // With a perfect color reconstruction the auxiliary term vanishes.
  const auto color = patchify(frame.color.cast<double>(), cfg.grid());
  CHECK(combine_losses(l0.depth, color, color, 1.0).item() == l0.depth.item());
  CHECK(combine_losses(l0.depth, r.rgb_patches, color, 0.0).impl() == l0.depth.impl());
  CHECK_THROWS_AS(joint_loss(plain, frame, plan, {1.0, false}), ContractError);

  const auto gc = test::model_gradcheck(21, true);
  INFO(gc.worst);
  CHECK(gc.ok());
}

TEST_CASE("masked-only scoring skips depth-input positions") {
  const auto cfg = micro_config();
  auto model = init_model<double>(cfg, 7);
  auto frame = scene_frame(16, 16, 16);
  auto rng = make_rng(7, "mask");
  const auto plan = sample_mask_plan(rng, cfg.grid(), 0.25, 0.5);
  const auto r = forward(model, frame, plan);
  const auto target = patchify(frame.depth.cast<double>(), cfg.grid());
  std::vector<std::uint8_t> rows(cfg.grid().count(), 1);
  for (auto k : plan.depth_kept) rows[k] = 0;
  const double expect =
      normalized_patch_l2<double>(r.depth_patches, target, patch_validity(frame, cfg.grid()), 1e-6, rows).item();
  CHECK(joint_loss(model, frame, plan, {0.0, true}).total.item() == expect);
}

TEST_CASE("holes: validity mask and patch dropping") {
  const auto cfg = micro_config();
  auto frame = scene_frame(17, 16, 16);
  auto depth = frame.depth.clone();
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) depth.mutable_data()[y * 16 + x] = 0;  // patch 0 fully invalid
  auto holed = make_frame(frame.color, depth, "h");
  const auto valid = patch_validity(holed, cfg.grid());
  for (std::size_t j = 0; j < 16; ++j) CHECK(valid[j] == 0);
  auto model = init_model<double>(cfg, 8);
  auto rng = make_rng(8, "mask");
  const auto loss = joint_loss(model, holed, sample_mask_plan(rng, cfg.grid(), 0.5, 0.25)).total.item();
  CHECK(std::isfinite(loss));
}

TEST_CASE("model bookkeeping") {
  auto cfg = micro_config();
  cfg.rgb_head = true;
  auto model = init_model<float>(cfg, 9);
  CHECK(model.parameter_count() == model_parameter_count(cfg));
  CHECK(model_parameter_count(ModelConfig{}) * 4 < 10u * 1024 * 1024);
  CHECK(model.mask_token.shape() == Shape{16});
  CHECK_FALSE(model.mask_token.requires_grad());
  for (float v : model.mask_token.data()) CHECK(v == 0.0f);

  auto rep = model.replica();
  auto a = model.named_parameters(), b = rep.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second.data().data() == b[i].second.data().data());
  }
  auto copy = model.clone();
  copy.color_proj.weight.mutable_data()[0] += 1;
  CHECK(copy.color_proj.weight.data()[0] != model.color_proj.weight.data()[0]);

  auto again = init_model<float>(cfg, 9);
  auto c = again.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::equal(a[i].second.data().begin(), a[i].second.data().end(), c[i].second.data().begin()));
}

TEST_CASE("mask token is never updated") {
  const auto cfg = micro_config();
  auto model = init_model<float>(cfg, 10);
  std::vector<RgbdFrame> frames;
  for (int i = 0; i < 4; ++i) frames.push_back(scene_frame(30 + i, 16, 16));
  TrainConfig tc;
  tc.epochs = 5;
  tc.micro_batch = 2;
  tc.accum = 1;
  tc.p_c = 0.25;
  tc.p_d = 0.0;  // plenty of masked positions
  train(model, frames, tc);
  for (float v : model.mask_token.data()) CHECK(v == 0.0f);
}

TEST_CASE("reconstruction") {
  const auto cfg = micro_config();
  auto model = init_model<float>(cfg, 11);
  std::vector<RgbdFrame> frames;
  for (int i = 0; i < 4; ++i) frames.push_back(scene_frame(40 + i, 16, 16));
  TrainConfig tc;
  tc.epochs = 100;
  tc.micro_batch = 4;
  tc.accum = 1;
  train(model, frames, tc);
  const auto grid = cfg.grid();
  auto rng = make_rng(11, "mask");
  const auto full = sample_mask_plan(rng, grid, 0.2, 1.0);
  const auto none = sample_mask_plan(rng, grid, 0.2, 0.0);
  for (const auto& f : frames) {
    const auto rec = reconstruct_depth(model, f, full);
    CHECK(rec.shape() == f.depth.shape());
    CHECK(depth_rmse(rec, f) < depth_rmse(reconstruct_depth(model, f, none), f));
  }

  // Constant-depth scene: an empty spec renders the background plane only.
  SceneSpec flat;
  flat.background_depth = 3.0f;
  auto constant = render_frame(flat, 16, 16);
  for (float v : constant.depth.data()) REQUIRE(v == 3.0f);
  std::vector<RgbdFrame> cframes(4, constant);
  auto cmodel = init_model<float>(cfg, 12);
  train(cmodel, cframes, tc);
  for (const auto& plan : {full, none, sample_mask_plan(rng, grid, 0.5, 0.25)}) {
    const auto rec = reconstruct_depth(cmodel, constant, plan);
    for (float v : rec.data()) CHECK(std::abs(v - 3.0f) < 0.05f * 3.0f);
  }

  auto empty = make_frame(constant.color, Tensor<float>::zeros({1, 16, 16}), "void");
  CHECK_THROWS_AS(reconstruct_depth(cmodel, empty, full), DataError);
}
