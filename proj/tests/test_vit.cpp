// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "gradcheck_suite.hpp"
#include "mask3d/error.hpp"
#include "mask3d/ops.hpp"
#include "mask3d/vit.hpp"

using namespace mask3d;

namespace {

template <typename T>
BlockParams<T> perturbed_block(std::uint64_t seed, std::size_t d, std::size_t m) {
  auto rng = make_rng(seed, "block");
  auto b = init_block<T>(rng, d, m);
  auto jitter = make_rng(seed, "jitter");
  for_each_parameter(b, "b", [&](const std::string&, Tensor<T>& t) {
    for (auto& v : t.mutable_data()) v += static_cast<T>(uniform(jitter, -0.3, 0.3));
  });
  return b;
}

}  // namespace

TEST_CASE("config validation") {
  ViTConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.mlp_dim() == 256);
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = ViTConfig{};
  c.n_layers_depth = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("project_tokens") {
  auto rng = make_rng(1, "proj");
  auto proj = init_linear<double>(rng, 12, 8);
  auto pos = test::random_tensor(rng, {5, 8});
  auto out = project_tokens(Tensor<double>::zeros({5, 12}), proj, pos);
  CHECK(std::equal(out.data().begin(), out.data().end(), pos.data().begin()));
  auto empty = project_tokens(Tensor<double>::zeros({0, 12}), proj, Tensor<double>::zeros({0, 8}));
  CHECK(empty.shape() == Shape{0, 8});
  auto patches = test::random_tensor(rng, {5, 12});
  auto r = test::gradcheck({proj.weight, proj.bias}, [&](const auto&) {
    return test::weighted_sum(project_tokens(patches, proj, pos), 3);
  });
  CHECK(r.max_rel < 1e-4);
  CHECK_THROWS_AS(project_tokens(patches, proj, Tensor<double>::zeros({4, 8})), DimensionError);
}

TEST_CASE("transformer block is permutation equivariant") {
  const std::size_t k = 9, d = 16;
  auto block = perturbed_block<float>(2, d, 32);
  auto rng = make_rng(2, "tokens");
  auto x = test::random_tensor(rng, {k, d}, -2, 2).cast<float>();
  std::vector<std::size_t> perm{3, 0, 8, 1, 7, 2, 6, 5, 4};
  auto y = transformer_block(x, block, 4);
  auto yp = transformer_block(gather_rows<float>(x, perm), block, 4);
  auto py = gather_rows<float>(y, perm);
  double worst = 0;
  for (std::size_t i = 0; i < k * d; ++i) worst = std::max(worst, double(std::abs(yp.data()[i] - py.data()[i])));
  CHECK(worst <= 1e-5);
}

TEST_CASE("single token: attention is the value path") {
  const std::size_t d = 8;
  auto b = perturbed_block<double>(3, d, 16);
  auto rng = make_rng(3, "one");
  auto x = test::random_tensor(rng, {1, d});
  auto v = slice_cols(linear(layer_norm(x, b.norm1.gain, b.norm1.bias), b.qkv.weight, b.qkv.bias), 2 * d, 3 * d);
  auto h = add(x, linear(v, b.proj.weight, b.proj.bias));
  auto mlp = linear(gelu(linear(layer_norm(h, b.norm2.gain, b.norm2.bias), b.fc1.weight, b.fc1.bias)),
                    b.fc2.weight, b.fc2.bias);
  auto expect = add(h, mlp);
  auto got = transformer_block(x, b, 2);
  for (std::size_t i = 0; i < d; ++i) CHECK(got.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));
}

TEST_CASE("gradient through two stacked blocks") {
  const std::size_t d = 8, m = 16;
  auto rng = make_rng(4, "stack");
  StackParams<double> stack{{perturbed_block<double>(4, d, m), perturbed_block<double>(5, d, m)}, init_norm<double>(d)};
  auto x = test::random_tensor(rng, {5, d}, -2, 2);
  std::vector<Tensor<double>> params{x};
  for_each_parameter(stack, "s", [&](const std::string&, Tensor<double>& t) { params.push_back(t); });
  auto r = test::gradcheck(params, [&](const auto& p) {
    return test::weighted_sum(run_stack(p[0], stack, 2), 4);
  });
  INFO(r.worst);
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("init statistics and determinism") {
  auto a = make_rng(5, "init"), b = make_rng(5, "init");
  auto sa = init_stack<float>(a, 2, 64, 256), sb = init_stack<float>(b, 2, 64, 256);
  std::vector<float> weights;
  std::size_t count = 0;
  std::vector<Tensor<float>> ta, tb;
  for_each_parameter(sa, "s", [&](const std::string& name, Tensor<float>& t) {
    ta.push_back(t);
    ++count;
    if (name.ends_with(".bias")) {
      for (float v : t.data()) CHECK(v == 0.0f);
    } else if (name.ends_with(".gain")) {
      for (float v : t.data()) CHECK(v == 1.0f);
    } else {
      weights.insert(weights.end(), t.data().begin(), t.data().end());
    }
  });
  for_each_parameter(sb, "s", [&](const std::string&, Tensor<float>& t) { tb.push_back(t); });
  for (std::size_t i = 0; i < ta.size(); ++i)
    CHECK(std::equal(ta[i].data().begin(), ta[i].data().end(), tb[i].data().begin()));
  REQUIRE(weights.size() >= 10000);
  double mean = 0, sq = 0;
  for (float v : weights) mean += v;
  mean /= weights.size();
  for (float v : weights) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / weights.size());
  CHECK(sd >= 0.015);
  CHECK(sd <= 0.025);
  for (float v : weights) CHECK(std::abs(v) <= 2 * kInitStd + 1e-7);
}

TEST_CASE("parameter count matches the closed form") {
  for (auto [d, m, layers] : {std::tuple{8, 16, 1}, std::tuple{64, 256, 4}, std::tuple{12, 30, 3}}) {
    auto rng = make_rng(6, "count");
    auto s = init_stack<float>(rng, layers, d, m);
    std::size_t n = 0;
    for_each_parameter(s, "s", [&](const std::string&, Tensor<float>& t) { n += t.numel(); });
    CHECK(n == stack_parameter_count(layers, d, m));
    CHECK(block_parameter_count(d, m) == std::size_t(4 * d * d + 2 * d * m + 9 * d + m));
  }
}

TEST_CASE("forward stays finite for large inputs") {
  auto block = perturbed_block<float>(7, 16, 64);
  StackParams<float> stack{{block, block}, init_norm<float>(16)};
  auto rng = make_rng(7, "big");
  auto x = test::random_tensor(rng, {12, 16}, -1000, 1000).cast<float>();
  auto y = run_stack(x, stack, 4);
  for (float v : y.data()) CHECK(std::isfinite(v));
  auto empty = run_stack(Tensor<float>::zeros({0, 16}), stack, 4);
  CHECK(empty.shape() == Shape{0, 16});
}
