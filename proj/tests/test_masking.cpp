// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mask3d/error.hpp"
#include "mask3d/masking.hpp"
#include "support.hpp"

using namespace mask3d;

TEST_CASE("grid arithmetic") {
  const PatchGrid full(240, 320, 16);
  CHECK(full.rows() == 15);
  CHECK(full.cols() == 20);
  CHECK(full.count() == 300);
  CHECK(PatchGrid(48, 64, 8).count() == 48);
  CHECK_THROWS_AS(PatchGrid(48, 60, 8), DimensionError);
}

TEST_CASE("keep counts round half up") {
  CHECK(keep_count(0.2, 300) == 60);
  CHECK(keep_count(0.5, 3) == 2);
  CHECK(keep_count(0.25, 2) == 1);
  CHECK(keep_count(0.0, 48) == 0);
  CHECK(keep_count(1.0, 48) == 48);
}

TEST_CASE("reference plans") {
  const PatchGrid grid(240, 320, 16);
  auto rng = make_rng(1, "mask");
  auto plan = sample_mask_plan(rng, grid, 0.2, 0.2);
  CHECK(plan.color_kept.size() == 60);
  CHECK(plan.depth_kept.size() == 60);
  std::vector<std::size_t> both;
  std::set_intersection(plan.color_kept.begin(), plan.color_kept.end(), plan.depth_kept.begin(),
                        plan.depth_kept.end(), std::back_inserter(both));
  CHECK(both.empty());

  auto mono = sample_mask_plan(rng, grid, 1.0, 0.0);
  CHECK(mono.color_kept.size() == 300);
  CHECK(mono.depth_kept.empty());
  CHECK_THROWS_AS(sample_mask_plan(rng, grid, 1.2, 0.0), ContractError);
  CHECK_THROWS_AS(sample_mask_plan(rng, grid, 0.5, -0.1), ContractError);
}

TEST_CASE("overlap policy when the fractions sum past one") {
  const PatchGrid grid(48, 64, 8);
  auto rng = make_rng(2, "mask");
  auto plan = sample_mask_plan(rng, grid, 0.8, 0.5);
  CHECK(plan.color_kept.size() == keep_count(0.8, 48));
  CHECK(plan.depth_kept.size() == keep_count(0.5, 48));
  // Depth first exhausts the complement of color.
  std::set<std::size_t> color(plan.color_kept.begin(), plan.color_kept.end());
  for (std::size_t i = 0; i < 48; ++i)
    if (!color.count(i)) CHECK(std::binary_search(plan.depth_kept.begin(), plan.depth_kept.end(), i));
  const auto prov = plan.provenance();
  for (auto k : plan.depth_kept) CHECK(prov[k] == TokenSource::kDepth);
  CHECK(plan.color_fused().size() + plan.depth_kept.size() <= 48);

  auto full = sample_mask_plan(rng, grid, 1.0, 1.0);
  for (auto s : full.provenance()) CHECK(s == TokenSource::kDepth);
}

TEST_CASE("plans are deterministic per seed") {
  const PatchGrid grid(48, 64, 8);
  auto a = make_rng(9, "mask"), b = make_rng(9, "mask");
  auto pa = sample_mask_plan(a, grid, 0.3, 0.4), pb = sample_mask_plan(b, grid, 0.3, 0.4);
  CHECK(pa.color_kept == pb.color_kept);
  CHECK(pa.depth_kept == pb.depth_kept);
}

TEST_CASE("disjointness and exact counts over random fractions") {
  const PatchGrid grid(48, 64, 8);
  auto frac = make_rng(3, "fractions");
  for (std::size_t i = 0; i < 2000; ++i) {
    const double pc = uniform01(frac), pd = uniform01(frac) * (1 - pc);
    auto rng = make_rng(3, "plan", i);
    const auto plan = sample_mask_plan(rng, grid, pc, pd);
    REQUIRE(plan.color_kept.size() == keep_count(pc, 48));
    REQUIRE(plan.depth_kept.size() == keep_count(pd, 48));
    REQUIRE(std::is_sorted(plan.color_kept.begin(), plan.color_kept.end()));
    for (auto k : plan.depth_kept) {
      REQUIRE(k < 48);
      REQUIRE_FALSE(std::binary_search(plan.color_kept.begin(), plan.color_kept.end(), k));
    }
  }
}

TEST_CASE("selection frequency is uniform within 5 sigma") {
  const PatchGrid grid(240, 320, 16);
  const std::size_t draws = 10000, n = grid.count();
  std::vector<std::size_t> hits(n, 0);
  for (std::size_t i = 0; i < draws; ++i) {
    auto rng = make_rng(4, "freq", i);
    for (auto k : sample_mask_plan(rng, grid, 0.2, 0.0).color_kept) ++hits[k];
  }
  const double p = 0.2, sigma = std::sqrt(draws * p * (1 - p));
  for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(hits[k] - draws * p) < 5 * sigma);
}

TEST_CASE("explicit plans are validated") {
  const PatchGrid grid(48, 64, 8);
  auto plan = make_mask_plan(grid, {5, 1}, {2});
  CHECK(plan.color_kept == std::vector<std::size_t>{1, 5});
  CHECK_THROWS(make_mask_plan(grid, {48}, {}));
  CHECK_THROWS(make_mask_plan(grid, {1, 1}, {}));
}

TEST_CASE("patchify layout and round trip") {
  const PatchGrid full(240, 320, 16);
  auto rng = make_rng(5, "img");
  auto rgb = test::random_tensor(rng, {3, 240, 320}).cast<float>();
  auto patches = patchify(rgb, full);
  CHECK(patches.shape() == Shape{300, 768});
  const PatchGrid desk(48, 64, 8);
  auto depth = test::random_tensor(rng, {1, 48, 64}).cast<float>();
  CHECK(patchify(depth, desk).shape() == Shape{48, 64});

  // Row 9 is the block at (1, 1): pixel (8+2, 8+3) of channel 1 sits at
  // offset 1*64 + 2*8 + 3.
  auto rgb_desk = test::random_tensor(rng, {3, 48, 64}).cast<float>();
  auto pd = patchify(rgb_desk, desk);
  CHECK(pd.data()[9 * 192 + 64 + 2 * 8 + 3] == rgb_desk.data()[1 * 48 * 64 + 10 * 64 + 11]);

  auto back = unpatchify(patches, full, 3);
  CHECK(std::equal(back.data().begin(), back.data().end(), rgb.data().begin()));
  CHECK_THROWS_AS(patchify(depth, full), DimensionError);
  CHECK_THROWS_AS(unpatchify(Tensor<float>::zeros({47, 64}), desk, 1), DimensionError);
}

TEST_CASE("unpatchify places an indicator patch") {
  const PatchGrid grid(48, 64, 8);
  CHECK(std::all_of(unpatchify(Tensor<float>::zeros({48, 64}), grid, 1).data().begin(),
                    unpatchify(Tensor<float>::zeros({48, 64}), grid, 1).data().end(),
                    [](float v) { return v == 0; }));
  const std::size_t k = 13;
  auto p = Tensor<float>::zeros({48, 64});
  for (std::size_t j = 0; j < 64; ++j) p.mutable_data()[k * 64 + j] = 1;
  auto img = unpatchify(p, grid, 1);
  for (std::size_t y = 0; y < 48; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      const bool inside = y / 8 == k / 8 && x / 8 == k % 8;
      CHECK(img.data()[y * 64 + x] == (inside ? 1.0f : 0.0f));
    }
}

TEST_CASE("positional embedding") {
  const PatchGrid grid(240, 320, 16);
  const std::size_t dim = 16;
  auto pe = positional_embedding<double>(grid, dim);
  CHECK(pe.shape() == Shape{300, dim});
  // Position (0,0): sin half of each axis block is 0, cos half is 1.
  for (std::size_t j = 0; j < dim; ++j) CHECK(pe.data()[j] == ((j % 8) < 4 ? 0.0 : 1.0));
  double min_d = 1e9;
  for (std::size_t a = 0; a < 300; ++a)
    for (std::size_t b = a + 1; b < 300; ++b) {
      double s = 0;
      for (std::size_t j = 0; j < dim; ++j) s += std::pow(pe.data()[a * dim + j] - pe.data()[b * dim + j], 2);
      min_d = std::min(min_d, s);
    }
  CHECK(min_d > 0);
  auto again = positional_embedding<double>(grid, dim);
  CHECK(std::equal(pe.data().begin(), pe.data().end(), again.data().begin()));
  CHECK_THROWS(positional_embedding<double>(grid, 18));
}
