#include <algorithm>
#include <cstring>
#include <cmath>

#include "bevpaint/grad_check.hpp"
#include "bevpaint/liftsplat.hpp"
#include "doctest.h"

using namespace bevpaint;

namespace {

BevGridSpec reference_grid() { return BevGridSpec::from_extent(80, 80, 0.4, 0.4); }

PointBatchKeys random_keys(Rng& rng, std::int64_t P, const BevGridSpec& spec, std::uint32_t cam_rank,
                           double oob_fraction = 0.1) {
  PointBatchKeys keys;
  keys.cell.resize(static_cast<std::size_t>(P));
  keys.uid.resize(static_cast<std::size_t>(P));
  for (std::int64_t p = 0; p < P; ++p) {
    if (rng.uniform() < oob_fraction) {
      keys.cell[static_cast<std::size_t>(p)] = -1;
    } else {
      keys.cell[static_cast<std::size_t>(p)] =
          static_cast<std::int32_t>(rng.uniform_int(0, spec.cells() - 1));
    }
    keys.uid[static_cast<std::size_t>(p)] =
        (static_cast<std::uint64_t>(cam_rank) << 32) | static_cast<std::uint64_t>(p);
  }
  return keys;
}

}  // namespace

TEST_CASE("grid spec arithmetic") {
  const auto spec = reference_grid();
  CHECK(spec.grid_x == 200);
  CHECK(spec.grid_y == 200);
  CHECK_THROWS_AS(BevGridSpec::from_extent(80, 80, 0.3, 0.4), ConfigError);
}

TEST_CASE("bev_cell_of conventions") {
  const auto spec = reference_grid();
  auto c = bev_cell_of({0, 0, 3.0}, spec);
  REQUIRE(c.has_value());
  CHECK(c->first == 100);
  CHECK(c->second == 100);

  c = bev_cell_of({39.99, 0, 0}, spec);
  REQUIRE(c.has_value());
  CHECK(c->first == 199);

  CHECK(!bev_cell_of({40.0, 0, 0}, spec).has_value());  // upper edge excluded

  c = bev_cell_of({-40.0, 0, 0}, spec);
  REQUIRE(c.has_value());
  CHECK(c->first == 0);  // lower edge inclusive
}

TEST_CASE("lift outer product") {
  // context pixel [2, 3], depth [0.25, 0.75]
  auto ctx = Tensor<float>::from_data({1, 2, 1, 1}, {2.0f, 3.0f});
  auto dep = Tensor<float>::from_data({1, 2, 1, 1}, {0.25f, 0.75f});
  auto g = lift(ctx, dep);
  REQUIRE(g.shape() == Shape{1, 2, 2, 1, 1});
  CHECK(g.data()[0] == doctest::Approx(0.5));
  CHECK(g.data()[1] == doctest::Approx(1.5));
  CHECK(g.data()[2] == doctest::Approx(0.75));
  CHECK(g.data()[3] == doctest::Approx(2.25));
}

TEST_CASE("lift marginalization recovers context") {
  Rng rng(71);
  const std::int64_t M = 2, C = 5, D = 7, H = 3, W = 4;
  auto ctx = Tensor<float>::zeros({M, C, H, W});
  auto raw = Tensor<float>::zeros({M, D, H, W});
  for (std::int64_t i = 0; i < ctx.numel(); ++i) ctx.data()[i] = static_cast<float>(rng.uniform(-2, 2));
  for (std::int64_t i = 0; i < raw.numel(); ++i) raw.data()[i] = static_cast<float>(rng.uniform(-2, 2));
  // Normalize to a proper distribution per pixel.
  auto dep = Tensor<float>::zeros({M, D, H, W});
  const std::int64_t plane = H * W;
  for (std::int64_t m = 0; m < M; ++m) {
    for (std::int64_t p = 0; p < plane; ++p) {
      float mx = -1e30f;
      for (std::int64_t d = 0; d < D; ++d) mx = std::max(mx, raw.data()[(m * D + d) * plane + p]);
      float s = 0;
      for (std::int64_t d = 0; d < D; ++d) s += std::exp(raw.data()[(m * D + d) * plane + p] - mx);
      for (std::int64_t d = 0; d < D; ++d) {
        dep.data()[(m * D + d) * plane + p] = std::exp(raw.data()[(m * D + d) * plane + p] - mx) / s;
      }
    }
  }
  auto g = lift(ctx, dep);
  for (std::int64_t m = 0; m < M; ++m) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t p = 0; p < plane; ++p) {
        float s = 0;
        for (std::int64_t d = 0; d < D; ++d) s += g.data()[((m * C + c) * D + d) * plane + p];
        CHECK(s == doctest::Approx(ctx.data()[(m * C + c) * plane + p]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("lift one-hot depth places context at one bin") {
  auto ctx = Tensor<float>::from_data({1, 1, 1, 1}, {4.0f});
  auto dep = Tensor<float>::from_data({1, 3, 1, 1}, {0.0f, 1.0f, 0.0f});
  auto g = lift(ctx, dep);
  CHECK(g.data()[0] == 0.0f);
  CHECK(g.data()[1] == 4.0f);
  CHECK(g.data()[2] == 0.0f);
}

TEST_CASE("lift gradient check") {
  auto f = [](std::vector<Tensor<double>>& in) {
    auto g = lift(in[0], in[1]);
    return sum_all(mul(g, g));
  };
  auto rep = grad_check_random(f, {{1, 3, 2, 2}, {1, 4, 2, 2}}, 1e-6, /*seed=*/72);
  CHECK(rep.pass());
}

TEST_CASE("voxel pooling: two points, one cell") {
  const auto spec = BevGridSpec::from_extent(8, 8, 1, 1);
  auto feats = Tensor<float>::from_data({2, 2}, {1.0f, 3.0f, 2.0f, 4.0f});  // C=2, P=2
  PointBatchKeys keys;
  keys.cell = {10, 10};
  keys.uid = {0, 1};
  auto out = voxel_pool<float>({feats}, {keys}, spec);
  CHECK(out.data()[10] == doctest::Approx(4.0));                 // channel 0
  CHECK(out.data()[spec.cells() + 10] == doctest::Approx(6.0));  // channel 1
}

TEST_CASE("voxel pooling: only the origin cell is hit") {
  const auto spec = reference_grid();
  auto feats = Tensor<float>::from_data({1, 1}, {2.5f});
  PointBatchKeys keys;
  keys.cell = {bev_flat_cell_of({0, 0, 0}, spec)};
  keys.uid = {0};
  auto out = voxel_pool<float>({feats}, {keys}, spec);
  const std::int64_t expected = 100 * spec.grid_y + 100;
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    if (i == expected) {
      CHECK(out.data()[i] == 2.5f);
    } else if (out.data()[i] != 0.0f) {
      FAIL("unexpected nonzero cell");
    }
  }
}

TEST_CASE("sorted pooling is bit-exact vs naive") {
  Rng rng(91);
  const auto spec = BevGridSpec::from_extent(40, 40, 0.5, 0.5);
  for (int trial = 0; trial < 12; ++trial) {
    const std::int64_t C = 1 + static_cast<std::int64_t>(rng.uniform_int(0, 7));
    const std::int64_t P = 100 + static_cast<std::int64_t>(rng.uniform_int(0, 3000));
    std::vector<float> feats(static_cast<std::size_t>(C * P));
    for (auto& v : feats) v = static_cast<float>(rng.normal(0, 1));
    const auto keys = random_keys(rng, P, spec, 0);
    const auto a = voxel_pool_naive_raw(feats, C, keys, spec);
    const auto b = voxel_pool_sorted_raw(feats, C, keys, spec);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("pooling of empty or fully out-of-bounds input is zero") {
  const auto spec = BevGridSpec::from_extent(8, 8, 0.5, 0.5);
  {
    std::vector<float> feats;
    PointBatchKeys keys;
    const auto out = voxel_pool_sorted_raw(feats, 4, keys, spec);
    CHECK(std::all_of(out.begin(), out.end(), [](float v) { return v == 0.0f; }));
  }
  {
    std::vector<float> feats(3 * 10, 1.0f);
    PointBatchKeys keys;
    keys.cell.assign(10, -1);
    keys.uid.resize(10);
    for (std::size_t i = 0; i < 10; ++i) keys.uid[i] = i;
    const auto out = voxel_pool_sorted_raw(feats, 3, keys, spec);
    CHECK(std::all_of(out.begin(), out.end(), [](float v) { return v == 0.0f; }));
  }
}

TEST_CASE("pooling conserves feature mass") {
  Rng rng(101);
  const auto spec = BevGridSpec::from_extent(20, 20, 0.25, 0.25);
  const std::int64_t C = 6, P = 5000;
  std::vector<float> feats(static_cast<std::size_t>(C * P));
  for (auto& v : feats) v = static_cast<float>(rng.uniform(0, 1));
  const auto keys = random_keys(rng, P, spec, 0, 0.2);
  const auto out = voxel_pool_sorted_raw(feats, C, keys, spec);
  for (std::int64_t c = 0; c < C; ++c) {
    double in_mass = 0, out_mass = 0;
    for (std::int64_t p = 0; p < P; ++p) {
      if (keys.cell[static_cast<std::size_t>(p)] >= 0) in_mass += feats[static_cast<std::size_t>(c * P + p)];
    }
    for (std::int64_t i = 0; i < spec.cells(); ++i) out_mass += out[static_cast<std::size_t>(c * spec.cells() + i)];
    CHECK(out_mass == doctest::Approx(in_mass).epsilon(1e-4));
  }
}

TEST_CASE("pooling output is invariant to point shuffling") {
  Rng rng(111);
  const auto spec = BevGridSpec::from_extent(16, 16, 0.5, 0.5);
  const std::int64_t C = 4, P = 800;
  std::vector<float> feats(static_cast<std::size_t>(C * P));
  for (auto& v : feats) v = static_cast<float>(rng.normal(0, 1));
  auto keys = random_keys(rng, P, spec, 0);
  const auto base = voxel_pool_sorted_raw(feats, C, keys, spec);

  // Shuffle the storage order, carrying (cell, uid, features) together.
  std::vector<std::int64_t> perm(static_cast<std::size_t>(P));
  for (std::int64_t i = 0; i < P; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }
  std::vector<float> sfeats(feats.size());
  PointBatchKeys skeys;
  skeys.cell.resize(keys.cell.size());
  skeys.uid.resize(keys.uid.size());
  for (std::int64_t p = 0; p < P; ++p) {
    const std::int64_t src = perm[static_cast<std::size_t>(p)];
    skeys.cell[static_cast<std::size_t>(p)] = keys.cell[static_cast<std::size_t>(src)];
    skeys.uid[static_cast<std::size_t>(p)] = keys.uid[static_cast<std::size_t>(src)];
    for (std::int64_t c = 0; c < C; ++c) {
      sfeats[static_cast<std::size_t>(c * P + p)] = feats[static_cast<std::size_t>(c * P + src)];
    }
  }
  const auto shuffled = voxel_pool_sorted_raw(sfeats, C, skeys, spec);
  CHECK(std::memcmp(base.data(), shuffled.data(), base.size() * sizeof(float)) == 0);
  const auto shuffled_naive = voxel_pool_naive_raw(sfeats, C, skeys, spec);
  CHECK(std::memcmp(base.data(), shuffled_naive.data(), base.size() * sizeof(float)) == 0);
}

TEST_CASE("translation by one cell shifts occupancy by one index") {
  const auto spec = BevGridSpec::from_extent(16, 16, 0.25, 0.25);
  Rng rng(121);
  for (int i = 0; i < 500; ++i) {
    // Lattice + jitter keeps points away from cell boundaries.
    const double x = (rng.uniform_int(-30, 29) + rng.uniform(0.05, 0.95)) * 0.25;
    const double y = (rng.uniform_int(-30, 29) + rng.uniform(0.05, 0.95)) * 0.25;
    const auto base = bev_cell_of({x, y, 0}, spec);
    const auto shifted = bev_cell_of({x + 0.25, y, 0}, spec);
    if (base && shifted) {
      CHECK(shifted->first == base->first + 1);
      CHECK(shifted->second == base->second);
    }
  }
}

TEST_CASE("pool gradient routes cell gradients to contributing points") {
  const auto spec = BevGridSpec::from_extent(4, 4, 1, 1);
  auto feats = Tensor<double>::from_data({1, 3}, {1.0, 2.0, 3.0}, true);
  PointBatchKeys keys;
  keys.cell = {5, 5, -1};  // two points share a cell, one is out of bounds
  keys.uid = {0, 1, 2};
  auto out = voxel_pool<double>({feats}, {keys}, spec);
  auto loss = sum_all(mul(out, out));
  loss.backward();
  // d/dx sum(out^2) = 2*out[cell] for each contributing point.
  CHECK(feats.grad()[0] == doctest::Approx(6.0));
  CHECK(feats.grad()[1] == doctest::Approx(6.0));
  CHECK(feats.grad()[2] == 0.0);
}

TEST_CASE("lift + pool composite gradient check") {
  const auto spec = BevGridSpec::from_extent(8, 8, 1, 1);
  Rng rng(131);
  const std::int64_t C = 3, D = 4, H = 2, W = 2, P = D * H * W;
  PointBatchKeys keys;
  keys.cell.resize(static_cast<std::size_t>(P));
  keys.uid.resize(static_cast<std::size_t>(P));
  for (std::int64_t p = 0; p < P; ++p) {
    keys.cell[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(rng.uniform_int(-1, spec.cells() - 1));
    keys.uid[static_cast<std::size_t>(p)] = static_cast<std::uint64_t>(p);
  }
  auto f = [&](std::vector<Tensor<double>>& in) {
    auto dist = softmax_over_channels(in[1], 0, D);
    auto lifted = lift(in[0], dist);
    auto flat = Tensor<double>(lifted.node());  // viewed as C x P by the pool
    auto pooled = voxel_pool_batched(lifted, 1, 1, {keys}, spec);
    (void)flat;
    return sum_all(mul(pooled, pooled));
  };
  auto rep = grad_check_random(f, {{1, C, H, W}, {1, D, H, W}}, 1e-4, /*seed=*/132);
  CHECK(rep.pass());
}
