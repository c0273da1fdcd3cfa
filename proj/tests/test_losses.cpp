#include <cmath>

#include "bevpaint/grad_check.hpp"
#include "bevpaint/losses.hpp"
#include "doctest.h"

using namespace bevpaint;

TEST_CASE("bce at zero logits is ln 2") {
  auto z = Tensor<float>::zeros({3, 4, 4});
  auto t = Tensor<float>::zeros({3, 4, 4});
  Rng rng(1);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
  CHECK(bce_with_logits_mean(z, t).item() == doctest::Approx(0.6931471805599453).epsilon(1e-6));
}

TEST_CASE("bce saturates to zero on confident correct logits") {
  auto z = Tensor<double>::zeros({2, 3, 3});
  auto t = Tensor<double>::zeros({2, 3, 3});
  Rng rng(2);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const bool on = rng.uniform() < 0.5;
    t.data()[i] = on ? 1.0 : 0.0;
    z.data()[i] = on ? 20.0 : -20.0;
  }
  CHECK(bce_with_logits_mean(z, t).item() < 1e-8);
}

TEST_CASE("bce matches an elementwise oracle") {
  Rng rng(3);
  auto z = Tensor<double>::zeros({2, 5, 5});
  auto t = Tensor<double>::zeros({2, 5, 5});
  for (std::int64_t i = 0; i < z.numel(); ++i) {
    z.data()[i] = rng.uniform(-4, 4);
    t.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }
  double expect = 0;
  for (std::int64_t i = 0; i < z.numel(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z.data()[i]));
    expect += -(t.data()[i] * std::log(p) + (1 - t.data()[i]) * std::log(1 - p));
  }
  expect /= static_cast<double>(z.numel());
  CHECK(bce_with_logits_mean(z, t).item() == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("bce rejects non-binary targets") {
  auto z = Tensor<float>::zeros({2});
  auto t = Tensor<float>::from_data({2}, {0.0f, 0.5f});
  CHECK_THROWS_AS(bce_with_logits_mean(z, t), NumericError);
}

TEST_CASE("bce gradient at zero logits is (sigma - t) / n") {
  auto z = Tensor<double>::zeros({2, 2}, true);
  auto t = Tensor<double>::from_data({2, 2}, {1.0, 0.0, 1.0, 0.0});
  auto loss = bce_with_logits_mean(z, t);
  loss.backward();
  CHECK(z.grad()[0] == doctest::Approx((0.5 - 1.0) / 4.0));
  CHECK(z.grad()[1] == doctest::Approx((0.5 - 0.0) / 4.0));
}

TEST_CASE("bce gradient check") {
  Rng rng(4);
  auto t = Tensor<double>::zeros({2, 3, 3});
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  auto f = [&](std::vector<Tensor<double>>& in) { return bce_with_logits_mean(in[0], t); };
  auto rep = grad_check_random(f, {{2, 3, 3}}, 1e-6, /*seed=*/5);
  CHECK(rep.pass());
}

TEST_CASE("l1 basics") {
  auto a = Tensor<float>::filled({3, 2, 2}, 0.0f);
  auto b = Tensor<float>::filled({3, 2, 2}, 1.0f);
  CHECK(l1_mean(a, a).item() == 0.0f);
  CHECK(l1_mean(a, b).item() == doctest::Approx(1.0));

  // Half the cells off by 0.5 -> mean 0.25.
  auto c = Tensor<float>::zeros({2, 2});
  auto d = Tensor<float>::from_data({2, 2}, {0.5f, 0.5f, 0.0f, 0.0f});
  CHECK(l1_mean(c, d).item() == doctest::Approx(0.25));
}

TEST_CASE("iou per class") {
  auto make = [](std::vector<float> v) { return Tensor<float>::from_data({1, 2, 2}, std::move(v)); };
  CHECK(iou_per_class(make({1, 1, 0, 0}), make({1, 1, 0, 0}))[0] == doctest::Approx(1.0));
  CHECK(iou_per_class(make({1, 0, 0, 0}), make({0, 0, 0, 1}))[0] == doctest::Approx(0.0));
  // Two predicted, two true, one overlapping -> 1/3.
  CHECK(iou_per_class(make({1, 1, 0, 0}), make({0, 1, 1, 0}))[0] == doctest::Approx(1.0 / 3.0));
  // Both empty -> defined as 1.
  CHECK(iou_per_class(make({0, 0, 0, 0}), make({0, 0, 0, 0}))[0] == doctest::Approx(1.0));
}

TEST_CASE("iou symmetry and disjointness properties") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = Tensor<float>::zeros({1, 6, 6});
    auto b = Tensor<float>::zeros({1, 6, 6});
    for (std::int64_t i = 0; i < a.numel(); ++i) {
      a.data()[i] = rng.uniform() < 0.4 ? 1.0f : 0.0f;
      b.data()[i] = rng.uniform() < 0.4 ? 1.0f : 0.0f;
    }
    CHECK(iou_per_class(a, b)[0] == doctest::Approx(iou_per_class(b, a)[0]));
    auto nota = Tensor<float>::zeros({1, 6, 6});
    bool nonempty = false;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
      nota.data()[i] = 1.0f - a.data()[i];
      nonempty = nonempty || a.data()[i] > 0.5f;
    }
    if (nonempty) CHECK(iou_per_class(a, nota)[0] == doctest::Approx(0.0));
  }
}

TEST_CASE("iou improves monotonically under dilation toward the target") {
  // Grow a under-prediction toward the full target; IoU must not decrease.
  auto target = Tensor<float>::zeros({1, 8, 8});
  for (std::int64_t i = 2; i < 6; ++i) {
    for (std::int64_t j = 2; j < 6; ++j) target.data()[i * 8 + j] = 1.0f;
  }
  double prev = 0;
  for (std::int64_t grow = 0; grow < 3; ++grow) {
    auto pred = Tensor<float>::zeros({1, 8, 8});
    for (std::int64_t i = 3 - grow; i < 4 + grow; ++i) {
      for (std::int64_t j = 3 - grow; j < 4 + grow; ++j) pred.data()[i * 8 + j] = 1.0f;
    }
    const double iou = iou_per_class(pred, target)[0];
    CHECK(iou >= prev);
    prev = iou;
  }
}

TEST_CASE("vehicle centroid of a single cell") {
  const auto spec = BevGridSpec::from_extent(80, 80, 0.4, 0.4);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(spec.cells()), 0);
  mask[static_cast<std::size_t>(110 * spec.grid_y + 100)] = 1;
  const auto cs = vehicle_centroids(mask, spec);
  REQUIRE(cs.size() == 1);
  CHECK(cs[0].x == doctest::Approx(4.2));
  CHECK(cs[0].longitudinal_distance == doctest::Approx(4.2));
}

TEST_CASE("vehicle centroids of empty mask") {
  const auto spec = BevGridSpec::from_extent(8, 8, 1, 1);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(spec.cells()), 0);
  CHECK(vehicle_centroids(mask, spec).empty());
}

TEST_CASE("two blobs give two sorted centroids") {
  const auto spec = BevGridSpec::from_extent(16, 16, 0.5, 0.5);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(spec.cells()), 0);
  auto put = [&](std::int64_t i, std::int64_t j) { mask[static_cast<std::size_t>(i * spec.grid_y + j)] = 1; };
  // 2x2 blob near the origin and another far forward.
  put(16, 16); put(16, 17); put(17, 16); put(17, 17);
  put(28, 8); put(28, 9); put(29, 8); put(29, 9);
  const auto cs = vehicle_centroids(mask, spec);
  REQUIRE(cs.size() == 2);
  CHECK(cs[0].longitudinal_distance <= cs[1].longitudinal_distance);
  CHECK(cs[0].cells == 4);
  CHECK(cs[1].cells == 4);
}

TEST_CASE("component count matches a brute-force oracle") {
  // Oracle: iterative label propagation until fixpoint.
  auto count_components = [](const std::vector<std::uint8_t>& mask, std::int64_t gx, std::int64_t gy) {
    std::vector<std::int64_t> label(mask.size(), -1);
    std::int64_t next = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) label[i] = next++;
    }
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::int64_t i = 0; i < gx; ++i) {
        for (std::int64_t j = 0; j < gy; ++j) {
          const std::int64_t at = i * gy + j;
          if (!mask[static_cast<std::size_t>(at)]) continue;
          const std::int64_t nbr[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
          for (const auto& nb : nbr) {
            if (nb[0] < 0 || nb[0] >= gx || nb[1] < 0 || nb[1] >= gy) continue;
            const std::int64_t o = nb[0] * gy + nb[1];
            if (mask[static_cast<std::size_t>(o)] && label[static_cast<std::size_t>(o)] < label[static_cast<std::size_t>(at)]) {
              label[static_cast<std::size_t>(at)] = label[static_cast<std::size_t>(o)];
              changed = true;
            }
          }
        }
      }
    }
    std::vector<std::int64_t> uniq;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) uniq.push_back(label[i]);
    }
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    return static_cast<std::int64_t>(uniq.size());
  };

  const auto spec = BevGridSpec::from_extent(12, 12, 1, 1);
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(spec.cells()));
    for (auto& m : mask) m = rng.uniform() < 0.35 ? 1 : 0;
    const auto expect = count_components(mask, spec.grid_x, spec.grid_y);
    CHECK(static_cast<std::int64_t>(vehicle_centroids(mask, spec).size()) == expect);
  }
}
