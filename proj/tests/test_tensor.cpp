#include <cmath>

#include "bevpaint/adam.hpp"
#include "bevpaint/conv.hpp"
#include "bevpaint/grad_check.hpp"
#include "bevpaint/tensor.hpp"
#include "doctest.h"

using namespace bevpaint;

TEST_CASE("backward on sum gives ones") {
  auto x = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4}, true);
  auto loss = sum_all(x);
  loss.backward();
  for (int i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0));
}

TEST_CASE("backward through x*x") {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  auto loss = sum_all(mul(x, x));
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("gradients accumulate across reuse") {
  auto y = Tensor<double>::from_data({3}, {1, 2, 3}, true);
  auto loss = add(sum_all(y), sum_all(y));
  loss.backward();
  for (int i = 0; i < 3; ++i) CHECK(y.grad()[i] == doctest::Approx(2.0));
}

TEST_CASE("backward rejects non-scalar roots") {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  CHECK_THROWS_AS(x.backward(), ShapeError);
}

TEST_CASE("relu and sigmoid basics") {
  auto x = Tensor<float>::from_data({3}, {-2.0f, 0.0f, 3.5f});
  auto r = relu(x);
  CHECK(r.data()[0] == 0.0f);
  CHECK(r.data()[1] == 0.0f);
  CHECK(r.data()[2] == 3.5f);
  auto s = sigmoid(Tensor<float>::from_data({1}, {0.0f}));
  CHECK(s.data()[0] == doctest::Approx(0.5));
}

TEST_CASE("relu/sigmoid gradient check") {
  auto relu_f = [](std::vector<Tensor<double>>& in) { return sum_all(relu(in[0])); };
  auto rep = grad_check_random(relu_f, {{2, 3, 4, 4}}, 1e-6, /*seed=*/3);
  CHECK(rep.pass());

  auto sig_f = [](std::vector<Tensor<double>>& in) { return sum_all(mul(sigmoid(in[0]), sigmoid(in[0]))); };
  rep = grad_check_random(sig_f, {{2, 3, 4, 4}}, 1e-6, /*seed=*/4);
  CHECK(rep.pass());
}

TEST_CASE("relu away from zero has near-exact gradient") {
  auto f = [](std::vector<Tensor<double>>& in) { return sum_all(relu(in[0])); };
  auto rep = grad_check_random(f, {{4, 4}}, 1e-9, /*seed=*/5);
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("softmax over channel slice") {
  // Uniform input -> uniform distribution.
  auto x = Tensor<float>::zeros({1, 4, 1, 1});
  auto y = softmax_over_channels(x, 0, 4);
  for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(0.25));

  // Extreme logits stay finite thanks to max subtraction.
  auto big = Tensor<float>::from_data({1, 2, 1, 1}, {1000.0f, 0.0f});
  auto yb = softmax_over_channels(big, 0, 2);
  CHECK(yb.data()[0] == doctest::Approx(1.0));
  CHECK(yb.data()[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(yb.data()[0]));

  CHECK_THROWS_AS(softmax_over_channels(x, 2, 2), ShapeError);
}

TEST_CASE("softmax sums to one per pixel and ignores constant shifts") {
  Rng rng(11);
  auto x = Tensor<float>::zeros({2, 6, 3, 5});
  for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<float>(rng.uniform(-3, 3));
  auto y = softmax_over_channels(x, 1, 5);
  const std::int64_t plane = 3 * 5;
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t p = 0; p < plane; ++p) {
      float s = 0;
      for (std::int64_t d = 0; d < 4; ++d) s += y.data()[(n * 4 + d) * plane + p];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  //

  auto xs = Tensor<float>::zeros(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) xs.data()[i] = x.data()[i] + 7.5f;
  auto ys = softmax_over_channels(xs, 1, 5);
  float max_diff = 0;
  for (std::int64_t i = 0; i < y.numel(); ++i) max_diff = std::max(max_diff, std::abs(y.data()[i] - ys.data()[i]));
  CHECK(max_diff < 1e-6f);
}

TEST_CASE("softmax gradient check") {
  auto f = [](std::vector<Tensor<double>>& in) {
    auto s = softmax_over_channels(in[0], 1, 5);
    return sum_all(mul(s, s));  // non-linear readout exercises the Jacobian
  };
  auto rep = grad_check_random(f, {{2, 6, 3, 4}}, 1e-6, /*seed=*/6);
  CHECK(rep.pass());
}

TEST_CASE("slice_channels gradient check") {
  auto f = [](std::vector<Tensor<double>>& in) {
    return sum_all(mul(slice_channels(in[0], 1, 3), slice_channels(in[0], 1, 3)));
  };
  auto rep = grad_check_random(f, {{2, 4, 3, 3}}, 1e-6, /*seed=*/7);
  CHECK(rep.pass());
}

TEST_CASE("upsample of constants is constant") {
  auto x = Tensor<float>::filled({1, 2, 3, 3}, 0.7f);
  auto y = upsample_bilinear_x2(x);
  CHECK(y.shape() == Shape{1, 2, 6, 6});
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(0.7f));
}

TEST_CASE("upsample coordinate convention") {
  auto x = Tensor<float>::from_data({1, 1, 1, 2}, {0.0f, 1.0f});
  auto y = upsample_bilinear_x2(x);
  REQUIRE(y.shape() == Shape{1, 1, 2, 4});
  CHECK(y.data()[0] == doctest::Approx(0.0));
  CHECK(y.data()[1] == doctest::Approx(0.25));
  CHECK(y.data()[2] == doctest::Approx(0.75));
  CHECK(y.data()[3] == doctest::Approx(1.0));
}

TEST_CASE("upsample gradient check") {
  auto f = [](std::vector<Tensor<double>>& in) {
    auto u = upsample_bilinear_x2(in[0]);
    return sum_all(mul(u, u));
  };
  auto rep = grad_check_random(f, {{1, 2, 3, 4}}, 1e-6, /*seed=*/8);
  CHECK(rep.pass());
}

TEST_CASE("conv2d ones smoke case") {
  auto x = Tensor<float>::filled({1, 1, 3, 3}, 1.0f);
  auto w = Tensor<float>::filled({1, 1, 3, 3}, 1.0f);
  auto b = Tensor<float>::zeros({1});
  auto y = conv2d(x, w, b, 1, 1);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.data()[4] == doctest::Approx(9.0));  // center: full overlap
  CHECK(y.data()[0] == doctest::Approx(4.0));  // corner
}

TEST_CASE("conv2d identity kernel") {
  Rng rng(9);
  auto x = Tensor<float>::zeros({2, 3, 5, 7});
  for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  auto w = Tensor<float>::zeros({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) w.data()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0f;  // delta at center
  auto b = Tensor<float>::zeros({3});
  auto y = conv2d(x, w, b, 1, 1);
  REQUIRE(y.shape() == x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d shape errors name the dimensions") {
  auto x = Tensor<float>::zeros({1, 2, 4, 4});
  auto w = Tensor<float>::zeros({1, 3, 3, 3});
  auto b = Tensor<float>::zeros({1});
  CHECK_THROWS_WITH_AS(conv2d(x, w, b, 1, 1) /**/,
                       doctest::Contains("input channels 2"), ShapeError);
  auto weven = Tensor<float>::zeros({1, 2, 2, 2});
  CHECK_THROWS_AS(conv2d(x, weven, b, 1, 0), ShapeError);
}

TEST_CASE("conv2d gradient check vs finite differences") {
  // Random 2x4x8x8 input, 6x4x3x3 weight; gradient of sum(output).
  auto f = [](std::vector<Tensor<double>>& in) {
    return sum_all(conv2d(in[0], in[1], in[2], 1, 1));
  };
  auto rep = grad_check_random(f, {{2, 4, 8, 8}, {6, 4, 3, 3}, {6}}, 1e-6, /*seed=*/10, /*max=*/160);
  CHECK(rep.pass());

  // Strided case with a non-linear readout so input grads are non-trivial.
  auto f2 = [](std::vector<Tensor<double>>& in) {
    auto y = conv2d(in[0], in[1], in[2], 2, 1);
    return sum_all(mul(y, y));
  };
  rep = grad_check_random(f2, {{1, 3, 6, 6}, {4, 3, 3, 3}, {4}}, 1e-6, /*seed=*/11, /*max=*/160);
  CHECK(rep.pass());
}

TEST_CASE("adam first step moves by about the learning rate") {
  std::vector<Parameter<double>> params;
  auto p = Tensor<double>::from_data({1}, {0.0}, true);
  p.ensure_grad();
  p.grad()[0] = 1.0;
  params.push_back({"p", p});
  AdamState<double> st;
  st.lr = 1e-3;
  adam_update(params, st);
  CHECK(p.data()[0] == doctest::Approx(-0.0009999999900000003).epsilon(1e-12));
  CHECK(st.step == 1);
  CHECK(p.grad()[0] == 0.0);  // zeroed afterward
}

TEST_CASE("adam zero grad leaves parameter unchanged") {
  std::vector<Parameter<double>> params;
  auto p = Tensor<double>::from_data({2}, {0.5, -0.25}, true);
  p.ensure_grad();
  params.push_back({"p", p});
  AdamState<double> st;
  adam_update(params, st);
  CHECK(p.data()[0] == 0.5);
  CHECK(p.data()[1] == -0.25);
  CHECK(st.step == 1);
}

TEST_CASE("adam reduces a convex quadratic in two steps") {
  // loss = 0.5 * x^2 with x0 = 1; grad = x.
  std::vector<Parameter<double>> params;
  auto p = Tensor<double>::from_data({1}, {1.0}, true);
  params.push_back({"x", p});
  AdamState<double> st;
  st.lr = 1e-1;
  auto loss_of = [&] { return 0.5 * p.data()[0] * p.data()[0]; };
  const double l0 = loss_of();
  for (int i = 0; i < 2; ++i) {
    p.ensure_grad();
    p.grad()[0] = p.data()[0];
    adam_update(params, st);
  }
  CHECK(loss_of() < l0);
}

TEST_CASE("adam names missing-grad parameters") {
  std::vector<Parameter<double>> params;
  params.push_back({"encoder.stem.w", Tensor<double>::zeros({2}, true)});
  AdamState<double> st;
  CHECK_THROWS_WITH_AS(adam_update(params, st), doctest::Contains("encoder.stem.w"), NumericError);
}
