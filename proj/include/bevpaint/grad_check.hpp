#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bevpaint/tensor.hpp"

namespace bevpaint {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  std::size_t checked_elements = 0;
  std::string worst_location;

  bool pass() const { return max_rel_err < tolerance; }
};

// Central-difference gradient check, double precision only. `f` must rebuild
// its graph from the given leaf tensors on every call and return a scalar.
// Inputs with requires_grad are checked; when an input has more elements than
// `max_elems_per_input`, a deterministic random subset is checked instead.
// Relative error uses max(1, |analytic|, |numeric|) in the denominator so
// near-zero gradients are compared absolutely.
inline GradCheckReport grad_check(
    const std::function<Tensor<double>(std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>>& inputs, double tolerance, std::size_t max_elems_per_input = 0,
    std::uint64_t sample_seed = 17) {
  constexpr double h = 1e-5;

  for (auto& in : inputs) in.zero_grad();
  Tensor<double> loss = f(inputs);
  if (loss.numel() != 1) throw ShapeError("grad_check: f must return a scalar");
  loss.backward();

  std::vector<std::vector<double>> analytic(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    inputs[i].ensure_grad();
    analytic[i].assign(inputs[i].grad(), inputs[i].grad() + inputs[i].numel());
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  Rng rng(sample_seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    const auto n = static_cast<std::size_t>(inputs[i].numel());
    std::vector<std::size_t> idx;
    if (max_elems_per_input == 0 || n <= max_elems_per_input) {
      idx.resize(n);
      for (std::size_t k = 0; k < n; ++k) idx[k] = k;
    } else {
      for (std::size_t k = 0; k < max_elems_per_input; ++k) {
        idx.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
      }
    }
    for (const std::size_t e : idx) {
      double* slot = inputs[i].data() + e;
      const double saved = *slot;
      *slot = saved + h;
      const double fp = f(inputs).item();
      *slot = saved - h;
      const double fm = f(inputs).item();
      *slot = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i][e];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double err = std::abs(a - numeric) / denom;
      ++report.checked_elements;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_location = "input " + std::to_string(i) + " element " + std::to_string(e);
      }
    }
  }
  return report;
}

// Convenience wrapper: random inputs with magnitudes in [0.25, 1.25] and
// random sign, which keeps relu kinks comfortably away from the probe points.
inline GradCheckReport grad_check_random(
    const std::function<Tensor<double>(std::vector<Tensor<double>>&)>& f,
    const std::vector<Shape>& input_shapes, double tolerance, std::uint64_t seed = 1,
    std::size_t max_elems_per_input = 0) {
  Rng rng(seed);
  std::vector<Tensor<double>> inputs;
  for (const auto& s : input_shapes) {
    auto t = Tensor<double>::zeros(s, true);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const double mag = rng.uniform(0.25, 1.25);
      t.data()[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    inputs.push_back(std::move(t));
  }
  return grad_check(f, inputs, tolerance, max_elems_per_input, seed + 1000);
}

}  // namespace bevpaint
