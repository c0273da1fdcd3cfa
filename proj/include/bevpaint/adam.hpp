#pragma once

#include <string>
#include <vector>

#include "bevpaint/tensor.hpp"

namespace bevpaint {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

// Standard Adam with bias correction. Moment buffers are keyed by position in
// the parameter list; grads are zeroed after each update.
template <class T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  void reset(const std::vector<Parameter<T>>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(static_cast<std::size_t>(p.value.numel()), T(0));
      v.emplace_back(static_cast<std::size_t>(p.value.numel()), T(0));
    }
  }
};

template <class T>
void adam_update(std::vector<Parameter<T>>& params, AdamState<T>& state) {
  if (state.m.size() != params.size()) state.reset(params);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].value;
    if (!p.has_grad()) {
      throw NumericError("adam_update: parameter '" + params[pi].name + "' has no gradient");
    }
    T* w = p.data();
    const T* g = p.grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    const auto n = static_cast<std::size_t>(p.numel());
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = static_cast<T>(state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * gi);
      v[i] = static_cast<T>(state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * gi * gi);
      const double mh = static_cast<double>(m[i]) / bc1;
      const double vh = static_cast<double>(v[i]) / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - state.lr * mh / (std::sqrt(vh) + state.eps));
    }
    p.zero_grad();
  }
}

}  // namespace bevpaint
