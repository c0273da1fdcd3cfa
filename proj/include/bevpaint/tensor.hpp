#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "bevpaint/common.hpp"

namespace bevpaint {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor with reverse-mode autodiff. Scalar type is float for
// training and double for finite-difference gradient checks. Nodes own their
// storage; ops link children to parents and install a backward closure that
// accumulates (+=) into parent grads.
template <class T>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
      if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    const auto count = shape_numel(shape);
    n->shape = std::move(shape);
    n->data.assign(static_cast<std::size_t>(count), value);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::int64_t dim(std::size_t i) const { return n_->shape[i]; }
  std::size_t ndim() const { return n_->shape.size(); }
  std::int64_t numel() const { return n_->numel(); }

  T* data() { return n_->data.data(); }
  const T* data() const { return n_->data.data(); }
  std::vector<T>& data_vec() { return n_->data; }
  const std::vector<T>& data_vec() const { return n_->data; }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool v) { n_->requires_grad = v; }

  bool has_grad() const { return n_->grad.size() == n_->data.size(); }
  T* grad() { return n_->grad.data(); }
  const T* grad() const { return n_->grad.data(); }
  const std::vector<T>& grad_vec() const { return n_->grad; }
  void ensure_grad() { n_->ensure_grad(); }
  void zero_grad() {
    if (has_grad()) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
  }

  T item() const {
    if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_str(shape()));
    return n_->data[0];
  }

  std::shared_ptr<Node> node() const { return n_; }

  // Reverse sweep from a scalar root. Gradients accumulate additively across
  // multiple uses of a tensor; callers zero grads between steps.
  void backward() const {
    if (numel() != 1) {
      throw ShapeError("backward() requires a scalar loss, got " + shape_str(shape()));
    }
    std::vector<Node*> order;
    topo_sort(n_.get(), order);
    n_->ensure_grad();
    n_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (node->backward_fn) node->backward_fn(*node);
    }
  }

 private:
  static void topo_sort(Node* root, std::vector<Node*>& order) {
    // Iterative DFS; graphs can be deep for long conv stacks.
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> n_;
};

namespace detail {

template <class T>
void check_finite(const Tensor<T>& t, const char* op) {
#ifndef NDEBUG
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(t.data()[i]))) {
      throw NumericError(std::string(op) + " produced a non-finite value at flat index " + std::to_string(i));
    }
  }
#else
  (void)t;
  (void)op;
#endif
}

template <class T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> ts) {
  for (const auto* t : ts)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace detail

// ---- elementwise / reduction ops ------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto out = Tensor<T>::zeros(a.shape(), detail::any_requires_grad<T>({&a, &b}));
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[i];
  if (out.requires_grad()) {
    auto na = a.node();
    auto nb = b.node();
    out.node()->parents = {na, nb};
    out.node()->backward_fn = [na, nb](typename Tensor<T>::Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) nb->grad[i] += self.grad[i];
      }
    };
  }
  detail::check_finite(out, "add");
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto out = Tensor<T>::zeros(a.shape(), detail::any_requires_grad<T>({&a, &b}));
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] * pb[i];
  if (out.requires_grad()) {
    auto na = a.node();
    auto nb = b.node();
    out.node()->parents = {na, nb};
    out.node()->backward_fn = [na, nb](typename Tensor<T>::Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += nb->data[i] * self.grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) nb->grad[i] += na->data[i] * self.grad[i];
      }
    };
  }
  detail::check_finite(out, "mul");
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto out = Tensor<T>::zeros(a.shape(), a.requires_grad());
  const T* pa = a.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] * factor;
  if (out.requires_grad()) {
    auto na = a.node();
    out.node()->parents = {na};
    out.node()->backward_fn = [na, factor](typename Tensor<T>::Node& self) {
      na->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += factor * self.grad[i];
    };
  }
  detail::check_finite(out, "scale");
  return out;
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = T(0);
  const T* pa = a.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += pa[i];
  auto out = Tensor<T>::from_data({1}, {acc}, a.requires_grad());
  if (out.requires_grad()) {
    auto na = a.node();
    out.node()->parents = {na};
    out.node()->backward_fn = [na](typename Tensor<T>::Node& self) {
      na->ensure_grad();
      const T g = self.grad[0];
      for (auto& v : na->grad) v += g;
    };
  }
  detail::check_finite(out, "sum_all");
  return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  auto out = Tensor<T>::zeros(a.shape(), a.requires_grad());
  const T* pa = a.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
  if (out.requires_grad()) {
    auto na = a.node();
    out.node()->parents = {na};
    out.node()->backward_fn = [na](typename Tensor<T>::Node& self) {
      na->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (na->data[i] > T(0)) na->grad[i] += self.grad[i];
      }
    };
  }
  detail::check_finite(out, "relu");
  return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  auto out = Tensor<T>::zeros(a.shape(), a.requires_grad());
  const T* pa = a.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const T x = pa[i];
    // Split by sign so exp never overflows.
    po[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : [&] {
      const T e = std::exp(x);
      return e / (T(1) + e);
    }();
  }
  if (out.requires_grad()) {
    auto na = a.node();
    auto no = out.node();
    out.node()->parents = {na};
    out.node()->backward_fn = [na](typename Tensor<T>::Node& self) {
      na->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T y = self.data[i];
        na->grad[i] += y * (T(1) - y) * self.grad[i];
      }
    };
  }
  detail::check_finite(out, "sigmoid");
  return out;
}

// ---- channel ops on NCHW ---------------------------------------------------

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t lo, std::int64_t hi) {
  if (x.ndim() != 4) throw ShapeError("slice_channels expects NCHW, got " + shape_str(x.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (!(0 <= lo && lo < hi && hi <= C)) {
    throw ShapeError("slice_channels: invalid range [" + std::to_string(lo) + "," + std::to_string(hi) +
                     ") for C=" + std::to_string(C));
  }
  const std::int64_t Cs = hi - lo;
  const std::int64_t plane = H * W;
  auto out = Tensor<T>::zeros({N, Cs, H, W}, x.requires_grad());
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t n = 0; n < N; ++n) {
    std::copy(px + (n * C + lo) * plane, px + (n * C + hi) * plane, po + n * Cs * plane);
  }
  if (out.requires_grad()) {
    auto nx = x.node();
    out.node()->parents = {nx};
    out.node()->backward_fn = [nx, N, C, Cs, lo, plane](typename Tensor<T>::Node& self) {
      nx->ensure_grad();
      for (std::int64_t n = 0; n < N; ++n) {
        const T* g = self.grad.data() + n * Cs * plane;
        T* dst = nx->grad.data() + (n * C + lo) * plane;
        for (std::int64_t i = 0; i < Cs * plane; ++i) dst[i] += g[i];
      }
    };
  }
  return out;
}

// Softmax over the channel slice [lo, hi) of an NCHW tensor, evaluated
// independently at every (n, h, w). Output has hi-lo channels. Max-subtracted
// for stability.
template <class T>
Tensor<T> softmax_over_channels(const Tensor<T>& x, std::int64_t lo, std::int64_t hi) {
  if (x.ndim() != 4) throw ShapeError("softmax_over_channels expects NCHW, got " + shape_str(x.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (!(0 <= lo && lo < hi && hi <= C)) {
    throw ShapeError("softmax_over_channels: empty or invalid range [" + std::to_string(lo) + "," +
                     std::to_string(hi) + ") for C=" + std::to_string(C));
  }
  const std::int64_t D = hi - lo;
  const std::int64_t plane = H * W;
  auto out = Tensor<T>::zeros({N, D, H, W}, x.requires_grad());
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t p = 0; p < plane; ++p) {
      const T* col = px + (n * C + lo) * plane + p;
      T m = col[0];
      for (std::int64_t d = 1; d < D; ++d) m = std::max(m, col[d * plane]);
      T s = T(0);
      T* oc = po + n * D * plane + p;
      for (std::int64_t d = 0; d < D; ++d) {
        const T e = std::exp(col[d * plane] - m);
        oc[d * plane] = e;
        s += e;
      }
      const T inv = T(1) / s;
      for (std::int64_t d = 0; d < D; ++d) oc[d * plane] *= inv;
    }
  }
  if (out.requires_grad()) {
    auto nx = x.node();
    out.node()->parents = {nx};
    out.node()->backward_fn = [nx, N, C, D, lo, plane](typename Tensor<T>::Node& self) {
      nx->ensure_grad();
      for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t p = 0; p < plane; ++p) {
          const T* y = self.data.data() + n * D * plane + p;
          const T* g = self.grad.data() + n * D * plane + p;
          T dot = T(0);
          for (std::int64_t d = 0; d < D; ++d) dot += y[d * plane] * g[d * plane];
          T* dst = nx->grad.data() + (n * C + lo) * plane + p;
          for (std::int64_t d = 0; d < D; ++d) {
            dst[d * plane] += y[d * plane] * (g[d * plane] - dot);
          }
        }
      }
    };
  }
  detail::check_finite(out, "softmax_over_channels");
  return out;
}

// ---- bilinear upsample ------------------------------------------------------

// x2 bilinear upsampling, align-corners=false: src = (dst + 0.5) / 2 - 0.5,
// clamped to the valid source range.
template <class T>
Tensor<T> upsample_bilinear_x2(const Tensor<T>& x) {
  if (x.ndim() != 4) throw ShapeError("upsample_bilinear_x2 expects NCHW, got " + shape_str(x.shape()));
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Ho = 2 * H, Wo = 2 * W;
  auto out = Tensor<T>::zeros({N, C, Ho, Wo}, x.requires_grad());

  // Per-axis source indices and weights, shared by every plane.
  std::vector<std::int64_t> y0(Ho), y1(Ho), x0(Wo), x1(Wo);
  std::vector<T> fy(Ho), fx(Wo);
  auto fill_axis = [](std::int64_t n_out, std::int64_t n_in, std::vector<std::int64_t>& i0,
                      std::vector<std::int64_t>& i1, std::vector<T>& f) {
    for (std::int64_t o = 0; o < n_out; ++o) {
      double s = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
      s = std::min(std::max(s, 0.0), static_cast<double>(n_in - 1));
      const auto lo = static_cast<std::int64_t>(std::floor(s));
      i0[o] = lo;
      i1[o] = std::min(lo + 1, n_in - 1);
      f[o] = static_cast<T>(s - static_cast<double>(lo));
    }
  };
  fill_axis(Ho, H, y0, y1, fy);
  fill_axis(Wo, W, x0, x1, fx);

  const T* px = x.data();
  T* po = out.data();
  const std::int64_t planes = N * C;
  parallel_for_index(static_cast<std::size_t>(planes), [&](std::size_t pi) {
    const T* in = px + static_cast<std::int64_t>(pi) * H * W;
    T* o = po + static_cast<std::int64_t>(pi) * Ho * Wo;
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      const T* r0 = in + y0[oy] * W;
      const T* r1 = in + y1[oy] * W;
      const T wy = fy[oy];
      T* orow = o + oy * Wo;
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        const T wx = fx[ox];
        const T top = r0[x0[ox]] * (T(1) - wx) + r0[x1[ox]] * wx;
        const T bot = r1[x0[ox]] * (T(1) - wx) + r1[x1[ox]] * wx;
        orow[ox] = top * (T(1) - wy) + bot * wy;
      }
    }
  });

  if (out.requires_grad()) {
    auto nx = x.node();
    out.node()->parents = {nx};
    out.node()->backward_fn = [nx, planes, H, W, Ho, Wo, y0, y1, x0, x1, fy, fx](typename Tensor<T>::Node& self) {
      nx->ensure_grad();
      parallel_for_index(static_cast<std::size_t>(planes), [&](std::size_t pi) {
        const T* g = self.grad.data() + static_cast<std::int64_t>(pi) * Ho * Wo;
        T* dx = nx->grad.data() + static_cast<std::int64_t>(pi) * H * W;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const T wy = fy[oy];
          const T* grow = g + oy * Wo;
          T* d0 = dx + y0[oy] * W;
          T* d1 = dx + y1[oy] * W;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const T wx = fx[ox];
            const T gv = grow[ox];
            d0[x0[ox]] += gv * (T(1) - wx) * (T(1) - wy);
            d0[x1[ox]] += gv * wx * (T(1) - wy);
            d1[x0[ox]] += gv * (T(1) - wx) * wy;
            d1[x1[ox]] += gv * wx * wy;
          }
        }
      });
    };
  }
  detail::check_finite(out, "upsample_bilinear_x2");
  return out;
}

}  // namespace bevpaint
