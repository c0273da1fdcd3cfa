#pragma once

#include <optional>

#include "bevpaint/geometry.hpp"
#include "bevpaint/tensor.hpp"

namespace bevpaint {

// Ego-centric BEV grid: extent_{x,y} meters centered on the ego origin,
// discretized at res_{x,y} meters per cell.
struct BevGridSpec {
  double extent_x = 80.0;
  double extent_y = 80.0;
  double res_x = 0.4;
  double res_y = 0.4;
  std::int64_t grid_x = 200;
  std::int64_t grid_y = 200;

  static BevGridSpec from_extent(double extent_x, double extent_y, double res_x, double res_y) {
    BevGridSpec s;
    s.extent_x = extent_x;
    s.extent_y = extent_y;
    s.res_x = res_x;
    s.res_y = res_y;
    const double gx = extent_x / res_x;
    const double gy = extent_y / res_y;
    if (res_x <= 0 || res_y <= 0 || extent_x <= 0 || extent_y <= 0 ||
        std::abs(gx - std::round(gx)) > 1e-9 || std::abs(gy - std::round(gy)) > 1e-9) {
      throw ConfigError("grid extent must be an exact multiple of the resolution");
    }
    s.grid_x = static_cast<std::int64_t>(std::llround(gx));
    s.grid_y = static_cast<std::int64_t>(std::llround(gy));
    return s;
  }

  std::int64_t cells() const { return grid_x * grid_y; }

  // Cell centers in ego meters.
  double cell_center_x(std::int64_t i) const { return (static_cast<double>(i) + 0.5) * res_x - extent_x / 2.0; }
  double cell_center_y(std::int64_t j) const { return (static_cast<double>(j) + 0.5) * res_y - extent_y / 2.0; }
};

// Half-open cells: a point exactly on the upper extent boundary is out of
// bounds, the lower edge is inclusive. z is ignored (single BEV layer).
inline std::optional<std::pair<std::int64_t, std::int64_t>> bev_cell_of(const Vec3& p, const BevGridSpec& spec) {
  const double fi = std::floor((p.x + spec.extent_x / 2.0) / spec.res_x);
  const double fj = std::floor((p.y + spec.extent_y / 2.0) / spec.res_y);
  const auto i = static_cast<std::int64_t>(fi);
  const auto j = static_cast<std::int64_t>(fj);
  if (fi < 0 || fj < 0 || i >= spec.grid_x || j >= spec.grid_y) return std::nullopt;
  return std::make_pair(i, j);
}

// Flat cell index (i * grid_y + j) or -1 when out of bounds.
inline std::int32_t bev_flat_cell_of(const Vec3& p, const BevGridSpec& spec) {
  const auto c = bev_cell_of(p, spec);
  if (!c) return -1;
  return static_cast<std::int32_t>(c->first * spec.grid_y + c->second);
}

// ---- lift: outer product of context features and the depth distribution ----

// context: M x C x H' x W', depth: M x D x H' x W' -> M x C x D x H' x W'.
// out[m, c, d, p] = context[m, c, p] * depth[m, d, p].
template <class T>
Tensor<T> lift(const Tensor<T>& context, const Tensor<T>& depth) {
  if (context.ndim() != 4 || depth.ndim() != 4 || context.dim(0) != depth.dim(0) ||
      context.dim(2) != depth.dim(2) || context.dim(3) != depth.dim(3)) {
    throw ShapeError("lift: context " + shape_str(context.shape()) + " and depth " + shape_str(depth.shape()) +
                     " must share batch and spatial dims");
  }
  const std::int64_t M = context.dim(0), C = context.dim(1), D = depth.dim(1);
  const std::int64_t P = context.dim(2) * context.dim(3);
  auto out = Tensor<T>::zeros({M, C, D, context.dim(2), context.dim(3)},
                              detail::any_requires_grad<T>({&context, &depth}));
  const T* pc = context.data();
  const T* pd = depth.data();
  T* po = out.data();
  for (std::int64_t m = 0; m < M; ++m) {
    for (std::int64_t c = 0; c < C; ++c) {
      const T* ctx = pc + (m * C + c) * P;
      for (std::int64_t d = 0; d < D; ++d) {
        const T* dep = pd + (m * D + d) * P;
        T* o = po + ((m * C + c) * D + d) * P;
        for (std::int64_t p = 0; p < P; ++p) o[p] = ctx[p] * dep[p];
      }
    }
  }
  if (out.requires_grad()) {
    auto nc = context.node();
    auto nd = depth.node();
    out.node()->parents = {nc, nd};
    out.node()->backward_fn = [nc, nd, M, C, D, P](typename Tensor<T>::Node& self) {
      const T* g = self.grad.data();
      if (nc->requires_grad) {
        nc->ensure_grad();
        for (std::int64_t m = 0; m < M; ++m) {
          for (std::int64_t c = 0; c < C; ++c) {
            T* dst = nc->grad.data() + (m * C + c) * P;
            for (std::int64_t d = 0; d < D; ++d) {
              const T* dep = nd->data.data() + (m * D + d) * P;
              const T* gr = g + ((m * C + c) * D + d) * P;
              for (std::int64_t p = 0; p < P; ++p) dst[p] += gr[p] * dep[p];
            }
          }
        }
      }
      if (nd->requires_grad) {
        nd->ensure_grad();
        for (std::int64_t m = 0; m < M; ++m) {
          for (std::int64_t d = 0; d < D; ++d) {
            T* dst = nd->grad.data() + (m * D + d) * P;
            for (std::int64_t c = 0; c < C; ++c) {
              const T* ctx = nc->data.data() + (m * C + c) * P;
              const T* gr = g + ((m * C + c) * D + d) * P;
              for (std::int64_t p = 0; p < P; ++p) dst[p] += gr[p] * ctx[p];
            }
          }
        }
      }
    };
  }
  detail::check_finite(out, "lift");
  return out;
}

// ---- voxel pooling ----------------------------------------------------------

// One camera's lifted point batch, flattened to C x P with per-point cell
// assignments and stable point ids. The uid carries (camera rank, frustum
// index), so the canonical reduction order survives arbitrary storage
// shuffles and camera-list permutations.
struct PointBatchKeys {
  std::vector<std::int32_t> cell;  // flat cell index, -1 out of bounds
  std::vector<std::uint64_t> uid;  // unique, defines canonical order
};

inline PointBatchKeys frustum_point_keys(const FrustumPoints& frustum, const BevGridSpec& spec,
                                         std::uint32_t camera_rank) {
  PointBatchKeys keys;
  const std::size_t P = frustum.points.size();
  keys.cell.resize(P);
  keys.uid.resize(P);
  for (std::size_t p = 0; p < P; ++p) {
    keys.cell[p] = bev_flat_cell_of(frustum.points[p], spec);
    keys.uid[p] = (static_cast<std::uint64_t>(camera_rank) << 32) | static_cast<std::uint64_t>(p);
  }
  return keys;
}

namespace detail {

// Each output value is a left-to-right sum over that cell's points in
// ascending-uid order starting from zero, which is exactly what the naive
// scatter produces, so the two paths agree bit for bit.
template <class T>
void pool_forward_naive(const T* feats, std::int64_t C, std::int64_t P, const std::int32_t* cell,
                        const std::uint64_t* uid, std::int64_t cells, T* out) {
  std::vector<std::size_t> order(static_cast<std::size_t>(P));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (!std::is_sorted(uid, uid + P)) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return uid[a] < uid[b]; });
  }
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t p = order[oi];
    const std::int32_t cix = cell[p];
    if (cix < 0) continue;
    for (std::int64_t c = 0; c < C; ++c) {
      out[c * cells + cix] += feats[c * P + static_cast<std::int64_t>(p)];
    }
  }
}

template <class T>
void pool_forward_sorted(const T* feats, std::int64_t C, std::int64_t P, const std::int32_t* cell,
                         const std::uint64_t* uid, std::int64_t cells, T* out) {
  // Keep only in-bounds points, ordered by (cell, uid).
  struct Key {
    std::int32_t cell;
    std::uint64_t uid;
    std::int32_t point;
  };
  std::vector<Key> keys;
  keys.reserve(static_cast<std::size_t>(P));
  for (std::int64_t p = 0; p < P; ++p) {
    if (cell[p] >= 0) keys.push_back({cell[p], uid[p], static_cast<std::int32_t>(p)});
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.cell != b.cell) return a.cell < b.cell;
    return a.uid < b.uid;
  });

  // Transpose the surviving features to point-major rows so each point is one
  // contiguous read during the segmented reduction.
  const std::int64_t Q = static_cast<std::int64_t>(keys.size());
  std::vector<T> rows(static_cast<std::size_t>(Q * C));
  parallel_for_index(static_cast<std::size_t>(Q), [&](std::size_t q) {
    const std::int64_t p = keys[q].point;
    T* dst = rows.data() + static_cast<std::int64_t>(q) * C;
    for (std::int64_t c = 0; c < C; ++c) dst[c] = feats[c * P + p];
  });

  // Segment boundaries: one segment per occupied cell.
  std::vector<std::int64_t> seg_start;
  for (std::int64_t q = 0; q < Q; ++q) {
    if (q == 0 || keys[static_cast<std::size_t>(q)].cell != keys[static_cast<std::size_t>(q - 1)].cell) {
      seg_start.push_back(q);
    }
  }
  seg_start.push_back(Q);
  const std::size_t nseg = seg_start.size() - 1;

  parallel_for_index(nseg, [&](std::size_t s) {
    const std::int64_t lo = seg_start[s];
    const std::int64_t hi = seg_start[s + 1];
    const std::int32_t cix = keys[static_cast<std::size_t>(lo)].cell;
    std::vector<T> acc(static_cast<std::size_t>(C), T(0));
    for (std::int64_t q = lo; q < hi; ++q) {
      const T* src = rows.data() + q * C;
      for (std::int64_t c = 0; c < C; ++c) acc[static_cast<std::size_t>(c)] += src[c];
    }
    for (std::int64_t c = 0; c < C; ++c) out[c * cells + cix] = acc[static_cast<std::size_t>(c)];
  });
}

}  // namespace detail

// Sum-pools lifted per-point features (all cameras of one sample) onto the
// BEV grid. features[k]: M_k x C x D x H' x W' slices are consumed per sample
// elsewhere; here each entry is one camera's C x D x H' x W' block viewed as
// C x P. Gradients route each in-bounds point back to its cell.
template <class T>
Tensor<T> voxel_pool(const std::vector<Tensor<T>>& camera_features,
                     const std::vector<PointBatchKeys>& camera_keys, const BevGridSpec& spec,
                     bool use_sorted = true) {
  if (camera_features.size() != camera_keys.size()) {
    throw ShapeError("voxel_pool: feature/key camera counts differ");
  }
  if (camera_features.empty()) throw ShapeError("voxel_pool: no cameras");
  const std::int64_t C = camera_features[0].dim(0);
  std::int64_t total = 0;
  for (std::size_t k = 0; k < camera_features.size(); ++k) {
    const auto& f = camera_features[k];
    if (f.ndim() < 2 || f.dim(0) != C) {
      throw ShapeError("voxel_pool: camera " + std::to_string(k) + " features have mismatched channels");
    }
    const std::int64_t P = f.numel() / C;
    if (static_cast<std::int64_t>(camera_keys[k].cell.size()) != P) {
      throw ShapeError("voxel_pool: camera " + std::to_string(k) + " has " + std::to_string(P) +
                       " points but " + std::to_string(camera_keys[k].cell.size()) + " keys");
    }
    total += P;
  }

  // Concatenate per-camera blocks into one C x Ptotal batch.
  std::vector<T> feats(static_cast<std::size_t>(C * total));
  std::vector<std::int32_t> cell(static_cast<std::size_t>(total));
  std::vector<std::uint64_t> uid(static_cast<std::size_t>(total));
  std::int64_t off = 0;
  for (std::size_t k = 0; k < camera_features.size(); ++k) {
    const auto& f = camera_features[k];
    const std::int64_t P = f.numel() / C;
    for (std::int64_t c = 0; c < C; ++c) {
      std::copy(f.data() + c * P, f.data() + (c + 1) * P, feats.data() + c * total + off);
    }
    std::copy(camera_keys[k].cell.begin(), camera_keys[k].cell.end(), cell.begin() + off);
    std::copy(camera_keys[k].uid.begin(), camera_keys[k].uid.end(), uid.begin() + off);
    off += P;
  }

  bool need_grad = false;
  for (const auto& f : camera_features) need_grad = need_grad || f.requires_grad();
  auto out = Tensor<T>::zeros({C, spec.grid_x, spec.grid_y}, need_grad);
  if (use_sorted) {
    detail::pool_forward_sorted(feats.data(), C, total, cell.data(), uid.data(), spec.cells(), out.data());
  } else {
    detail::pool_forward_naive(feats.data(), C, total, cell.data(), uid.data(), spec.cells(), out.data());
  }

  if (need_grad) {
    std::vector<std::shared_ptr<typename Tensor<T>::Node>> parents;
    std::vector<std::int64_t> sizes;
    for (const auto& f : camera_features) {
      parents.push_back(f.node());
      sizes.push_back(f.numel() / C);
    }
    out.node()->parents = parents;
    const std::int64_t cells = spec.cells();
    out.node()->backward_fn = [parents, sizes, cell = std::move(cell), C, cells](typename Tensor<T>::Node& self) {
      const T* g = self.grad.data();
      std::int64_t off = 0;
      for (std::size_t k = 0; k < parents.size(); ++k) {
        auto& pn = parents[k];
        const std::int64_t P = sizes[k];
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (std::int64_t p = 0; p < P; ++p) {
            const std::int32_t cix = cell[static_cast<std::size_t>(off + p)];
            if (cix < 0) continue;
            for (std::int64_t c = 0; c < C; ++c) {
              pn->grad[static_cast<std::size_t>(c * P + p)] += g[c * cells + cix];
            }
          }
        }
        off += P;
      }
    };
  }
  detail::check_finite(out, "voxel_pool");
  return out;
}

// Batched pooling for the model path. lifted is (B*N) x C x D x H' x W' with
// camera n of sample b at index b*N + n; camera_keys has one entry per camera
// (shared across the batch, uids already carry the canonical camera rank).
// Output is B x C x grid_x x grid_y.
template <class T>
Tensor<T> voxel_pool_batched(const Tensor<T>& lifted, std::int64_t B, std::int64_t N,
                             const std::vector<PointBatchKeys>& camera_keys, const BevGridSpec& spec,
                             bool use_sorted = true) {
  if (lifted.ndim() != 5 || lifted.dim(0) != B * N) {
    throw ShapeError("voxel_pool_batched: lifted must be (B*N) x C x D x H' x W', got " +
                     shape_str(lifted.shape()));
  }
  if (static_cast<std::int64_t>(camera_keys.size()) != N) {
    throw ShapeError("voxel_pool_batched: expected " + std::to_string(N) + " camera key sets, got " +
                     std::to_string(camera_keys.size()));
  }
  const std::int64_t C = lifted.dim(1);
  const std::int64_t P = lifted.dim(2) * lifted.dim(3) * lifted.dim(4);
  for (std::int64_t n = 0; n < N; ++n) {
    if (static_cast<std::int64_t>(camera_keys[static_cast<std::size_t>(n)].cell.size()) != P) {
      throw ShapeError("voxel_pool_batched: camera " + std::to_string(n) + " keys do not match " +
                       std::to_string(P) + " frustum points");
    }
  }
  const std::int64_t cells = spec.cells();
  const std::int64_t NP = N * P;

  std::vector<std::int32_t> cell(static_cast<std::size_t>(NP));
  std::vector<std::uint64_t> uid(static_cast<std::size_t>(NP));
  for (std::int64_t n = 0; n < N; ++n) {
    const auto& k = camera_keys[static_cast<std::size_t>(n)];
    std::copy(k.cell.begin(), k.cell.end(), cell.begin() + n * P);
    std::copy(k.uid.begin(), k.uid.end(), uid.begin() + n * P);
  }

  auto out = Tensor<T>::zeros({B, C, spec.grid_x, spec.grid_y}, lifted.requires_grad());
  const T* src = lifted.data();
  T* dst = out.data();
  parallel_for_index(static_cast<std::size_t>(B), [&](std::size_t bu) {
    const auto b = static_cast<std::int64_t>(bu);
    // Per-sample feature block in channel-major order over concatenated points.
    std::vector<T> feats(static_cast<std::size_t>(C * NP));
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t c = 0; c < C; ++c) {
        const T* s = src + ((b * N + n) * C + c) * P;
        std::copy(s, s + P, feats.data() + c * NP + n * P);
      }
    }
    T* o = dst + b * C * cells;
    if (use_sorted) {
      detail::pool_forward_sorted(feats.data(), C, NP, cell.data(), uid.data(), cells, o);
    } else {
      detail::pool_forward_naive(feats.data(), C, NP, cell.data(), uid.data(), cells, o);
    }
  });

  if (out.requires_grad()) {
    auto nl = lifted.node();
    out.node()->parents = {nl};
    out.node()->backward_fn = [nl, cell = std::move(cell), B, N, C, P, cells](typename Tensor<T>::Node& self) {
      nl->ensure_grad();
      const T* g = self.grad.data();
      parallel_for_index(static_cast<std::size_t>(B), [&](std::size_t bu) {
        const auto b = static_cast<std::int64_t>(bu);
        const T* gb = g + b * C * cells;
        for (std::int64_t n = 0; n < N; ++n) {
          for (std::int64_t c = 0; c < C; ++c) {
            T* dgrad = nl->grad.data() + ((b * N + n) * C + c) * P;
            const std::int32_t* cl = cell.data() + n * P;
            const T* gc = gb + c * cells;
            for (std::int64_t p = 0; p < P; ++p) {
              if (cl[p] >= 0) dgrad[p] += gc[cl[p]];
            }
          }
        }
      });
    };
  }
  detail::check_finite(out, "voxel_pool_batched");
  return out;
}

// Plain-array entry points used by the pooling oracle tests and benchmark.
template <class T>
std::vector<T> voxel_pool_naive_raw(const std::vector<T>& feats, std::int64_t C,
                                    const PointBatchKeys& keys, const BevGridSpec& spec) {
  const std::int64_t P = static_cast<std::int64_t>(keys.cell.size());
  std::vector<T> out(static_cast<std::size_t>(C * spec.cells()), T(0));
  detail::pool_forward_naive(feats.data(), C, P, keys.cell.data(), keys.uid.data(), spec.cells(), out.data());
  return out;
}

template <class T>
std::vector<T> voxel_pool_sorted_raw(const std::vector<T>& feats, std::int64_t C,
                                     const PointBatchKeys& keys, const BevGridSpec& spec) {
  const std::int64_t P = static_cast<std::int64_t>(keys.cell.size());
  std::vector<T> out(static_cast<std::size_t>(C * spec.cells()), T(0));
  detail::pool_forward_sorted(feats.data(), C, P, keys.cell.data(), keys.uid.data(), spec.cells(), out.data());
  return out;
}

}  // namespace bevpaint
