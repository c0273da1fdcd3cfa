#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevpaint/liftsplat.hpp"
#include "bevpaint/tensor.hpp"

namespace bevpaint {

// Mean binary cross-entropy from logits, log-sum-exp form:
//   loss(z, t) = max(z, 0) - z t + log(1 + exp(-|z|)).
// Targets must be exactly 0 or 1 and do not receive gradients.
template <class T>
Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, const Tensor<T>& target) {
  if (logits.shape() != target.shape()) {
    throw ShapeError("bce: logits " + shape_str(logits.shape()) + " vs target " + shape_str(target.shape()));
  }
  const std::int64_t n = logits.numel();
  const T* z = logits.data();
  const T* t = target.data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!(t[i] == T(0) || t[i] == T(1))) {
      throw NumericError("bce: target is not binary at flat index " + std::to_string(i));
    }
    const double zi = static_cast<double>(z[i]);
    acc += std::max(zi, 0.0) - zi * static_cast<double>(t[i]) + std::log1p(std::exp(-std::abs(zi)));
  }
  auto out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)), logits.requires_grad());
  if (out.requires_grad()) {
    auto nz = logits.node();
    auto nt = target.node();
    out.node()->parents = {nz};
    out.node()->backward_fn = [nz, nt, n](typename Tensor<T>::Node& self) {
      nz->ensure_grad();
      const T g = self.grad[0] / static_cast<T>(n);
      for (std::int64_t i = 0; i < n; ++i) {
        const T zi = nz->data[static_cast<std::size_t>(i)];
        const double sig = zi >= T(0) ? 1.0 / (1.0 + std::exp(-static_cast<double>(zi)))
                                      : std::exp(static_cast<double>(zi)) / (1.0 + std::exp(static_cast<double>(zi)));
        nz->grad[static_cast<std::size_t>(i)] +=
            g * static_cast<T>(sig - static_cast<double>(nt->data[static_cast<std::size_t>(i)]));
      }
    };
  }
  return out;
}

// Mean absolute difference; subgradient 0 at exact ties.
template <class T>
Tensor<T> l1_mean(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1: pred " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  }
  const std::int64_t n = pred.numel();
  const T* p = pred.data();
  const T* t = target.data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(p[i]) - static_cast<double>(t[i]));
  auto out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)), pred.requires_grad());
  if (out.requires_grad()) {
    auto np = pred.node();
    auto nt = target.node();
    out.node()->parents = {np};
    out.node()->backward_fn = [np, nt, n](typename Tensor<T>::Node& self) {
      np->ensure_grad();
      const T g = self.grad[0] / static_cast<T>(n);
      for (std::int64_t i = 0; i < n; ++i) {
        const T d = np->data[static_cast<std::size_t>(i)] - nt->data[static_cast<std::size_t>(i)];
        if (d > T(0)) np->grad[static_cast<std::size_t>(i)] += g;
        else if (d < T(0)) np->grad[static_cast<std::size_t>(i)] -= g;
      }
    };
  }
  return out;
}

// ---- evaluation metrics ------------------------------------------------------

// Accumulates intersection/union counts over a whole split; IoU of two empty
// masks is defined as 1.
class IouAccumulator {
 public:
  explicit IouAccumulator(std::size_t classes, double threshold = 0.5)
      : threshold_(threshold), inter_(classes, 0), uni_(classes, 0) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("iou threshold must be in (0,1)");
  }

  // pred: class-major probabilities, target: class-major binary planes, both
  // classes x cells.
  void add(const float* pred, const float* target, std::int64_t cells) {
    for (std::size_t s = 0; s < inter_.size(); ++s) {
      const float* p = pred + static_cast<std::int64_t>(s) * cells;
      const float* t = target + static_cast<std::int64_t>(s) * cells;
      for (std::int64_t i = 0; i < cells; ++i) {
        const bool bp = p[i] > static_cast<float>(threshold_);
        const bool bt = t[i] != 0.0f;
        inter_[s] += (bp && bt) ? 1 : 0;
        uni_[s] += (bp || bt) ? 1 : 0;
      }
    }
  }

  std::vector<double> result() const {
    std::vector<double> iou(inter_.size());
    for (std::size_t s = 0; s < inter_.size(); ++s) {
      iou[s] = uni_[s] == 0 ? 1.0 : static_cast<double>(inter_[s]) / static_cast<double>(uni_[s]);
    }
    return iou;
  }

 private:
  double threshold_;
  std::vector<std::int64_t> inter_;
  std::vector<std::int64_t> uni_;
};

inline std::vector<double> iou_per_class(const Tensor<float>& pred_prob, const Tensor<float>& target,
                                         double threshold = 0.5) {
  if (pred_prob.shape() != target.shape() || pred_prob.ndim() != 3) {
    throw ShapeError("iou_per_class expects matching |S| x X x Y tensors");
  }
  IouAccumulator acc(static_cast<std::size_t>(pred_prob.dim(0)), threshold);
  acc.add(pred_prob.data(), target.data(), pred_prob.dim(1) * pred_prob.dim(2));
  return acc.result();
}

// Connected components (4-connectivity) of a vehicle mask, reported as ego
// centroids with the longitudinal distance |x| of each, sorted ascending.
struct VehicleCentroid {
  double x = 0, y = 0;
  double longitudinal_distance = 0;
  std::int64_t cells = 0;
};

std::vector<VehicleCentroid> vehicle_centroids(const std::vector<std::uint8_t>& mask,
                                               const BevGridSpec& spec);

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<double> iou;
  double appearance_l1 = -1.0;  // negative when the appearance head is off
  std::int64_t sample_count = 0;
  std::string config_fingerprint;
};

std::string metrics_report_to_json(const MetricsReport& r);

}  // namespace bevpaint
