#include "bevpaint/ipm.hpp"

namespace bevpaint {

WarpedBev ipm_warp(const Tensor<float>& image, const Homography& homography, const BevGridSpec& spec) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw ShapeError("ipm_warp expects a 3xHxW image, got " + shape_str(image.shape()));
  }
  const std::int64_t H = image.dim(1), W = image.dim(2);
  const std::int64_t plane = H * W;
  WarpedBev out;
  out.appearance = Tensor<float>::zeros({3, spec.grid_x, spec.grid_y});
  out.valid.assign(static_cast<std::size_t>(spec.cells()), 0);
  const float* src = image.data();
  float* dst = out.appearance.data();
  const std::int64_t cells = spec.cells();
  parallel_for_index(static_cast<std::size_t>(spec.grid_x), [&](std::size_t iu) {
    const auto i = static_cast<std::int64_t>(iu);
    const double x = spec.cell_center_x(i);
    for (std::int64_t j = 0; j < spec.grid_y; ++j) {
      const double y = spec.cell_center_y(j);
      const Vec3 h = homography.apply(x, y);
      if (h.z <= 1e-9) continue;  // behind the camera
      const double u = h.x / h.z;
      const double v = h.y / h.z;
      if (u < 0 || u >= static_cast<double>(W) || v < 0 || v >= static_cast<double>(H)) continue;
      const auto px = static_cast<std::int64_t>(u);
      const auto py = static_cast<std::int64_t>(v);
      const std::int64_t cell = i * spec.grid_y + j;
      dst[cell] = src[py * W + px];
      dst[cells + cell] = src[plane + py * W + px];
      dst[2 * cells + cell] = src[2 * plane + py * W + px];
      out.valid[static_cast<std::size_t>(cell)] = 1;
    }
  });
  return out;
}

WarpedBev ipm_composite(const std::vector<Tensor<float>>& images, const CameraRig& rig,
                        const BevGridSpec& spec, double ground_z) {
  if (images.size() != rig.size()) {
    throw ShapeError("ipm_composite: " + std::to_string(images.size()) + " images for " +
                     std::to_string(rig.size()) + " cameras");
  }
  std::vector<WarpedBev> warps;
  warps.reserve(images.size());
  for (std::size_t k = 0; k < images.size(); ++k) {
    warps.push_back(ipm_warp(images[k], ipm_homography(rig.cameras[k].intrinsics, rig.cameras[k].extrinsics, ground_z), spec));
  }
  WarpedBev out;
  out.appearance = Tensor<float>::zeros({3, spec.grid_x, spec.grid_y});
  out.valid.assign(static_cast<std::size_t>(spec.cells()), 0);
  const std::int64_t cells = spec.cells();
  float* dst = out.appearance.data();
  for (std::int64_t i = 0; i < spec.grid_x; ++i) {
    const double x = spec.cell_center_x(i);
    for (std::int64_t j = 0; j < spec.grid_y; ++j) {
      const double y = spec.cell_center_y(j);
      const std::int64_t cell = i * spec.grid_y + j;
      double best_range = 0;
      int best = -1;
      for (std::size_t k = 0; k < warps.size(); ++k) {
        if (!warps[k].valid[static_cast<std::size_t>(cell)]) continue;
        const auto& t = rig.cameras[k].extrinsics.translation;
        const double range = std::hypot(x - t.x, y - t.y);
        if (best < 0 || range < best_range) {
          best = static_cast<int>(k);
          best_range = range;
        }
      }
      if (best < 0) continue;
      const float* s = warps[static_cast<std::size_t>(best)].appearance.data();
      dst[cell] = s[cell];
      dst[cells + cell] = s[cells + cell];
      dst[2 * cells + cell] = s[2 * cells + cell];
      out.valid[static_cast<std::size_t>(cell)] = 1;
    }
  }
  return out;
}

}  // namespace bevpaint
