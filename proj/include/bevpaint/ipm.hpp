#pragma once

#include "bevpaint/geometry.hpp"
#include "bevpaint/image_io.hpp"
#include "bevpaint/liftsplat.hpp"

namespace bevpaint {

// BEV appearance produced by warping; cells that map behind the camera or
// outside the image carry the sentinel color (0,0,0) and valid = 0.
struct WarpedBev {
  Tensor<float> appearance;        // 3 x grid_x x grid_y
  std::vector<std::uint8_t> valid; // grid_x x grid_y
};

// Nearest-neighbor warp of a camera image onto the ground plane through the
// given homography, sampled at BEV cell centers.
WarpedBev ipm_warp(const Tensor<float>& image, const Homography& homography, const BevGridSpec& spec);

// Multi-camera composite: for each cell, among cameras with a valid warp the
// one with the smallest horizontal distance from its position to the cell
// wins.
WarpedBev ipm_composite(const std::vector<Tensor<float>>& images, const CameraRig& rig,
                        const BevGridSpec& spec, double ground_z = 0.0);

}  // namespace bevpaint
