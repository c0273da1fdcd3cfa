#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bevpaint/geometry.hpp"
#include "bevpaint/image_io.hpp"
#include "bevpaint/liftsplat.hpp"

namespace bevpaint {

struct ColoredPoint {
  Vec3 position;       // ego frame, meters
  Rgb8 color{0, 0, 0};
  int camera = -1;     // assigning camera index, -1 = uncolored
};

struct Cuboid {
  Vec3 center;         // ego frame; center.z is the mid-height
  double yaw = 0;      // radians
  double length = 0, width = 0, height = 0;
  Rgb8 color{0, 0, 0}; // assigned by cuboid_color

  RotRect footprint() const { return {center.x, center.y, yaw, length / 2.0, width / 2.0}; }

  // The 8 box corners in the ego frame.
  std::vector<Vec3> corners() const;
};

// For each point, the first camera (rig order) where the point is in front of
// the camera and projects inside the image assigns the nearest-pixel color.
std::vector<ColoredPoint> colorize_points(const std::vector<Vec3>& points,
                                          const std::vector<Image8>& images, const CameraRig& rig);

// Mode over 25 bins of width 10 (values 250-255 fold into the last bin), ties
// broken toward the lower bin; returns the winning bin's center value.
std::uint8_t histogram_mode(const std::vector<std::uint8_t>& values);

// Picks the camera seeing the most cuboid corners (ties -> lower index),
// gathers the pixels inside the convex hull of the projected visible corners,
// and takes the per-channel histogram mode. Throws when no camera sees any
// corner.
Rgb8 cuboid_color(const Cuboid& cuboid, const std::vector<Image8>& images, const CameraRig& rig);

struct PaintedBev {
  Tensor<float> appearance;         // 3 x grid_x x grid_y in [0,1]
  std::vector<std::uint8_t> valid;  // grid_x x grid_y
};

// Static layer first: per-cell mean of the colored points that land in it.
// Then the dynamic layer: every cuboid footprint overwrites its cells with
// the cuboid color. Untouched cells stay (0,0,0) and invalid.
PaintedBev paint_bev(const std::vector<ColoredPoint>& points, const std::vector<Cuboid>& cuboids,
                     const BevGridSpec& spec);

// Text point-cloud file: one "x y z" triple per line, meters.
std::vector<Vec3> load_point_cloud_txt(const std::string& path);
void save_point_cloud_txt(const std::vector<Vec3>& points, const std::string& path);

// Cuboid JSON list: [{"center": [x,y,z], "yaw": r, "dims": [l,w,h]}, ...].
std::vector<Cuboid> load_cuboids_json(const std::string& path);
void save_cuboids_json(const std::vector<Cuboid>& cuboids, const std::string& path);

}  // namespace bevpaint
