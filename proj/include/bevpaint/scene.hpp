#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bevpaint/geometry.hpp"
#include "bevpaint/image_io.hpp"
#include "bevpaint/liftsplat.hpp"

namespace bevpaint {

struct RoadPatch {
  RotRect rect;
  Rgb8 color{90, 90, 95};
};

struct LaneStripe {
  RotRect rect;
  Rgb8 color{240, 240, 240};
};

struct VehicleBox {
  double cx = 0, cy = 0;
  double yaw = 0;  // radians
  double length = 4.2, width = 1.8, height = 1.5;
  Rgb8 color{200, 40, 40};

  RotRect footprint() const { return {cx, cy, yaw, length / 2.0, width / 2.0}; }
};

// Procedural world: flat ground at z = 0 carrying road patches and lane
// stripes, plus vehicle boxes as the only occluders.
struct Scene {
  std::vector<RoadPatch> roads;
  std::vector<LaneStripe> stripes;
  std::vector<VehicleBox> vehicles;
  Rgb8 background{52, 72, 48};
  std::uint64_t seed = 0;
};

inline constexpr Rgb8 kSkyColor{150, 196, 236};

struct SceneConfig {
  double extent_x = 16.0;  // vehicles are kept inside this ego extent
  double extent_y = 16.0;
  int vehicles_min = 1;
  int vehicles_max = 3;
  double road_halfwidth_min = 2.6;
  double road_halfwidth_max = 3.6;
  double cross_road_probability = 0.5;
  double vehicle_abs_x_min = 2.5;
  double vehicle_abs_x_max = 7.0;

  // LiDAR lattice.
  int lidar_channels = 48;
  int lidar_azimuth_steps = 720;
  double lidar_elevation_min_deg = -70.0;
  double lidar_elevation_max_deg = -2.0;
  double lidar_max_range = 60.0;
};

// Deterministic per seed. Always produces at least one road; vehicle count is
// drawn from [vehicles_min, vehicles_max] and every vehicle sits on a road
// with its footprint inside the configured extent.
Scene sample_scene(std::uint64_t seed, const SceneConfig& config);

// Per-pixel raycast, flat shading: nearest vehicle box, then the ground
// plane (stripe > road > background by containment), sky otherwise.
Image8 render_camera_image(const Scene& scene, const Intrinsics& intr, const Extrinsics& extr);
Tensor<float> render_camera(const Scene& scene, const Intrinsics& intr, const Extrinsics& extr);

// Exact ground truth, evaluated analytically at cell centers. Occupancy
// planes follow class order {road, vehicle, lane}; classes overlap.
struct BevGroundTruth {
  std::int64_t grid_x = 0, grid_y = 0;
  std::vector<std::uint8_t> occupancy;  // 3 x grid_x x grid_y, values 0/1
  std::vector<Rgb8> appearance;         // grid_x x grid_y

  Tensor<float> occupancy_tensor() const;
  Tensor<float> appearance_tensor() const;
};

inline constexpr std::int64_t kClassRoad = 0;
inline constexpr std::int64_t kClassVehicle = 1;
inline constexpr std::int64_t kClassLane = 2;
inline constexpr std::int64_t kNumClasses = 3;

BevGroundTruth render_bev_ground_truth(const Scene& scene, const BevGridSpec& spec);

// Spinning-lattice LiDAR: rays over azimuth x elevation, nearest hit among
// vehicle boxes then ground; sky rays produce no return.
std::vector<Vec3> sample_lidar(const Scene& scene, const Vec3& sensor_origin, const SceneConfig& config);

// Ray <-> world intersection used by the renderer, LiDAR, and tests.
struct RayHit {
  double t = 0;
  enum class Kind { Ground, Vehicle } kind = Kind::Ground;
  std::size_t vehicle_index = 0;
};
std::optional<RayHit> trace_ray(const Scene& scene, const Vec3& origin, const Vec3& dir);

// Color of the ground plane at (x, y): stripe > road > background.
Rgb8 ground_color_at(const Scene& scene, double x, double y);

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
void save_scene_json(const Scene& scene, const std::string& path);
Scene load_scene_json(const std::string& path);

}  // namespace bevpaint
