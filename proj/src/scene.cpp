#include "bevpaint/scene.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace bevpaint {

namespace {

constexpr double kPi = 3.14159265358979323846;

const Rgb8 kVehiclePalette[] = {
    {200, 40, 40},   // red
    {40, 60, 200},   // blue
    {40, 180, 60},   // green
    {230, 200, 40},  // yellow
    {240, 130, 30},  // orange
    {40, 200, 220},  // cyan
    {200, 40, 180},  // magenta
    {245, 245, 245}, // white
};

// Slab test against a box spanning [-hl,hl] x [-hw,hw] x [0,h] in the frame
// of the (yawed) vehicle.
std::optional<double> ray_box_hit(const VehicleBox& box, const Vec3& origin, const Vec3& dir) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double ox = origin.x - box.cx, oy = origin.y - box.cy;
  const Vec3 o{c * ox + s * oy, -s * ox + c * oy, origin.z};
  const Vec3 d{c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};

  const double lo[3] = {-box.length / 2.0, -box.width / 2.0, 0.0};
  const double hi[3] = {box.length / 2.0, box.width / 2.0, box.height};
  const double od[3] = {o.x, o.y, o.z};
  const double dd[3] = {d.x, d.y, d.z};

  double tmin = 1e-9, tmax = 1e300;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dd[a]) < 1e-15) {
      if (od[a] < lo[a] || od[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t0 = (lo[a] - od[a]) / dd[a];
    double t1 = (hi[a] - od[a]) / dd[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return std::nullopt;
  }
  return tmin;
}

}  // namespace

std::optional<RayHit> trace_ray(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < scene.vehicles.size(); ++i) {
    if (const auto t = ray_box_hit(scene.vehicles[i], origin, dir)) {
      if (!best || *t < best->t) best = RayHit{*t, RayHit::Kind::Vehicle, i};
    }
  }
  if (dir.z < -1e-12) {
    const double t = -origin.z / dir.z;
    if (t > 1e-9 && (!best || t < best->t)) best = RayHit{t, RayHit::Kind::Ground, 0};
  }
  return best;
}

Rgb8 ground_color_at(const Scene& scene, double x, double y) {
  for (const auto& stripe : scene.stripes) {
    if (stripe.rect.contains(x, y)) return stripe.color;
  }
  for (const auto& road : scene.roads) {
    if (road.rect.contains(x, y)) return road.color;
  }
  return scene.background;
}

Scene sample_scene(std::uint64_t seed, const SceneConfig& config) {
  Rng rng(seed ^ 0xb5ad4eceda1ce2a9ull);
  Scene scene;
  scene.seed = seed;

  // Main road runs along +x through the origin, long enough to cover the
  // grid from any camera.
  const double half_w = rng.uniform(config.road_halfwidth_min, config.road_halfwidth_max);
  const double gray = rng.uniform(80.0, 115.0);
  const auto g8 = static_cast<std::uint8_t>(std::lround(gray));
  RoadPatch main_road;
  main_road.rect = {0.0, 0.0, 0.0, config.extent_x * 1.5, half_w};
  main_road.color = {g8, g8, static_cast<std::uint8_t>(std::min(255, g8 + 4))};
  scene.roads.push_back(main_road);

  const bool crossing = rng.uniform() < config.cross_road_probability;
  double cross_half_w = 0;
  if (crossing) {
    cross_half_w = rng.uniform(config.road_halfwidth_min, config.road_halfwidth_max);
    RoadPatch cross;
    cross.rect = {0.0, 0.0, kPi / 2.0, config.extent_y * 1.5, cross_half_w};
    cross.color = main_road.color;
    scene.roads.push_back(cross);
  }

  // Dashed center line plus solid edge lines on the main road.
  const Rgb8 stripe_white{240, 240, 240};
  const Rgb8 stripe_yellow{230, 200, 60};
  const Rgb8 center_color = rng.uniform() < 0.5 ? stripe_white : stripe_yellow;
  const double dash_len = 0.9, dash_gap = 1.1;
  for (double x = -config.extent_x; x < config.extent_x; x += dash_len + dash_gap) {
    LaneStripe s;
    s.rect = {x + dash_len / 2.0, 0.0, 0.0, dash_len / 2.0, 0.08};
    s.color = center_color;
    scene.stripes.push_back(s);
  }
  for (const double side : {-1.0, 1.0}) {
    LaneStripe s;
    s.rect = {0.0, side * (half_w - 0.25), 0.0, config.extent_x * 1.5, 0.07};
    s.color = stripe_white;
    scene.stripes.push_back(s);
  }

  const int want = static_cast<int>(rng.uniform_int(config.vehicles_min, config.vehicles_max));
  int placed = 0;
  for (int attempt = 0; attempt < 200 && placed < want; ++attempt) {
    VehicleBox v;
    v.length = rng.uniform(3.6, 4.6);
    v.width = rng.uniform(1.7, 2.0);
    v.height = rng.uniform(1.4, 1.7);
    v.color = kVehiclePalette[rng.uniform_int(0, static_cast<std::int64_t>(std::size(kVehiclePalette)) - 1)];
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    v.cx = sign * rng.uniform(config.vehicle_abs_x_min, config.vehicle_abs_x_max);
    v.cy = rng.uniform(-(half_w - 1.1), half_w - 1.1);
    v.yaw = (rng.uniform() < 0.5 ? 0.0 : kPi) + rng.uniform(-0.12, 0.12);

    // Keep the footprint inside the grid extent and clear of other vehicles.
    const double r = std::hypot(v.length, v.width) / 2.0;
    if (std::abs(v.cx) + r > config.extent_x / 2.0 - 0.2) continue;
    if (std::abs(v.cy) + r > config.extent_y / 2.0 - 0.2) continue;
    bool overlap = false;
    for (const auto& other : scene.vehicles) {
      const double other_r = std::hypot(other.length, other.width) / 2.0;
      if (std::hypot(v.cx - other.cx, v.cy - other.cy) < r + other_r + 0.4) overlap = true;
    }
    if (overlap) continue;
    scene.vehicles.push_back(v);
    ++placed;
  }
  return scene;
}

Image8 render_camera_image(const Scene& scene, const Intrinsics& intr, const Extrinsics& extr) {
  Image8 img;
  img.width = intr.width;
  img.height = intr.height;
  img.rgb.resize(static_cast<std::size_t>(3 * intr.width * intr.height));
  const Vec3 origin = extr.translation;
  parallel_for_index(static_cast<std::size_t>(intr.height), [&](std::size_t yu) {
    const auto py = static_cast<std::int64_t>(yu);
    for (std::int64_t px = 0; px < intr.width; ++px) {
      const Vec3 dir_cam{(static_cast<double>(px) + 0.5 - intr.cx) / intr.fx,
                         (static_cast<double>(py) + 0.5 - intr.cy) / intr.fy, 1.0};
      const Vec3 dir = extr.rotation * dir_cam;
      Rgb8 color = kSkyColor;
      if (const auto hit = trace_ray(scene, origin, dir)) {
        if (hit->kind == RayHit::Kind::Vehicle) {
          color = scene.vehicles[hit->vehicle_index].color;
        } else {
          const Vec3 p = origin + dir * hit->t;
          color = ground_color_at(scene, p.x, p.y);
        }
      }
      img.set(px, py, color);
    }
  });
  return img;
}

Tensor<float> render_camera(const Scene& scene, const Intrinsics& intr, const Extrinsics& extr) {
  return image_to_tensor(render_camera_image(scene, intr, extr));
}

Tensor<float> BevGroundTruth::occupancy_tensor() const {
  auto t = Tensor<float>::zeros({kNumClasses, grid_x, grid_y});
  for (std::size_t i = 0; i < occupancy.size(); ++i) t.data()[i] = static_cast<float>(occupancy[i]);
  return t;
}

Tensor<float> BevGroundTruth::appearance_tensor() const {
  auto t = Tensor<float>::zeros({3, grid_x, grid_y});
  const std::int64_t plane = grid_x * grid_y;
  for (std::int64_t i = 0; i < plane; ++i) {
    const auto& c = appearance[static_cast<std::size_t>(i)];
    t.data()[i] = static_cast<float>(c[0]) / 255.0f;
    t.data()[plane + i] = static_cast<float>(c[1]) / 255.0f;
    t.data()[2 * plane + i] = static_cast<float>(c[2]) / 255.0f;
  }
  return t;
}

BevGroundTruth render_bev_ground_truth(const Scene& scene, const BevGridSpec& spec) {
  BevGroundTruth gt;
  gt.grid_x = spec.grid_x;
  gt.grid_y = spec.grid_y;
  const std::int64_t cells = spec.cells();
  gt.occupancy.assign(static_cast<std::size_t>(kNumClasses * cells), 0);
  gt.appearance.assign(static_cast<std::size_t>(cells), scene.background);
  for (std::int64_t i = 0; i < spec.grid_x; ++i) {
    const double x = spec.cell_center_x(i);
    for (std::int64_t j = 0; j < spec.grid_y; ++j) {
      const double y = spec.cell_center_y(j);
      const std::int64_t cell = i * spec.grid_y + j;
      bool on_road = false, on_lane = false;
      const VehicleBox* vehicle = nullptr;
      for (const auto& road : scene.roads) {
        if (road.rect.contains(x, y)) {
          on_road = true;
          break;
        }
      }
      for (const auto& stripe : scene.stripes) {
        if (stripe.rect.contains(x, y)) {
          on_lane = true;
          break;
        }
      }
      for (const auto& v : scene.vehicles) {
        if (v.footprint().contains(x, y)) {
          vehicle = &v;
          break;
        }
      }
      if (on_road) gt.occupancy[static_cast<std::size_t>(kClassRoad * cells + cell)] = 1;
      if (vehicle) gt.occupancy[static_cast<std::size_t>(kClassVehicle * cells + cell)] = 1;
      if (on_lane) gt.occupancy[static_cast<std::size_t>(kClassLane * cells + cell)] = 1;
      gt.appearance[static_cast<std::size_t>(cell)] =
          vehicle ? vehicle->color : ground_color_at(scene, x, y);
    }
  }
  return gt;
}

std::vector<Vec3> sample_lidar(const Scene& scene, const Vec3& sensor_origin, const SceneConfig& config) {
  if (!(sensor_origin.z > 0)) throw ConfigError("sample_lidar: sensor must be above the ground");
  std::vector<Vec3> returns;
  returns.reserve(static_cast<std::size_t>(config.lidar_channels) *
                  static_cast<std::size_t>(config.lidar_azimuth_steps) / 2);
  for (int ch = 0; ch < config.lidar_channels; ++ch) {
    const double frac = config.lidar_channels == 1
                            ? 0.0
                            : static_cast<double>(ch) / static_cast<double>(config.lidar_channels - 1);
    const double elev =
        (config.lidar_elevation_min_deg + frac * (config.lidar_elevation_max_deg - config.lidar_elevation_min_deg)) *
        kPi / 180.0;
    const double ce = std::cos(elev), se = std::sin(elev);
    for (int az = 0; az < config.lidar_azimuth_steps; ++az) {
      const double a = 2.0 * kPi * static_cast<double>(az) / static_cast<double>(config.lidar_azimuth_steps);
      const Vec3 dir{ce * std::cos(a), ce * std::sin(a), se};
      if (const auto hit = trace_ray(scene, sensor_origin, dir)) {
        if (hit->t <= config.lidar_max_range) returns.push_back(sensor_origin + dir * hit->t);
      }
    }
  }
  return returns;
}

namespace {

nlohmann::json rect_to_json(const RotRect& r) {
  return {{"cx", r.cx}, {"cy", r.cy}, {"yaw", r.yaw}, {"half_len", r.half_len}, {"half_wid", r.half_wid}};
}

RotRect rect_from_json(const nlohmann::json& j) {
  return {j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("yaw").get<double>(),
          j.at("half_len").get<double>(), j.at("half_wid").get<double>()};
}

nlohmann::json color_to_json(const Rgb8& c) { return {c[0], c[1], c[2]}; }

Rgb8 color_from_json(const nlohmann::json& j) {
  return {j[0].get<std::uint8_t>(), j[1].get<std::uint8_t>(), j[2].get<std::uint8_t>()};
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["seed"] = scene.seed;
  j["background"] = color_to_json(scene.background);
  j["roads"] = nlohmann::json::array();
  for (const auto& r : scene.roads) {
    j["roads"].push_back({{"rect", rect_to_json(r.rect)}, {"color", color_to_json(r.color)}});
  }
  j["stripes"] = nlohmann::json::array();
  for (const auto& s : scene.stripes) {
    j["stripes"].push_back({{"rect", rect_to_json(s.rect)}, {"color", color_to_json(s.color)}});
  }
  j["vehicles"] = nlohmann::json::array();
  for (const auto& v : scene.vehicles) {
    j["vehicles"].push_back({{"cx", v.cx},
                             {"cy", v.cy},
                             {"yaw", v.yaw},
                             {"length", v.length},
                             {"width", v.width},
                             {"height", v.height},
                             {"color", color_to_json(v.color)}});
  }
  return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("scene JSON parse error: ") + e.what());
  }
  Scene scene;
  scene.seed = j.value("seed", 0ull);
  scene.background = color_from_json(j.at("background"));
  for (const auto& r : j.at("roads")) {
    scene.roads.push_back({rect_from_json(r.at("rect")), color_from_json(r.at("color"))});
  }
  for (const auto& s : j.at("stripes")) {
    scene.stripes.push_back({rect_from_json(s.at("rect")), color_from_json(s.at("color"))});
  }
  for (const auto& v : j.at("vehicles")) {
    VehicleBox b;
    b.cx = v.at("cx").get<double>();
    b.cy = v.at("cy").get<double>();
    b.yaw = v.at("yaw").get<double>();
    b.length = v.at("length").get<double>();
    b.width = v.at("width").get<double>();
    b.height = v.at("height").get<double>();
    b.color = color_from_json(v.at("color"));
    scene.vehicles.push_back(b);
  }
  return scene;
}

void save_scene_json(const Scene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write scene file: " + path);
  out << scene_to_json(scene) << "\n";
}

Scene load_scene_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return scene_from_json(text);
}

}  // namespace bevpaint
