#include "bevpaint/colorize.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace bevpaint {

std::vector<Vec3> Cuboid::corners() const {
  std::vector<Vec3> out;
  out.reserve(8);
  const double c = std::cos(yaw), s = std::sin(yaw);
  for (const double sx : {-0.5, 0.5}) {
    for (const double sy : {-0.5, 0.5}) {
      for (const double sz : {-0.5, 0.5}) {
        const double lx = sx * length, ly = sy * width, lz = sz * height;
        out.push_back({center.x + c * lx - s * ly, center.y + s * lx + c * ly, center.z + lz});
      }
    }
  }
  return out;
}

std::vector<ColoredPoint> colorize_points(const std::vector<Vec3>& points,
                                          const std::vector<Image8>& images, const CameraRig& rig) {
  if (images.size() != rig.size()) {
    throw ShapeError("colorize_points: " + std::to_string(images.size()) + " images for " +
                     std::to_string(rig.size()) + " cameras");
  }
  std::vector<ColoredPoint> out(points.size());
  parallel_for_index(points.size(), [&](std::size_t pi) {
    ColoredPoint cp;
    cp.position = points[pi];
    for (std::size_t k = 0; k < rig.size(); ++k) {
      const auto& cam = rig.cameras[k];
      const Vec3 p_cam = cam.extrinsics.ego_to_cam(points[pi]);
      const auto px = project(p_cam, cam.intrinsics);
      if (!px || !pixel_in_bounds(*px, cam.intrinsics)) continue;
      const auto u = static_cast<std::int64_t>(px->u);
      const auto v = static_cast<std::int64_t>(px->v);
      cp.color = images[k].at(u, v);
      cp.camera = static_cast<int>(k);
      break;
    }
    out[pi] = cp;
  });
  return out;
}

std::uint8_t histogram_mode(const std::vector<std::uint8_t>& values) {
  if (values.empty()) throw ConfigError("histogram_mode: empty value list");
  std::array<std::int64_t, 25> bins{};
  for (const std::uint8_t v : values) {
    const int b = std::min<int>(v / 10, 24);  // 250..255 fold into the last bin
    bins[static_cast<std::size_t>(b)] += 1;
  }
  int best = 0;
  for (int b = 1; b < 25; ++b) {
    if (bins[static_cast<std::size_t>(b)] > bins[static_cast<std::size_t>(best)]) best = b;
  }
  const int rep = best * 10 + 5;
  return static_cast<std::uint8_t>(std::min(rep, 255));
}

namespace {

// Monotone-chain convex hull; returns CCW vertices (y grows downward in
// image space, but orientation consistency is all we need).
std::vector<Pixel> convex_hull(std::vector<Pixel> pts) {
  std::sort(pts.begin(), pts.end(), [](const Pixel& a, const Pixel& b) {
    return a.u != b.u ? a.u < b.u : a.v < b.v;
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Pixel& a, const Pixel& b) { return a.u == b.u && a.v == b.v; }),
            pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  auto cross = [](const Pixel& o, const Pixel& a, const Pixel& b) {
    return (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u);
  };
  std::vector<Pixel> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool point_in_hull(const std::vector<Pixel>& hull, double u, double v) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    const double cr = (b.u - a.u) * (v - a.v) - (b.v - a.v) * (u - a.u);
    if (cr < -1e-12) return false;
  }
  return true;
}

}  // namespace

Rgb8 cuboid_color(const Cuboid& cuboid, const std::vector<Image8>& images, const CameraRig& rig) {
  if (images.size() != rig.size()) {
    throw ShapeError("cuboid_color: " + std::to_string(images.size()) + " images for " +
                     std::to_string(rig.size()) + " cameras");
  }
  const auto corners = cuboid.corners();
  int best_cam = -1;
  std::size_t best_visible = 0;
  std::vector<Pixel> best_pixels;
  for (std::size_t k = 0; k < rig.size(); ++k) {
    const auto& cam = rig.cameras[k];
    std::vector<Pixel> visible;
    for (const auto& corner : corners) {
      const auto px = project(cam.extrinsics.ego_to_cam(corner), cam.intrinsics);
      if (px && pixel_in_bounds(*px, cam.intrinsics)) visible.push_back(*px);
    }
    if (visible.size() > best_visible) {
      best_visible = visible.size();
      best_cam = static_cast<int>(k);
      best_pixels = std::move(visible);
    }
  }
  if (best_cam < 0) throw ConfigError("uncolorable cuboid: not visible in any camera");

  const Image8& img = images[static_cast<std::size_t>(best_cam)];
  const auto hull = convex_hull(best_pixels);

  std::vector<std::uint8_t> r, g, b;
  auto push_pixel = [&](std::int64_t x, std::int64_t y) {
    const auto c = img.at(x, y);
    r.push_back(c[0]);
    g.push_back(c[1]);
    b.push_back(c[2]);
  };

  double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
  for (const auto& p : best_pixels) {
    umin = std::min(umin, p.u);
    umax = std::max(umax, p.u);
    vmin = std::min(vmin, p.v);
    vmax = std::max(vmax, p.v);
  }
  const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(umin)));
  const auto x1 = std::min<std::int64_t>(img.width - 1, static_cast<std::int64_t>(std::ceil(umax)));
  const auto y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(vmin)));
  const auto y1 = std::min<std::int64_t>(img.height - 1, static_cast<std::int64_t>(std::ceil(vmax)));
  for (std::int64_t y = y0; y <= y1; ++y) {
    for (std::int64_t x = x0; x <= x1; ++x) {
      if (point_in_hull(hull, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) push_pixel(x, y);
    }
  }
  // A near-degenerate hull (few visible corners) can cover no pixel centers;
  // the corner pixels themselves are always representative.
  if (r.empty()) {
    for (const auto& p : best_pixels) {
      push_pixel(static_cast<std::int64_t>(p.u), static_cast<std::int64_t>(p.v));
    }
  }
  return {histogram_mode(r), histogram_mode(g), histogram_mode(b)};
}

PaintedBev paint_bev(const std::vector<ColoredPoint>& points, const std::vector<Cuboid>& cuboids,
                     const BevGridSpec& spec) {
  PaintedBev out;
  out.appearance = Tensor<float>::zeros({3, spec.grid_x, spec.grid_y});
  out.valid.assign(static_cast<std::size_t>(spec.cells()), 0);
  const std::int64_t cells = spec.cells();

  // Static layer: mean of point colors per cell. Sums of 8-bit values are
  // integer-exact in doubles, so accumulation order does not matter.
  std::vector<double> acc(static_cast<std::size_t>(3 * cells), 0.0);
  std::vector<std::int64_t> count(static_cast<std::size_t>(cells), 0);
  for (const auto& p : points) {
    if (p.camera < 0) continue;
    const std::int32_t cell = bev_flat_cell_of(p.position, spec);
    if (cell < 0) continue;
    acc[static_cast<std::size_t>(cell)] += p.color[0];
    acc[static_cast<std::size_t>(cells + cell)] += p.color[1];
    acc[static_cast<std::size_t>(2 * cells + cell)] += p.color[2];
    count[static_cast<std::size_t>(cell)] += 1;
  }
  float* dst = out.appearance.data();
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    if (count[static_cast<std::size_t>(cell)] == 0) continue;
    const double inv = 1.0 / (255.0 * static_cast<double>(count[static_cast<std::size_t>(cell)]));
    dst[cell] = static_cast<float>(acc[static_cast<std::size_t>(cell)] * inv);
    dst[cells + cell] = static_cast<float>(acc[static_cast<std::size_t>(cells + cell)] * inv);
    dst[2 * cells + cell] = static_cast<float>(acc[static_cast<std::size_t>(2 * cells + cell)] * inv);
    out.valid[static_cast<std::size_t>(cell)] = 1;
  }

  // Dynamic layer: cuboid footprints overwrite.
  for (const auto& cub : cuboids) {
    const RotRect fp = cub.footprint();
    for (std::int64_t i = 0; i < spec.grid_x; ++i) {
      const double x = spec.cell_center_x(i);
      for (std::int64_t j = 0; j < spec.grid_y; ++j) {
        if (!fp.contains(x, spec.cell_center_y(j))) continue;
        const std::int64_t cell = i * spec.grid_y + j;
        dst[cell] = static_cast<float>(cub.color[0]) / 255.0f;
        dst[cells + cell] = static_cast<float>(cub.color[1]) / 255.0f;
        dst[2 * cells + cell] = static_cast<float>(cub.color[2]) / 255.0f;
        out.valid[static_cast<std::size_t>(cell)] = 1;
      }
    }
  }
  return out;
}

std::vector<Vec3> load_point_cloud_txt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open point cloud: " + path);
  std::vector<Vec3> pts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x >> p.y >> p.z)) throw ConfigError("bad point cloud line in " + path + ": " + line);
    pts.push_back(p);
  }
  return pts;
}

void save_point_cloud_txt(const std::vector<Vec3>& points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write point cloud: " + path);
  out.precision(17);
  for (const auto& p : points) out << p.x << " " << p.y << " " << p.z << "\n";
}

std::vector<Cuboid> load_cuboids_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open cuboid file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("cuboid file " + path + " is not valid JSON: " + e.what());
  }
  std::vector<Cuboid> out;
  for (const auto& jc : j) {
    Cuboid c;
    const auto& ctr = jc.at("center");
    c.center = {ctr[0].get<double>(), ctr[1].get<double>(), ctr[2].get<double>()};
    c.yaw = jc.at("yaw").get<double>();
    const auto& dims = jc.at("dims");
    c.length = dims[0].get<double>();
    c.width = dims[1].get<double>();
    c.height = dims[2].get<double>();
    if (!(c.length > 0 && c.width > 0 && c.height > 0)) {
      throw ConfigError("cuboid with non-positive dimensions in " + path);
    }
    out.push_back(c);
  }
  return out;
}

void save_cuboids_json(const std::vector<Cuboid>& cuboids, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cuboids) {
    j.push_back({{"center", {c.center.x, c.center.y, c.center.z}},
                 {"yaw", c.yaw},
                 {"dims", {c.length, c.width, c.height}}});
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write cuboid file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace bevpaint
