#include "bevpaint/geometry.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace bevpaint {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
}  // namespace

Mat3 Mat3::inverse() const {
  const double d = det();
  if (std::abs(d) < 1e-15) throw NumericError("Mat3::inverse: singular matrix");
  const double inv = 1.0 / d;
  Mat3 r;
  r.m[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
  r.m[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
  r.m[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
  r.m[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
  r.m[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
  r.m[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
  r.m[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
  r.m[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
  r.m[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
  return r;
}

Intrinsics intrinsics_from_fov(double horizontal_fov_deg, std::int64_t width, std::int64_t height) {
  if (!(horizontal_fov_deg > 0 && horizontal_fov_deg < 180)) {
    throw ConfigError("intrinsics_from_fov: fov must be in (0, 180) degrees, got " +
                      std::to_string(horizontal_fov_deg));
  }
  Intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = k.fy = static_cast<double>(width) / (2.0 * std::tan(horizontal_fov_deg * kDegToRad / 2.0));
  k.cx = static_cast<double>(width) / 2.0;
  k.cy = static_cast<double>(height) / 2.0;
  k.validate();
  return k;
}

void Extrinsics::validate() const {
  const Mat3 rtr = rotation.transposed() * rotation;
  const Mat3 eye = Mat3::identity();
  for (int i = 0; i < 9; ++i) {
    if (std::abs(rtr.m[i] - eye.m[i]) > 1e-9) {
      throw ConfigError("extrinsics: rotation is not orthonormal (R^T R deviates at entry " +
                        std::to_string(i) + ")");
    }
  }
  if (std::abs(rotation.det() - 1.0) > 1e-9) {
    throw ConfigError("extrinsics: rotation determinant must be +1");
  }
}

std::int64_t DepthBins::count() const {
  if (!(d_min > 0) || !(d_max > d_min) || !(d_step > 0)) {
    throw ConfigError("depth bins require d_max > d_min > 0 and step > 0");
  }
  const double n = (d_max - d_min) / d_step;
  if (std::abs(n - std::round(n)) > 1e-9) {
    throw ConfigError("depth range (d_max - d_min) must be divisible by the step");
  }
  return static_cast<std::int64_t>(std::llround(n));
}

FrustumPoints build_frustum(const Intrinsics& intr, const Extrinsics& extr, std::int64_t downsample,
                            const DepthBins& bins) {
  if (downsample < 1) throw ConfigError("build_frustum: downsample must be >= 1");
  if (intr.height % downsample != 0 || intr.width % downsample != 0) {
    throw ConfigError("build_frustum: image " + std::to_string(intr.width) + "x" + std::to_string(intr.height) +
                      " is not divisible by downsample " + std::to_string(downsample));
  }
  FrustumPoints f;
  f.depth_bins = bins.count();
  f.grid_h = intr.height / downsample;
  f.grid_w = intr.width / downsample;
  f.points.resize(static_cast<std::size_t>(f.depth_bins * f.grid_h * f.grid_w));
  const double ds = static_cast<double>(downsample);
  std::size_t idx = 0;
  for (std::int64_t d = 0; d < f.depth_bins; ++d) {
    const double depth = bins.depth_of(d);
    for (std::int64_t h = 0; h < f.grid_h; ++h) {
      const double v = (static_cast<double>(h) + 0.5) * ds;
      for (std::int64_t w = 0; w < f.grid_w; ++w) {
        const double u = (static_cast<double>(w) + 0.5) * ds;
        f.points[idx++] = extr.cam_to_ego(unproject({u, v}, depth, intr));
      }
    }
  }
  return f;
}

Homography ipm_homography(const Intrinsics& intr, const Extrinsics& extr, double ground_z) {
  if (extr.translation.z <= ground_z) {
    throw ConfigError("ipm_homography: camera must be above the ground plane");
  }
  // q_cam = M p_ego + c with M = R^T, c = -R^T t; restrict p_ego to z = ground_z.
  const Mat3 M = extr.rotation.transposed();
  const Vec3 c = (M * extr.translation) * -1.0;
  const Vec3 col0 = M.col(0);
  const Vec3 col1 = M.col(1);
  const Vec3 col2 = M.col(2) * ground_z + c;
  Mat3 plane{{col0.x, col1.x, col2.x, col0.y, col1.y, col2.y, col0.z, col1.z, col2.z}};
  Mat3 k{{intr.fx, 0, intr.cx, 0, intr.fy, intr.cy, 0, 0, 1}};
  Homography h{k * plane};
  if (std::abs(h.h.det()) <= 1e-12) {
    throw ConfigError("ipm_homography: degenerate viewing geometry");
  }
  return h;
}

Extrinsics make_camera_extrinsics(const Vec3& position, double yaw_deg, double pitch_down_deg) {
  // Level camera looking along ego +x: cam x (right) -> -y, cam y (down) -> -z,
  // cam z (optical axis) -> +x.
  const Mat3 base{{0, 0, 1, -1, 0, 0, 0, -1, 0}};
  const Mat3 r = Mat3::rot_z(yaw_deg * kDegToRad) * Mat3::rot_y(pitch_down_deg * kDegToRad) * base;
  Extrinsics e{r, position};
  e.validate();
  return e;
}

namespace {

Camera make_camera(const std::string& name, const Vec3& pos, double yaw_deg, double fov_deg,
                   std::int64_t w, std::int64_t h, double pitch_down_deg) {
  Camera c;
  c.name = name;
  c.intrinsics = intrinsics_from_fov(fov_deg, w, h);
  c.extrinsics = make_camera_extrinsics(pos, yaw_deg, pitch_down_deg);
  return c;
}

}  // namespace

CameraRig make_surround6_rig(std::int64_t image_w, std::int64_t image_h, double pitch_down_deg) {
  const double z = 1.6;
  CameraRig rig;
  rig.cameras = {
      make_camera("front_left", {1.8, 0.7, z}, 55.0, 70.0, image_w, image_h, pitch_down_deg),
      make_camera("front", {2.0, 0.0, z}, 0.0, 70.0, image_w, image_h, pitch_down_deg),
      make_camera("front_right", {1.8, -0.7, z}, -55.0, 70.0, image_w, image_h, pitch_down_deg),
      make_camera("rear_left", {-1.8, 0.7, z}, 110.0, 70.0, image_w, image_h, pitch_down_deg),
      make_camera("rear_right", {-1.8, -0.7, z}, -110.0, 70.0, image_w, image_h, pitch_down_deg),
      make_camera("rear", {-2.0, 0.0, z}, 180.0, 110.0, image_w, image_h, pitch_down_deg),
  };
  return rig;
}

CameraRig make_front3_rig(std::int64_t image_w, std::int64_t image_h, double pitch_down_deg) {
  const double z = 1.6;
  CameraRig rig;
  rig.cameras = {
      make_camera("front_left", {1.8, 0.7, z}, 55.0, 70.0, image_w, image_h, pitch_down_deg),
      make_camera("front", {2.0, 0.0, z}, 0.0, 70.0, image_w, image_h, pitch_down_deg),
      make_camera("front_right", {1.8, -0.7, z}, -55.0, 70.0, image_w, image_h, pitch_down_deg),
  };
  return rig;
}

CameraRig make_pair_rig(std::int64_t image_w, std::int64_t image_h, double fov_deg, double pitch_down_deg) {
  const double z = 1.6;
  CameraRig rig;
  rig.cameras = {
      make_camera("front", {0.5, 0.0, z}, 0.0, fov_deg, image_w, image_h, pitch_down_deg),
      make_camera("rear", {-0.5, 0.0, z}, 180.0, fov_deg, image_w, image_h, pitch_down_deg),
  };
  return rig;
}

CameraRig load_rig_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rig file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("rig file " + path + " is not valid JSON: " + e.what());
  }
  CameraRig rig;
  for (const auto& jc : j.at("cameras")) {
    Camera c;
    c.name = jc.value("name", "");
    c.intrinsics.fx = jc.at("fx").get<double>();
    c.intrinsics.fy = jc.at("fy").get<double>();
    c.intrinsics.cx = jc.at("cx").get<double>();
    c.intrinsics.cy = jc.at("cy").get<double>();
    c.intrinsics.width = jc.at("width").get<std::int64_t>();
    c.intrinsics.height = jc.at("height").get<std::int64_t>();
    c.intrinsics.validate();
    const auto rot = jc.at("rotation");
    if (rot.size() != 9) throw ConfigError("rig camera rotation must have 9 entries");
    for (int i = 0; i < 9; ++i) c.extrinsics.rotation.m[i] = rot[static_cast<std::size_t>(i)].get<double>();
    const auto tr = jc.at("translation");
    if (tr.size() != 3) throw ConfigError("rig camera translation must have 3 entries");
    c.extrinsics.translation = {tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>()};
    c.extrinsics.validate();
    rig.cameras.push_back(std::move(c));
  }
  if (rig.cameras.empty()) throw ConfigError("rig file has no cameras: " + path);
  return rig;
}

void save_rig_json(const CameraRig& rig, const std::string& path) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : rig.cameras) {
    nlohmann::json jc;
    jc["name"] = c.name;
    jc["fx"] = c.intrinsics.fx;
    jc["fy"] = c.intrinsics.fy;
    jc["cx"] = c.intrinsics.cx;
    jc["cy"] = c.intrinsics.cy;
    jc["width"] = c.intrinsics.width;
    jc["height"] = c.intrinsics.height;
    jc["rotation"] = std::vector<double>(c.extrinsics.rotation.m, c.extrinsics.rotation.m + 9);
    jc["translation"] = {c.extrinsics.translation.x, c.extrinsics.translation.y, c.extrinsics.translation.z};
    cams.push_back(std::move(jc));
  }
  nlohmann::json j;
  j["cameras"] = std::move(cams);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write rig file: " + path);
  out << j.dump(2) << "\n";
}

std::vector<std::uint32_t> camera_canonical_ranks(const CameraRig& rig) {
  const std::size_t n = rig.size();
  std::vector<std::array<double, 19>> sig(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = rig.cameras[i];
    auto& s = sig[i];
    s[0] = c.intrinsics.fx;
    s[1] = c.intrinsics.fy;
    s[2] = c.intrinsics.cx;
    s[3] = c.intrinsics.cy;
    s[4] = static_cast<double>(c.intrinsics.width);
    s[5] = static_cast<double>(c.intrinsics.height);
    for (int k = 0; k < 9; ++k) s[6 + static_cast<std::size_t>(k)] = c.extrinsics.rotation.m[k];
    s[15] = c.extrinsics.translation.x;
    s[16] = c.extrinsics.translation.y;
    s[17] = c.extrinsics.translation.z;
    s[18] = 0.0;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sig[a] != sig[b]) return sig[a] < sig[b];
    return a < b;  // identical calibrations fall back to list order
  });
  std::vector<std::uint32_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = static_cast<std::uint32_t>(r);
  return rank;
}

}  // namespace bevpaint
