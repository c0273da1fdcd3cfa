#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bevpaint/common.hpp"

namespace bevpaint {

// Conventions, fixed project-wide:
//   ego frame:    x forward, y left, z up, origin at ego center on the ground
//   camera frame: z along the optical axis, x right, y down
//   pixels:       (u, v) with u rightward, v downward, centers at integer + 0.5

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

struct Mat3 {
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major

  static Mat3 identity() { return {}; }

  static Mat3 rot_z(double rad) {
    const double c = std::cos(rad), s = std::sin(rad);
    return {{c, -s, 0, s, c, 0, 0, 0, 1}};
  }

  static Mat3 rot_y(double rad) {
    const double c = std::cos(rad), s = std::sin(rad);
    return {{c, 0, s, 0, 1, 0, -s, 0, c}};
  }

  static Mat3 rot_x(double rad) {
    const double c = std::cos(rad), s = std::sin(rad);
    return {{1, 0, 0, 0, c, -s, 0, s, c}};
  }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += m[i * 3 + k] * o.m[k * 3 + j];
        r.m[i * 3 + j] = acc;
      }
    return r;
  }

  Mat3 transposed() const {
    return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  Mat3 inverse() const;

  Vec3 col(int j) const { return {m[j], m[3 + j], m[6 + j]}; }
};

// Rectangle on the ground plane, rotated about z. Containment is closed.
struct RotRect {
  double cx = 0, cy = 0;
  double yaw = 0;       // radians
  double half_len = 0;  // along local x
  double half_wid = 0;  // along local y

  bool contains(double x, double y) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = x - cx, dy = y - cy;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= half_len && std::abs(ly) <= half_wid;
  }
};

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  std::int64_t width = 0, height = 0;

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw ConfigError("intrinsics: focal lengths must be positive");
    if (!(cx > 0 && cx < static_cast<double>(width) && cy > 0 && cy < static_cast<double>(height))) {
      throw ConfigError("intrinsics: principal point must lie inside the image");
    }
  }
};

// fx = fy = width / (2 tan(fov/2)), principal point at the image center.
Intrinsics intrinsics_from_fov(double horizontal_fov_deg, std::int64_t width, std::int64_t height);

// Rigid camera -> ego transform: p_ego = R * p_cam + t.
struct Extrinsics {
  Mat3 rotation;
  Vec3 translation;

  void validate() const;

  Vec3 cam_to_ego(const Vec3& p_cam) const { return rotation * p_cam + translation; }
  Vec3 ego_to_cam(const Vec3& p_ego) const { return rotation.transposed() * (p_ego - translation); }
};

struct Camera {
  std::string name;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
};

struct CameraRig {
  std::vector<Camera> cameras;  // order is stable; it defines colorization priority

  std::size_t size() const { return cameras.size(); }
};

struct Pixel {
  double u = 0, v = 0;
};

// Pinhole projection; points at or behind the camera plane are flagged, not
// thrown.
inline std::optional<Pixel> project(const Vec3& p_cam, const Intrinsics& k) {
  if (p_cam.z <= 1e-9) return std::nullopt;
  return Pixel{k.fx * p_cam.x / p_cam.z + k.cx, k.fy * p_cam.y / p_cam.z + k.cy};
}

inline Vec3 unproject(const Pixel& px, double depth, const Intrinsics& k) {
  if (!(depth > 0)) throw ConfigError("unproject: depth must be positive");
  return {(px.u - k.cx) / k.fx * depth, (px.v - k.cy) / k.fy * depth, depth};
}

inline bool pixel_in_bounds(const Pixel& px, const Intrinsics& k) {
  return px.u >= 0 && px.u < static_cast<double>(k.width) && px.v >= 0 && px.v < static_cast<double>(k.height);
}

// ---- frustum for the lift step ---------------------------------------------

struct DepthBins {
  double d_min = 4.0;
  double d_max = 45.0;
  double d_step = 1.0;

  std::int64_t count() const;
  double depth_of(std::int64_t k) const { return d_min + static_cast<double>(k) * d_step; }
};

// Ego-frame points for every (depth bin, downsampled pixel). Pixel rays go
// through the full-resolution center of each downsample x downsample block.
struct FrustumPoints {
  std::int64_t depth_bins = 0;
  std::int64_t grid_h = 0;  // H / downsample
  std::int64_t grid_w = 0;  // W / downsample
  std::vector<Vec3> points;  // depth-major, then row, then column

  const Vec3& at(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return points[static_cast<std::size_t>((d * grid_h + h) * grid_w + w)];
  }
};

FrustumPoints build_frustum(const Intrinsics& intr, const Extrinsics& extr, std::int64_t downsample,
                            const DepthBins& bins);

// ---- IPM homography ---------------------------------------------------------

// Maps ground-plane ego coordinates (x, y, 1) on z = ground_z to homogeneous
// pixel coordinates; the homogeneous w component is the camera-frame depth.
struct Homography {
  Mat3 h;

  Vec3 apply(double x, double y) const { return h * Vec3{x, y, 1.0}; }
};

Homography ipm_homography(const Intrinsics& intr, const Extrinsics& extr, double ground_z = 0.0);

// ---- rig construction and JSON I/O ------------------------------------------

// Camera looking along ego +x when yaw = 0; positive pitch tilts the optical
// axis down. Height/positions follow the fixed convention of cameras mounted
// 1.6 m above ground at the vehicle perimeter.
Extrinsics make_camera_extrinsics(const Vec3& position, double yaw_deg, double pitch_down_deg);

// Six-camera surround rig: yaws 55, 0, -55, 110, -110, 180 degrees with
// 70-degree FOV for the five forward/side cameras and 110 degrees for the rear.
CameraRig make_surround6_rig(std::int64_t image_w, std::int64_t image_h, double pitch_down_deg = 5.0);

// Three front cameras (yaws 55, 0, -55; FOV 70) covering 180 degrees forward.
CameraRig make_front3_rig(std::int64_t image_w, std::int64_t image_h, double pitch_down_deg = 5.0);

// Two cameras (front/rear) used by the small end-to-end configuration.
CameraRig make_pair_rig(std::int64_t image_w, std::int64_t image_h, double fov_deg = 90.0,
                        double pitch_down_deg = 10.0);

CameraRig load_rig_json(const std::string& path);
void save_rig_json(const CameraRig& rig, const std::string& path);

// Canonical camera ordering for pooling: cameras ranked by their calibration
// signature rather than list position, so permuting the rig list cannot
// change the reduction order.
std::vector<std::uint32_t> camera_canonical_ranks(const CameraRig& rig);

}  // namespace bevpaint
