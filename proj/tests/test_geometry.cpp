#include <cmath>

#include "bevpaint/geometry.hpp"
#include "bevpaint/ipm.hpp"
#include "bevpaint/scene.hpp"
#include "doctest.h"

using namespace bevpaint;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("intrinsics_from_fov") {
  CHECK(intrinsics_from_fov(90, 1000, 600).fx == doctest::Approx(500.0));
  // width / (2 tan(fov/2))
  CHECK(intrinsics_from_fov(70, 1920, 1080).fx == doctest::Approx(1371.0220864724301).epsilon(1e-9));
  CHECK(intrinsics_from_fov(110, 1920, 1080).fx == doctest::Approx(672.1992366813214).epsilon(1e-9));
  CHECK_THROWS_AS(intrinsics_from_fov(0, 100, 100), ConfigError);
  CHECK_THROWS_AS(intrinsics_from_fov(180, 100, 100), ConfigError);
}

TEST_CASE("project and unproject") {
  Intrinsics k{100, 100, 64, 64, 128, 128};
  auto p = project({0, 0, 5}, k);
  REQUIRE(p.has_value());
  CHECK(p->u == doctest::Approx(64));
  CHECK(p->v == doctest::Approx(64));

  p = project({1, 0, 5}, k);
  REQUIRE(p.has_value());
  CHECK(p->u == doctest::Approx(84));

  CHECK(!project({0, 0, -1}, k).has_value());
  CHECK(!project({0, 0, 0}, k).has_value());

  const Vec3 q = unproject({64, 64}, 10, k);
  CHECK(q.x == doctest::Approx(0));
  CHECK(q.y == doctest::Approx(0));
  CHECK(q.z == doctest::Approx(10));
  CHECK(unproject({84, 64}, 5, k).x == doctest::Approx(1.0));
  CHECK_THROWS_AS(unproject({0, 0}, -1, k), ConfigError);
}

TEST_CASE("project-unproject round trip") {
  Intrinsics k{251.5, 251.5, 176, 64, 352, 128};
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const Pixel px{rng.uniform(0, 352), rng.uniform(0, 128)};
    const double d = rng.uniform(0.5, 60.0);
    const auto back = project(unproject(px, d, k), k);
    REQUIRE(back.has_value());
    CHECK(std::abs(back->u - px.u) < 1e-9);
    CHECK(std::abs(back->v - px.v) < 1e-9);
  }
}

TEST_CASE("cam_to_ego") {
  Extrinsics identity;
  const Vec3 p{1.5, -2.0, 3.0};
  const Vec3 q = identity.cam_to_ego(p);
  CHECK(q.x == p.x);
  CHECK(q.y == p.y);
  CHECK(q.z == p.z);

  Extrinsics trans{Mat3::identity(), {1, 2, 3}};
  const Vec3 t = trans.cam_to_ego({0, 0, 0});
  CHECK(t.x == 1);
  CHECK(t.y == 2);
  CHECK(t.z == 3);

  Extrinsics yaw90{Mat3::rot_z(kPi / 2), {0, 0, 0}};
  const Vec3 r = yaw90.cam_to_ego({1, 0, 0});
  CHECK(std::abs(r.x - 0.0) < 1e-12);
  CHECK(std::abs(r.y - 1.0) < 1e-12);
  CHECK(std::abs(r.z - 0.0) < 1e-12);
}

TEST_CASE("extrinsics validation rejects non-rotations") {
  Extrinsics bad{Mat3{{1, 0, 0, 0, 2, 0, 0, 0, 1}}, {0, 0, 0}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  // Reflection: orthonormal but det = -1.
  Extrinsics refl{Mat3{{1, 0, 0, 0, 1, 0, 0, 0, -1}}, {0, 0, 0}};
  CHECK_THROWS_AS(refl.validate(), ConfigError);
}

TEST_CASE("cam_to_ego is an isometry") {
  const Extrinsics e = make_camera_extrinsics({1.2, -0.4, 1.6}, 37.0, 8.0);
  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const Vec3 b{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const double before = (a - b).norm();
    const double after = (e.cam_to_ego(a) - e.cam_to_ego(b)).norm();
    CHECK(std::abs(before - after) < 1e-9);
  }
}

TEST_CASE("frustum bin count and layout") {
  const DepthBins bins{4.0, 45.0, 1.0};
  CHECK(bins.count() == 41);

  const Intrinsics k = intrinsics_from_fov(70, 352, 128);
  const Extrinsics identity;
  const FrustumPoints f = build_frustum(k, identity, 16, bins);
  CHECK(f.depth_bins == 41);
  CHECK(f.grid_h == 8);
  CHECK(f.grid_w == 22);

  // Identity extrinsics: the camera-frame z of bin k is exactly its depth.
  for (std::int64_t d = 0; d < f.depth_bins; ++d) {
    for (std::int64_t h = 0; h < f.grid_h; h += 3) {
      for (std::int64_t w = 0; w < f.grid_w; w += 7) {
        CHECK(f.at(d, h, w).z == 4.0 + static_cast<double>(d));
      }
    }
  }

  CHECK_THROWS_AS(build_frustum(Intrinsics{100, 100, 50, 50, 100, 100}, identity, 16, bins), ConfigError);
  CHECK_THROWS_AS(build_frustum(k, identity, 16, DepthBins{4.0, 45.5, 1.0}), ConfigError);
}

TEST_CASE("every frustum point projects back into its image") {
  const auto rig = make_surround6_rig(352, 128);
  const DepthBins bins{4.0, 45.0, 1.0};
  for (const auto& cam : rig.cameras) {
    const FrustumPoints f = build_frustum(cam.intrinsics, cam.extrinsics, 16, bins);
    for (std::size_t i = 0; i < f.points.size(); i += 17) {
      const auto px = project(cam.extrinsics.ego_to_cam(f.points[i]), cam.intrinsics);
      REQUIRE(px.has_value());
      CHECK(pixel_in_bounds(*px, cam.intrinsics));
    }
  }
}

TEST_CASE("ipm homography agrees with direct projection") {
  const Extrinsics e = make_camera_extrinsics({2.0, 0.0, 1.6}, 0.0, 8.0);
  const Intrinsics k = intrinsics_from_fov(70, 352, 128);
  const Homography h = ipm_homography(k, e, 0.0);
  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(5, 40);
    const double y = rng.uniform(-10, 10);
    const auto direct = project(e.ego_to_cam({x, y, 0.0}), k);
    if (!direct) continue;
    const Vec3 v = h.apply(x, y);
    REQUIRE(v.z > 0);
    CHECK(std::abs(v.x / v.z - direct->u) < 1e-9);
    CHECK(std::abs(v.y / v.z - direct->v) < 1e-9);
  }
}

TEST_CASE("ipm homography is invertible for the front camera") {
  const Extrinsics e = make_camera_extrinsics({2.0, 0.0, 1.6}, 0.0, 5.0);
  const Intrinsics k = intrinsics_from_fov(70, 1920, 1080);
  const Homography h = ipm_homography(k, e, 0.0);
  CHECK(std::abs(h.h.det()) > 1e-12);
  // Below-ground camera is rejected.
  CHECK_THROWS_AS(ipm_homography(k, make_camera_extrinsics({0, 0, -1.0}, 0, 5), 0.0), ConfigError);
}

TEST_CASE("ipm homography inverse matches ray-ground intersection") {
  const Extrinsics e = make_camera_extrinsics({1.5, 0.5, 1.7}, 20.0, 9.0);
  const Intrinsics k = intrinsics_from_fov(80, 640, 360);
  const Homography h = ipm_homography(k, e, 0.0);
  const Mat3 hinv = h.h.inverse();
  Rng rng(51);
  for (int i = 0; i < 200; ++i) {
    // Pixels safely below the horizon: cast the ray analytically.
    const Pixel px{rng.uniform(0, 640), rng.uniform(250, 360)};
    const Vec3 dir = e.rotation * Vec3{(px.u - k.cx) / k.fx, (px.v - k.cy) / k.fy, 1.0};
    if (dir.z > -1e-3) continue;
    const double t = -e.translation.z / dir.z;
    const Vec3 ground = e.translation + dir * t;

    const Vec3 mapped = hinv * Vec3{px.u, px.v, 1.0};
    REQUIRE(std::abs(mapped.z) > 1e-15);
    CHECK(std::abs(mapped.x / mapped.z - ground.x) < 1e-6);
    CHECK(std::abs(mapped.y / mapped.z - ground.y) < 1e-6);
  }
}

TEST_CASE("horizon pixels map toward infinity") {
  // A level camera: the ground point at infinite distance projects onto the
  // horizon row, so the homography's w component vanishes there.
  const Extrinsics e = make_camera_extrinsics({0, 0, 1.6}, 0.0, 0.0);
  const Intrinsics k = intrinsics_from_fov(90, 128, 128);
  const Homography h = ipm_homography(k, e, 0.0);
  // Walk the ground forward; w = camera depth keeps growing, u/v approach cy.
  const Vec3 near = h.apply(10.0, 0.0);
  const Vec3 far = h.apply(1e9, 0.0);
  CHECK(std::abs(far.y / far.z - k.cy) < 1e-5);  // v at the horizon row
  CHECK(near.y / near.z > k.cy);                 // nearer ground is below it
}

TEST_CASE("rig json round trip") {
  const auto rig = make_surround6_rig(352, 128);
  const std::string path = "test_rig_roundtrip.json";
  save_rig_json(rig, path);
  const auto loaded = load_rig_json(path);
  REQUIRE(loaded.size() == rig.size());
  for (std::size_t i = 0; i < rig.size(); ++i) {
    CHECK(loaded.cameras[i].name == rig.cameras[i].name);
    CHECK(loaded.cameras[i].intrinsics.fx == doctest::Approx(rig.cameras[i].intrinsics.fx));
    for (int m = 0; m < 9; ++m) {
      CHECK(loaded.cameras[i].extrinsics.rotation.m[m] ==
            doctest::Approx(rig.cameras[i].extrinsics.rotation.m[m]).epsilon(1e-12));
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("surround rig matches the reference layout") {
  const auto rig = make_surround6_rig(1920, 1080);
  REQUIRE(rig.size() == 6);
  // Five 70-degree cameras and a 110-degree rear camera.
  CHECK(rig.cameras[0].intrinsics.fx == doctest::Approx(1371.0220864724301).epsilon(1e-9));
  CHECK(rig.cameras[5].intrinsics.fx == doctest::Approx(672.1992366813214).epsilon(1e-9));
  // Yaw of the front camera is zero: its optical axis is +x.
  const Vec3 axis = rig.cameras[1].extrinsics.rotation * Vec3{0, 0, 1};
  CHECK(axis.x == doctest::Approx(std::cos(5.0 * kPi / 180.0)));
  CHECK(std::abs(axis.y) < 1e-12);
}

TEST_CASE("canonical camera ranks are list-order independent") {
  auto rig = make_surround6_rig(352, 128);
  const auto ranks = camera_canonical_ranks(rig);
  CameraRig permuted;
  const std::size_t perm[] = {3, 0, 5, 1, 4, 2};
  for (const auto p : perm) permuted.cameras.push_back(rig.cameras[p]);
  const auto pranks = camera_canonical_ranks(permuted);
  for (std::size_t i = 0; i < 6; ++i) CHECK(pranks[i] == ranks[perm[i]]);
}
