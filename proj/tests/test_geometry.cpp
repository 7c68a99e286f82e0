#include <doctest.h>

#include <cmath>
#include <random>

#include "hazardfuse/geometry.hpp"

using namespace hf;

namespace {

Intrinsics test_intr(int w = 64, int h = 48, double f = 64.0) {
  Intrinsics k;
  k.fx = k.fy = f;
  k.cx = (w - 1) / 2.0;
  k.cy = (h - 1) / 2.0;
  k.width = w;
  k.height = h;
  return k;
}

// Depth of the plane {p : p.n = d} seen through each pixel, clipped to z_max.
DepthImage render_plane(const Intrinsics& k, const Eigen::Vector3d& n, double d,
                        double z_max = 5.0) {
  DepthImage img(k.width, k.height, k);
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const Eigen::Vector3d r((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const double rn = r.dot(n);
      if (std::abs(rn) < 1e-9) continue;
      const double z = d / rn;
      if (z <= 0.05 || z > z_max) continue;
      img.depth_mm[img.index(u, v)] = static_cast<std::uint16_t>(std::lround(z * 1000.0));
    }
  return img;
}

// Camera pitched down by pitch_deg over a floor 1.8 m below, optional wall
// 4 m ahead. Returns the depth frame and the true gravity axis in the camera
// frame (the "up" direction, -Y for a level camera).
struct PitchedScene {
  DepthImage depth;
  Eigen::Vector3d up_cam;
};

PitchedScene render_floor_wall(double pitch_deg, bool with_wall, int w = 64, int h = 48,
                               double f = 64.0) {
  // A level camera only sees the floor within the 5 m range through wide
  // bottom-row rays, so level scenes use a wider field of view.
  const Intrinsics k = test_intr(w, h, f);
  const double t = pitch_deg * M_PI / 180.0;
  const Eigen::Vector3d up(0, -std::cos(t), -std::sin(t));
  const Eigen::Vector3d fwd(0, -std::sin(t), std::cos(t));  // horizontal forward

  DepthImage img(k.width, k.height, k);
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const Eigen::Vector3d r((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      double best = 1e9;
      const double rn_floor = r.dot(up);
      if (rn_floor < -1e-9) best = std::min(best, -1.8 / rn_floor);
      if (with_wall) {
        const double rn_wall = r.dot(fwd);
        if (rn_wall > 1e-9) best = std::min(best, 4.0 / rn_wall);
      }
      if (best > 0.05 && best <= 5.0)
        img.depth_mm[img.index(u, v)] = static_cast<std::uint16_t>(std::lround(best * 1000.0));
    }
  return {img, up};
}

double angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("backproject: principal point and unit offset") {
  Intrinsics k = test_intr(128, 48);
  k.cx = 32.0;
  k.cy = 24.0;
  DepthImage img(128, 48, k);
  img.depth_mm[img.index(32, 24)] = 1000;
  img.depth_mm[img.index(96, 24)] = 1000;  // u = cx + fx
  auto cloud = backproject(img);
  const auto p0 = cloud.points[cloud.index(32, 24)];
  CHECK(p0.x() == doctest::Approx(0.f));
  CHECK(p0.y() == doctest::Approx(0.f));
  CHECK(p0.z() == doctest::Approx(1.f));
  const auto p1 = cloud.points[cloud.index(96, 24)];
  CHECK(p1.x() == doctest::Approx(1.f));
  CHECK(p1.y() == doctest::Approx(0.f));
  CHECK(p1.z() == doctest::Approx(1.f));
  CHECK(cloud.valid[cloud.index(0, 0)] == 0);
}

TEST_CASE("backproject: plane scene satisfies the plane equation to <1mm") {
  const Eigen::Vector3d n = Eigen::Vector3d(0.2, -0.9, -0.3).normalized();
  auto img = render_plane(test_intr(), n, -2.0);
  auto cloud = backproject(img);
  int checked = 0;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (!cloud.valid[i]) continue;
    const double residual = cloud.points[i].cast<double>().dot(n) - (-2.0);
    CHECK(std::abs(residual) < 1e-3);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("backproject: depth round-trips through z") {
  auto scene = render_floor_wall(15.0, true);
  auto cloud = backproject(scene.depth);
  for (int y = 0; y < scene.depth.height; ++y)
    for (int x = 0; x < scene.depth.width; ++x) {
      if (!scene.depth.valid_at(x, y)) continue;
      const float z = cloud.points[cloud.index(x, y)].z();
      CHECK(z == doctest::Approx(scene.depth.z_m(x, y)).epsilon(1e-6));
    }
}

TEST_CASE("normals: fronto-parallel wall faces the camera") {
  auto img = render_plane(test_intr(), Eigen::Vector3d(0, 0, 1), 2.0);
  auto nm = estimate_normals(backproject(img), 5);
  const Eigen::Vector3d expect(0, 0, -1);
  int checked = 0;
  for (int y = 4; y < img.height - 4; ++y)
    for (int x = 4; x < img.width - 4; ++x) {
      const std::size_t i = nm.index(x, y);
      REQUIRE(nm.valid[i]);
      CHECK(angle_deg(nm.normals[i].cast<double>(), expect) < 1.0);
      ++checked;
    }
  CHECK(checked > 500);
}

TEST_CASE("normals: floor below a level camera points up (-Y)") {
  auto scene = render_floor_wall(0.0, false, 64, 64, 28.0);
  auto nm = estimate_normals(backproject(scene.depth), 5);
  const Eigen::Vector3d expect(0, -1, 0);
  int checked = 0;
  for (int y = 4; y < scene.depth.height - 4; ++y)
    for (int x = 4; x < scene.depth.width - 4; ++x) {
      const std::size_t i = nm.index(x, y);
      if (!nm.valid[i]) continue;
      CHECK(angle_deg(nm.normals[i].cast<double>(), expect) < 1.0);
      ++checked;
    }
  CHECK(checked > 200);
}

TEST_CASE("normals: isolated valid pixel has no normal") {
  Intrinsics k = test_intr(16, 16);
  DepthImage img(16, 16, k);
  img.depth_mm[img.index(8, 8)] = 2000;
  auto nm = estimate_normals(backproject(img), 5);
  CHECK(nm.valid[nm.index(8, 8)] == 0);
}

TEST_CASE("normals: window must be odd and >= 3") {
  auto img = render_plane(test_intr(), Eigen::Vector3d(0, 0, 1), 2.0);
  auto cloud = backproject(img);
  CHECK_THROWS_AS(estimate_normals(cloud, 4), std::invalid_argument);
  CHECK_THROWS_AS(estimate_normals(cloud, 1), std::invalid_argument);
}

TEST_CASE("gravity: level floor scene converges to (0,-1,0)") {
  auto scene = render_floor_wall(0.0, false, 64, 64, 28.0);
  auto nm = estimate_normals(backproject(scene.depth), 5);
  auto g = estimate_gravity(nm);
  CHECK(!g.fallback);
  CHECK(g.direction.norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(angle_deg(g.direction, Eigen::Vector3d(0, -1, 0)) < 1.0);
  CHECK(g.iterations_used >= 1);
}

TEST_CASE("gravity: pitched camera recovers true up within 1 degree") {
  auto scene = render_floor_wall(10.0, true);
  auto nm = estimate_normals(backproject(scene.depth), 5);
  auto g = estimate_gravity(nm);
  CHECK(!g.fallback);
  const double err = angle_deg(g.direction, scene.up_cam);
  CHECK(err < 1.0);
  // Beats the 10-degree-off initialization.
  CHECK(err < angle_deg(Eigen::Vector3d(0, -1, 0), scene.up_cam));
}

TEST_CASE("gravity: pure noise normals fall back to the initialization") {
  NormalMap nm;
  nm.width = 48;
  nm.height = 48;
  nm.normals.resize(48 * 48);
  nm.valid.assign(48 * 48, 1);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& n : nm.normals) {
    Eigen::Vector3d v(gauss(rng), gauss(rng), gauss(rng));
    n = v.normalized().cast<float>();
  }
  auto g = estimate_gravity(nm);
  CHECK(g.fallback);
  CHECK(g.direction == Eigen::Vector3d(0, -1, 0));
}

TEST_CASE("gravity: too few valid normals is an error") {
  NormalMap nm;
  nm.width = 32;
  nm.height = 32;
  nm.normals.assign(32 * 32, Eigen::Vector3f(0, -1, 0));
  nm.valid.assign(32 * 32, 0);
  nm.valid[0] = 1;  // 0.1% < 1%
  CHECK_THROWS_AS(estimate_gravity(nm), std::runtime_error);
}

TEST_CASE("gravity: invariant to uniform scaling of the point cloud") {
  auto scene = render_floor_wall(12.0, true);
  auto cloud = backproject(scene.depth);
  auto g1 = estimate_gravity(estimate_normals(cloud, 5));
  for (auto& p : cloud.points) p *= 2.7f;
  auto g2 = estimate_gravity(estimate_normals(cloud, 5));
  CHECK(angle_deg(g1.direction, g2.direction) < 0.5);
}

TEST_CASE("ground: clean floor 1.8m below camera, no clamp") {
  auto scene = render_floor_wall(20.0, false);
  auto cloud = backproject(scene.depth);
  auto g = estimate_gravity(estimate_normals(cloud, 5));
  auto ground = estimate_ground(cloud, g.direction);
  CHECK(ground.height_m == doctest::Approx(-1.8).epsilon(0.02));
  CHECK(!ground.clamped);
}

TEST_CASE("ground: injected sub-floor noise triggers the 1.9m clamp") {
  auto scene = render_floor_wall(20.0, false);
  auto cloud = backproject(scene.depth);
  auto g = estimate_gravity(estimate_normals(cloud, 5));
  // 3% of the valid points pushed to 2.5 m below the camera.
  std::mt19937_64 rng(7);
  std::size_t injected = 0, valid = 0;
  for (auto v : cloud.valid) valid += v;
  const Eigen::Vector3f low = (-2.5 * g.direction).cast<float>();
  for (std::size_t i = 0; i < cloud.points.size() && injected < valid * 3 / 100; ++i) {
    if (!cloud.valid[i]) continue;
    if ((rng() & 15u) == 0) {
      cloud.points[i] = low;
      ++injected;
    }
  }
  auto ground = estimate_ground(cloud, g.direction);
  CHECK(ground.clamped);
  CHECK(ground.height_m == doctest::Approx(-1.9));
  CHECK(ground.height_m >= -1.9);
}

TEST_CASE("ground: single elevated surface is its own ground") {
  PointCloud cloud;
  cloud.width = 10;
  cloud.height = 10;
  cloud.points.assign(100, Eigen::Vector3f(0, 0.9f, 2.0f));  // 0.9 m below, y-down
  cloud.valid.assign(100, 1);
  auto ground = estimate_ground(cloud, Eigen::Vector3d(0, -1, 0));
  CHECK(ground.height_m == doctest::Approx(-0.9).epsilon(1e-6));
  CHECK(!ground.clamped);
}

TEST_CASE("ground: no valid points is an error") {
  PointCloud cloud;
  cloud.width = 4;
  cloud.height = 4;
  cloud.points.assign(16, Eigen::Vector3f::Zero());
  cloud.valid.assign(16, 0);
  CHECK_THROWS_AS(estimate_ground(cloud, Eigen::Vector3d(0, -1, 0)), std::runtime_error);
}

TEST_CASE("validity mask: range cut and missing pixels") {
  Intrinsics k = test_intr(8, 4);
  DepthImage img(8, 4, k);
  img.depth_mm[img.index(0, 0)] = 0;     // missing
  img.depth_mm[img.index(1, 0)] = 6000;  // beyond the 5 m sensor range
  img.depth_mm[img.index(2, 0)] = 4500;
  img.depth_mm[img.index(3, 0)] = 500;
  auto mask = validity_mask(img, 5.0);
  CHECK(mask.at(0, 0) == 0);
  CHECK(mask.at(1, 0) == 0);
  CHECK(mask.at(2, 0) == 1);
  CHECK(mask.at(3, 0) == 1);

  // Per-pixel oracle over a mixed frame.
  std::mt19937_64 rng(9);
  DepthImage mixed(8, 4, k);
  for (auto& d : mixed.depth_mm) d = static_cast<std::uint16_t>(rng() % 7000);
  auto m2 = validity_mask(mixed, 5.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) {
      const std::uint16_t d = mixed.depth_mm[mixed.index(x, y)];
      const bool expect = d > 0 && d <= 5000;
      CHECK(static_cast<bool>(m2.at(x, y)) == expect);
    }

  // All-zero depth -> all-false mask.
  DepthImage zero(8, 4, k);
  auto m3 = validity_mask(zero, 5.0);
  for (auto v : m3.pixels) CHECK(v == 0);
}
