#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazardfuse/data/image.hpp"

namespace hf {

/// Pinhole intrinsics. Camera frame is the usual x-right / y-down / z-forward
/// convention, so "up" for a level camera is -Y.
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("Intrinsics: focal lengths must be positive");
    if (cx < 0 || cy < 0 || cx >= width || cy >= height)
      throw std::invalid_argument("Intrinsics: principal point outside the image");
    if (width <= 0 || height <= 0) throw std::invalid_argument("Intrinsics: bad image size");
  }

  /// Assumed default when a corpus carries no calibration: ~62 degree
  /// horizontal field of view at the given resolution.
  static Intrinsics default_for(int width, int height) {
    Intrinsics k;
    k.width = width;
    k.height = height;
    k.fx = k.fy = 0.83 * width;
    k.cx = (width - 1) / 2.0;
    k.cy = (height - 1) / 2.0;
    return k;
  }
};

/// Metric depth frame; values in millimeters, 0 = missing measurement.
struct DepthImage {
  int width = 0, height = 0;
  std::vector<std::uint16_t> depth_mm;
  Intrinsics intrinsics;

  DepthImage() = default;
  DepthImage(int w, int h, Intrinsics k)
      : width(w), height(h), depth_mm(static_cast<std::size_t>(w) * h, 0), intrinsics(k) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  bool valid_at(int x, int y) const { return depth_mm[index(x, y)] > 0; }
  float z_m(int x, int y) const { return depth_mm[index(x, y)] * 0.001f; }
};

/// Per-pixel 3D points in the camera frame (meters).
struct PointCloud {
  int width = 0, height = 0;
  std::vector<Eigen::Vector3f> points;
  std::vector<std::uint8_t> valid;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

struct NormalMap {
  int width = 0, height = 0;
  std::vector<Eigen::Vector3f> normals;  // unit, oriented toward the camera
  std::vector<std::uint8_t> valid;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

struct GravityConfig {
  int max_iter = 10;
  std::vector<double> band_schedule_deg = {45.0, 15.0};
  double convergence_deg = 0.1;
  double min_valid_fraction = 0.01;     // below this: error (caller falls back)
  double min_parallel_fraction = 0.05;  // degenerate-alignment fallback
  double min_aligned_fraction = 0.40;
};

/// Gravity axis in the camera frame, oriented so it points from the ground
/// toward the camera: (0,-1,0) for a level camera. Heights along this axis
/// (p . direction) are negative below the camera, which makes the floor of a
/// 1.8 m-high rig sit at -1.8.
struct GravityEstimate {
  Eigen::Vector3d direction = Eigen::Vector3d(0, -1, 0);
  int iterations_used = 0;
  double aligned_fraction = 0.0;
  bool fallback = false;
};

struct GroundEstimate {
  double height_m = 0.0;  // along the gravity axis, <= 0 below the camera
  bool clamped = false;
};

/// X = (u-cx)*z/fx, Y = (v-cy)*z/fy, Z = z. Invalid depths marked invalid.
PointCloud backproject(const DepthImage& depth);

/// Least-squares plane fit over a square window; requires >= 50% valid
/// neighbors. window must be odd and >= 3.
NormalMap estimate_normals(const PointCloud& cloud, int window = 5);

/// Two-band iterative eigen-solve for the gravity axis (coarse band first,
/// then fine), starting from camera -Y. Each round keeps normals nearly
/// parallel or perpendicular to the current axis and takes the dominant
/// eigenvector of sum(par n n^T) - sum(perp n n^T). Throws when fewer than
/// min_valid_fraction of pixels carry normals; returns fallback=true with the
/// initial axis when no dominant aligned structure exists.
GravityEstimate estimate_gravity(const NormalMap& normals, const GravityConfig& cfg = {});

/// Robust ground height: the given percentile of per-pixel heights, clamped
/// to at most clamp_below_m meters below the camera.
GroundEstimate estimate_ground(const PointCloud& cloud, const Eigen::Vector3d& gravity_dir,
                               double clamp_below_m = 1.9, double percentile = 0.01);

/// True exactly where depth is recorded and within range (0 < z <= z_max).
ImageU8 validity_mask(const DepthImage& depth, double z_max = 5.0);

}  // namespace hf
