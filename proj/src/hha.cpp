#include "hazardfuse/hha.hpp"

#include <algorithm>
#include <cmath>

#include "hazardfuse/common.hpp"

namespace hf {

namespace {

std::uint8_t scale255(double t) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
}

}  // namespace

ImageU8 encode_hha(const DepthImage& depth, const PointCloud& cloud, const NormalMap& normals,
                   const GravityEstimate& gravity, const GroundEstimate& ground,
                   const HhaConfig& cfg) {
  ImageU8 out(depth.width, depth.height, 3, 0);
  const double disp_lo = 1.0 / cfg.z_max;
  const double disp_hi = 1.0 / cfg.z_min;
  const Eigen::Vector3f axis = gravity.direction.cast<float>();

  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const std::size_t i = depth.index(x, y);
      if (depth.depth_mm[i] == 0) continue;  // invalid -> 0 in all channels

      const double z = depth.depth_mm[i] * 0.001;
      out.at(x, y, 0) = scale255((1.0 / z - disp_lo) / (disp_hi - disp_lo));

      const double h = cloud.points[i].dot(axis) - ground.height_m;
      out.at(x, y, 1) = scale255(h / cfg.height_max);

      if (normals.valid[i]) {
        const double c = std::clamp(
            static_cast<double>(normals.normals[i].dot(axis)), -1.0, 1.0);
        out.at(x, y, 2) = scale255(std::acos(c) / M_PI);
      }
    }
  }
  return out;
}

HhaFrameResult encode_hha_frame(const DepthImage& depth, const HhaConfig& cfg) {
  const PointCloud cloud = backproject(depth);
  const NormalMap normals = estimate_normals(cloud, cfg.normal_window);

  HhaFrameResult r;
  try {
    r.gravity = estimate_gravity(normals, cfg.gravity);
  } catch (const std::runtime_error& e) {
    log_warn(std::string("gravity estimation failed, falling back to camera -Y: ") + e.what());
    r.gravity = GravityEstimate{};
    r.gravity.fallback = true;
  }
  r.ground = estimate_ground(cloud, r.gravity.direction, cfg.ground_clamp_below_m,
                             cfg.ground_percentile);
  r.hha = encode_hha(depth, cloud, normals, r.gravity, r.ground, cfg);
  return r;
}

}  // namespace hf
