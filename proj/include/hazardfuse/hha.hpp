#pragma once

#include "hazardfuse/data/image.hpp"
#include "hazardfuse/geometry.hpp"

namespace hf {

/// Channel scaling for the 8-bit HHA encoding. Depth range defaults track the
/// Kinect 2 (0.5-5 m); heights map [0, 3 m] onto [0, 255].
struct HhaConfig {
  double z_min = 0.5;
  double z_max = 5.0;
  double height_max = 3.0;
  int normal_window = 5;
  GravityConfig gravity;
  double ground_clamp_below_m = 1.9;
  double ground_percentile = 0.01;
};

/// 3-channel 8-bit image: c0 = scaled inverse depth, c1 = scaled height above
/// ground, c2 = scaled angle between the pixel normal and the gravity axis.
/// Pixels missing in the source depth are 0 in all channels.
ImageU8 encode_hha(const DepthImage& depth, const PointCloud& cloud, const NormalMap& normals,
                   const GravityEstimate& gravity, const GroundEstimate& ground,
                   const HhaConfig& cfg = {});

struct HhaFrameResult {
  ImageU8 hha;
  GravityEstimate gravity;
  GroundEstimate ground;
};

/// Full per-frame pipeline: backproject -> normals -> gravity -> ground ->
/// encode. If gravity estimation errors out (too few valid normals) the
/// encoder falls back to the camera -Y axis and records it via
/// gravity.fallback.
HhaFrameResult encode_hha_frame(const DepthImage& depth, const HhaConfig& cfg = {});

}  // namespace hf
