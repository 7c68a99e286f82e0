#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hazardfuse/data/corpus.hpp"

namespace hf {

/// Object roles in the synthetic corpus. The palette deliberately contains
/// hazards visible to only one modality: wire strips are bright but nearly
/// flat (invisible in depth), camo boxes protrude but share the floor's
/// albedo (invisible in colour). Standing objects reuse the hazard palette so
/// appearance alone cannot decide trippability.
enum class SynthRole {
  lying_box,      // colourful, low -> trip
  camo_box,       // floor-coloured, low -> trip (depth-only)
  wire_strip,     // colourful, ~4 mm tall -> trip (colour-only)
  bucket,         // colourful cylinder, low -> trip
  pillar,         // gray box/cylinder, tall -> not trip
  standing_box,   // colourful, tall -> not trip
};

struct SynthObject {
  SynthRole role;
  bool is_cylinder = false;
  Eigen::Vector3d aabb_min, aabb_max;  // world frame, y up, floor at y=0
  double cyl_x = 0, cyl_z = 0, cyl_radius = 0, cyl_height = 0;
  Eigen::Vector3i albedo;
  bool trip = false;  // top surface < 0.5 m above the ground plane

  double top_height() const { return is_cylinder ? cyl_height : aabb_max.y(); }
};

struct CameraPose {
  double yaw_deg = 0;
  double pitch_deg = 25;          // downward
  Eigen::Vector3d position{0, 1.8, 0};

  Eigen::Matrix3d world_to_cam() const;  // rows: right, down, forward
};

struct SynthScene {
  std::vector<SynthObject> objects;
  Eigen::Vector3i floor_albedo{120, 120, 120};
  Eigen::Vector3i wall_albedo{150, 150, 152};
  Eigen::Vector3i sky_albedo{185, 190, 198};
  double wall_distance = 7.0;  // along the camera's horizontal forward
  CameraPose camera;
};

struct SynthConfig {
  int n_frames = 40;
  int n_groups = 4;
  int width = 96;
  int height = 96;
  double z_max = 5.0;
  bool noise = true;
  double noise_sigma_base_m = 0.005;  // 5 mm
  double noise_sigma_per_m = 0.01;    // + 1% of z
  double speckle_fraction = 0.02;
  int color_noise = 8;                // uniform +/- levels on every pixel
  // Object count ranges per frame.
  int min_lying = 1, max_lying = 3;
  int min_camo = 1, max_camo = 2;
  int min_wire = 1, max_wire = 2;
  int min_pillar = 1, max_pillar = 2;
  double standing_prob = 0.5;
};

struct RenderBuffers {
  ImageU8 color;                 // 3-channel, noise applied
  std::vector<float> depth_m;    // noise-free depth, 0 where nothing was hit
  std::vector<int> object_id;    // -1 floor, -2 wall, -3 sky, else object index
};

/// Deterministic ray-cast render of a scene (colour noise drawn from rng).
RenderBuffers render_scene(const SynthScene& scene, const Intrinsics& k, std::mt19937_64& rng,
                           int color_noise_levels);

/// Projects an object's silhouette into the image: convex hull of the
/// projected corner/rim points, clamped to image bounds.
PolygonLabel project_silhouette(const SynthObject& obj, const CameraPose& cam,
                                const Intrinsics& k);

struct SynthFrame {
  LabeledFrame frame;
  SynthScene scene;
};

/// Generates the desk-scale corpus: n_frames split over n_groups scene groups
/// (the cross-validation "floors"), camera at 1.8 m, hazards labeled by the
/// 0.5 m rule. Byte-identical output for a fixed seed.
std::vector<SynthFrame> synth_generate(std::uint64_t seed, const SynthConfig& cfg = {});

/// Generates and writes a corpus to disk (frames, labels, truth sidecars,
/// intrinsics, manifest). Returns the number of frames written.
int write_synth_corpus(const std::string& root, std::uint64_t seed, const SynthConfig& cfg = {});

/// Small fixed scenes used by the overfit checks: few large, well-separated
/// objects on a given group's floor.
SynthConfig overfit_config(int frames = 4);

}  // namespace hf
