#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hazardfuse/data/image.hpp"
#include "hazardfuse/data/polygon.hpp"
#include "hazardfuse/geometry.hpp"

namespace hf {

/// Renderer-side ground truth shipped with synthetic frames, used by the
/// geometry oracles. Real recordings do not carry it.
struct SynthTruth {
  Eigen::Vector3d gravity_cam = Eigen::Vector3d(0, -1, 0);
  double ground_height_m = -1.8;
  double pitch_deg = 0.0;
};

struct LabeledFrame {
  std::string frame_id;
  std::string floor_id;
  ImageU8 color;                       // 3-channel 8-bit
  std::optional<DepthImage> depth;     // absent when no depth was recorded
  std::optional<ImageU8> hha;          // 3-channel 8-bit, encoder output
  std::vector<PolygonLabel> polygons;  // trip-hazard instances
  std::optional<SynthTruth> truth;
};

struct FoldPlan {
  struct Fold {
    std::string test_floor;
    std::vector<std::string> train_floors;
  };
  std::vector<Fold> folds;
};

struct Corpus {
  std::string root;
  Intrinsics intrinsics;
  std::vector<LabeledFrame> frames;
};

/// Loads a corpus laid out as root/<floor>/{rgb,depth,labels,hha,truth}/<id>.*.
/// rgb is required per frame; everything else is optional. Malformed label
/// files are reported per frame and skipped, not fatal. Throws on an empty
/// corpus. Intrinsics come from root/intrinsics.json when present, otherwise
/// documented defaults are assumed.
Corpus load_corpus(const std::string& root);

/// Writes one frame into the corpus layout (frame.floor_id decides the
/// directory). Creates directories as needed.
void save_frame(const std::string& root, const LabeledFrame& frame);

void save_intrinsics(const std::string& root, const Intrinsics& k);
Intrinsics load_intrinsics_file(const std::string& path);

/// One fold per distinct floor id, floors sorted for determinism.
/// Throws when fewer than two floors exist.
FoldPlan make_folds(const std::vector<LabeledFrame>& frames);

/// Ground-truth trip mask for a frame (union of its polygons).
ImageU8 rasterize_labels(const LabeledFrame& frame);

std::vector<const LabeledFrame*> frames_of_floor(const Corpus& corpus, const std::string& floor,
                                                 bool invert = false);

}  // namespace hf
