#pragma once

#include <string>
#include <vector>

#include "hazardfuse/data/corpus.hpp"
#include "hazardfuse/fusion/network.hpp"

namespace hf {

/// Per-pixel 2-class prediction: pre-softmax scores plus normalized
/// probabilities (channel 0 = trip). For mixture outputs the probabilities
/// are primary and scores hold their (clamped) logs so softmax(scores)
/// reproduces them.
struct PredictionMap {
  Tensorf scores;  // 2 x H x W
  Tensorf probs;   // 2 x H x W
  std::string source;
  std::string frame_id;
};

/// Network input for one modality, always 3 x H x W:
///   rgb   - colour / 255
///   hha   - encoded channels / 255 (requires frame.hha)
///   depth - z / 5m clamped to [0,1], 0 where missing, replicated channel-wise
template <typename S>
Tensor<S> modality_tensor(const LabeledFrame& frame, Modality m) {
  const int w = frame.color.width, h = frame.color.height;
  Tensor<S> t = Tensor<S>::chw(kModalityChannels, h, w);
  switch (m) {
    case Modality::rgb:
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c)
            t(c, y, x) = static_cast<S>(frame.color.at(x, y, c) / 255.0);
      break;
    case Modality::hha: {
      if (!frame.hha)
        throw std::runtime_error("frame " + frame.frame_id + " lacks the hha modality");
      const ImageU8& img = *frame.hha;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) t(c, y, x) = static_cast<S>(img.at(x, y, c) / 255.0);
      break;
    }
    case Modality::depth: {
      if (!frame.depth)
        throw std::runtime_error("frame " + frame.frame_id + " lacks the depth modality");
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double z = frame.depth->depth_mm[frame.depth->index(x, y)] * 0.001;
          const S v = static_cast<S>(std::clamp(z / 5.0, 0.0, 1.0));
          for (int c = 0; c < 3; ++c) t(c, y, x) = v;
        }
      break;
    }
  }
  return t;
}

template <typename S>
std::vector<Tensor<S>> assemble_inputs(const LabeledFrame& frame,
                                       const std::vector<Modality>& modalities) {
  std::vector<Tensor<S>> out;
  for (const auto m : modalities) out.push_back(modality_tensor<S>(frame, m));
  return out;
}

/// Deterministic inference (dropout disabled). Output spatial dims equal the
/// input dims. late_overlay networks apply the overlay with the frame's
/// depth validity mask.
PredictionMap predict(const FusionNetwork<float>& net, const LabeledFrame& frame,
                      const std::string& source_id, bool late_prop_per_image = false);

/// Adds the two score maps where depth was recorded; keeps the colour
/// network's scores (byte-exact) elsewhere. hard_mask adds argmax one-hot
/// classifications instead of raw scores.
PredictionMap late_overlay(const PredictionMap& rgb_map, const PredictionMap& other_map,
                           const ImageU8& depth_valid, bool hard_mask = false);

/// Confidence-weighted mixture of two prediction maps (per-pixel occupation
/// weights by default).
PredictionMap late_proportional(const PredictionMap& a, const PredictionMap& b,
                                bool per_image = false);

/// Container format: little-endian float32 blob (scores then probs) plus a
/// JSON sidecar carrying shape, source network id and frame id.
void save_prediction_map(const std::string& stem, const PredictionMap& map);
PredictionMap load_prediction_map(const std::string& stem);

}  // namespace hf
