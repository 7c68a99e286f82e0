#include "hazardfuse/fusion/predict.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

#include "hazardfuse/common.hpp"

using json = nlohmann::json;

namespace hf {

namespace {

Tensorf log_probs(const Tensorf& probs) {
  Tensorf out = Tensorf::like(probs);
  for (Eigen::Index i = 0; i < probs.numel(); ++i)
    out[i] = std::log(std::max(probs[i], 1e-30f));
  return out;
}

}  // namespace

PredictionMap predict(const FusionNetwork<float>& net, const LabeledFrame& frame,
                      const std::string& source_id, bool late_prop_per_image) {
  const auto inputs = assemble_inputs<float>(frame, net.spec.modalities);
  PredictionMap map;
  map.source = source_id;
  map.frame_id = frame.frame_id;

  switch (net.spec.fusion) {
    case FusionKind::late_proportional: {
      map.probs = net.forward_mixture(inputs, nn::RunMode::eval, nullptr, nullptr,
                                      late_prop_per_image);
      map.scores = log_probs(map.probs);
      break;
    }
    case FusionKind::late_overlay: {
      if (!frame.depth)
        throw std::runtime_error("late_overlay needs the frame's depth validity mask; frame " +
                                 frame.frame_id + " has no depth");
      const int h = frame.color.height, w = frame.color.width;
      PredictionMap rgb_map, other_map;
      rgb_map.scores = nn::fit_to(net.arms[0].forward(inputs[0], nullptr, nn::RunMode::eval), h, w);
      rgb_map.probs = nn::softmax2(rgb_map.scores);
      other_map.scores = nn::fit_to(net.arms[1].forward(inputs[1], nullptr, nn::RunMode::eval), h, w);
      other_map.probs = nn::softmax2(other_map.scores);
      PredictionMap fused = late_overlay(rgb_map, other_map, validity_mask(*frame.depth));
      map.scores = std::move(fused.scores);
      map.probs = std::move(fused.probs);
      break;
    }
    default: {
      FusionNetwork<float>& mutable_net = const_cast<FusionNetwork<float>&>(net);
      map.scores = mutable_net.forward_single(inputs, nn::RunMode::eval, nullptr, nullptr);
      map.probs = nn::softmax2(map.scores);
    }
  }
  return map;
}

PredictionMap late_overlay(const PredictionMap& rgb_map, const PredictionMap& other_map,
                           const ImageU8& depth_valid, bool hard_mask) {
  if (!rgb_map.scores.same_shape(other_map.scores))
    throw std::invalid_argument("late_overlay: score maps differ: " +
                                rgb_map.scores.shape_str() + " vs " +
                                other_map.scores.shape_str());
  const int h = rgb_map.scores.height(), w = rgb_map.scores.width();
  if (depth_valid.width != w || depth_valid.height != h)
    throw std::invalid_argument("late_overlay: validity mask " + std::to_string(depth_valid.width) +
                                "x" + std::to_string(depth_valid.height) +
                                " does not match maps " + rgb_map.scores.shape_str());

  PredictionMap out;
  out.scores = rgb_map.scores;  // invalid-depth pixels stay byte-identical
  out.frame_id = rgb_map.frame_id;
  out.source = "late_overlay(" + rgb_map.source + "+" + other_map.source + ")";
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  for (Eigen::Index i = 0; i < hw; ++i) {
    if (!depth_valid.pixels[static_cast<std::size_t>(i)]) continue;
    if (hard_mask) {
      const int ca = rgb_map.scores[i] >= rgb_map.scores[hw + i] ? 0 : 1;
      const int cb = other_map.scores[i] >= other_map.scores[hw + i] ? 0 : 1;
      out.scores[i] = static_cast<float>((ca == 0) + (cb == 0));
      out.scores[hw + i] = static_cast<float>((ca == 1) + (cb == 1));
    } else {
      out.scores[i] = rgb_map.scores[i] + other_map.scores[i];
      out.scores[hw + i] = rgb_map.scores[hw + i] + other_map.scores[hw + i];
    }
  }
  out.probs = nn::softmax2(out.scores);
  return out;
}

PredictionMap late_proportional(const PredictionMap& a, const PredictionMap& b, bool per_image) {
  PredictionMap out;
  out.probs = proportional_mixture_forward(a.scores, b.scores,
                                           static_cast<MixtureCache<float>*>(nullptr), per_image);
  out.scores = log_probs(out.probs);
  out.frame_id = a.frame_id;
  out.source = "late_proportional(" + a.source + "+" + b.source + ")";
  return out;
}

void save_prediction_map(const std::string& stem, const PredictionMap& map) {
  {
    std::ofstream blob(stem + ".bin", std::ios::binary);
    if (!blob) throw std::runtime_error("cannot write " + stem + ".bin");
    blob.write(reinterpret_cast<const char*>(map.scores.data()),
               static_cast<std::streamsize>(map.scores.numel() * sizeof(float)));
    blob.write(reinterpret_cast<const char*>(map.probs.data()),
               static_cast<std::streamsize>(map.probs.numel() * sizeof(float)));
  }
  json j{{"schema_version", kSchemaVersion},
         {"shape", {2, map.scores.height(), map.scores.width()}},
         {"blocks", {"scores", "probs"}},
         {"source", map.source},
         {"frame_id", map.frame_id}};
  std::ofstream side(stem + ".json");
  side << j.dump(2) << "\n";
}

PredictionMap load_prediction_map(const std::string& stem) {
  std::ifstream side(stem + ".json");
  if (!side) throw std::runtime_error("cannot open " + stem + ".json");
  json j;
  side >> j;
  const auto shape = j.at("shape");
  const int h = shape.at(1).get<int>(), w = shape.at(2).get<int>();

  PredictionMap map;
  map.source = j.value("source", "");
  map.frame_id = j.value("frame_id", "");
  map.scores = Tensorf::chw(2, h, w);
  map.probs = Tensorf::chw(2, h, w);
  std::ifstream blob(stem + ".bin", std::ios::binary);
  if (!blob) throw std::runtime_error("cannot open " + stem + ".bin");
  blob.read(reinterpret_cast<char*>(map.scores.data()),
            static_cast<std::streamsize>(map.scores.numel() * sizeof(float)));
  blob.read(reinterpret_cast<char*>(map.probs.data()),
            static_cast<std::streamsize>(map.probs.numel() * sizeof(float)));
  if (!blob) throw std::runtime_error("prediction blob truncated: " + stem + ".bin");
  return map;
}

}  // namespace hf
