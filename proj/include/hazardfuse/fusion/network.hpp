#pragma once

#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazardfuse/fusion/mixture.hpp"
#include "hazardfuse/fusion/spec.hpp"
#include "hazardfuse/nn/network.hpp"

namespace hf {

/// Forward-pass caches for one training step across all streams.
template <typename S>
struct FusionCaches {
  std::vector<nn::SeqCache<S>> arm;
  nn::SeqCache<S> shared;
  MixtureCache<S> mix;
  Tensor<S> scores_a, scores_b;  // fitted per-arm scores (late proportional)
  int raw_h = 0, raw_w = 0;      // pre-fit output dims
  int in_h = 0, in_w = 0;
};

/// One of the 11 approaches, instantiated. none/early hold a single chain,
/// mid holds two arms plus the shared tail, the late fusions hold two
/// complete single-modality networks.
template <typename S>
class FusionNetwork {
 public:
  FusionSpec spec;  // resolved: arm_layers/shared_layers filled in
  std::vector<nn::Sequential<S>> arms;
  nn::Sequential<S> shared;

  bool has_shared() const { return spec.fusion == FusionKind::mid; }
  bool trainable() const { return spec.fusion != FusionKind::late_overlay; }

  std::vector<typename nn::Sequential<S>::Param*> flat_params() {
    std::vector<typename nn::Sequential<S>::Param*> out;
    for (auto& arm : arms)
      for (auto& p : arm.params()) out.push_back(&p);
    if (has_shared())
      for (auto& p : shared.params()) out.push_back(&p);
    return out;
  }

  std::vector<std::string> flat_param_names() const {
    std::vector<std::string> out;
    for (std::size_t a = 0; a < arms.size(); ++a)
      for (const auto& p : arms[a].params())
        out.push_back("arm" + std::to_string(a) + "." + p.name);
    if (has_shared())
      for (const auto& p : shared.params()) out.push_back("shared." + p.name);
    return out;
  }

  void init_scratch(std::mt19937_64& rng) {
    for (auto& arm : arms) arm.init_scratch(rng);
    if (has_shared()) shared.init_scratch(rng);
  }

  std::vector<Tensor<S>> snapshot() {
    std::vector<Tensor<S>> out;
    for (auto* p : flat_params()) {
      out.push_back(p->w);
      out.push_back(p->b);
    }
    return out;
  }

  void restore(const std::vector<Tensor<S>>& snap) {
    auto params = flat_params();
    if (snap.size() != params.size() * 2)
      throw std::logic_error("FusionNetwork::restore: snapshot size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i]->w = snap[2 * i];
      params[i]->b = snap[2 * i + 1];
    }
  }

  template <typename T>
  FusionNetwork<T> cast() const;

  /// Pre-softmax scores for the single-score topologies (none/early/mid),
  /// fitted to the input resolution.
  Tensor<S> forward_single(const std::vector<Tensor<S>>& inputs, nn::RunMode mode,
                           std::mt19937_64* rng, FusionCaches<S>* caches) const {
    Tensor<S> raw;
    switch (spec.fusion) {
      case FusionKind::none:
        raw = arms[0].forward(inputs.at(0), caches ? &caches->arm[0] : nullptr, mode, rng);
        break;
      case FusionKind::early:
        raw = arms[0].forward(concat_channels(inputs.at(0), inputs.at(1)),
                              caches ? &caches->arm[0] : nullptr, mode, rng);
        break;
      case FusionKind::mid: {
        auto a = arms[0].forward(inputs.at(0), caches ? &caches->arm[0] : nullptr, mode, rng);
        auto b = arms[1].forward(inputs.at(1), caches ? &caches->arm[1] : nullptr, mode, rng);
        raw = shared.forward(concat_channels(a, b), caches ? &caches->shared : nullptr, mode, rng);
        break;
      }
      default:
        throw std::logic_error("forward_single: not a single-score topology");
    }
    const int h = inputs.at(0).height(), w = inputs.at(0).width();
    if (caches) {
      caches->raw_h = raw.height();
      caches->raw_w = raw.width();
      caches->in_h = h;
      caches->in_w = w;
    }
    return nn::fit_to(raw, h, w);
  }

  /// Late-proportional forward: runs both arms and blends. Returns fused
  /// probabilities (not a softmax of any score map).
  Tensor<S> forward_mixture(const std::vector<Tensor<S>>& inputs, nn::RunMode mode,
                            std::mt19937_64* rng, FusionCaches<S>* caches,
                            bool per_image = false) const {
    if (spec.fusion != FusionKind::late_proportional)
      throw std::logic_error("forward_mixture: network is not late_proportional");
    const int h = inputs.at(0).height(), w = inputs.at(0).width();
    auto sa = nn::fit_to(arms[0].forward(inputs.at(0), caches ? &caches->arm[0] : nullptr, mode, rng), h, w);
    auto sb = nn::fit_to(arms[1].forward(inputs.at(1), caches ? &caches->arm[1] : nullptr, mode, rng), h, w);
    if (caches) {
      caches->raw_h = caches->arm[0].output.height();
      caches->raw_w = caches->arm[0].output.width();
      caches->in_h = h;
      caches->in_w = w;
      caches->scores_a = sa;
      caches->scores_b = sb;
      return proportional_mixture_forward(sa, sb, &caches->mix, per_image);
    }
    return proportional_mixture_forward(sa, sb, static_cast<MixtureCache<S>*>(nullptr), per_image);
  }

  /// Backward for the single-score topologies; grads align with flat_params().
  void backward_single(const FusionCaches<S>& caches, const Tensor<S>& dscores,
                       std::vector<nn::ParamGrad<S>>& grads) const {
    const Tensor<S> draw = nn::fit_to(dscores, caches.raw_h, caches.raw_w);
    grads.clear();
    switch (spec.fusion) {
      case FusionKind::none:
      case FusionKind::early: {
        std::vector<nn::ParamGrad<S>> g;
        arms[0].backward(caches.arm[0], draw, g);
        grads = std::move(g);
        break;
      }
      case FusionKind::mid: {
        std::vector<nn::ParamGrad<S>> gs;
        const Tensor<S> dconcat = shared.backward(caches.shared, draw, gs);
        auto [da, db] = split_channels(dconcat, arms[0].out_channels());
        std::vector<nn::ParamGrad<S>> ga, gb;
        arms[0].backward(caches.arm[0], da, ga);
        arms[1].backward(caches.arm[1], db, gb);
        grads.insert(grads.end(), std::make_move_iterator(ga.begin()), std::make_move_iterator(ga.end()));
        grads.insert(grads.end(), std::make_move_iterator(gb.begin()), std::make_move_iterator(gb.end()));
        grads.insert(grads.end(), std::make_move_iterator(gs.begin()), std::make_move_iterator(gs.end()));
        break;
      }
      default:
        throw std::logic_error("backward_single: not a single-score topology");
    }
  }

  void backward_mixture(const FusionCaches<S>& caches, const Tensor<S>& dprobs, bool per_image,
                        std::vector<nn::ParamGrad<S>>& grads) const {
    auto [dsa, dsb] = proportional_mixture_backward(dprobs, caches.mix, per_image);
    std::vector<nn::ParamGrad<S>> ga, gb;
    arms[0].backward(caches.arm[0], nn::fit_to(dsa, caches.raw_h, caches.raw_w), ga);
    arms[1].backward(caches.arm[1], nn::fit_to(dsb, caches.raw_h, caches.raw_w), gb);
    grads.clear();
    grads.insert(grads.end(), std::make_move_iterator(ga.begin()), std::make_move_iterator(ga.end()));
    grads.insert(grads.end(), std::make_move_iterator(gb.begin()), std::make_move_iterator(gb.end()));
  }

  FusionCaches<S> make_caches() const {
    FusionCaches<S> c;
    c.arm.resize(arms.size());
    return c;
  }
};

namespace detail {

inline int first_conv_index(const std::vector<nn::LayerSpec>& specs) {
  for (int i = 0; i < static_cast<int>(specs.size()); ++i)
    if (specs[static_cast<std::size_t>(i)].has_params()) return i;
  throw std::invalid_argument("layer stack has no convolution");
}

}  // namespace detail

/// Instantiates a network from its spec. The returned network's spec carries
/// the fully resolved layer stacks (checkpoint manifests round-trip them).
template <typename S>
FusionNetwork<S> build_network(const FusionSpec& spec_in) {
  FusionSpec spec = spec_in;
  spec.validate();
  const auto& hp = spec.hp;

  // Default desk-scale stack unless the spec pins its own.
  std::vector<nn::LayerSpec> full =
      spec.arm_layers.empty() ? nn::toy_fcn_specs(hp.dropout_ratio, hp.final_layer_mult)
                              : spec.arm_layers;

  FusionNetwork<S> net;
  switch (spec.fusion) {
    case FusionKind::none:
      net.arms.emplace_back(full, kModalityChannels);
      break;
    case FusionKind::early: {
      if (spec_in.arm_layers.empty())
        full[static_cast<std::size_t>(detail::first_conv_index(full))].lr_multiplier =
            hp.first_layer_mult;
      net.arms.emplace_back(full, 2 * kModalityChannels);
      break;
    }
    case FusionKind::mid: {
      std::vector<nn::LayerSpec> arm_part, shared_part;
      if (!spec_in.arm_layers.empty() && !spec_in.shared_layers.empty()) {
        arm_part = spec.arm_layers;
        shared_part = spec.shared_layers;
      } else {
        // Arms run to their final pooling layer; the remaining stack (the
        // "final two convolutional layers", score, upsample) is shared and
        // trained from scratch.
        nn::Sequential<S> probe(full, kModalityChannels);
        const int split = probe.split_after_last_pool();
        arm_part.assign(full.begin(), full.begin() + split);
        shared_part.assign(full.begin() + split, full.end());
        shared_part[static_cast<std::size_t>(detail::first_conv_index(shared_part))]
            .lr_multiplier = hp.shared_layer_mult;
      }
      if (shared_part.empty()) throw std::invalid_argument("mid fusion requires shared layers");
      net.arms.emplace_back(arm_part, kModalityChannels);
      net.arms.emplace_back(arm_part, kModalityChannels);
      net.shared = nn::Sequential<S>(shared_part,
                                     net.arms[0].out_channels() + net.arms[1].out_channels());
      spec.arm_layers = arm_part;
      spec.shared_layers = shared_part;
      net.spec = spec;
      return net;
    }
    case FusionKind::late_overlay:
    case FusionKind::late_proportional:
      net.arms.emplace_back(full, kModalityChannels);
      net.arms.emplace_back(full, kModalityChannels);
      break;
  }
  spec.arm_layers = full;
  net.spec = spec;
  return net;
}

template <typename S>
template <typename T>
FusionNetwork<T> FusionNetwork<S>::cast() const {
  FusionNetwork<T> out = build_network<T>(spec);
  auto dst = out.flat_params();
  std::size_t i = 0;
  for (const auto& arm : arms)
    for (const auto& p : arm.params()) {
      dst[i]->w = p.w.template cast<T>();
      dst[i]->b = p.b.template cast<T>();
      ++i;
    }
  if (has_shared())
    for (const auto& p : shared.params()) {
      dst[i]->w = p.w.template cast<T>();
      dst[i]->b = p.b.template cast<T>();
      ++i;
    }
  return out;
}

// ---------------------------------------------------------- weight transfer --

struct ParentSet {
  const FusionNetwork<float>* rgb = nullptr;  // colour arms
  const FusionNetwork<float>* hha = nullptr;  // depth and hha arms
};

namespace detail {

inline const FusionNetwork<float>& parent_for(const ParentSet& parents, Modality m) {
  const FusionNetwork<float>* p = (m == Modality::rgb) ? parents.rgb : parents.hha;
  if (!p)
    throw std::runtime_error(std::string("init_transfer: missing parent checkpoint for ") +
                             ((m == Modality::rgb) ? "rgb" : "hha") + " (needed by " +
                             modality_name(m) + " arm)");
  if (p->spec.fusion != FusionKind::none)
    throw std::runtime_error("init_transfer: parents must be single-modality networks");
  return *p;
}

template <typename S>
void copy_param(typename nn::Sequential<S>::Param& dst,
                const nn::Sequential<float>::Param& src, const std::string& where) {
  if (!dst.w.same_shape(src.w.cast<S>()) || dst.b.numel() != src.b.numel())
    throw std::runtime_error("init_transfer: " + where + ": parent weights " + src.w.shape_str() +
                             " incompatible with " + dst.w.shape_str());
  dst.w = src.w.cast<S>();
  dst.b = src.b.cast<S>();
}

template <typename S>
void fresh_score(typename nn::Sequential<S>::Param& p, std::mt19937_64& rng) {
  p.w.fill_gaussian(rng, 0.01);
  p.b.set_zero();
}

}  // namespace detail

/// Applies the transfer rules to a freshly built network:
///   none:        copy the parent, replace the score layer with a fresh
///                zero-mean Gaussian (sigma 0.01) 2-class layer
///   early:       first-layer filters are the channel-wise concatenation of
///                both parents' first layers; everything else from the colour
///                parent
///   mid:         arms copied from their parents, shared layers from scratch
///   late_prop:   both arms copied whole
template <typename S>
void init_transfer(FusionNetwork<S>& net, const ParentSet& parents, std::mt19937_64& rng) {
  using detail::copy_param;
  using detail::parent_for;
  switch (net.spec.fusion) {
    case FusionKind::none: {
      const auto& parent = parent_for(parents, net.spec.modalities[0]);
      auto& dst = net.arms[0].params();
      const auto& src = parent.arms[0].params();
      if (dst.size() != src.size())
        throw std::runtime_error("init_transfer: parent has " + std::to_string(src.size()) +
                                 " parameter tensors, target " + std::to_string(dst.size()));
      for (std::size_t i = 0; i < dst.size(); ++i)
        if (!dst[i].is_score) copy_param<S>(dst[i], src[i], "arm0." + dst[i].name);
      for (auto& p : dst)
        if (p.is_score) detail::fresh_score<S>(p, rng);
      break;
    }
    case FusionKind::early: {
      const auto& rgb = parent_for(parents, Modality::rgb);
      const auto& other = parent_for(parents, net.spec.modalities[1]);
      auto& dst = net.arms[0].params();
      const auto& src_rgb = rgb.arms[0].params();
      const auto& src_other = other.arms[0].params();
      // First layer: channels [0..2] from the colour parent, [3..5] from the
      // depth/hha parent.
      auto& first = dst[0];
      const auto& fr = src_rgb[0];
      const auto& fo = src_other[0];
      if (first.w.in_ch() != fr.w.in_ch() + fo.w.in_ch() || first.w.out_ch() != fr.w.out_ch())
        throw std::runtime_error("init_transfer: arm0." + first.name + ": parents " +
                                 fr.w.shape_str() + "+" + fo.w.shape_str() +
                                 " incompatible with " + first.w.shape_str());
      for (int o = 0; o < first.w.out_ch(); ++o)
        for (int ky = 0; ky < first.w.dim(2); ++ky)
          for (int kx = 0; kx < first.w.dim(3); ++kx) {
            for (int i = 0; i < fr.w.in_ch(); ++i)
              first.w(o, i, ky, kx) = static_cast<S>(fr.w(o, i, ky, kx));
            for (int i = 0; i < fo.w.in_ch(); ++i)
              first.w(o, fr.w.in_ch() + i, ky, kx) = static_cast<S>(fo.w(o, i, ky, kx));
          }
      first.b = fr.b.cast<S>();
      for (std::size_t i = 1; i < dst.size(); ++i)
        copy_param<S>(dst[i], src_rgb[i], "arm0." + dst[i].name);
      break;
    }
    case FusionKind::mid: {
      for (std::size_t a = 0; a < 2; ++a) {
        const auto& parent = parent_for(parents, net.spec.modalities[a]);
        auto& dst = net.arms[a].params();
        const auto& src = parent.arms[0].params();
        for (std::size_t i = 0; i < dst.size(); ++i)
          copy_param<S>(dst[i], src[i], "arm" + std::to_string(a) + "." + dst[i].name);
      }
      net.shared.init_scratch(rng);  // trained from scratch
      break;
    }
    case FusionKind::late_proportional: {
      for (std::size_t a = 0; a < 2; ++a) {
        const auto& parent = parent_for(parents, net.spec.modalities[a]);
        auto& dst = net.arms[a].params();
        const auto& src = parent.arms[0].params();
        for (std::size_t i = 0; i < dst.size(); ++i)
          copy_param<S>(dst[i], src[i], "arm" + std::to_string(a) + "." + dst[i].name);
      }
      break;
    }
    case FusionKind::late_overlay:
      throw std::runtime_error(
          "init_transfer: late_overlay has no trainable initialization; load its two "
          "independently trained arm checkpoints instead");
  }
}

}  // namespace hf
