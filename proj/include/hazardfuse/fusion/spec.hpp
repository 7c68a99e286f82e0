#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazardfuse/nn/network.hpp"

namespace hf {

enum class FusionKind { none, early, mid, late_overlay, late_proportional };
enum class Modality { rgb, depth, hha };

const char* fusion_kind_name(FusionKind k);
FusionKind fusion_kind_from_name(const std::string& n);
const char* modality_name(Modality m);
Modality modality_from_name(const std::string& n);

/// Every modality feeds the network 3 channels: rgb and hha natively, raw
/// depth replicated channel-wise so the transfer rules stay byte-exact
/// against the (3-channel) hha-trained parents.
inline constexpr int kModalityChannels = 3;

struct Hyperparams {
  double base_lr = 2e-5;
  double final_layer_mult = 5.0;
  double first_layer_mult = 1.0;   // early fusion: first conv multiplier
  double shared_layer_mult = 2.0;  // mid fusion: shared conv multiplier
  double dropout_ratio = 0.5;
  double momentum = 0.99;
  int max_iterations = 500;
  int val_interval = 25;
  std::uint64_t seed = 1;

  void validate() const {
    if (final_layer_mult <= 0 || first_layer_mult <= 0 || shared_layer_mult <= 0)
      throw std::invalid_argument("Hyperparams: multipliers must be > 0");
    if (dropout_ratio < 0 || dropout_ratio >= 1)
      throw std::invalid_argument("Hyperparams: dropout_ratio must be in [0,1)");
    if (momentum < 0 || momentum >= 1)
      throw std::invalid_argument("Hyperparams: momentum must be in [0,1)");
    if (max_iterations < 0 || val_interval < 1)
      throw std::invalid_argument("Hyperparams: bad iteration counts");
  }
};

/// Declarative architecture description of one of the 11 approaches.
struct FusionSpec {
  FusionKind fusion = FusionKind::none;
  std::vector<Modality> modalities;          // none: exactly 1; fused: rgb first
  std::vector<nn::LayerSpec> arm_layers;     // empty -> default ToyFCN stack
  std::vector<nn::LayerSpec> shared_layers;  // mid only, empty -> derived
  Hyperparams hp;

  void validate() const;
  std::string id() const;  // e.g. "late_proportional_rgb_hha"

  static FusionSpec make(FusionKind kind, const std::vector<Modality>& mods) {
    FusionSpec s;
    s.fusion = kind;
    s.modalities = mods;
    s.validate();
    return s;
  }
};

FusionSpec fusion_spec_from_json_text(const std::string& text);
std::string fusion_spec_to_json_text(const FusionSpec& spec);

/// The default hyperparameter grids: 2 learning rates x 2 final-layer
/// multipliers for the non-fusion and late-proportional nets, 2 learning
/// rates x 2 first-layer multipliers (final fixed) for early fusion, and the
/// full 16-cell product with shared-layer multipliers and dropout ratios for
/// mid fusion.
struct GridDef {
  std::vector<double> base_lrs{1e-5, 3e-5};
  std::vector<double> final_mults{5.0, 10.0};
  std::vector<double> first_mults{4.0, 10.0};
  std::vector<double> shared_mults{2.0, 5.0};
  std::vector<double> dropouts{0.5, 0.75};
  double early_fixed_final_mult = 5.0;
};

std::vector<Hyperparams> enumerate_grid(FusionKind kind, const GridDef& grid,
                                        const Hyperparams& base);

}  // namespace hf
