#pragma once

#include <map>
#include <string>
#include <vector>

#include "hazardfuse/data/corpus.hpp"
#include "hazardfuse/data/synth.hpp"
#include "hazardfuse/eval/curves.hpp"
#include "hazardfuse/fusion/spec.hpp"
#include "hazardfuse/fusion/train.hpp"
#include "hazardfuse/hha.hpp"

namespace hf {

/// Approach ids are "<fusion>_<modalities...>", e.g. "none_rgb",
/// "late_proportional_rgb_hha".
FusionSpec approach_from_id(const std::string& id);

/// The 11 fusion and non-fusion approaches in table order.
std::vector<std::string> standard_approach_ids();

struct RunConfig {
  std::uint64_t seed = 7;
  int jobs = 1;

  std::string corpus_path;  // empty -> generate the synthetic corpus
  bool use_synth = true;
  SynthConfig synth;

  std::vector<std::string> approach_ids{"none_rgb"};
  Hyperparams hp;                                 // base hyperparameters
  std::map<std::string, Hyperparams> hp_overrides;  // per approach id

  int parent_iterations = 400;
  double val_fraction = 0.0;  // held out of the training floors per fold
  double theta_det = 0.5;
  std::vector<double> thresholds;  // empty -> default 101-point grid
  bool late_prop_per_image = false;
  HhaConfig hha;

  void validate() const;
};

RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& cfg);

/// Encodes HHA for every frame that has depth but no cached hha image;
/// writes PNGs and per-frame sidecars (gravity, ground, clamp flag) back
/// into the corpus when write_back is set. Returns {encoded, skipped}.
std::pair<int, int> ensure_hha(Corpus& corpus, const HhaConfig& cfg, bool write_back);

struct FoldOutcome {
  std::string test_floor;
  std::map<std::string, Curve> curves;
  std::map<std::string, MetricsReport> operating_points;
  std::map<std::string, TrainResult> training;
};

struct CrossvalOutcome {
  FoldPlan plan;
  std::vector<FoldOutcome> folds;
  std::map<std::string, AggregateReport> averaged;
  std::map<std::string, Curve> averaged_curves;
};

/// The full protocol: per fold, train what each approach needs (parents,
/// fine-tuned nets, fused arms), predict the held-out floor, sweep the PR
/// curve and pick the max-F1 operating point; then average the per-fold
/// reports. All artifacts (frozen config, checkpoints, curves, reports,
/// the approaches-by-metrics table) land under out_dir.
CrossvalOutcome run_crossval(const RunConfig& cfg, const std::string& out_dir);

struct GridRunOutcome {
  std::vector<Hyperparams> combos;
  GridSearchResult result;
};

/// Standalone hyperparameter search for one approach: splits the corpus into
/// train/validation by val_fraction, trains parents, runs the grid and writes
/// the ranking JSON into out_dir.
GridRunOutcome run_grid_search(const RunConfig& cfg, const std::string& approach_id,
                               const GridDef& grid, const std::string& out_dir);

GridDef grid_def_from_json_text(const std::string& text);

}  // namespace hf
