#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "hazardfuse/common.hpp"
#include "hazardfuse/data/corpus.hpp"
#include "hazardfuse/fusion/network.hpp"
#include "hazardfuse/fusion/predict.hpp"
#include "hazardfuse/nn/optim.hpp"

namespace hf {

template <typename S>
struct TrainingExample {
  std::vector<Tensor<S>> inputs;
  std::vector<std::uint8_t> target;  // 1 = trip
};

template <typename S>
TrainingExample<S> prepare_example(const LabeledFrame& frame,
                                   const std::vector<Modality>& modalities) {
  TrainingExample<S> ex;
  ex.inputs = assemble_inputs<S>(frame, modalities);
  ex.target = rasterize_labels(frame).pixels;
  return ex;
}

struct TrainResult {
  std::vector<double> train_loss;                 // one entry per iteration
  std::vector<std::pair<int, double>> val_loss;   // (iteration, summed loss)
  bool diverged = false;
  std::string divergence_reason;
  int best_iteration = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

namespace detail {

template <typename S>
double example_loss(const FusionNetwork<S>& net, const TrainingExample<S>& ex, nn::RunMode mode,
                    std::mt19937_64* rng, FusionCaches<S>* caches, bool per_image) {
  if (net.spec.fusion == FusionKind::late_proportional) {
    auto probs = net.forward_mixture(ex.inputs, mode, rng, caches, per_image);
    return nn::xent_on_probs_sum(probs, ex.target).loss;
  }
  auto scores = net.forward_single(ex.inputs, mode, rng, caches);
  return nn::softmax_xent_sum(scores, ex.target).loss;
}

}  // namespace detail

/// Summed validation loss in eval mode (dropout off); deterministic.
template <typename S>
double validation_loss(const FusionNetwork<S>& net, const std::vector<TrainingExample<S>>& vals,
                       bool per_image = false) {
  double total = 0;
  for (const auto& ex : vals)
    total += detail::example_loss<S>(net, ex, nn::RunMode::eval,
                                     static_cast<std::mt19937_64*>(nullptr),
                                     static_cast<FusionCaches<S>*>(nullptr), per_image);
  return total;
}

/// SGD fine-tuning: batch size 1 over a seeded shuffle, summed per-pixel
/// cross-entropy, momentum, per-layer multipliers, doubled bias learning
/// rates. Records training loss per iteration and validation loss every
/// val_interval iterations; the network ends at the best-validation state
/// (or the final state when no validation frames are given). A non-finite
/// loss aborts with the trace retained.
template <typename S>
TrainResult train(FusionNetwork<S>& net, const std::vector<const LabeledFrame*>& train_frames,
                  const std::vector<const LabeledFrame*>& val_frames, const Hyperparams& hp,
                  bool late_prop_per_image = false) {
  hp.validate();
  if (!net.trainable())
    throw std::runtime_error("train: " + std::string(fusion_kind_name(net.spec.fusion)) +
                             " has no trainable fusion parameters; train its arms as "
                             "single-modality networks instead");
  if (train_frames.empty()) throw std::runtime_error("train: no training frames");

  std::vector<TrainingExample<S>> examples;
  examples.reserve(train_frames.size());
  for (const auto* f : train_frames) examples.push_back(prepare_example<S>(*f, net.spec.modalities));
  std::vector<TrainingExample<S>> vals;
  for (const auto* f : val_frames) vals.push_back(prepare_example<S>(*f, net.spec.modalities));

  std::mt19937_64 rng(hp.seed);
  nn::SgdMomentum<S> opt(hp.base_lr, hp.momentum);
  auto params = net.flat_params();
  const auto names = net.flat_param_names();

  TrainResult result;
  std::vector<Tensor<S>> best_snapshot;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  FusionCaches<S> caches = net.make_caches();
  for (int iter = 0; iter < hp.max_iterations; ++iter) {
    if (iter % static_cast<int>(order.size()) == 0) std::shuffle(order.begin(), order.end(), rng);
    const auto& ex = examples[order[static_cast<std::size_t>(iter) % order.size()]];

    double loss;
    std::vector<nn::ParamGrad<S>> grads;
    if (net.spec.fusion == FusionKind::late_proportional) {
      auto probs = net.forward_mixture(ex.inputs, nn::RunMode::train, &rng, &caches,
                                       late_prop_per_image);
      auto lr = nn::xent_on_probs_sum(probs, ex.target);
      loss = lr.loss;
      if (std::isfinite(loss)) net.backward_mixture(caches, lr.grad, late_prop_per_image, grads);
    } else {
      auto scores = net.forward_single(ex.inputs, nn::RunMode::train, &rng, &caches);
      auto lr = nn::softmax_xent_sum(scores, ex.target);
      loss = lr.loss;
      if (std::isfinite(loss)) net.backward_single(caches, lr.grad, grads);
    }

    result.train_loss.push_back(loss);
    if (!std::isfinite(loss)) {
      result.diverged = true;
      result.divergence_reason = "non-finite loss at iteration " + std::to_string(iter);
      break;
    }

    std::vector<const nn::ParamGrad<S>*> grad_ptrs;
    grad_ptrs.reserve(grads.size());
    for (const auto& g : grads) grad_ptrs.push_back(&g);
    try {
      opt.step(params, grad_ptrs, names);
    } catch (const std::runtime_error& e) {
      result.diverged = true;
      result.divergence_reason = e.what();
      break;
    }

    if (!vals.empty() && (iter + 1) % hp.val_interval == 0) {
      const double vl = validation_loss(net, vals, late_prop_per_image);
      result.val_loss.emplace_back(iter + 1, vl);
      if (vl < result.best_val_loss) {
        result.best_val_loss = vl;
        result.best_iteration = iter + 1;
        best_snapshot = net.snapshot();
      }
    }
  }

  if (!vals.empty() && !best_snapshot.empty()) net.restore(best_snapshot);
  return result;
}

// ------------------------------------------------------------- grid search --

struct GridCell {
  Hyperparams hp;
  double val_loss = std::numeric_limits<double>::infinity();
  bool diverged = false;
  TrainResult result;
};

struct GridSearchResult {
  std::vector<GridCell> ranked;  // best (lowest validation loss) first
};

/// Trains every grid combination and ranks by validation loss; diverged
/// cells sort last instead of failing the search. Cells run on independent
/// RNG streams derived from base_seed, so jobs > 1 changes nothing but
/// wall-clock time.
template <typename S>
GridSearchResult grid_search(const FusionSpec& spec, const GridDef& grid,
                             const std::vector<const LabeledFrame*>& train_frames,
                             const std::vector<const LabeledFrame*>& val_frames,
                             const ParentSet* parents, std::uint64_t base_seed, int jobs = 1) {
  if (val_frames.empty()) throw std::runtime_error("grid_search: validation frames required");
  const auto combos = enumerate_grid(spec.fusion, grid, spec.hp);
  std::vector<GridCell> cells(combos.size());

  auto run_cell = [&](std::size_t c) {
    GridCell& cell = cells[c];
    cell.hp = combos[c];
    cell.hp.seed = derive_seed(base_seed, {0x9d1du, c});
    FusionSpec cell_spec = spec;
    cell_spec.hp = cell.hp;
    cell_spec.arm_layers.clear();  // re-derive stacks so multipliers take effect
    cell_spec.shared_layers.clear();
    auto net = build_network<S>(cell_spec);
    std::mt19937_64 init_rng(derive_seed(cell.hp.seed, {0x1217u}));
    if (parents)
      init_transfer(net, *parents, init_rng);
    else
      net.init_scratch(init_rng);
    cell.result = train(net, train_frames, val_frames, cell.hp);
    cell.diverged = cell.result.diverged;
    if (!cell.diverged && std::isfinite(cell.result.best_val_loss))
      cell.val_loss = cell.result.best_val_loss;
  };

  if (jobs <= 1 || cells.size() <= 1) {
    for (std::size_t c = 0; c < cells.size(); ++c) run_cell(c);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    const int n = std::min<int>(jobs, static_cast<int>(cells.size()));
    std::mutex mu;
    for (int t = 0; t < n; ++t)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t c;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= cells.size()) return;
            c = next++;
          }
          run_cell(c);
        }
      });
    for (auto& t : pool) t.join();
  }

  GridSearchResult out;
  std::vector<std::size_t> idx(cells.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (cells[a].diverged != cells[b].diverged) return !cells[a].diverged;
    return cells[a].val_loss < cells[b].val_loss;
  });
  for (auto i : idx) out.ranked.push_back(std::move(cells[i]));
  return out;
}

}  // namespace hf
