#pragma once

#include <vector>

#include "hazardfuse/nn/layers.hpp"
#include "hazardfuse/tensor.hpp"

namespace hf {

/// Intermediates of the proportional (MixDCNN-style) mixture, kept for the
/// backward pass.
template <typename S>
struct MixtureCache {
  Tensor<S> probs_a, probs_b;       // per-component softmax
  std::vector<S> w_a;               // occupation weight of component A (per pixel, or size 1)
  std::vector<Eigen::Index> arg_a;  // confidence argmax channel per pixel
  std::vector<Eigen::Index> arg_b;
};

/// Proportional fusion: each component's confidence is its best (max) class
/// score; occupation weights are the softmax of the confidences; the fused
/// distribution is the weight-blended mixture of the component softmaxes.
/// per_image pools the confidence over all pixels (one weight per map)
/// instead of weighting each pixel independently.
template <typename S>
Tensor<S> proportional_mixture_forward(const Tensor<S>& scores_a, const Tensor<S>& scores_b,
                                       MixtureCache<S>* cache, bool per_image = false) {
  if (!scores_a.same_shape(scores_b))
    throw std::invalid_argument("proportional mixture: score maps differ: " +
                                scores_a.shape_str() + " vs " + scores_b.shape_str());
  if (scores_a.channels() != 2)
    throw std::invalid_argument("proportional mixture: expected 2-class scores, got " +
                                scores_a.shape_str());
  const Eigen::Index hw = static_cast<Eigen::Index>(scores_a.height()) * scores_a.width();

  Tensor<S> pa = nn::softmax2(scores_a);
  Tensor<S> pb = nn::softmax2(scores_b);

  std::vector<Eigen::Index> arg_a(static_cast<std::size_t>(hw)),
      arg_b(static_cast<std::size_t>(hw));
  std::vector<S> wa;
  if (per_image) {
    double ca = 0, cb = 0;
    for (Eigen::Index i = 0; i < hw; ++i) {
      arg_a[static_cast<std::size_t>(i)] = scores_a[i] >= scores_a[hw + i] ? 0 : 1;
      arg_b[static_cast<std::size_t>(i)] = scores_b[i] >= scores_b[hw + i] ? 0 : 1;
      ca += scores_a[arg_a[static_cast<std::size_t>(i)] * hw + i];
      cb += scores_b[arg_b[static_cast<std::size_t>(i)] * hw + i];
    }
    ca /= static_cast<double>(hw);
    cb /= static_cast<double>(hw);
    wa.push_back(static_cast<S>(1.0 / (1.0 + std::exp(cb - ca))));
  } else {
    wa.resize(static_cast<std::size_t>(hw));
    for (Eigen::Index i = 0; i < hw; ++i) {
      arg_a[static_cast<std::size_t>(i)] = scores_a[i] >= scores_a[hw + i] ? 0 : 1;
      arg_b[static_cast<std::size_t>(i)] = scores_b[i] >= scores_b[hw + i] ? 0 : 1;
      const double ca = scores_a[arg_a[static_cast<std::size_t>(i)] * hw + i];
      const double cb = scores_b[arg_b[static_cast<std::size_t>(i)] * hw + i];
      wa[static_cast<std::size_t>(i)] = static_cast<S>(1.0 / (1.0 + std::exp(cb - ca)));
    }
  }

  Tensor<S> fused = Tensor<S>::like(pa);
  for (Eigen::Index i = 0; i < hw; ++i) {
    const S w = per_image ? wa[0] : wa[static_cast<std::size_t>(i)];
    fused[i] = w * pa[i] + (S(1) - w) * pb[i];
    fused[hw + i] = w * pa[hw + i] + (S(1) - w) * pb[hw + i];
  }

  if (cache) {
    cache->probs_a = std::move(pa);
    cache->probs_b = std::move(pb);
    cache->w_a = std::move(wa);
    cache->arg_a = std::move(arg_a);
    cache->arg_b = std::move(arg_b);
  }
  return fused;
}

/// Gradients w.r.t. both component score maps given d(loss)/d(fused probs).
/// The confidence path routes through each component's argmax score slot.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> proportional_mixture_backward(const Tensor<S>& dfused,
                                                              const MixtureCache<S>& cache,
                                                              bool per_image = false) {
  const Eigen::Index hw = static_cast<Eigen::Index>(dfused.height()) * dfused.width();
  Tensor<S> dsa = Tensor<S>::like(dfused);
  Tensor<S> dsb = Tensor<S>::like(dfused);

  double dca_total = 0.0;
  for (Eigen::Index i = 0; i < hw; ++i) {
    const double w = per_image ? cache.w_a[0] : cache.w_a[static_cast<std::size_t>(i)];
    const double g0 = dfused[i], g1 = dfused[hw + i];
    const double pa0 = cache.probs_a[i], pa1 = cache.probs_a[hw + i];
    const double pb0 = cache.probs_b[i], pb1 = cache.probs_b[hw + i];

    // Softmax path of each component.
    const double dpa0 = w * g0, dpa1 = w * g1;
    const double dot_a = dpa0 * pa0 + dpa1 * pa1;
    dsa[i] = static_cast<S>(pa0 * (dpa0 - dot_a));
    dsa[hw + i] = static_cast<S>(pa1 * (dpa1 - dot_a));

    const double dpb0 = (1.0 - w) * g0, dpb1 = (1.0 - w) * g1;
    const double dot_b = dpb0 * pb0 + dpb1 * pb1;
    dsb[i] = static_cast<S>(pb0 * (dpb0 - dot_b));
    dsb[hw + i] = static_cast<S>(pb1 * (dpb1 - dot_b));

    // Confidence path: dL/dw_a times dw_a/dc with w_a = sigmoid(c_a - c_b).
    const double dwa = g0 * (pa0 - pb0) + g1 * (pa1 - pb1);
    const double dca = dwa * w * (1.0 - w);
    if (per_image) {
      dca_total += dca;
    } else {
      dsa[cache.arg_a[static_cast<std::size_t>(i)] * hw + i] += static_cast<S>(dca);
      dsb[cache.arg_b[static_cast<std::size_t>(i)] * hw + i] -= static_cast<S>(dca);
    }
  }
  if (per_image) {
    const double per_px = dca_total / static_cast<double>(hw);
    for (Eigen::Index i = 0; i < hw; ++i) {
      dsa[cache.arg_a[static_cast<std::size_t>(i)] * hw + i] += static_cast<S>(per_px);
      dsb[cache.arg_b[static_cast<std::size_t>(i)] * hw + i] -= static_cast<S>(per_px);
    }
  }
  return {std::move(dsa), std::move(dsb)};
}

}  // namespace hf
