#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "hazardfuse/nn/layers.hpp"
#include "hazardfuse/nn/network.hpp"
#include "hazardfuse/tensor.hpp"

namespace hf::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int sampled = 0;
};

/// Central-difference verification of analytic gradients, run in double
/// precision. loss_fn must be a deterministic function of the parameters
/// (dropout masks frozen, data fixed). Checks up to max_samples parameters,
/// chosen uniformly without replacement when the network is larger.
inline GradCheckReport gradcheck_params(const std::function<double()>& loss_fn,
                                        const std::vector<Tensor<double>*>& params,
                                        const std::vector<const Tensor<double>*>& analytic,
                                        double epsilon = 1e-4, int max_samples = 400,
                                        std::uint64_t seed = 0) {
  Eigen::Index total = 0;
  for (const auto* p : params) total += p->numel();

  std::vector<Eigen::Index> picks;
  if (total <= max_samples) {
    picks.resize(static_cast<std::size_t>(total));
    for (Eigen::Index i = 0; i < total; ++i) picks[static_cast<std::size_t>(i)] = i;
  } else {
    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(total));
    for (Eigen::Index i = 0; i < total; ++i) all[static_cast<std::size_t>(i)] = i;
    std::shuffle(all.begin(), all.end(), rng);
    picks.assign(all.begin(), all.begin() + max_samples);
  }

  GradCheckReport rep;
  for (Eigen::Index flat : picks) {
    // Locate the owning tensor.
    std::size_t ti = 0;
    Eigen::Index off = flat;
    while (off >= params[ti]->numel()) {
      off -= params[ti]->numel();
      ++ti;
    }
    double& slot = (*params[ti])[off];
    const double saved = slot;
    slot = saved + epsilon;
    const double lp = loss_fn();
    slot = saved - epsilon;
    const double lm = loss_fn();
    slot = saved;

    const double numeric = (lp - lm) / (2.0 * epsilon);
    const double a = (*analytic[ti])[off];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    rep.max_rel_err = std::max(rep.max_rel_err, std::abs(a - numeric) / denom);
    ++rep.sampled;
  }
  return rep;
}

/// Convenience wrapper: checks a Sequential under the summed softmax
/// cross-entropy loss. Dropout masks are sampled once and frozen for every
/// perturbed evaluation.
inline GradCheckReport gradcheck_sequential(Sequential<double>& net, const Tensor<double>& input,
                                            const std::vector<std::uint8_t>& target,
                                            double epsilon = 1e-4, int max_samples = 400,
                                            std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  SeqCache<double> cache;
  net.forward(input, &cache, RunMode::train, &rng);
  const std::vector<Tensor<double>> frozen = cache.masks;

  auto run_loss = [&](SeqCache<double>* c) {
    auto out = net.forward(input, c, RunMode::train, nullptr, &frozen);
    return softmax_xent_sum(out, target);
  };

  SeqCache<double> cache2;
  auto loss0 = run_loss(&cache2);
  std::vector<ParamGrad<double>> grads;
  net.backward(cache2, loss0.grad, grads);

  std::vector<Tensor<double>*> params;
  std::vector<const Tensor<double>*> analytic;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    params.push_back(&net.params()[i].w);
    analytic.push_back(&grads[i].dw);
    params.push_back(&net.params()[i].b);
    analytic.push_back(&grads[i].db);
  }

  return gradcheck_params([&] { return run_loss(nullptr).loss; }, params, analytic, epsilon,
                          max_samples, seed);
}

}  // namespace hf::nn
