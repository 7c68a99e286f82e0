#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hazardfuse/nn/network.hpp"
#include "hazardfuse/tensor.hpp"

namespace hf::nn {

/// SGD with momentum, per-layer learning-rate multipliers and doubled bias
/// learning rates: v <- momentum*v - lr_eff*g, w <- w + v.
template <typename S>
class SgdMomentum {
 public:
  SgdMomentum(double base_lr, double momentum = 0.99, double bias_lr_factor = 2.0)
      : base_lr_(base_lr), momentum_(momentum), bias_lr_factor_(bias_lr_factor) {
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("SgdMomentum: momentum must be in [0,1)");
  }

  double base_lr() const { return base_lr_; }
  double momentum() const { return momentum_; }
  double bias_lr_factor() const { return bias_lr_factor_; }

  /// Applies one step to a parameter list. Velocity slots are created lazily
  /// on first use and mirror the parameter shapes. Non-finite gradients
  /// reject the whole step, naming the offending parameter.
  void step(std::vector<typename Sequential<S>::Param*>& params,
            const std::vector<const ParamGrad<S>*>& grads,
            const std::vector<std::string>& names) {
    if (params.size() != grads.size())
      throw std::invalid_argument("SgdMomentum: got " + std::to_string(grads.size()) +
                                  " gradients for " + std::to_string(params.size()) +
                                  " parameters");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!grads[i]->dw.all_finite() || !grads[i]->db.all_finite())
        throw std::runtime_error("SgdMomentum: non-finite gradient in " + names[i] +
                                 ", step rejected");

    if (vel_w_.empty()) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        vel_w_.push_back(Tensor<S>::like(params[i]->w));
        vel_b_.push_back(Tensor<S>::like(params[i]->b));
      }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      const double lr_w = base_lr_ * p.lr_mult;
      const double lr_b = lr_w * bias_lr_factor_;
      vel_w_[i].array() = static_cast<S>(momentum_) * vel_w_[i].array() -
                          static_cast<S>(lr_w) * grads[i]->dw.array();
      vel_b_[i].array() = static_cast<S>(momentum_) * vel_b_[i].array() -
                          static_cast<S>(lr_b) * grads[i]->db.array();
      p.w.array() += vel_w_[i].array();
      p.b.array() += vel_b_[i].array();
    }
  }

 private:
  double base_lr_;
  double momentum_;
  double bias_lr_factor_;
  std::vector<Tensor<S>> vel_w_, vel_b_;
};

}  // namespace hf::nn
