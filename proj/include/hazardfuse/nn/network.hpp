#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazardfuse/nn/layers.hpp"
#include "hazardfuse/tensor.hpp"

namespace hf::nn {

// -------------------------------------------------------------- LayerSpec --

enum class LayerKind { conv, relu, maxpool, dropout, bilinear_upsample, score };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int out_channels = 0;
  int factor = 1;               // bilinear_upsample only
  double lr_multiplier = 1.0;   // conv/score only
  double dropout_ratio = 0.5;   // dropout only

  bool has_params() const { return kind == LayerKind::conv || kind == LayerKind::score; }

  static LayerSpec conv(int kernel, int out_channels, int stride = 1, int pad = -1,
                        double lr_mult = 1.0) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad < 0 ? kernel / 2 : pad;  // default keeps spatial dims for odd kernels
    s.out_channels = out_channels;
    s.lr_multiplier = lr_mult;
    return s;
  }
  static LayerSpec score(int out_channels = 2, double lr_mult = 1.0) {
    LayerSpec s = conv(1, out_channels, 1, 0, lr_mult);
    s.kind = LayerKind::score;
    return s;
  }
  static LayerSpec relu_() {
    return LayerSpec{};
  }
  static LayerSpec maxpool(int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::maxpool;
    s.kernel = kernel;
    s.stride = stride;
    return s;
  }
  static LayerSpec dropout(double ratio) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.dropout_ratio = ratio;
    return s;
  }
  static LayerSpec upsample(int factor) {
    LayerSpec s;
    s.kind = LayerKind::bilinear_upsample;
    s.factor = factor;
    return s;
  }

  void validate() const {
    if ((kind == LayerKind::conv || kind == LayerKind::score) &&
        (kernel < 1 || out_channels < 1))
      throw std::invalid_argument("LayerSpec: conv layers need kernel >= 1 and out_channels >= 1");
    if (kind == LayerKind::dropout && (dropout_ratio < 0.0 || dropout_ratio >= 1.0))
      throw std::invalid_argument("LayerSpec: dropout_ratio must be in [0,1)");
    if (kind == LayerKind::bilinear_upsample && factor < 1)
      throw std::invalid_argument("LayerSpec: upsample factor must be >= 1");
    if (lr_multiplier < 0.0)
      throw std::invalid_argument("LayerSpec: lr_multiplier must be >= 0");
  }
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::dropout: return "dropout";
    case LayerKind::bilinear_upsample: return "bilinear_upsample";
    case LayerKind::score: return "score";
  }
  return "?";
}

inline LayerKind layer_kind_from_name(const std::string& n) {
  if (n == "conv") return LayerKind::conv;
  if (n == "relu") return LayerKind::relu;
  if (n == "maxpool") return LayerKind::maxpool;
  if (n == "dropout") return LayerKind::dropout;
  if (n == "bilinear_upsample") return LayerKind::bilinear_upsample;
  if (n == "score") return LayerKind::score;
  throw std::invalid_argument("unknown layer kind: " + n);
}

/// Default desk-scale segmentation stack. Mirrors the usual FCN topology:
/// two conv/pool blocks, an "fc-analog" conv, dropout, a 1x1 score layer and
/// x4 bilinear upsampling back to input resolution.
inline std::vector<LayerSpec> toy_fcn_specs(double dropout_ratio = 0.5,
                                            double final_lr_mult = 1.0) {
  return {
      LayerSpec::conv(3, 16), LayerSpec::relu_(), LayerSpec::maxpool(2, 2),
      LayerSpec::conv(3, 32), LayerSpec::relu_(), LayerSpec::maxpool(2, 2),
      LayerSpec::conv(3, 32), LayerSpec::relu_(), LayerSpec::dropout(dropout_ratio),
      LayerSpec::score(2, final_lr_mult), LayerSpec::upsample(4),
  };
}

// ------------------------------------------------------------- Sequential --

enum class RunMode { train, eval };

template <typename S>
struct SeqCache {
  std::vector<Tensor<S>> inputs;                    // input of each layer
  std::vector<std::vector<Eigen::Index>> argmax;    // per layer (maxpool only)
  std::vector<Tensor<S>> masks;                     // per layer (dropout only)
  Tensor<S> output;
};

template <typename S>
struct ParamGrad {
  Tensor<S> dw, db;
};

/// One chain of layers with its trainable parameters. Parameter shapes are
/// resolved from the input channel count at construction time.
template <typename S>
class Sequential {
 public:
  struct Param {
    Tensor<S> w, b;
    std::string name;
    double lr_mult = 1.0;
    bool is_score = false;
    int layer_index = -1;
  };

  Sequential() = default;

  Sequential(std::vector<LayerSpec> specs, int in_channels)
      : specs_(std::move(specs)), in_channels_(in_channels) {
    int c = in_channels;
    int conv_count = 0;
    for (int li = 0; li < static_cast<int>(specs_.size()); ++li) {
      const auto& sp = specs_[static_cast<std::size_t>(li)];
      sp.validate();
      if (sp.has_params()) {
        Param p;
        p.w = Tensor<S>::oihw(sp.out_channels, c, sp.kernel, sp.kernel);
        p.b = Tensor<S>::vec(sp.out_channels);
        p.name = (sp.kind == LayerKind::score) ? "score" : ("conv" + std::to_string(conv_count));
        p.lr_mult = sp.lr_multiplier;
        p.is_score = (sp.kind == LayerKind::score);
        p.layer_index = li;
        params_.push_back(std::move(p));
        if (sp.kind != LayerKind::score) ++conv_count;
        c = sp.out_channels;
      }
    }
    out_channels_ = c;
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  /// He-normal conv weights, sigma=0.01 for the score layer, zero biases.
  void init_scratch(std::mt19937_64& rng) {
    for (auto& p : params_) {
      if (p.is_score) {
        p.w.fill_gaussian(rng, 0.01);
      } else {
        const double fan_in = static_cast<double>(p.w.in_ch()) * p.w.dim(2) * p.w.dim(3);
        p.w.fill_gaussian(rng, std::sqrt(2.0 / fan_in));
      }
      p.b.set_zero();
    }
  }

  /// Forward pass. In train mode dropout masks are sampled from rng unless
  /// frozen_masks supplies them (gradient checks freeze the mask so the loss
  /// stays a deterministic function of the parameters).
  Tensor<S> forward(const Tensor<S>& x, SeqCache<S>* cache, RunMode mode,
                    std::mt19937_64* rng = nullptr,
                    const std::vector<Tensor<S>>* frozen_masks = nullptr) const {
    if (x.channels() != in_channels_)
      throw std::invalid_argument("network: input has " + std::to_string(x.channels()) +
                                  " channels, expected " + std::to_string(in_channels_));
    if (cache) {
      cache->inputs.assign(specs_.size(), Tensor<S>());
      cache->argmax.assign(specs_.size(), {});
      cache->masks.assign(specs_.size(), Tensor<S>());
    }
    Tensor<S> cur = x;
    std::size_t pi = 0;
    for (std::size_t li = 0; li < specs_.size(); ++li) {
      const auto& sp = specs_[li];
      if (cache) cache->inputs[li] = cur;
      switch (sp.kind) {
        case LayerKind::conv:
        case LayerKind::score: {
          const auto& p = params_[pi++];
          cur = conv2d_forward(cur, p.w, p.b, sp.stride, sp.pad);
          break;
        }
        case LayerKind::relu:
          cur = relu_forward(cur);
          break;
        case LayerKind::maxpool: {
          auto r = maxpool_forward(cur, sp.kernel, sp.stride);
          if (cache) cache->argmax[li] = std::move(r.argmax);
          cur = std::move(r.y);
          break;
        }
        case LayerKind::dropout: {
          if (mode == RunMode::eval) break;  // identity at test time
          if (frozen_masks && (*frozen_masks)[li].numel() > 0) {
            if (cache) cache->masks[li] = (*frozen_masks)[li];
            cur = dropout_apply_mask(cur, (*frozen_masks)[li]);
          } else {
            if (!rng) throw std::invalid_argument("network: dropout in train mode needs an rng");
            auto [y, mask] = dropout_forward(cur, sp.dropout_ratio, *rng);
            if (cache) cache->masks[li] = std::move(mask);
            cur = std::move(y);
          }
          break;
        }
        case LayerKind::bilinear_upsample:
          cur = bilinear_upsample_forward(cur, sp.factor);
          break;
      }
    }
    if (cache) cache->output = cur;
    return cur;
  }

  /// Backward pass through the cached forward. Returns the gradient w.r.t.
  /// the chain input and fills one ParamGrad per parameter.
  Tensor<S> backward(const SeqCache<S>& cache, const Tensor<S>& dout,
                     std::vector<ParamGrad<S>>& grads) const {
    grads.assign(params_.size(), ParamGrad<S>{});
    Tensor<S> cur = dout;
    std::size_t pi = params_.size();
    for (std::size_t li = specs_.size(); li-- > 0;) {
      const auto& sp = specs_[li];
      const Tensor<S>& x = cache.inputs[li];
      switch (sp.kind) {
        case LayerKind::conv:
        case LayerKind::score: {
          --pi;
          auto g = conv2d_backward(x, params_[pi].w, cur, sp.stride, sp.pad);
          grads[pi].dw = std::move(g.dw);
          grads[pi].db = std::move(g.db);
          cur = std::move(g.dx);
          break;
        }
        case LayerKind::relu:
          cur = relu_backward(x, cur);
          break;
        case LayerKind::maxpool:
          cur = maxpool_backward(x, cache.argmax[li], cur);
          break;
        case LayerKind::dropout:
          if (cache.masks[li].numel() > 0) cur = dropout_backward(cache.masks[li], cur);
          break;
        case LayerKind::bilinear_upsample:
          cur = bilinear_upsample_backward(cur, sp.factor, x.height(), x.width());
          break;
      }
    }
    return cur;
  }

  /// Index of the layer after the last maxpool (the mid-fusion split point).
  int split_after_last_pool() const {
    int last = -1;
    for (int li = 0; li < static_cast<int>(specs_.size()); ++li)
      if (specs_[static_cast<std::size_t>(li)].kind == LayerKind::maxpool) last = li;
    if (last < 0) throw std::logic_error("network has no pooling layer to split at");
    return last + 1;
  }

 private:
  std::vector<LayerSpec> specs_;
  std::vector<Param> params_;
  int in_channels_ = 0;
  int out_channels_ = 0;
};

/// Crops or zero-pads the bottom/right edge so the prediction covers exactly
/// the input resolution when the input is not a multiple of the total
/// downsampling stride. Gradient counterpart of fit_to is fit_to with the
/// original dims.
template <typename S>
Tensor<S> fit_to(const Tensor<S>& x, int h, int w) {
  if (x.height() == h && x.width() == w) return x;
  Tensor<S> y = Tensor<S>::chw(x.channels(), h, w);
  const int ch = std::min(h, x.height()), cw = std::min(w, x.width());
  for (int c = 0; c < x.channels(); ++c)
    for (int i = 0; i < ch; ++i)
      for (int j = 0; j < cw; ++j) y(c, i, j) = x(c, i, j);
  return y;
}

}  // namespace hf::nn
