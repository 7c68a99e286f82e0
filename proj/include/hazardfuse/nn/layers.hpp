#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "hazardfuse/tensor.hpp"

namespace hf::nn {

// Class index convention used throughout: channel 0 = trip (positive class),
// channel 1 = non-trip.
inline constexpr int kTripClass = 0;
inline constexpr int kBackgroundClass = 1;

namespace detail {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

/// Unrolls input patches into a (in_ch*kh*kw) x (out_h*out_w) matrix so
/// convolution becomes a single GEMM against the (out_ch x in_ch*kh*kw)
/// filter matrix.
template <typename S>
Mat<S> im2col(const Tensor<S>& x, int kh, int kw, int stride, int pad, int oh, int ow) {
  const int c = x.channels(), h = x.height(), w = x.width();
  Mat<S> cols(static_cast<Eigen::Index>(c) * kh * kw, static_cast<Eigen::Index>(oh) * ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index p = static_cast<Eigen::Index>(oy) * ow + ox;
      S* col = cols.data() + p * cols.rows();
      Eigen::Index k = 0;
      for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            for (int kx = 0; kx < kw; ++kx) col[k++] = S(0);
            continue;
          }
          const S* row = x.data() + x.index3(ci, iy, 0);
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride - pad + kx;
            col[k++] = (ix < 0 || ix >= w) ? S(0) : row[ix];
          }
        }
      }
    }
  }
  return cols;
}

/// Scatter-add transpose of im2col.
template <typename S>
void col2im_accumulate(const Mat<S>& cols, Tensor<S>& dx, int kh, int kw, int stride, int pad,
                       int oh, int ow) {
  const int c = dx.channels(), h = dx.height(), w = dx.width();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index p = static_cast<Eigen::Index>(oy) * ow + ox;
      const S* col = cols.data() + p * cols.rows();
      Eigen::Index k = 0;
      for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            k += kw;
            continue;
          }
          S* row = dx.data() + dx.index3(ci, iy, 0);
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) row[ix] += col[k];
            ++k;
          }
        }
      }
    }
  }
}

}  // namespace detail

// ------------------------------------------------------------------- conv --

template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride,
                         int pad) {
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: stride must be >=1, pad >=0");
  if (x.rank() != 3 || w.rank() != 4)
    throw std::invalid_argument("conv2d: expected chw input and oihw weights, got " +
                                x.shape_str() + " and " + w.shape_str());
  if (x.channels() != w.in_ch())
    throw std::invalid_argument("conv2d: input channels " + std::to_string(x.channels()) +
                                " do not match filter in_ch " + std::to_string(w.in_ch()) +
                                " (input " + x.shape_str() + ", weights " + w.shape_str() + ")");
  if (b.numel() != w.out_ch())
    throw std::invalid_argument("conv2d: bias length " + std::to_string(b.numel()) +
                                " does not match out_ch " + std::to_string(w.out_ch()));
  const int kh = w.dim(2), kw = w.dim(3);
  const int oh = detail::conv_out_dim(x.height(), kh, stride, pad);
  const int ow = detail::conv_out_dim(x.width(), kw, stride, pad);
  if (oh <= 0 || ow <= 0)
    throw std::invalid_argument("conv2d: kernel " + w.shape_str() + " does not fit input " +
                                x.shape_str());

  const auto cols = detail::im2col(x, kh, kw, stride, pad, oh, ow);
  Eigen::Map<const detail::MatRM<S>> wm(w.data(), w.out_ch(), cols.rows());

  Tensor<S> y = Tensor<S>::chw(w.out_ch(), oh, ow);
  Eigen::Map<detail::MatRM<S>> ym(y.data(), w.out_ch(), cols.cols());
  ym.noalias() = wm * cols;
  ym.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(b.data(), b.numel());
  return y;
}

template <typename S>
struct ConvGrads {
  Tensor<S> dx, dw, db;
};

template <typename S>
ConvGrads<S> conv2d_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& dy,
                             int stride, int pad) {
  const int kh = w.dim(2), kw = w.dim(3);
  const int oh = dy.height(), ow = dy.width();
  const auto cols = detail::im2col(x, kh, kw, stride, pad, oh, ow);

  Eigen::Map<const detail::MatRM<S>> dym(dy.data(), dy.channels(),
                                          static_cast<Eigen::Index>(oh) * ow);

  ConvGrads<S> g{Tensor<S>::like(x), Tensor<S>::like(w), Tensor<S>::vec(w.out_ch())};
  Eigen::Map<detail::MatRM<S>> dwm(g.dw.data(), w.out_ch(), cols.rows());
  dwm.noalias() = dym * cols.transpose();
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(g.db.data(), g.db.numel()) = dym.rowwise().sum();

  Eigen::Map<const detail::MatRM<S>> wm(w.data(), w.out_ch(), cols.rows());
  detail::Mat<S> dcols = wm.transpose() * dym;
  detail::col2im_accumulate(dcols, g.dx, kh, kw, stride, pad, oh, ow);
  return g;
}

// ---------------------------------------------------------------- maxpool --

template <typename S>
struct PoolResult {
  Tensor<S> y;
  std::vector<Eigen::Index> argmax;  // flat input index per output cell
};

/// Ties broken toward the lowest linear index (first maximum encountered in
/// row-major window order).
template <typename S>
PoolResult<S> maxpool_forward(const Tensor<S>& x, int kernel, int stride) {
  if (kernel < 1 || stride < 1) throw std::invalid_argument("maxpool: kernel and stride must be >=1");
  if (x.height() < kernel || x.width() < kernel)
    throw std::invalid_argument("maxpool: window " + std::to_string(kernel) +
                                " larger than input " + x.shape_str());
  const int c = x.channels();
  const int oh = (x.height() - kernel) / stride + 1;
  const int ow = (x.width() - kernel) / stride + 1;
  PoolResult<S> r{Tensor<S>::chw(c, oh, ow), {}};
  r.argmax.resize(static_cast<std::size_t>(c) * oh * ow);
  Eigen::Index o = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++o) {
        S best{};
        Eigen::Index best_idx = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride + ky;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride + kx;
            const Eigen::Index idx = x.index3(ci, iy, ix);
            if (best_idx < 0 || x[idx] > best) {
              best = x[idx];
              best_idx = idx;
            }
          }
        }
        r.y[o] = best;
        r.argmax[static_cast<std::size_t>(o)] = best_idx;
      }
    }
  }
  return r;
}

template <typename S>
Tensor<S> maxpool_backward(const Tensor<S>& x_like, const std::vector<Eigen::Index>& argmax,
                           const Tensor<S>& dy) {
  Tensor<S> dx = Tensor<S>::like(x_like);
  for (Eigen::Index o = 0; o < dy.numel(); ++o) dx[argmax[static_cast<std::size_t>(o)]] += dy[o];
  return dx;
}

// ------------------------------------------------------------------- relu --

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::like(x);
  y.array() = x.array().max(S(0));
  return y;
}

template <typename S>
Tensor<S> relu_backward(const Tensor<S>& x, const Tensor<S>& dy) {
  Tensor<S> dx = Tensor<S>::like(x);
  dx.array() = (x.array() > S(0)).select(dy.array(), S(0));
  return dx;
}

// ---------------------------------------------------------------- dropout --

/// Inverted dropout: kept units are scaled by 1/(1-ratio) at train time so
/// inference is the identity. The mask tensor holds the already-scaled factor
/// (0 or 1/keep), which makes backward a plain elementwise product and lets
/// gradient checks freeze the mask.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> dropout_forward(const Tensor<S>& x, double ratio,
                                                std::mt19937_64& rng) {
  if (ratio < 0.0 || ratio >= 1.0) throw std::invalid_argument("dropout: ratio must be in [0,1)");
  const double keep = 1.0 - ratio;
  Tensor<S> mask = Tensor<S>::like(x);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < mask.numel(); ++i)
    mask[i] = u(rng) < keep ? static_cast<S>(1.0 / keep) : S(0);
  Tensor<S> y = Tensor<S>::like(x);
  y.array() = x.array() * mask.array();
  return {std::move(y), std::move(mask)};
}

template <typename S>
Tensor<S> dropout_apply_mask(const Tensor<S>& x, const Tensor<S>& mask) {
  Tensor<S> y = Tensor<S>::like(x);
  y.array() = x.array() * mask.array();
  return y;
}

template <typename S>
Tensor<S> dropout_backward(const Tensor<S>& mask, const Tensor<S>& dy) {
  Tensor<S> dx = Tensor<S>::like(dy);
  dx.array() = dy.array() * mask.array();
  return dx;
}

// ------------------------------------------------------- bilinear upsample --

namespace detail {

struct LerpTap {
  int lo, hi;
  double w_hi;  // weight of hi sample; lo gets 1 - w_hi
};

/// Source taps for align-corners-false interpolation, clamped at the edges.
inline std::vector<LerpTap> upsample_taps(int in, int factor) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(in) * factor);
  for (int o = 0; o < in * factor; ++o) {
    const double src = (o + 0.5) / factor - 0.5;
    double fl = std::floor(src);
    int lo = static_cast<int>(fl);
    double w = src - fl;
    int hi = lo + 1;
    if (lo < 0) { lo = 0; hi = 0; w = 0.0; }
    if (hi >= in) { hi = in - 1; lo = in - 1; w = 0.0; }
    taps[static_cast<std::size_t>(o)] = {lo, hi, w};
  }
  return taps;
}

}  // namespace detail

template <typename S>
Tensor<S> bilinear_upsample_forward(const Tensor<S>& x, int factor) {
  if (factor < 1) throw std::invalid_argument("bilinear_upsample: factor must be >= 1");
  if (factor == 1) return x;
  const auto ty = detail::upsample_taps(x.height(), factor);
  const auto tx = detail::upsample_taps(x.width(), factor);
  Tensor<S> y = Tensor<S>::chw(x.channels(), x.height() * factor, x.width() * factor);
  for (int c = 0; c < x.channels(); ++c) {
    for (int oy = 0; oy < y.height(); ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < y.width(); ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const double v00 = x(c, a.lo, b.lo), v01 = x(c, a.lo, b.hi);
        const double v10 = x(c, a.hi, b.lo), v11 = x(c, a.hi, b.hi);
        const double top = v00 * (1.0 - b.w_hi) + v01 * b.w_hi;
        const double bot = v10 * (1.0 - b.w_hi) + v11 * b.w_hi;
        y(c, oy, ox) = static_cast<S>(top * (1.0 - a.w_hi) + bot * a.w_hi);
      }
    }
  }
  return y;
}

/// Exact transpose of the forward interpolation.
template <typename S>
Tensor<S> bilinear_upsample_backward(const Tensor<S>& dy, int factor, int in_h, int in_w) {
  if (factor == 1) return dy;
  const auto ty = detail::upsample_taps(in_h, factor);
  const auto tx = detail::upsample_taps(in_w, factor);
  Tensor<S> dx = Tensor<S>::chw(dy.channels(), in_h, in_w);
  for (int c = 0; c < dy.channels(); ++c) {
    for (int oy = 0; oy < dy.height(); ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < dy.width(); ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const double g = dy(c, oy, ox);
        dx(c, a.lo, b.lo) += static_cast<S>(g * (1.0 - a.w_hi) * (1.0 - b.w_hi));
        dx(c, a.lo, b.hi) += static_cast<S>(g * (1.0 - a.w_hi) * b.w_hi);
        dx(c, a.hi, b.lo) += static_cast<S>(g * a.w_hi * (1.0 - b.w_hi));
        dx(c, a.hi, b.hi) += static_cast<S>(g * a.w_hi * b.w_hi);
      }
    }
  }
  return dx;
}

// -------------------------------------------------------- softmax and loss --

/// Per-pixel 2-class softmax over channel pairs.
template <typename S>
Tensor<S> softmax2(const Tensor<S>& scores) {
  if (scores.channels() != 2)
    throw std::invalid_argument("softmax2: expected 2 channels, got " + scores.shape_str());
  Tensor<S> p = Tensor<S>::like(scores);
  const Eigen::Index hw = static_cast<Eigen::Index>(scores.height()) * scores.width();
  for (Eigen::Index i = 0; i < hw; ++i) {
    const double s0 = scores[i], s1 = scores[hw + i];
    const double m = std::max(s0, s1);
    const double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
    const double z = e0 + e1;
    p[i] = static_cast<S>(e0 / z);
    p[hw + i] = static_cast<S>(e1 / z);
  }
  return p;
}

template <typename S>
struct LossResult {
  double loss = 0.0;
  Tensor<S> grad;
  Eigen::Index counted_pixels = 0;
  bool all_ignored = false;
};

/// Summed (not averaged) per-pixel softmax cross-entropy over the non-ignored
/// pixels. target is 1 where the pixel is a trip hazard (class 0), 0
/// otherwise. ignore may be empty.
template <typename S>
LossResult<S> softmax_xent_sum(const Tensor<S>& scores, const std::vector<std::uint8_t>& target,
                               const std::vector<std::uint8_t>& ignore = {}) {
  if (scores.channels() != 2)
    throw std::invalid_argument("softmax_xent_sum: scores must have 2 channels, got " +
                                scores.shape_str());
  const Eigen::Index hw = static_cast<Eigen::Index>(scores.height()) * scores.width();
  if (static_cast<Eigen::Index>(target.size()) != hw)
    throw std::invalid_argument("softmax_xent_sum: target size " + std::to_string(target.size()) +
                                " does not match " + std::to_string(hw) + " pixels");
  if (!ignore.empty() && static_cast<Eigen::Index>(ignore.size()) != hw)
    throw std::invalid_argument("softmax_xent_sum: ignore mask size mismatch");

  LossResult<S> r;
  r.grad = Tensor<S>::like(scores);
  for (Eigen::Index i = 0; i < hw; ++i) {
    if (!ignore.empty() && ignore[static_cast<std::size_t>(i)]) continue;
    const int t = target[static_cast<std::size_t>(i)] ? kTripClass : kBackgroundClass;
    const double s0 = scores[i], s1 = scores[hw + i];
    const double m = std::max(s0, s1);
    const double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
    const double z = e0 + e1;
    const double p0 = e0 / z, p1 = e1 / z;
    r.loss += -((t == 0 ? s0 : s1) - m - std::log(z));
    r.grad[i] = static_cast<S>(p0 - (t == 0 ? 1.0 : 0.0));
    r.grad[hw + i] = static_cast<S>(p1 - (t == 1 ? 1.0 : 0.0));
    ++r.counted_pixels;
  }
  r.all_ignored = (r.counted_pixels == 0);
  return r;
}

/// Cross-entropy on already-formed probabilities (used for mixture outputs
/// where the fused distribution is not a softmax of any score map). Returns
/// d(loss)/d(probs).
template <typename S>
LossResult<S> xent_on_probs_sum(const Tensor<S>& probs, const std::vector<std::uint8_t>& target,
                                const std::vector<std::uint8_t>& ignore = {}) {
  const Eigen::Index hw = static_cast<Eigen::Index>(probs.height()) * probs.width();
  if (static_cast<Eigen::Index>(target.size()) != hw)
    throw std::invalid_argument("xent_on_probs_sum: target size mismatch");
  LossResult<S> r;
  r.grad = Tensor<S>::like(probs);
  constexpr double kFloor = 1e-12;  // keeps the loss finite when an arm saturates
  for (Eigen::Index i = 0; i < hw; ++i) {
    if (!ignore.empty() && ignore[static_cast<std::size_t>(i)]) continue;
    const int t = target[static_cast<std::size_t>(i)] ? kTripClass : kBackgroundClass;
    const double pt = std::max(static_cast<double>(probs[t == 0 ? i : hw + i]), kFloor);
    r.loss += -std::log(pt);
    r.grad[(t == 0 ? i : hw + i)] = static_cast<S>(-1.0 / pt);
    ++r.counted_pixels;
  }
  r.all_ignored = (r.counted_pixels == 0);
  return r;
}

}  // namespace hf::nn
