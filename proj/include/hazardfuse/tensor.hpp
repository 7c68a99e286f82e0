#pragma once

#include <Eigen/Core>

#include <array>
#include <random>
#include <stdexcept>
#include <string>

namespace hf {

/// Dense numeric array of rank 1..4 in row-major layout, templated on the
/// scalar type (float for training/inference, double for gradient checks).
///
/// Shape conventions:
///   rank 1  (n)              biases
///   rank 3  (c, h, w)        activations and images
///   rank 4  (o, i, kh, kw)   convolution filters
template <typename S>
class Tensor {
 public:
  using Storage = Eigen::Array<S, Eigen::Dynamic, 1>;
  using Scalar = S;

  Tensor() = default;

  static Tensor vec(int n) { return Tensor({n, 1, 1, 1}, 1); }
  static Tensor chw(int c, int h, int w) { return Tensor({c, h, w, 1}, 3); }
  static Tensor oihw(int o, int i, int kh, int kw) { return Tensor({o, i, kh, kw}, 4); }

  static Tensor like(const Tensor& other) { return Tensor(other.dims_, other.rank_); }

  int rank() const { return rank_; }
  int dim(int k) const { return dims_[static_cast<std::size_t>(k)]; }

  // Activation accessors (rank 3).
  int channels() const { return dims_[0]; }
  int height() const { return rank_ == 4 ? dims_[2] : dims_[1]; }
  int width() const { return rank_ == 4 ? dims_[3] : dims_[2]; }

  // Filter accessors (rank 4).
  int out_ch() const { return dims_[0]; }
  int in_ch() const { return dims_[1]; }

  Eigen::Index numel() const { return data_.size(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  S& operator[](Eigen::Index i) { return data_[i]; }
  S operator[](Eigen::Index i) const { return data_[i]; }

  S& operator()(int c, int y, int x) { return data_[index3(c, y, x)]; }
  S operator()(int c, int y, int x) const { return data_[index3(c, y, x)]; }

  S& operator()(int o, int i, int y, int x) { return data_[index4(o, i, y, x)]; }
  S operator()(int o, int i, int y, int x) const { return data_[index4(o, i, y, x)]; }

  Eigen::Index index3(int c, int y, int x) const {
    return (static_cast<Eigen::Index>(c) * dims_[1] + y) * dims_[2] + x;
  }
  Eigen::Index index4(int o, int i, int y, int x) const {
    return ((static_cast<Eigen::Index>(o) * dims_[1] + i) * dims_[2] + y) * dims_[3] + x;
  }

  /// Row-major view of one channel plane of a rank-3 tensor.
  auto plane(int c) {
    return Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data_.data() + index3(c, 0, 0), dims_[1], dims_[2]);
  }
  auto plane(int c) const {
    return Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data_.data() + index3(c, 0, 0), dims_[1], dims_[2]);
  }

  bool same_shape(const Tensor& o) const { return rank_ == o.rank_ && dims_ == o.dims_; }

  std::string shape_str() const {
    std::string s;
    for (int k = 0; k < rank_; ++k) {
      if (k) s += 'x';
      s += std::to_string(dims_[static_cast<std::size_t>(k)]);
    }
    return s.empty() ? "scalar" : s;
  }

  bool all_finite() const { return data_.isFinite().all(); }

  void set_zero() { data_.setZero(); }
  void fill(S v) { data_.setConstant(v); }

  /// Fills with N(0, sigma) draws from the given generator.
  void fill_gaussian(std::mt19937_64& rng, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    for (Eigen::Index i = 0; i < data_.size(); ++i) data_[i] = static_cast<S>(dist(rng));
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(dims_, rank_);
    out.array() = data_.template cast<T>();
    return out;
  }

  // Internal constructor; public so Tensor<T>::cast can reach it across scalars.
  Tensor(std::array<int, 4> dims, int rank) : dims_(dims), rank_(rank) {
    Eigen::Index n = 1;
    for (int k = 0; k < rank; ++k) {
      if (dims_[static_cast<std::size_t>(k)] <= 0)
        throw std::invalid_argument("Tensor: non-positive dimension in shape " + shape_str());
      n *= dims_[static_cast<std::size_t>(k)];
    }
    data_.setZero(n);
  }

 private:
  std::array<int, 4> dims_{1, 1, 1, 1};
  int rank_ = 0;
  Storage data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Concatenates rank-3 tensors along the channel axis.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument("concat_channels: spatial mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  Tensor<S> out = Tensor<S>::chw(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

/// Splits a rank-3 tensor into two channel blocks (inverse of concat_channels).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>& x, int c_first) {
  if (c_first <= 0 || c_first >= x.channels())
    throw std::invalid_argument("split_channels: bad split " + std::to_string(c_first) +
                                " for shape " + x.shape_str());
  Tensor<S> a = Tensor<S>::chw(c_first, x.height(), x.width());
  Tensor<S> b = Tensor<S>::chw(x.channels() - c_first, x.height(), x.width());
  std::copy(x.data(), x.data() + a.numel(), a.data());
  std::copy(x.data() + a.numel(), x.data() + x.numel(), b.data());
  return {std::move(a), std::move(b)};
}

}  // namespace hf
