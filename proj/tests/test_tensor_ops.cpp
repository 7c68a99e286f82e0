#include <doctest.h>

#include <random>

#include "hazardfuse/nn/layers.hpp"
#include "hazardfuse/tensor.hpp"

using namespace hf;
using namespace hf::nn;

namespace {

Tensorf ramp3(int c, int h, int w, float start = 0.f, float step = 1.f) {
  Tensorf t = Tensorf::chw(c, h, w);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = start + step * static_cast<float>(i);
  return t;
}

Tensorf random3(int c, int h, int w, std::uint64_t seed) {
  Tensorf t = Tensorf::chw(c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

// Direct nested-loop convolution, independent of the im2col path.
Tensorf conv_oracle(const Tensorf& x, const Tensorf& w, const Tensorf& b, int stride, int pad) {
  const int kh = w.dim(2), kw = w.dim(3);
  const int oh = (x.height() + 2 * pad - kh) / stride + 1;
  const int ow = (x.width() + 2 * pad - kw) / stride + 1;
  Tensorf y = Tensorf::chw(w.out_ch(), oh, ow);
  for (int o = 0; o < w.out_ch(); ++o)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = b[o];
        for (int i = 0; i < w.in_ch(); ++i)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= x.height() || ix < 0 || ix >= x.width()) continue;
              acc += static_cast<double>(x(i, iy, ix)) * w(o, i, ky, kx);
            }
        y(o, oy, ox) = static_cast<float>(acc);
      }
  return y;
}

// Scalar per-pixel interpolation oracle (align-corners-false, edge clamp).
float upsample_oracle_at(const Tensorf& x, int c, int oy, int ox, int factor) {
  auto sample = [&](double src, int n, auto&& axis_val) -> double {
    const double s = (src + 0.5) / factor - 0.5;
    const int lo = static_cast<int>(std::floor(s));
    const double w = s - std::floor(s);
    auto clamp = [&](int i) { return std::min(std::max(i, 0), n - 1); };
    return axis_val(clamp(lo)) * (1.0 - w) + axis_val(clamp(lo + 1)) * w;
  };
  return static_cast<float>(sample(oy, x.height(), [&](int iy) {
    return sample(ox, x.width(), [&](int ix) { return static_cast<double>(x(c, iy, ix)); });
  }));
}

}  // namespace

TEST_CASE("conv2d hand-computed 3x3 all-ones filter") {
  Tensorf x = ramp3(1, 3, 3, 1.f);  // [[1,2,3],[4,5,6],[7,8,9]]
  Tensorf w = Tensorf::oihw(1, 1, 3, 3);
  w.fill(1.f);
  Tensorf b = Tensorf::vec(1);
  auto y = conv2d_forward(x, w, b, 1, 1);
  CHECK(y.height() == 3);
  CHECK(y(0, 1, 1) == doctest::Approx(45.f));
  CHECK(y(0, 0, 0) == doctest::Approx(12.f));
}

TEST_CASE("conv2d 1x1 identity filter passes input through") {
  Tensorf x = random3(2, 5, 7, 11);
  Tensorf w = Tensorf::oihw(2, 2, 1, 1);
  w(0, 0, 0, 0) = 1.f;
  w(1, 1, 0, 0) = 1.f;
  Tensorf b = Tensorf::vec(2);
  auto y = conv2d_forward(x, w, b, 1, 0);
  REQUIRE(y.same_shape(x));
  for (Eigen::Index i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("conv2d zero filter gives zero output") {
  Tensorf x = random3(3, 6, 6, 5);
  Tensorf w = Tensorf::oihw(4, 3, 3, 3);
  Tensorf b = Tensorf::vec(4);
  auto y = conv2d_forward(x, w, b, 1, 1);
  CHECK(y.array().abs().maxCoeff() == 0.f);
}

TEST_CASE("conv2d matches brute-force oracle on random instances") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  for (int trial = 0; trial < 8; ++trial) {
    const int cin = 1 + trial % 3, cout = 1 + (trial * 7) % 4;
    const int k = (trial % 2) ? 3 : 2;
    const int stride = 1 + trial % 2, pad = trial % 2;
    Tensorf x = random3(cin, 8, 9, 100 + static_cast<std::uint64_t>(trial));
    Tensorf w = Tensorf::oihw(cout, cin, k, k);
    for (Eigen::Index i = 0; i < w.numel(); ++i) w[i] = u(rng);
    Tensorf b = Tensorf::vec(cout);
    for (Eigen::Index i = 0; i < b.numel(); ++i) b[i] = u(rng);
    auto y = conv2d_forward(x, w, b, stride, pad);
    auto ref = conv_oracle(x, w, b, stride, pad);
    REQUIRE(y.same_shape(ref));
    for (Eigen::Index i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv2d rejects channel mismatch with both shapes named") {
  Tensorf x = Tensorf::chw(4, 8, 8);
  Tensorf w = Tensorf::oihw(16, 3, 3, 3);
  Tensorf b = Tensorf::vec(16);
  try {
    conv2d_forward(x, w, b, 1, 1);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("4x8x8") != std::string::npos);
    CHECK(msg.find("16x3x3x3") != std::string::npos);
  }
}

TEST_CASE("conv2d linearity in the input") {
  Tensorf x = random3(2, 6, 6, 7), y = random3(2, 6, 6, 8);
  Tensorf w = Tensorf::oihw(3, 2, 3, 3);
  std::mt19937_64 rng(3);
  w.fill_gaussian(rng, 0.5);
  Tensorf b = Tensorf::vec(3);  // bias must be zero for linearity
  const float a = 1.7f, c = -0.6f;
  Tensorf mix = Tensorf::like(x);
  mix.array() = a * x.array() + c * y.array();
  auto lhs = conv2d_forward(mix, w, b, 1, 1);
  auto fx = conv2d_forward(x, w, b, 1, 1), fy = conv2d_forward(y, w, b, 1, 1);
  for (Eigen::Index i = 0; i < lhs.numel(); ++i) {
    const float rhs = a * fx[i] + c * fy[i];
    CHECK(lhs[i] == doctest::Approx(rhs).epsilon(1e-5));
  }
}

TEST_CASE("maxpool single window and tie-break") {
  Tensorf x = ramp3(1, 2, 2, 1.f);  // [[1,2],[3,4]]
  auto r = maxpool_forward(x, 2, 2);
  CHECK(r.y.numel() == 1);
  CHECK(r.y[0] == 4.f);
  CHECK(r.argmax[0] == x.index3(0, 1, 1));

  Tensorf flat = Tensorf::chw(1, 2, 2);
  flat.fill(3.5f);
  auto rt = maxpool_forward(flat, 2, 2);
  CHECK(rt.y[0] == 3.5f);
  CHECK(rt.argmax[0] == 0);  // lowest linear index wins ties

  Tensorf dy = Tensorf::chw(1, 1, 1);
  dy[0] = 2.f;
  auto dx = maxpool_backward(flat, rt.argmax, dy);
  CHECK(dx[0] == 2.f);
  CHECK(dx[1] == 0.f);
}

TEST_CASE("maxpool matches brute-force window scan on a ramp") {
  Tensorf x = ramp3(1, 4, 4, 0.f);
  auto r = maxpool_forward(x, 2, 2);
  REQUIRE(r.y.height() == 2);
  for (int oy = 0; oy < 2; ++oy)
    for (int ox = 0; ox < 2; ++ox) {
      float best = -1e30f;
      for (int ky = 0; ky < 2; ++ky)
        for (int kx = 0; kx < 2; ++kx) best = std::max(best, x(0, oy * 2 + ky, ox * 2 + kx));
      CHECK(r.y(0, oy, ox) == best);
    }
}

TEST_CASE("maxpool rejects window larger than input") {
  Tensorf x = Tensorf::chw(1, 2, 2);
  CHECK_THROWS_AS(maxpool_forward(x, 3, 1), std::invalid_argument);
}

TEST_CASE("bilinear upsample factor 1 is identity") {
  Tensorf x = random3(2, 3, 4, 9);
  auto y = bilinear_upsample_forward(x, 1);
  REQUIRE(y.same_shape(x));
  for (Eigen::Index i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("bilinear upsample of a constant is constant") {
  Tensorf x = Tensorf::chw(1, 3, 3);
  x.fill(2.25f);
  auto y = bilinear_upsample_forward(x, 4);
  CHECK(y.height() == 12);
  for (Eigen::Index i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(2.25f));
}

TEST_CASE("bilinear upsample matches scalar interpolation oracle") {
  Tensorf x = Tensorf::chw(1, 2, 2);
  x(0, 0, 0) = 0.f;
  x(0, 0, 1) = 1.f;
  x(0, 1, 0) = 0.f;
  x(0, 1, 1) = 1.f;
  auto y = bilinear_upsample_forward(x, 2);
  REQUIRE(y.width() == 4);
  const float expected_row[4] = {0.f, 0.25f, 0.75f, 1.f};
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 4; ++ox) {
      CHECK(y(0, oy, ox) == doctest::Approx(expected_row[ox]));
      CHECK(y(0, oy, ox) == doctest::Approx(upsample_oracle_at(x, 0, oy, ox, 2)));
    }

  Tensorf r = random3(3, 5, 4, 21);
  auto yr = bilinear_upsample_forward(r, 3);
  for (int c = 0; c < 3; ++c)
    for (int oy = 0; oy < yr.height(); ++oy)
      for (int ox = 0; ox < yr.width(); ++ox)
        CHECK(yr(c, oy, ox) == doctest::Approx(upsample_oracle_at(r, c, oy, ox, 3)).epsilon(1e-5));
}

TEST_CASE("bilinear upsample rejects factor 0") {
  Tensorf x = Tensorf::chw(1, 2, 2);
  CHECK_THROWS_AS(bilinear_upsample_forward(x, 0), std::invalid_argument);
}

TEST_CASE("upsample backward is the adjoint of forward") {
  // <up(x), y> == <x, up_backward(y)> to 1e-5 relative.
  Tensord x = random3(2, 4, 5, 31).cast<double>();
  Tensord y = random3(2, 12, 15, 32).cast<double>();
  auto ux = bilinear_upsample_forward(x, 3);
  auto uty = bilinear_upsample_backward(y, 3, 4, 5);
  const double lhs = (ux.array() * y.array()).sum();
  const double rhs = (x.array() * uty.array()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("relu forward and backward") {
  Tensorf x = Tensorf::chw(1, 1, 4);
  x(0, 0, 0) = -2.f;
  x(0, 0, 1) = -0.5f;
  x(0, 0, 2) = 0.5f;
  x(0, 0, 3) = 3.f;
  auto y = relu_forward(x);
  CHECK(y(0, 0, 0) == 0.f);
  CHECK(y(0, 0, 2) == 0.5f);
  Tensorf dy = Tensorf::chw(1, 1, 4);
  dy.fill(1.f);
  auto dx = relu_backward(x, dy);
  CHECK(dx(0, 0, 0) == 0.f);
  CHECK(dx(0, 0, 3) == 1.f);
}

TEST_CASE("dropout scales kept units and is maskable") {
  Tensorf x = Tensorf::chw(1, 16, 16);
  x.fill(1.f);
  std::mt19937_64 rng(77);
  auto [y, mask] = dropout_forward(x, 0.5, rng);
  int kept = 0;
  for (Eigen::Index i = 0; i < y.numel(); ++i) {
    if (y[i] != 0.f) {
      CHECK(y[i] == doctest::Approx(2.f));
      ++kept;
    }
  }
  CHECK(kept > 50);
  CHECK(kept < 206);
  auto y2 = dropout_apply_mask(x, mask);
  for (Eigen::Index i = 0; i < y.numel(); ++i) CHECK(y2[i] == y[i]);
}
