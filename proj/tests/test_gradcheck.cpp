#include <doctest.h>

#include <random>

#include "hazardfuse/nn/gradcheck.hpp"
#include "hazardfuse/nn/network.hpp"

using namespace hf;
using namespace hf::nn;

namespace {

Tensord random_input(int c, int h, int w, std::uint64_t seed) {
  Tensord t = Tensord::chw(c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

std::vector<std::uint8_t> random_target(int n, std::uint64_t seed) {
  std::vector<std::uint8_t> t(static_cast<std::size_t>(n));
  std::mt19937_64 rng(seed);
  for (auto& v : t) v = static_cast<std::uint8_t>(rng() & 1u);
  return t;
}

}  // namespace

TEST_CASE("gradcheck: single 1x1 conv on one pixel") {
  Sequential<double> net({LayerSpec::score(2, 1.0)}, 1);
  std::mt19937_64 rng(11);
  net.init_scratch(rng);
  auto rep = gradcheck_sequential(net, random_input(1, 1, 1, 2), {1}, 1e-4, 400, 3);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck: two-layer conv+relu net on 8x8 input") {
  Sequential<double> net(
      {LayerSpec::conv(3, 8), LayerSpec::relu_(), LayerSpec::conv(3, 4), LayerSpec::relu_(),
       LayerSpec::score(2, 1.0)},
      2);
  std::mt19937_64 rng(19);
  net.init_scratch(rng);
  Eigen::Index n = 0;
  for (auto& p : net.params()) n += p.w.numel() + p.b.numel();
  REQUIRE(n >= 200);
  auto rep = gradcheck_sequential(net, random_input(2, 8, 8, 4), random_target(64, 5), 1e-4, 250, 7);
  CHECK(rep.sampled >= 200);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("gradcheck: every layer kind in one stack") {
  Sequential<double> net(
      {LayerSpec::conv(3, 6), LayerSpec::relu_(), LayerSpec::maxpool(2, 2), LayerSpec::conv(3, 8),
       LayerSpec::relu_(), LayerSpec::dropout(0.5), LayerSpec::score(2, 1.0),
       LayerSpec::upsample(2)},
      3);
  std::mt19937_64 rng(23);
  net.init_scratch(rng);
  auto rep = gradcheck_sequential(net, random_input(3, 8, 8, 6), random_target(64, 9), 1e-4, 300, 13);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("gradcheck: dropout with frozen mask") {
  Sequential<double> net({LayerSpec::conv(3, 8), LayerSpec::dropout(0.75), LayerSpec::score(2, 1.0)},
                         1);
  std::mt19937_64 rng(31);
  net.init_scratch(rng);
  auto rep = gradcheck_sequential(net, random_input(1, 6, 6, 8), random_target(36, 10), 1e-4, 250, 17);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("sequential determinism: same seed gives identical parameters") {
  auto build = [](std::uint64_t seed) {
    Sequential<float> net(toy_fcn_specs(0.5, 5.0), 3);
    std::mt19937_64 rng(seed);
    net.init_scratch(rng);
    return net;
  };
  auto a = build(99), b = build(99), c = build(100);
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    if ((a.params()[i].w.array() != b.params()[i].w.array()).any()) all_equal = false;
    if ((a.params()[i].w.array() != c.params()[i].w.array()).any()) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}
