#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hazardfuse/fusion/checkpoint.hpp"
#include "hazardfuse/fusion/network.hpp"
#include "hazardfuse/fusion/predict.hpp"
#include "hazardfuse/nn/gradcheck.hpp"

using namespace hf;
namespace fs = std::filesystem;

namespace {

bool params_equal(const Tensorf& a, const Tensorf& b) {
  return a.same_shape(b) && (a.array() == b.array()).all();
}

FusionNetwork<float> make_parent(Modality m, std::uint64_t seed) {
  auto net = build_network<float>(FusionSpec::make(FusionKind::none, {m}));
  std::mt19937_64 rng(seed);
  net.init_scratch(rng);
  return net;
}

Tensorf random_scores(int h, int w, std::uint64_t seed) {
  Tensorf t = Tensorf::chw(2, h, w);
  std::mt19937_64 rng(seed);
  t.fill_gaussian(rng, 2.0);
  return t;
}

PredictionMap map_from_scores(Tensorf scores, const std::string& src) {
  PredictionMap m;
  m.probs = nn::softmax2(scores);
  m.scores = std::move(scores);
  m.source = src;
  m.frame_id = "f";
  return m;
}

}  // namespace

TEST_CASE("build_network: channel arithmetic per fusion kind") {
  auto rgb = build_network<float>(FusionSpec::make(FusionKind::none, {Modality::rgb}));
  CHECK(rgb.arms[0].in_channels() == 3);

  auto early = build_network<float>(
      FusionSpec::make(FusionKind::early, {Modality::rgb, Modality::hha}));
  CHECK(early.arms[0].in_channels() == 6);

  auto mid = build_network<float>(FusionSpec::make(FusionKind::mid, {Modality::rgb, Modality::depth}));
  CHECK(mid.arms.size() == 2);
  CHECK(mid.shared.in_channels() == 64);  // 32 + 32 after each arm's final pool
  CHECK(mid.arms[0].out_channels() == 32);

  auto lp = build_network<float>(
      FusionSpec::make(FusionKind::late_proportional, {Modality::rgb, Modality::hha}));
  CHECK(lp.arms.size() == 2);
  CHECK(lp.arms[0].out_channels() == 2);
}

TEST_CASE("fusion spec validation names the violated rule") {
  FusionSpec bad;
  bad.fusion = FusionKind::none;
  bad.modalities = {Modality::rgb, Modality::hha};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("exactly 1 modality"),
                       std::invalid_argument);

  FusionSpec swapped;
  swapped.fusion = FusionKind::early;
  swapped.modalities = {Modality::hha, Modality::rgb};
  CHECK_THROWS_WITH_AS(swapped.validate(), doctest::Contains("must be rgb"),
                       std::invalid_argument);

  FusionSpec shared_on_early;
  shared_on_early.fusion = FusionKind::early;
  shared_on_early.modalities = {Modality::rgb, Modality::depth};
  shared_on_early.shared_layers = {nn::LayerSpec::relu_()};
  CHECK_THROWS_AS(shared_on_early.validate(), std::invalid_argument);
}

TEST_CASE("fusion spec JSON round-trip") {
  FusionSpec spec = FusionSpec::make(FusionKind::mid, {Modality::rgb, Modality::hha});
  spec.hp.base_lr = 7e-6;
  spec.hp.dropout_ratio = 0.75;
  auto text = fusion_spec_to_json_text(spec);
  auto back = fusion_spec_from_json_text(text);
  CHECK(back.fusion == FusionKind::mid);
  CHECK(back.modalities == spec.modalities);
  CHECK(back.hp.base_lr == doctest::Approx(7e-6));
  CHECK(back.hp.dropout_ratio == doctest::Approx(0.75));
}

TEST_CASE("init_transfer: non-fusion copies the parent except a fresh score layer") {
  auto parent_rgb = make_parent(Modality::rgb, 1);
  auto parent_hha = make_parent(Modality::hha, 2);
  ParentSet parents{&parent_rgb, &parent_hha};

  auto net = build_network<float>(FusionSpec::make(FusionKind::none, {Modality::rgb}));
  std::mt19937_64 rng(3);
  init_transfer(net, parents, rng);
  const auto& src = parent_rgb.arms[0].params();
  const auto& dst = net.arms[0].params();
  REQUIRE(dst.size() == src.size());
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].is_score) {
      CHECK(!params_equal(dst[i].w, src[i].w));  // fresh Gaussian
      CHECK(dst[i].b.array().abs().maxCoeff() == 0.f);
    } else {
      CHECK(params_equal(dst[i].w, src[i].w));
      CHECK(params_equal(dst[i].b, src[i].b));
    }
  }

  // Depth and hha arms draw from the hha parent.
  auto dnet = build_network<float>(FusionSpec::make(FusionKind::none, {Modality::depth}));
  std::mt19937_64 rng2(4);
  init_transfer(dnet, parents, rng2);
  CHECK(params_equal(dnet.arms[0].params()[0].w, parent_hha.arms[0].params()[0].w));
}

TEST_CASE("init_transfer: early splices both parents' first-layer filters") {
  auto parent_rgb = make_parent(Modality::rgb, 5);
  auto parent_hha = make_parent(Modality::hha, 6);
  ParentSet parents{&parent_rgb, &parent_hha};

  auto net = build_network<float>(FusionSpec::make(FusionKind::early, {Modality::rgb, Modality::hha}));
  std::mt19937_64 rng(7);
  init_transfer(net, parents, rng);

  const auto& first = net.arms[0].params()[0];
  const auto& fr = parent_rgb.arms[0].params()[0];
  const auto& fh = parent_hha.arms[0].params()[0];
  REQUIRE(first.w.in_ch() == 6);
  for (int o = 0; o < first.w.out_ch(); ++o)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        for (int i = 0; i < 3; ++i) {
          CHECK(first.w(o, i, ky, kx) == fr.w(o, i, ky, kx));
          CHECK(first.w(o, 3 + i, ky, kx) == fh.w(o, i, ky, kx));
        }
      }
  // Remaining layers come from the colour parent.
  for (std::size_t i = 1; i < net.arms[0].params().size(); ++i)
    CHECK(params_equal(net.arms[0].params()[i].w, parent_rgb.arms[0].params()[i].w));
}

TEST_CASE("init_transfer: mid arms copied, shared layers fresh per seed") {
  auto parent_rgb = make_parent(Modality::rgb, 8);
  auto parent_hha = make_parent(Modality::hha, 9);
  ParentSet parents{&parent_rgb, &parent_hha};

  auto build_mid = [&](std::uint64_t seed) {
    auto net = build_network<float>(FusionSpec::make(FusionKind::mid, {Modality::rgb, Modality::hha}));
    std::mt19937_64 rng(seed);
    init_transfer(net, parents, rng);
    return net;
  };
  auto a = build_mid(10), b = build_mid(11);

  for (std::size_t i = 0; i < a.arms[0].params().size(); ++i) {
    CHECK(params_equal(a.arms[0].params()[i].w, parent_rgb.arms[0].params()[i].w));
    CHECK(params_equal(a.arms[1].params()[i].w, parent_hha.arms[0].params()[i].w));
    CHECK(params_equal(a.arms[0].params()[i].w, b.arms[0].params()[i].w));  // arms seed-independent
  }
  bool shared_differ = false;
  for (std::size_t i = 0; i < a.shared.params().size(); ++i)
    if (!params_equal(a.shared.params()[i].w, b.shared.params()[i].w)) shared_differ = true;
  CHECK(shared_differ);
}

TEST_CASE("init_transfer: late proportional copies both arms whole") {
  auto parent_rgb = make_parent(Modality::rgb, 12);
  auto parent_hha = make_parent(Modality::hha, 13);
  ParentSet parents{&parent_rgb, &parent_hha};
  auto net = build_network<float>(
      FusionSpec::make(FusionKind::late_proportional, {Modality::rgb, Modality::hha}));
  std::mt19937_64 rng(14);
  init_transfer(net, parents, rng);
  for (std::size_t i = 0; i < net.arms[0].params().size(); ++i) {
    CHECK(params_equal(net.arms[0].params()[i].w, parent_rgb.arms[0].params()[i].w));
    CHECK(params_equal(net.arms[1].params()[i].w, parent_hha.arms[0].params()[i].w));
  }
}

TEST_CASE("init_transfer: missing parent is an error naming the modality") {
  auto parent_rgb = make_parent(Modality::rgb, 15);
  ParentSet parents{&parent_rgb, nullptr};
  auto net = build_network<float>(FusionSpec::make(FusionKind::none, {Modality::hha}));
  std::mt19937_64 rng(16);
  CHECK_THROWS_WITH_AS(init_transfer(net, parents, rng), doctest::Contains("hha"),
                       std::runtime_error);
}

TEST_CASE("late_overlay: rgb map wherever depth is invalid, sums where valid") {
  auto rgb = map_from_scores(random_scores(4, 4, 21), "rgb");
  auto hha = map_from_scores(random_scores(4, 4, 22), "hha");

  ImageU8 none = make_mask(4, 4);  // all invalid
  auto out = late_overlay(rgb, hha, none);
  CHECK((out.scores.array() == rgb.scores.array()).all());
  CHECK((out.probs.array() == rgb.probs.array()).all());

  ImageU8 all = ImageU8(4, 4, 1, 1);
  Tensorf rs = Tensorf::chw(2, 1, 1), hs = Tensorf::chw(2, 1, 1);
  rs[0] = 2.0f;
  rs[1] = 1.0f;
  hs[0] = 0.5f;
  hs[1] = 3.0f;
  auto fused = late_overlay(map_from_scores(rs, "rgb"), map_from_scores(hs, "hha"),
                            ImageU8(1, 1, 1, 1));
  CHECK(fused.scores[0] == doctest::Approx(2.5f));
  CHECK(fused.scores[1] == doctest::Approx(4.0f));
  CHECK(fused.probs[1] > fused.probs[0]);  // argmax = non-trip

  // Adding an all-zero map changes nothing where valid.
  Tensorf zeros = Tensorf::chw(2, 4, 4);
  auto same = late_overlay(rgb, map_from_scores(zeros, "z"), all);
  for (Eigen::Index i = 0; i < rgb.scores.numel(); ++i)
    CHECK(same.scores[i] == doctest::Approx(rgb.scores[i]));

  // Dimension mismatch rejected.
  auto small = map_from_scores(random_scores(2, 2, 23), "s");
  CHECK_THROWS_AS(late_overlay(rgb, small, all), std::invalid_argument);
}

TEST_CASE("late_proportional: worked example and identity case") {
  Tensorf a = Tensorf::chw(2, 1, 1), b = Tensorf::chw(2, 1, 1);
  a[0] = 4.f;
  a[1] = 0.f;
  b[0] = 1.f;
  b[1] = 0.5f;
  auto fused = late_proportional(map_from_scores(a, "a"), map_from_scores(b, "b"));
  const double wa = std::exp(4.0) / (std::exp(4.0) + std::exp(1.0));
  CHECK(wa == doctest::Approx(0.9526).epsilon(1e-3));
  CHECK(fused.probs[0] == doctest::Approx(0.965).epsilon(1e-3));
  CHECK(fused.probs[0] + fused.probs[1] == doctest::Approx(1.0).epsilon(1e-6));

  // Identical components reproduce the component probabilities.
  auto m = map_from_scores(random_scores(6, 5, 31), "m");
  auto same = late_proportional(m, m);
  for (Eigen::Index i = 0; i < m.probs.numel(); ++i)
    CHECK(same.probs[i] == doctest::Approx(m.probs[i]).epsilon(1e-6));

  // Overwhelming confidence converges to that component.
  Tensorf big = Tensorf::chw(2, 1, 1), small = Tensorf::chw(2, 1, 1);
  big[0] = 40.f;
  small[0] = 0.2f;
  small[1] = 0.1f;
  auto lim = late_proportional(map_from_scores(big, "big"), map_from_scores(small, "small"));
  const auto pbig = nn::softmax2(big);
  CHECK(lim.probs[0] == doctest::Approx(pbig[0]).epsilon(1e-6));
}

TEST_CASE("late_proportional: shifting one component's scores acts only through its confidence") {
  auto a = random_scores(3, 3, 41);
  auto b = random_scores(3, 3, 42);
  Tensorf a_shift = Tensorf::like(a);
  a_shift.array() = a.array() + 1.7f;

  auto base = late_proportional(map_from_scores(a, "a"), map_from_scores(b, "b"));
  auto shifted = late_proportional(map_from_scores(a_shift, "a"), map_from_scores(b, "b"));

  const Eigen::Index hw = 9;
  const auto pa = nn::softmax2(a);
  const auto pb = nn::softmax2(b);
  for (Eigen::Index i = 0; i < hw; ++i) {
    // Component softmax unchanged by the shift; only the weight moves.
    const double ca = std::max(a[i], a[hw + i]) + 1.7;
    const double cb = std::max(b[i], b[hw + i]);
    const double w = 1.0 / (1.0 + std::exp(cb - ca));
    CHECK(shifted.probs[i] == doctest::Approx(w * pa[i] + (1 - w) * pb[i]).epsilon(1e-5));
    CHECK(shifted.probs[i] != doctest::Approx(base.probs[i]).epsilon(1e-9));
  }
}

TEST_CASE("proportional mixture gradients pass a double-precision check") {
  std::mt19937_64 rng(51);
  Tensord sa = Tensord::chw(2, 4, 4), sb = Tensord::chw(2, 4, 4);
  sa.fill_gaussian(rng, 1.5);
  sb.fill_gaussian(rng, 1.5);
  std::vector<std::uint8_t> target(16);
  for (auto& t : target) t = static_cast<std::uint8_t>(rng() & 1u);

  for (bool per_image : {false, true}) {
    auto loss_fn = [&] {
      auto fused = proportional_mixture_forward(sa, sb, static_cast<MixtureCache<double>*>(nullptr),
                                                per_image);
      return nn::xent_on_probs_sum(fused, target).loss;
    };
    MixtureCache<double> cache;
    auto fused = proportional_mixture_forward(sa, sb, &cache, per_image);
    auto lr = nn::xent_on_probs_sum(fused, target);
    auto [dsa, dsb] = proportional_mixture_backward(lr.grad, cache, per_image);

    auto rep = nn::gradcheck_params(loss_fn, {&sa, &sb}, {&dsa, &dsb}, 1e-5, 64, 52);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("early fusion: zero depth channels match zeroed depth filters") {
  auto net = build_network<float>(FusionSpec::make(FusionKind::early, {Modality::rgb, Modality::hha}));
  std::mt19937_64 rng(61);
  net.init_scratch(rng);

  Tensorf x = Tensorf::chw(6, 16, 16);
  std::mt19937_64 rng2(62);
  x.fill_gaussian(rng2, 1.0);
  for (int c = 3; c < 6; ++c)
    for (int y = 0; y < 16; ++y)
      for (int xx = 0; xx < 16; ++xx) x(c, y, xx) = 0.f;

  auto out1 = net.arms[0].forward(x, nullptr, nn::RunMode::eval);

  auto zeroed = net;
  auto& w = zeroed.arms[0].params()[0].w;
  for (int o = 0; o < w.out_ch(); ++o)
    for (int i = 3; i < 6; ++i)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) w(o, i, ky, kx) = 0.f;
  auto out2 = zeroed.arms[0].forward(x, nullptr, nn::RunMode::eval);
  CHECK((out1.array() == out2.array()).all());
}

TEST_CASE("checkpoint: save/load round-trip is byte-exact and re-save is stable") {
  const fs::path dir = fs::temp_directory_path() / "hf_ckpt_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto net = build_network<float>(FusionSpec::make(FusionKind::mid, {Modality::rgb, Modality::hha}));
  std::mt19937_64 rng(71);
  net.init_scratch(rng);
  CheckpointMeta meta;
  meta.network_id = "test_mid";
  meta.rng_seed = 71;
  meta.hp = net.spec.hp;
  meta.parents = {"parent_rgb", "parent_hha"};

  const std::string stem = (dir / "mid").string();
  save_checkpoint(stem, net, meta);
  auto loaded = load_checkpoint(stem);
  CHECK(loaded.meta.network_id == "test_mid");
  CHECK(loaded.meta.parents.size() == 2);
  CHECK(loaded.net.spec.fusion == FusionKind::mid);

  auto pa = net.flat_params();
  auto pb = loaded.net.flat_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(params_equal(pa[i]->w, pb[i]->w));
    CHECK(params_equal(pa[i]->b, pb[i]->b));
  }

  const std::string stem2 = (dir / "mid2").string();
  save_checkpoint(stem2, loaded.net, loaded.meta);
  auto read_all = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  CHECK(read_all(stem + ".bin") == read_all(stem2 + ".bin"));
}

TEST_CASE("prediction map file round-trip") {
  const fs::path dir = fs::temp_directory_path() / "hf_map_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto m = map_from_scores(random_scores(5, 7, 81), "net1");
  m.frame_id = "frameX";
  const std::string stem = (dir / "map").string();
  save_prediction_map(stem, m);
  auto back = load_prediction_map(stem);
  CHECK(back.source == "net1");
  CHECK(back.frame_id == "frameX");
  CHECK((back.scores.array() == m.scores.array()).all());
  CHECK((back.probs.array() == m.probs.array()).all());
}
