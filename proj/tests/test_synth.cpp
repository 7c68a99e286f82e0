#include <doctest.h>

#include <filesystem>

#include "hazardfuse/data/polygon.hpp"
#include "hazardfuse/data/synth.hpp"
#include "hazardfuse/hha.hpp"

using namespace hf;
namespace fs = std::filesystem;

namespace {

SynthScene single_object_scene(SynthObject obj) {
  SynthScene scene;
  scene.camera.yaw_deg = 0;
  scene.camera.pitch_deg = 26;
  scene.camera.position = Eigen::Vector3d(0, 1.8, 0);
  scene.wall_distance = 8.0;
  scene.objects.push_back(std::move(obj));
  return scene;
}

SynthObject box_at(double dist, double sx, double sz, double h, Eigen::Vector3i albedo) {
  SynthObject obj;
  obj.aabb_min = Eigen::Vector3d(-sx / 2, 0, dist - sz / 2);
  obj.aabb_max = Eigen::Vector3d(sx / 2, h, dist + sz / 2);
  obj.albedo = albedo;
  obj.trip = h < 0.5;
  return obj;
}

double angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("synth: fixed seed reproduces the corpus byte for byte") {
  SynthConfig cfg;
  cfg.n_frames = 6;
  cfg.n_groups = 2;
  auto a = synth_generate(7, cfg);
  auto b = synth_generate(7, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].frame.color.pixels == b[i].frame.color.pixels);
    REQUIRE(a[i].frame.depth.has_value());
    CHECK(a[i].frame.depth->depth_mm == b[i].frame.depth->depth_mm);
    REQUIRE(a[i].frame.polygons.size() == b[i].frame.polygons.size());
    for (std::size_t p = 0; p < a[i].frame.polygons.size(); ++p)
      CHECK(a[i].frame.polygons[p].vertices == b[i].frame.polygons[p].vertices);
  }
  auto c = synth_generate(8, cfg);
  CHECK(a[0].frame.color.pixels != c[0].frame.color.pixels);
}

TEST_CASE("synth: trip flag follows the 0.5m rule; standing vs lying box") {
  const Intrinsics k = Intrinsics::default_for(96, 96);
  std::mt19937_64 rng(1);

  auto tall = box_at(2.5, 0.5, 0.5, 1.9, {235, 130, 40});
  CHECK(!tall.trip);
  auto flat = box_at(2.5, 0.5, 0.5, 0.3, {235, 130, 40});
  CHECK(flat.trip);

  auto poly = project_silhouette(flat, single_object_scene(flat).camera, k);
  CHECK(poly.vertices.size() >= 3);

  // All generated objects obey the rule.
  SynthConfig cfg;
  cfg.n_frames = 8;
  for (const auto& sf : synth_generate(3, cfg))
    for (const auto& obj : sf.scene.objects) CHECK(obj.trip == (obj.top_height() < 0.5));
}

TEST_CASE("synth: labels cover the rendered trip pixels") {
  SynthConfig cfg;
  cfg.n_frames = 4;
  cfg.n_groups = 1;
  cfg.noise = false;
  const Intrinsics k = Intrinsics::default_for(cfg.width, cfg.height);
  for (const auto& sf : synth_generate(11, cfg)) {
    std::mt19937_64 rng(0);
    const auto buf = render_scene(sf.scene, k, rng, 0);
    const auto mask = rasterize(sf.frame.polygons, cfg.width, cfg.height);
    int covered = 0, total = 0;
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        const int id = buf.object_id[static_cast<std::size_t>(y) * cfg.width + x];
        if (id < 0 || !sf.scene.objects[static_cast<std::size_t>(id)].trip) continue;
        ++total;
        covered += mask.at(x, y);
      }
    if (total > 20) CHECK(static_cast<double>(covered) / total > 0.9);
  }
}

TEST_CASE("synth: wire strips are invisible in depth but contrast in colour") {
  const Intrinsics k = Intrinsics::default_for(96, 96);
  SynthObject wire = box_at(2.4, 1.8, 0.07, 0.004, {235, 130, 40});
  wire.role = SynthRole::wire_strip;
  auto with_wire = single_object_scene(wire);
  auto without = with_wire;
  without.objects.clear();

  std::mt19937_64 rng1(5), rng2(5);
  const auto buf_w = render_scene(with_wire, k, rng1, 0);
  const auto buf_0 = render_scene(without, k, rng2, 0);

  int wire_px = 0, depth_visible = 0;
  double contrast_sum = 0;
  for (std::size_t i = 0; i < buf_w.object_id.size(); ++i) {
    if (buf_w.object_id[i] != 0) continue;
    ++wire_px;
    const double z = buf_w.depth_m[i];
    const double sigma = 0.005 + 0.01 * z;
    if (std::abs(buf_w.depth_m[i] - buf_0.depth_m[i]) > sigma) ++depth_visible;
    int max_diff = 0;
    for (int c = 0; c < 3; ++c)
      max_diff = std::max(max_diff, std::abs(static_cast<int>(buf_w.color.pixels[i * 3 + c]) -
                                             with_wire.floor_albedo[c]));
    contrast_sum += max_diff;
  }
  REQUIRE(wire_px > 30);
  CHECK(static_cast<double>(depth_visible) / wire_px < 0.005);
  CHECK(contrast_sum / wire_px >= 50.0);
}

TEST_CASE("synth: camo boxes match the floor in colour but protrude in depth") {
  const Intrinsics k = Intrinsics::default_for(96, 96);
  SynthScene scene = single_object_scene(box_at(2.5, 0.6, 0.6, 0.3, {120, 120, 120}));
  scene.floor_albedo = {120, 120, 120};
  std::mt19937_64 rng(9);
  const auto buf = render_scene(scene, k, rng, 8);

  double obj_mean = 0, floor_mean = 0;
  int on = 0, fn = 0;
  int depth_visible = 0;
  auto no_obj = scene;
  no_obj.objects.clear();
  std::mt19937_64 rng2(9);
  const auto buf0 = render_scene(no_obj, k, rng2, 8);
  for (std::size_t i = 0; i < buf.object_id.size(); ++i) {
    if (buf.object_id[i] == 0) {
      obj_mean += buf.color.pixels[i * 3];
      ++on;
      const double z = buf.depth_m[i];
      if (std::abs(buf.depth_m[i] - buf0.depth_m[i]) > 0.005 + 0.01 * z) ++depth_visible;
    } else if (buf.object_id[i] == -1) {
      floor_mean += buf.color.pixels[i * 3];
      ++fn;
    }
  }
  REQUIRE(on > 50);
  CHECK(std::abs(obj_mean / on - floor_mean / fn) < 3.0);     // colour-invisible
  CHECK(static_cast<double>(depth_visible) / on > 0.9);       // depth-visible
}

TEST_CASE("synth: depth beyond the 5m range is missing") {
  SynthConfig cfg;
  cfg.n_frames = 2;
  cfg.n_groups = 1;
  cfg.noise = false;
  const Intrinsics k = Intrinsics::default_for(cfg.width, cfg.height);
  for (const auto& sf : synth_generate(13, cfg)) {
    std::mt19937_64 rng(0);
    const auto buf = render_scene(sf.scene, k, rng, 0);
    REQUIRE(sf.frame.depth.has_value());
    for (std::size_t i = 0; i < buf.depth_m.size(); ++i)
      if (buf.depth_m[i] > 5.0f || buf.depth_m[i] <= 0.f)
        CHECK(sf.frame.depth->depth_mm[i] == 0);
  }
}

TEST_CASE("synth: encoder recovers the render's gravity and ground") {
  SynthConfig cfg;
  cfg.n_frames = 2;
  cfg.n_groups = 1;
  cfg.noise = false;
  for (const auto& sf : synth_generate(21, cfg)) {
    REQUIRE(sf.frame.truth.has_value());
    auto r = encode_hha_frame(*sf.frame.depth);
    CHECK(!r.gravity.fallback);
    CHECK(angle_deg(r.gravity.direction, sf.frame.truth->gravity_cam) < 1.0);
    CHECK(std::abs(r.ground.height_m - sf.frame.truth->ground_height_m) < 0.02);
  }
}

TEST_CASE("synth: corpus writes to disk and loads back") {
  const fs::path dir = fs::temp_directory_path() / "hf_synth_corpus";
  fs::remove_all(dir);
  SynthConfig cfg;
  cfg.n_frames = 8;
  cfg.n_groups = 2;
  cfg.width = 48;
  cfg.height = 48;
  CHECK(write_synth_corpus(dir.string(), 5, cfg) == 8);
  auto corpus = load_corpus(dir.string());
  CHECK(corpus.frames.size() == 8);
  auto plan = make_folds(corpus.frames);
  CHECK(plan.folds.size() == 2);
  int with_truth = 0;
  for (const auto& f : corpus.frames) with_truth += f.truth.has_value();
  CHECK(with_truth == 8);
}
