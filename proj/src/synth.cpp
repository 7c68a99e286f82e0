#include "hazardfuse/data/synth.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "hazardfuse/common.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hf {

namespace {

constexpr double kCameraHeight = 1.8;  // meters above the ground plane

const Eigen::Vector3i kHazardPalette[] = {
    {235, 130, 40},  // orange
    {205, 55, 45},   // red
    {70, 200, 70},   // green
    {235, 215, 65},  // yellow
    {55, 125, 235},  // bright blue
};

const Eigen::Vector3i kGrayPalette[] = {
    {92, 96, 104},
    {72, 72, 78},
};

const Eigen::Vector3i kFloorAlbedo[] = {
    {112, 112, 114},
    {122, 120, 118},
    {131, 129, 126},
    {105, 108, 112},
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Ray/AABB slab intersection; returns the entry parameter or a negative value.
double intersect_aabb(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                      const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  double t0 = 1e-6, t1 = 1e18;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < lo[a] || o[a] > hi[a]) return -1.0;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return -1.0;
  }
  return t0;
}

double intersect_cylinder(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double cx, double cz,
                          double radius, double height) {
  double best = -1.0;
  // Side surface.
  const double ox = o.x() - cx, oz = o.z() - cz;
  const double a = d.x() * d.x() + d.z() * d.z();
  const double b = 2.0 * (ox * d.x() + oz * d.z());
  const double c = ox * ox + oz * oz - radius * radius;
  const double disc = b * b - 4 * a * c;
  if (a > 1e-12 && disc >= 0) {
    const double sq = std::sqrt(disc);
    for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
      if (t <= 1e-6) continue;
      const double y = o.y() + t * d.y();
      if (y >= 0.0 && y <= height && (best < 0 || t < best)) best = t;
    }
  }
  // Top cap.
  if (std::abs(d.y()) > 1e-12) {
    const double t = (height - o.y()) / d.y();
    if (t > 1e-6) {
      const double x = o.x() + t * d.x() - cx;
      const double z = o.z() + t * d.z() - cz;
      if (x * x + z * z <= radius * radius && (best < 0 || t < best)) best = t;
    }
  }
  return best;
}

std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  if (pts.size() < 3) return pts;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 0 ? k - 1 : 0);
  return hull;
}

// Sutherland-Hodgman clip of a convex polygon against the image rectangle;
// keeps silhouettes exact for objects that run off the frame.
std::vector<Eigen::Vector2d> clip_to_rect(std::vector<Eigen::Vector2d> poly, double w, double h) {
  struct Edge {
    int axis;
    double bound;
    bool keep_less;
  };
  const Edge edges[4] = {{0, 0.0, false}, {0, w, true}, {1, 0.0, false}, {1, h, true}};
  for (const auto& e : edges) {
    if (poly.size() < 3) return {};
    std::vector<Eigen::Vector2d> out;
    auto inside = [&](const Eigen::Vector2d& p) {
      return e.keep_less ? p[e.axis] <= e.bound : p[e.axis] >= e.bound;
    };
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const auto& a = poly[i];
      const auto& b = poly[(i + 1) % poly.size()];
      const bool ia = inside(a), ib = inside(b);
      if (ia) out.push_back(a);
      if (ia != ib) {
        const double t = (e.bound - a[e.axis]) / (b[e.axis] - a[e.axis]);
        out.push_back(a + t * (b - a));
      }
    }
    poly = std::move(out);
  }
  return poly;
}

Eigen::Vector3i pick(const Eigen::Vector3i* palette, int n, std::mt19937_64& rng) {
  return palette[uniform_int(rng, 0, n - 1)];
}

std::uint8_t noisy_channel(int base, int noise, std::mt19937_64& rng) {
  const int v = base + uniform_int(rng, -noise, noise);
  return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

}  // namespace

Eigen::Matrix3d CameraPose::world_to_cam() const {
  const double psi = yaw_deg * M_PI / 180.0;
  const double th = pitch_deg * M_PI / 180.0;
  const Eigen::Vector3d forward(std::sin(psi) * std::cos(th), -std::sin(th),
                                std::cos(psi) * std::cos(th));
  const Eigen::Vector3d right(std::cos(psi), 0, -std::sin(psi));
  const Eigen::Vector3d down = right.cross(forward);
  Eigen::Matrix3d r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  return r;
}

RenderBuffers render_scene(const SynthScene& scene, const Intrinsics& k, std::mt19937_64& rng,
                           int color_noise_levels) {
  const Eigen::Matrix3d r = scene.camera.world_to_cam();
  const Eigen::Vector3d o = scene.camera.position;
  const double psi = scene.camera.yaw_deg * M_PI / 180.0;
  const Eigen::Vector3d fwd_h(std::sin(psi), 0, std::cos(psi));

  RenderBuffers buf;
  buf.color = ImageU8(k.width, k.height, 3);
  buf.depth_m.assign(static_cast<std::size_t>(k.width) * k.height, 0.f);
  buf.object_id.assign(buf.depth_m.size(), -3);

  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      // Rays go through pixel centers so rendered silhouettes line up with
      // the pixel-center rasterization rule. Depth along the ray parameter
      // equals camera-frame z because the direction's z component is 1.
      const Eigen::Vector3d d_cam((u + 0.5 - k.cx) / k.fx, (v + 0.5 - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d d = r.transpose() * d_cam;

      double best_t = 1e18;
      int hit = -3;
      if (d.y() < -1e-12) {
        const double t = -o.y() / d.y();
        if (t > 1e-6 && t < best_t) {
          best_t = t;
          hit = -1;
        }
      }
      const double dw = d.dot(fwd_h);
      if (dw > 1e-12) {
        const double t = scene.wall_distance / dw;
        if (t > 1e-6 && t < best_t) {
          best_t = t;
          hit = -2;
        }
      }
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& obj = scene.objects[i];
        const double t = obj.is_cylinder
                             ? intersect_cylinder(o, d, obj.cyl_x, obj.cyl_z, obj.cyl_radius,
                                                  obj.cyl_height)
                             : intersect_aabb(o, d, obj.aabb_min, obj.aabb_max);
        if (t > 0 && t < best_t) {
          best_t = t;
          hit = static_cast<int>(i);
        }
      }

      const std::size_t px = static_cast<std::size_t>(v) * k.width + u;
      buf.object_id[px] = hit;
      Eigen::Vector3i albedo = scene.sky_albedo;
      if (hit == -1) albedo = scene.floor_albedo;
      if (hit == -2) albedo = scene.wall_albedo;
      if (hit >= 0) albedo = scene.objects[static_cast<std::size_t>(hit)].albedo;
      if (hit != -3) buf.depth_m[px] = static_cast<float>(best_t);
      for (int c = 0; c < 3; ++c)
        buf.color.pixels[px * 3 + static_cast<std::size_t>(c)] =
            noisy_channel(albedo[c], color_noise_levels, rng);
    }
  }
  return buf;
}

PolygonLabel project_silhouette(const SynthObject& obj, const CameraPose& cam,
                                const Intrinsics& k) {
  const Eigen::Matrix3d r = cam.world_to_cam();
  std::vector<Eigen::Vector3d> pts;
  if (obj.is_cylinder) {
    for (int i = 0; i < 16; ++i) {
      const double a = 2.0 * M_PI * i / 16;
      const double x = obj.cyl_x + obj.cyl_radius * std::cos(a);
      const double z = obj.cyl_z + obj.cyl_radius * std::sin(a);
      pts.emplace_back(x, 0.0, z);
      pts.emplace_back(x, obj.cyl_height, z);
    }
  } else {
    for (int i = 0; i < 8; ++i)
      pts.emplace_back(i & 1 ? obj.aabb_max.x() : obj.aabb_min.x(),
                       i & 2 ? obj.aabb_max.y() : obj.aabb_min.y(),
                       i & 4 ? obj.aabb_max.z() : obj.aabb_min.z());
  }

  std::vector<Eigen::Vector2d> uv;
  for (const auto& p : pts) {
    const Eigen::Vector3d pc = r * (p - cam.position);
    if (pc.z() < 0.05) continue;
    uv.emplace_back(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
  }
  PolygonLabel label;
  label.vertices = clip_to_rect(convex_hull(std::move(uv)), k.width, k.height);
  return label;
}

namespace {

struct Placement {
  double x, z, radius;
};

// Places an object footprint inside the camera frustum without overlapping
// previous placements; returns false if no spot was found.
bool place(std::mt19937_64& rng, const CameraPose& cam, std::vector<Placement>& placed,
           double radius, double& out_x, double& out_z) {
  const double psi = cam.yaw_deg * M_PI / 180.0;
  const Eigen::Vector2d fwd(std::sin(psi), std::cos(psi));
  const Eigen::Vector2d right(std::cos(psi), -std::sin(psi));
  const Eigen::Vector2d base(cam.position.x(), cam.position.z());
  for (int attempt = 0; attempt < 24; ++attempt) {
    const double dist = uniform(rng, 1.6, 4.2);
    const double lateral = uniform(rng, -0.42, 0.42) * dist;
    const Eigen::Vector2d p = base + dist * fwd + lateral * right;
    bool ok = true;
    for (const auto& q : placed)
      if ((p - Eigen::Vector2d(q.x, q.z)).norm() < radius + q.radius + 0.15) {
        ok = false;
        break;
      }
    if (ok) {
      placed.push_back({p.x(), p.y(), radius});
      out_x = p.x();
      out_z = p.y();
      return true;
    }
  }
  return false;
}

SynthObject make_box(SynthRole role, double x, double z, double sx, double sz, double h,
                     const Eigen::Vector3i& albedo) {
  SynthObject obj;
  obj.role = role;
  obj.aabb_min = Eigen::Vector3d(x - sx / 2, 0.0, z - sz / 2);
  obj.aabb_max = Eigen::Vector3d(x + sx / 2, h, z + sz / 2);
  obj.albedo = albedo;
  obj.trip = h < 0.5;
  return obj;
}

SynthObject make_cylinder(SynthRole role, double x, double z, double radius, double h,
                          const Eigen::Vector3i& albedo) {
  SynthObject obj;
  obj.role = role;
  obj.is_cylinder = true;
  obj.cyl_x = x;
  obj.cyl_z = z;
  obj.cyl_radius = radius;
  obj.cyl_height = h;
  obj.albedo = albedo;
  obj.trip = h < 0.5;
  return obj;
}

SynthScene make_scene(std::mt19937_64& rng, int group, const SynthConfig& cfg) {
  SynthScene scene;
  scene.floor_albedo = kFloorAlbedo[group % 4];
  scene.wall_distance = uniform(rng, 6.0, 9.0);
  scene.camera.yaw_deg = uniform(rng, 0.0, 360.0);
  scene.camera.pitch_deg = uniform(rng, 20.0, 32.0);
  scene.camera.position =
      Eigen::Vector3d(uniform(rng, -1.0, 1.0), kCameraHeight, uniform(rng, -1.0, 1.0));

  std::vector<Placement> placed;
  auto try_place = [&](double radius, double& x, double& z) {
    return place(rng, scene.camera, placed, radius, x, z);
  };

  const int n_lying = uniform_int(rng, cfg.min_lying, cfg.max_lying);
  for (int i = 0; i < n_lying; ++i) {
    double x, z;
    if (uniform(rng, 0, 1) < 0.3) {
      const double radius = uniform(rng, 0.12, 0.2);
      if (!try_place(radius, x, z)) continue;
      scene.objects.push_back(make_cylinder(SynthRole::bucket, x, z, radius,
                                            uniform(rng, 0.25, 0.4),
                                            pick(kHazardPalette, 5, rng)));
    } else {
      const double sx = uniform(rng, 0.35, 0.8), sz = uniform(rng, 0.35, 0.8);
      if (!try_place(std::hypot(sx, sz) / 2, x, z)) continue;
      scene.objects.push_back(make_box(SynthRole::lying_box, x, z, sx, sz,
                                       uniform(rng, 0.15, 0.4), pick(kHazardPalette, 5, rng)));
    }
  }

  const int n_camo = uniform_int(rng, cfg.min_camo, cfg.max_camo);
  for (int i = 0; i < n_camo; ++i) {
    const double sx = uniform(rng, 0.35, 0.7), sz = uniform(rng, 0.35, 0.7);
    double x, z;
    if (!try_place(std::hypot(sx, sz) / 2, x, z)) continue;
    scene.objects.push_back(
        make_box(SynthRole::camo_box, x, z, sx, sz, uniform(rng, 0.2, 0.35), scene.floor_albedo));
  }

  const int n_wire = uniform_int(rng, cfg.min_wire, cfg.max_wire);
  for (int i = 0; i < n_wire; ++i) {
    const double len = uniform(rng, 1.0, 2.0), thin = uniform(rng, 0.04, 0.07);
    const bool along_x = (rng() & 1u) != 0;
    const double sx = along_x ? len : thin, sz = along_x ? thin : len;
    double x, z;
    if (!try_place(std::hypot(sx, sz) / 2, x, z)) continue;
    // Bright subset of the palette so the colour contrast stays >= 50 levels.
    const Eigen::Vector3i albedo = (rng() & 1u) ? kHazardPalette[0] : kHazardPalette[4];
    scene.objects.push_back(make_box(SynthRole::wire_strip, x, z, sx, sz, 0.004, albedo));
  }

  const int n_pillar = uniform_int(rng, cfg.min_pillar, cfg.max_pillar);
  for (int i = 0; i < n_pillar; ++i) {
    double x, z;
    if ((rng() & 1u) != 0) {
      const double sx = uniform(rng, 0.25, 0.45), sz = uniform(rng, 0.25, 0.45);
      if (!try_place(std::hypot(sx, sz) / 2, x, z)) continue;
      scene.objects.push_back(make_box(SynthRole::pillar, x, z, sx, sz, uniform(rng, 1.4, 1.9),
                                       pick(kGrayPalette, 2, rng)));
    } else {
      const double radius = uniform(rng, 0.1, 0.18);
      if (!try_place(radius, x, z)) continue;
      scene.objects.push_back(make_cylinder(SynthRole::pillar, x, z, radius,
                                            uniform(rng, 1.4, 1.9), pick(kGrayPalette, 2, rng)));
    }
  }

  if (uniform(rng, 0, 1) < cfg.standing_prob) {
    // Same palette as the lying hazards: appearance alone cannot decide.
    const double sx = uniform(rng, 0.3, 0.5), sz = uniform(rng, 0.3, 0.5);
    double x, z;
    if (try_place(std::hypot(sx, sz) / 2, x, z))
      scene.objects.push_back(make_box(SynthRole::standing_box, x, z, sx, sz,
                                       uniform(rng, 1.3, 1.8), pick(kHazardPalette, 5, rng)));
  }

  return scene;
}

DepthImage depth_from_render(const RenderBuffers& buf, const Intrinsics& k,
                             const SynthConfig& cfg, std::mt19937_64& rng) {
  DepthImage depth(k.width, k.height, k);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t i = 0; i < buf.depth_m.size(); ++i) {
    double z = buf.depth_m[i];
    if (z <= 0.0) continue;
    if (cfg.noise) {
      if (u01(rng) < cfg.speckle_fraction) continue;  // dropout speckle
      z += gauss(rng) * (cfg.noise_sigma_base_m + cfg.noise_sigma_per_m * z);
    }
    if (z <= 0.05 || z > cfg.z_max) continue;  // beyond sensor range -> missing
    depth.depth_mm[i] = static_cast<std::uint16_t>(std::lround(z * 1000.0));
  }
  return depth;
}

}  // namespace

std::vector<SynthFrame> synth_generate(std::uint64_t seed, const SynthConfig& cfg) {
  if (cfg.n_frames < 1) throw std::invalid_argument("synth_generate: n_frames must be >= 1");
  const Intrinsics k = Intrinsics::default_for(cfg.width, cfg.height);
  std::vector<SynthFrame> out;
  out.reserve(static_cast<std::size_t>(cfg.n_frames));

  for (int i = 0; i < cfg.n_frames; ++i) {
    const int group = i % cfg.n_groups;
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(group),
                                           static_cast<std::uint64_t>(i)}));
    SynthFrame sf;
    sf.scene = make_scene(rng, group, cfg);
    const RenderBuffers buf = render_scene(sf.scene, k, rng, cfg.color_noise);

    LabeledFrame& frame = sf.frame;
    frame.floor_id = "synth" + std::to_string(group);
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%04d", frame.floor_id.c_str(), i);
    frame.frame_id = idbuf;
    frame.color = buf.color;
    frame.depth = depth_from_render(buf, k, cfg, rng);

    // Label visible trip objects only.
    std::vector<int> visible(sf.scene.objects.size(), 0);
    for (int id : buf.object_id)
      if (id >= 0) ++visible[static_cast<std::size_t>(id)];
    for (std::size_t oi = 0; oi < sf.scene.objects.size(); ++oi) {
      const auto& obj = sf.scene.objects[oi];
      if (!obj.trip || visible[oi] < 4) continue;
      PolygonLabel poly = project_silhouette(obj, sf.scene.camera, k);
      if (poly.vertices.size() >= 3) frame.polygons.push_back(std::move(poly));
    }

    SynthTruth truth;
    const double th = sf.scene.camera.pitch_deg * M_PI / 180.0;
    truth.gravity_cam = Eigen::Vector3d(0, -std::cos(th), -std::sin(th));
    truth.ground_height_m = -kCameraHeight;
    truth.pitch_deg = sf.scene.camera.pitch_deg;
    frame.truth = truth;

    out.push_back(std::move(sf));
  }
  return out;
}

int write_synth_corpus(const std::string& root, std::uint64_t seed, const SynthConfig& cfg) {
  const auto frames = synth_generate(seed, cfg);
  fs::create_directories(root);
  save_intrinsics(root, Intrinsics::default_for(cfg.width, cfg.height));
  for (const auto& sf : frames) save_frame(root, sf.frame);

  json manifest{{"schema_version", kSchemaVersion},
                {"generator", "synth"},
                {"tool_version", kToolVersion},
                {"seed", seed},
                {"n_frames", cfg.n_frames},
                {"n_groups", cfg.n_groups},
                {"width", cfg.width},
                {"height", cfg.height},
                {"noise", cfg.noise},
                {"z_max", cfg.z_max}};
  std::ofstream out(fs::path(root) / "manifest.json");
  out << manifest.dump(2) << "\n";
  return static_cast<int>(frames.size());
}

SynthConfig overfit_config(int frames) {
  // Every object is visible to both modalities here: the overfit oracle
  // verifies the training machinery, so no single-modality-invisible hazards.
  SynthConfig cfg;
  cfg.n_frames = frames;
  cfg.n_groups = 1;
  cfg.width = 96;
  cfg.height = 96;
  cfg.noise = false;
  cfg.min_lying = 1;
  cfg.max_lying = 2;
  cfg.min_camo = 0;
  cfg.max_camo = 0;
  cfg.min_wire = 0;
  cfg.max_wire = 0;
  cfg.min_pillar = 1;
  cfg.max_pillar = 1;
  cfg.standing_prob = 0.0;
  return cfg;
}

}  // namespace hf
