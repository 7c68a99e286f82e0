#include "hazardfuse/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "hazardfuse/common.hpp"

namespace hf {

PointCloud backproject(const DepthImage& depth) {
  depth.intrinsics.validate();
  const auto& k = depth.intrinsics;
  PointCloud cloud;
  cloud.width = depth.width;
  cloud.height = depth.height;
  cloud.points.assign(static_cast<std::size_t>(depth.width) * depth.height,
                      Eigen::Vector3f::Zero());
  cloud.valid.assign(cloud.points.size(), 0);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const std::size_t i = depth.index(u, v);
      if (depth.depth_mm[i] == 0) continue;
      const float z = depth.depth_mm[i] * 0.001f;
      cloud.points[i] = Eigen::Vector3f(static_cast<float>((u - k.cx) * z / k.fx),
                                        static_cast<float>((v - k.cy) * z / k.fy), z);
      cloud.valid[i] = 1;
    }
  }
  return cloud;
}

NormalMap estimate_normals(const PointCloud& cloud, int window) {
  if (window < 3 || window % 2 == 0)
    throw std::invalid_argument("estimate_normals: window must be odd and >= 3");
  const int r = window / 2;
  const int need = (window * window + 1) / 2;  // >= 50% valid neighbors

  NormalMap nm;
  nm.width = cloud.width;
  nm.height = cloud.height;
  nm.normals.assign(cloud.points.size(), Eigen::Vector3f::Zero());
  nm.valid.assign(cloud.points.size(), 0);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
  for (int y = 0; y < cloud.height; ++y) {
    for (int x = 0; x < cloud.width; ++x) {
      const std::size_t i = cloud.index(x, y);
      if (!cloud.valid[i]) continue;

      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      Eigen::Matrix3d sq = Eigen::Matrix3d::Zero();
      int n = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= cloud.height) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= cloud.width) continue;
          const std::size_t j = cloud.index(xx, yy);
          if (!cloud.valid[j]) continue;
          const Eigen::Vector3d p = cloud.points[j].cast<double>();
          sum += p;
          sq += p * p.transpose();
          ++n;
        }
      }
      if (n < need) continue;

      const Eigen::Vector3d mean = sum / n;
      const Eigen::Matrix3d cov = sq / n - mean * mean.transpose();
      eig.computeDirect(cov);
      Eigen::Vector3d normal = eig.eigenvectors().col(0);  // smallest eigenvalue
      const double len = normal.norm();
      if (!std::isfinite(len) || len < 1e-12) continue;
      normal /= len;
      if (normal.dot(cloud.points[i].cast<double>()) > 0) normal = -normal;
      nm.normals[i] = normal.cast<float>();
      nm.valid[i] = 1;
    }
  }
  return nm;
}

namespace {

struct BandStats {
  double parallel_fraction = 0.0;
  double aligned_fraction = 0.0;
};

BandStats band_stats(const NormalMap& nm, const Eigen::Vector3d& axis, double band_deg) {
  const double cos_par = std::cos(band_deg * M_PI / 180.0);
  const double sin_perp = std::sin(band_deg * M_PI / 180.0);
  std::size_t par = 0, perp = 0, valid = 0;
  for (std::size_t i = 0; i < nm.normals.size(); ++i) {
    if (!nm.valid[i]) continue;
    ++valid;
    const double d = std::abs(nm.normals[i].cast<double>().dot(axis));
    if (d >= cos_par)
      ++par;
    else if (d <= sin_perp)
      ++perp;
  }
  BandStats s;
  if (valid) {
    s.parallel_fraction = static_cast<double>(par) / valid;
    s.aligned_fraction = static_cast<double>(par + perp) / valid;
  }
  return s;
}

}  // namespace

GravityEstimate estimate_gravity(const NormalMap& nm, const GravityConfig& cfg) {
  std::size_t valid = 0;
  for (auto v : nm.valid) valid += v;
  const std::size_t total = nm.normals.size();
  if (total == 0 || static_cast<double>(valid) / total < cfg.min_valid_fraction)
    throw std::runtime_error("estimate_gravity: only " + std::to_string(valid) + " of " +
                             std::to_string(total) + " pixels carry valid normals");

  const Eigen::Vector3d init(0, -1, 0);  // camera -Y
  Eigen::Vector3d axis = init;
  GravityEstimate est;

  const int stages = static_cast<int>(cfg.band_schedule_deg.size());
  const int per_stage = std::max(1, cfg.max_iter / std::max(1, stages));
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;

  for (int stage = 0; stage < stages; ++stage) {
    const double band = cfg.band_schedule_deg[static_cast<std::size_t>(stage)];
    const double cos_par = std::cos(band * M_PI / 180.0);
    const double sin_perp = std::sin(band * M_PI / 180.0);
    for (int it = 0; it < per_stage && est.iterations_used < cfg.max_iter; ++it) {
      Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
      for (std::size_t i = 0; i < nm.normals.size(); ++i) {
        if (!nm.valid[i]) continue;
        const Eigen::Vector3d n = nm.normals[i].cast<double>();
        const double d = std::abs(n.dot(axis));
        if (d >= cos_par)
          m += n * n.transpose();
        else if (d <= sin_perp)
          m -= n * n.transpose();
      }
      eig.computeDirect(m);
      Eigen::Vector3d next = eig.eigenvectors().col(2);  // largest eigenvalue
      if (next.dot(axis) < 0) next = -next;
      const double change_deg =
          std::acos(std::clamp(next.dot(axis), -1.0, 1.0)) * 180.0 / M_PI;
      axis = next;
      ++est.iterations_used;
      if (change_deg < cfg.convergence_deg) break;
    }
  }

  const double final_band = cfg.band_schedule_deg.back();
  const auto stats = band_stats(nm, axis, final_band);
  if (stats.parallel_fraction < cfg.min_parallel_fraction ||
      stats.aligned_fraction < cfg.min_aligned_fraction) {
    // No dominant aligned structure; keep the initialization.
    est.fallback = true;
    est.direction = init;
    est.aligned_fraction = band_stats(nm, init, final_band).aligned_fraction;
    return est;
  }
  est.direction = axis.normalized();
  est.aligned_fraction = stats.aligned_fraction;
  return est;
}

GroundEstimate estimate_ground(const PointCloud& cloud, const Eigen::Vector3d& gravity_dir,
                               double clamp_below_m, double percentile) {
  std::vector<float> heights;
  heights.reserve(cloud.points.size());
  const Eigen::Vector3f axis = gravity_dir.cast<float>();
  for (std::size_t i = 0; i < cloud.points.size(); ++i)
    if (cloud.valid[i]) heights.push_back(cloud.points[i].dot(axis));
  if (heights.empty()) throw std::runtime_error("estimate_ground: no valid points");

  const std::size_t k = static_cast<std::size_t>(
      percentile * static_cast<double>(heights.size() - 1));
  std::nth_element(heights.begin(), heights.begin() + static_cast<std::ptrdiff_t>(k),
                   heights.end());
  GroundEstimate g;
  g.height_m = heights[k];
  if (g.height_m < -clamp_below_m) {
    g.height_m = -clamp_below_m;
    g.clamped = true;
  }
  return g;
}

ImageU8 validity_mask(const DepthImage& depth, double z_max) {
  ImageU8 mask(depth.width, depth.height, 1, 0);
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x)
      if (depth.valid_at(x, y) && depth.z_m(x, y) <= z_max) mask.at(x, y) = 1;
  return mask;
}

}  // namespace hf
