#include "hazardfuse/data/polygon.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hazardfuse/common.hpp"

namespace hf {

namespace {

bool is_degenerate(const PolygonLabel& poly) {
  std::set<std::pair<double, double>> distinct;
  for (const auto& v : poly.vertices) distinct.insert({v.x(), v.y()});
  return distinct.size() < 3;
}

// Scanline even-odd fill against pixel centers.
void fill_polygon(const PolygonLabel& poly, ImageU8& mask) {
  const auto& vs = poly.vertices;
  const std::size_t n = vs.size();
  std::vector<double> xs;
  for (int y = 0; y < mask.height; ++y) {
    const double cy = y + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = vs[i];
      const auto& b = vs[(i + 1) % n];
      if ((a.y() > cy) == (b.y() > cy)) continue;
      xs.push_back(a.x() + (cy - a.y()) * (b.x() - a.x()) / (b.y() - a.y()));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // Pixel centers in [xs[k], xs[k+1]).
      const int x0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int x1 = std::min(mask.width - 1, static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1);
      for (int x = x0; x <= x1; ++x) mask.at(x, y) = 1;
    }
  }
}

}  // namespace

ImageU8 rasterize_polygon(const PolygonLabel& poly, int width, int height) {
  ImageU8 mask = ImageU8(width, height, 1, 0);
  if (is_degenerate(poly)) {
    log_warn("skipping degenerate polygon with " + std::to_string(poly.vertices.size()) +
             " vertices");
    return mask;
  }
  fill_polygon(poly, mask);
  return mask;
}

ImageU8 rasterize(const std::vector<PolygonLabel>& polys, int width, int height) {
  ImageU8 mask = ImageU8(width, height, 1, 0);
  for (const auto& poly : polys) {
    if (is_degenerate(poly)) {
      log_warn("skipping degenerate polygon with " + std::to_string(poly.vertices.size()) +
               " vertices");
      continue;
    }
    fill_polygon(poly, mask);
  }
  return mask;
}

}  // namespace hf
