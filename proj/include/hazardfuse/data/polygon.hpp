#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "hazardfuse/data/image.hpp"

namespace hf {

/// Polygon annotation in pixel coordinates. Only the "trip" class exists.
struct PolygonLabel {
  std::vector<Eigen::Vector2d> vertices;
  std::string cls = "trip";
};

/// Rasterizes one polygon: a pixel is set iff its center (x+0.5, y+0.5) lies
/// inside under the even-odd rule. Degenerate polygons (<3 distinct vertices)
/// produce an empty mask with a warning.
ImageU8 rasterize_polygon(const PolygonLabel& poly, int width, int height);

/// Union of all polygons (overlaps count once).
ImageU8 rasterize(const std::vector<PolygonLabel>& polys, int width, int height);

}  // namespace hf
