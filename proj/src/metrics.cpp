#include "hazardfuse/eval/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hf {

ConfusionCounts confusion(const ImageU8& pred, const ImageU8& gt, const ImageU8* ignore) {
  if (!pred.same_dims(gt))
    throw std::invalid_argument("confusion: mask dims differ: " + std::to_string(pred.width) +
                                "x" + std::to_string(pred.height) + " vs " +
                                std::to_string(gt.width) + "x" + std::to_string(gt.height));
  if (ignore && !ignore->same_dims(gt))
    throw std::invalid_argument("confusion: ignore mask dims differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    if (ignore && ignore->pixels[i]) continue;
    const bool p = pred.pixels[i] != 0, g = gt.pixels[i] != 0;
    if (p && g)
      ++c.tp;
    else if (p && !g)
      ++c.fp;
    else if (!p && g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

MetricsReport metrics(const ConfusionCounts& c, const ObjDetStats* obj, double threshold) {
  MetricsReport r;
  r.counts = c;
  r.threshold = threshold;
  r.precision = (c.tp + c.fp > 0) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                                  : (c.fn == 0 ? 1.0 : 0.0);
  r.recall = (c.tp + c.fn > 0) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 1.0;
  r.f1 = (r.precision + r.recall > 0) ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                      : 0.0;
  r.trip_iou = (c.tp + c.fp + c.fn > 0)
                   ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn)
                   : 1.0;
  if (obj) r.trip_obj_detection = obj->fraction();
  return r;
}

namespace {

std::vector<std::vector<std::uint32_t>> connected_components8(const ImageU8& mask) {
  std::vector<std::vector<std::uint32_t>> comps;
  std::vector<std::uint8_t> seen(mask.pixels.size(), 0);
  std::vector<std::uint32_t> stack;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::uint32_t start = static_cast<std::uint32_t>(y) * mask.width + x;
      if (!mask.pixels[start] || seen[start]) continue;
      comps.emplace_back();
      stack.assign(1, start);
      seen[start] = 1;
      while (!stack.empty()) {
        const std::uint32_t i = stack.back();
        stack.pop_back();
        comps.back().push_back(i);
        const int cy = static_cast<int>(i) / mask.width;
        const int cx = static_cast<int>(i) % mask.width;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy) continue;
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= mask.height || nx < 0 || nx >= mask.width) continue;
            const std::uint32_t n = static_cast<std::uint32_t>(ny) * mask.width + nx;
            if (mask.pixels[n] && !seen[n]) {
              seen[n] = 1;
              stack.push_back(n);
            }
          }
      }
    }
  }
  return comps;
}

}  // namespace

std::vector<std::vector<std::uint32_t>> gt_instances(const std::vector<PolygonLabel>& polygons,
                                                     const ImageU8& gt_mask) {
  if (polygons.empty()) return connected_components8(gt_mask);
  std::vector<std::vector<std::uint32_t>> out;
  for (const auto& poly : polygons) {
    const ImageU8 m = rasterize_polygon(poly, gt_mask.width, gt_mask.height);
    std::vector<std::uint32_t> px;
    for (std::size_t i = 0; i < m.pixels.size(); ++i)
      if (m.pixels[i]) px.push_back(static_cast<std::uint32_t>(i));
    if (!px.empty()) out.push_back(std::move(px));
  }
  return out;
}

ObjDetStats trip_object_detection(const ImageU8& pred,
                                  const std::vector<std::vector<std::uint32_t>>& instances,
                                  double theta_det) {
  ObjDetStats s;
  for (const auto& inst : instances) {
    if (inst.empty()) continue;
    ++s.total;
    std::size_t covered = 0;
    for (auto i : inst) covered += pred.pixels[i] ? 1 : 0;
    if (static_cast<double>(covered) / static_cast<double>(inst.size()) >= theta_det) ++s.detected;
  }
  return s;
}

}  // namespace hf
