#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hazardfuse/data/image.hpp"
#include "hazardfuse/data/polygon.hpp"

namespace hf {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t evaluated() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

/// The five headline metrics at one operating point. Degenerate-count
/// conventions (documented so reports are reproducible):
///   precision: tp+fp = 0 -> 1 if fn = 0 else 0
///   recall:    tp+fn = 0 -> 1 (vacuously complete)
///   f1:        P+R = 0   -> 0
///   trip_iou:  tp+fp+fn = 0 -> 1 (a perfect empty prediction)
/// These preserve the identity f1 = 2*iou/(1+iou) in every case.
struct MetricsReport {
  double precision = 0, recall = 0, f1 = 0, trip_iou = 0;
  std::optional<double> trip_obj_detection;  // absent when no gt objects exist
  double threshold = 0.5;
  ConfusionCounts counts;
};

struct ObjDetStats {
  std::uint64_t detected = 0, total = 0;

  std::optional<double> fraction() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(detected) / static_cast<double>(total);
  }
  ObjDetStats& operator+=(const ObjDetStats& o) {
    detected += o.detected;
    total += o.total;
    return *this;
  }
};

/// Per-pixel counting over non-ignored pixels; trip is the positive class.
/// Masks hold 0/1; ignore may be empty.
ConfusionCounts confusion(const ImageU8& pred, const ImageU8& gt, const ImageU8* ignore = nullptr);

MetricsReport metrics(const ConfusionCounts& counts, const ObjDetStats* obj = nullptr,
                      double threshold = 0.5);

/// Ground-truth instances for object-level detection: per-polygon instances
/// when polygons are available, 8-connected components of the mask otherwise.
std::vector<std::vector<std::uint32_t>> gt_instances(const std::vector<PolygonLabel>& polygons,
                                                     const ImageU8& gt_mask);

/// An instance counts as detected when the predicted-trip fraction of its
/// pixels reaches theta_det.
ObjDetStats trip_object_detection(const ImageU8& pred,
                                  const std::vector<std::vector<std::uint32_t>>& instances,
                                  double theta_det = 0.5);

/// Reported cross-validated operating points of the original full-scale
/// construction-site study (percent). Reference documentation only: the
/// desk-scale synthetic corpus does not reproduce these magnitudes.
struct ReferenceRow {
  const char* approach;
  double precision, recall, f1, trip_iou, obj_det;
};

inline constexpr ReferenceRow kReportedOperatingPoints[] = {
    {"none_depth", 32.6, 49.6, 39.2, 24.7, 58.1},
    {"none_hha", 44.1, 49.8, 46.2, 30.5, 50.8},
    {"none_rgb", 43.9, 61.6, 50.8, 34.5, 75.7},
    {"early_rgb_depth", 42.0, 59.4, 48.5, 32.6, 78.7},
    {"early_rgb_hha", 46.2, 57.9, 49.8, 33.2, 55.9},
    {"late_overlay_rgb_depth", 43.8, 59.6, 50.3, 33.9, 72.3},
    {"late_overlay_rgb_hha", 46.4, 57.9, 51.2, 34.8, 70.0},
    {"mid_rgb_depth", 44.6, 59.4, 50.7, 41.1, 64.3},
    {"mid_rgb_hha", 48.9, 58.7, 53.1, 36.5, 63.8},
    {"late_proportional_rgb_depth", 39.8, 55.6, 46.2, 30.8, 60.2},
    {"late_proportional_rgb_hha", 50.2, 61.3, 54.8, 38.0, 72.0},
};

}  // namespace hf
