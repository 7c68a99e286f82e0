#pragma once

#include <string>
#include <vector>

#include "hazardfuse/eval/metrics.hpp"

namespace hf {

/// One frame prepared for threshold sweeps: the trip-probability plane, the
/// rasterized ground truth, and the ground-truth instances.
struct EvalFrame {
  std::vector<float> trip_prob;  // row-major H*W
  ImageU8 gt;
  std::vector<std::vector<std::uint32_t>> instances;
};

struct CurvePoint {
  double threshold = 0;
  MetricsReport report;
  ObjDetStats obj;
};

struct Curve {
  std::vector<CurvePoint> points;
  double theta_det = 0.5;
};

/// 0.00..1.00 in steps of 0.01 (101 points).
std::vector<double> default_thresholds();

/// Micro-averaged sweep: for each threshold, pixels with trip probability
/// >= tau are predicted trip, confusion counts pool over all frames, and
/// object detection pools detected/total over all frames' instances.
Curve pr_sweep(const std::vector<EvalFrame>& frames, const std::vector<double>& thresholds,
               double theta_det = 0.5);

/// The max-F1 point; ties resolve to the lowest threshold.
CurvePoint operating_point(const Curve& curve);

/// Pointwise mean of per-fold curves sharing one threshold grid (counts are
/// summed for reference; the metric columns are fold means).
Curve average_curves(const std::vector<Curve>& folds);

struct AggregateReport {
  double precision = 0, recall = 0, f1 = 0, trip_iou = 0;
  std::optional<double> trip_obj_detection;
  int folds = 0;
};

/// Unweighted arithmetic mean of each metric across folds (so the averaged
/// F1 is the mean of fold F1s, not a function of averaged P and R). Folds
/// with undefined object detection are excluded from that metric's mean only.
AggregateReport crossval_aggregate(const std::vector<MetricsReport>& fold_reports);

/// CSV columns: threshold, precision, recall, f1, trip_iou, obj_det
/// (obj_det left blank when undefined).
void write_curve_csv(const std::string& path, const Curve& curve);

}  // namespace hf
