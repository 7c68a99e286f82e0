#include "hazardfuse/eval/curves.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace hf {

std::vector<double> default_thresholds() {
  std::vector<double> t(101);
  for (int i = 0; i <= 100; ++i) t[static_cast<std::size_t>(i)] = i / 100.0;
  return t;
}

namespace {

// Sorted-probability prefix counting: counts of values >= tau by binary
// search, equivalent to thresholding every pixel.
struct SortedFrame {
  std::vector<float> trip, bg;                    // ascending
  std::vector<std::vector<float>> instance_probs; // ascending per instance
};

std::uint64_t count_geq(const std::vector<float>& sorted, double tau) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), tau,
                             [](float a, double b) { return static_cast<double>(a) < b; });
  return static_cast<std::uint64_t>(sorted.end() - it);
}

}  // namespace

Curve pr_sweep(const std::vector<EvalFrame>& frames, const std::vector<double>& thresholds,
               double theta_det) {
  if (frames.empty()) throw std::runtime_error("pr_sweep: empty frame set");
  if (thresholds.empty() || !std::is_sorted(thresholds.begin(), thresholds.end()))
    throw std::invalid_argument("pr_sweep: thresholds must be sorted and nonempty");

  std::vector<SortedFrame> sorted;
  sorted.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.trip_prob.size() != f.gt.pixels.size())
      throw std::invalid_argument("pr_sweep: probability plane does not match gt mask");
    SortedFrame s;
    for (std::size_t i = 0; i < f.trip_prob.size(); ++i)
      (f.gt.pixels[i] ? s.trip : s.bg).push_back(f.trip_prob[i]);
    std::sort(s.trip.begin(), s.trip.end());
    std::sort(s.bg.begin(), s.bg.end());
    for (const auto& inst : f.instances) {
      std::vector<float> probs;
      probs.reserve(inst.size());
      for (auto i : inst) probs.push_back(f.trip_prob[i]);
      std::sort(probs.begin(), probs.end());
      s.instance_probs.push_back(std::move(probs));
    }
    sorted.push_back(std::move(s));
  }

  Curve curve;
  curve.theta_det = theta_det;
  for (double tau : thresholds) {
    ConfusionCounts counts;
    ObjDetStats obj;
    for (const auto& s : sorted) {
      const std::uint64_t tp = count_geq(s.trip, tau);
      const std::uint64_t fp = count_geq(s.bg, tau);
      counts.tp += tp;
      counts.fp += fp;
      counts.fn += static_cast<std::uint64_t>(s.trip.size()) - tp;
      counts.tn += static_cast<std::uint64_t>(s.bg.size()) - fp;
      for (const auto& inst : s.instance_probs) {
        if (inst.empty()) continue;
        ++obj.total;
        const double covered = static_cast<double>(count_geq(inst, tau));
        if (covered / static_cast<double>(inst.size()) >= theta_det) ++obj.detected;
      }
    }
    CurvePoint point;
    point.threshold = tau;
    point.obj = obj;
    point.report = metrics(counts, &obj, tau);
    curve.points.push_back(std::move(point));
  }
  return curve;
}

CurvePoint operating_point(const Curve& curve) {
  if (curve.points.empty()) throw std::runtime_error("operating_point: empty curve");
  const CurvePoint* best = &curve.points.front();
  for (const auto& p : curve.points)
    if (p.report.f1 > best->report.f1) best = &p;  // strict: ties keep the lowest threshold
  return *best;
}

Curve average_curves(const std::vector<Curve>& folds) {
  if (folds.empty()) throw std::runtime_error("average_curves: no folds");
  const std::size_t n = folds.front().points.size();
  for (const auto& c : folds)
    if (c.points.size() != n)
      throw std::invalid_argument("average_curves: folds use different threshold grids");

  Curve out;
  out.theta_det = folds.front().theta_det;
  for (std::size_t i = 0; i < n; ++i) {
    CurvePoint p;
    p.threshold = folds.front().points[i].threshold;
    double od_sum = 0;
    int od_n = 0;
    for (const auto& c : folds) {
      const auto& q = c.points[i];
      p.report.precision += q.report.precision;
      p.report.recall += q.report.recall;
      p.report.f1 += q.report.f1;
      p.report.trip_iou += q.report.trip_iou;
      p.report.counts += q.report.counts;
      p.obj += q.obj;
      if (q.report.trip_obj_detection) {
        od_sum += *q.report.trip_obj_detection;
        ++od_n;
      }
    }
    const double k = static_cast<double>(folds.size());
    p.report.precision /= k;
    p.report.recall /= k;
    p.report.f1 /= k;
    p.report.trip_iou /= k;
    p.report.threshold = p.threshold;
    if (od_n > 0) p.report.trip_obj_detection = od_sum / od_n;
    out.points.push_back(std::move(p));
  }
  return out;
}

AggregateReport crossval_aggregate(const std::vector<MetricsReport>& fold_reports) {
  if (fold_reports.empty()) throw std::runtime_error("crossval_aggregate: no folds");
  AggregateReport agg;
  agg.folds = static_cast<int>(fold_reports.size());
  double od_sum = 0;
  int od_n = 0;
  for (const auto& r : fold_reports) {
    agg.precision += r.precision;
    agg.recall += r.recall;
    agg.f1 += r.f1;
    agg.trip_iou += r.trip_iou;
    if (r.trip_obj_detection) {
      od_sum += *r.trip_obj_detection;
      ++od_n;
    }
  }
  const double k = static_cast<double>(fold_reports.size());
  agg.precision /= k;
  agg.recall /= k;
  agg.f1 /= k;
  agg.trip_iou /= k;
  if (od_n > 0) agg.trip_obj_detection = od_sum / od_n;
  return agg;
}

void write_curve_csv(const std::string& path, const Curve& curve) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "threshold,precision,recall,f1,trip_iou,obj_det\n";
  char line[256];
  for (const auto& p : curve.points) {
    std::snprintf(line, sizeof(line), "%.2f,%.6f,%.6f,%.6f,%.6f", p.threshold,
                  p.report.precision, p.report.recall, p.report.f1, p.report.trip_iou);
    out << line;
    if (p.report.trip_obj_detection) {
      std::snprintf(line, sizeof(line), ",%.6f", *p.report.trip_obj_detection);
      out << line;
    } else {
      out << ",";
    }
    out << "\n";
  }
}

}  // namespace hf
