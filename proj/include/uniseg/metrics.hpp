#pragma once

#include <map>
#include <string>
#include <vector>

namespace uniseg {

// Sorted, distinct point indices.
using PointMask = std::vector<int>;

// |a n b| / |a u b| for sorted masks; 0 when both are empty.
double mask_iou(const PointMask& a, const PointMask& b);
std::size_t intersection_size(const PointMask& a, const PointMask& b);

// All values are percentages in [0, 100].
struct MetricsReport {
  double pq = 0.0;
  double sem_miou = 0.0;
  double inst_map = 0.0;
  double inst_ap50 = 0.0;
  double inst_ap25 = 0.0;
  double inter_ap = 0.0;
  double inter_ap50 = 0.0;
  double inter_ap25 = 0.0;
  double inter_miou = 0.0;
  double ref_miou = 0.0;
  double ref_acc25 = 0.0;
  double ref_acc50 = 0.0;
  double ov_ap = 0.0;
  double overall = 0.0;

  // Mean of pq, sem_miou, inst_map, inter_ap, ref_miou and ov_ap.
  double headline_mean() const;
  bool operator==(const MetricsReport&) const = default;
};

// Field names in declaration order.
const std::vector<std::string>& metrics_keys();
std::map<std::string, double> to_map(const MetricsReport& report);
// One "key = value" line per field, values with 17 significant digits.
std::string serialize_report(const MetricsReport& report);
// Throws ParseError on malformed lines, unknown or missing keys.
MetricsReport parse_report(const std::string& text);

// ---- panoptic quality -----------------------------------------------------

struct Segment {
  PointMask points;
  int cls = -1;
};

// Accumulates per-class TP / FP / FN and matched IoU over scenes. Points
// flagged in `void_points` are removed from predicted segments before IoU.
// Throws ContractError when predicted segments overlap, and asserts that
// no gt segment is matched twice.
class PanopticAccumulator {
 public:
  void add(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
           const std::vector<char>& void_points = {});
  // Mean over classes seen in gt of sum(IoU) / (TP + FP/2 + FN/2); 0 when
  // gt held no segments.
  double value() const;

 private:
  struct ClassStats {
    double iou_sum = 0.0;
    int tp = 0, fp = 0, fn = 0;
    bool in_gt = false;
  };
  std::map<int, ClassStats> stats_;
};

double panoptic_quality(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                        const std::vector<char>& void_points = {});

// ---- semantic mIoU ---------------------------------------------------------

// Per-point labels; gt label < 0 means ignored.
class SemanticAccumulator {
 public:
  void add(const std::vector<int>& pred, const std::vector<int>& gt);
  // Mean IoU over classes present in gt; 0 when none.
  double value() const;

 private:
  std::map<int, std::pair<double, double>> inter_union_;
  std::map<int, bool> in_gt_;
};

double semantic_miou(const std::vector<int>& pred, const std::vector<int>& gt);

// ---- average precision -----------------------------------------------------

struct ScoredMask {
  PointMask points;
  int cls = -1;
  double score = 0.0;
};

struct ApSummary {
  double map = 0.0;   // mean over 0.50:0.05:0.95
  double ap50 = 0.0;
  double ap25 = 0.0;
};

// Greedy matching per scene: predictions in descending score (ties to
// lower index) take the unmatched same-class gt of highest IoU, counted
// when IoU >= threshold. Detections from all scenes are then ranked
// together (ties by scene, then index) and scored by 101-point interpolated
// precision. Class-averaged over classes with gt.
class ApAccumulator {
 public:
  void add(const std::vector<ScoredMask>& pred, const std::vector<Segment>& gt);
  double ap(double threshold) const;
  ApSummary summary() const;
  bool empty() const { return gt_count_.empty(); }

 private:
  struct Scene {
    std::vector<ScoredMask> pred;
    std::vector<Segment> gt;
  };
  std::vector<Scene> scenes_;
  std::map<int, int> gt_count_;
};

// 101-point interpolated AP of one ranked list of true/false detections.
double interpolated_ap(const std::vector<bool>& ranked_tp, int gt_count);

std::vector<double> map_thresholds();

// ---- prompt-driven tasks -----------------------------------------------------

struct ReferringSummary {
  double miou = 0.0;
  double acc25 = 0.0;
  double acc50 = 0.0;
};

// mIoU and fraction of IoU >= 0.25 / 0.5, as percentages. Zeros when empty.
ReferringSummary referring_metrics(const std::vector<double>& ious);
ReferringSummary referring_metrics(const std::vector<PointMask>& pred,
                                   const std::vector<PointMask>& gt);

struct InteractiveSummary {
  ApSummary ap;
  double miou = 0.0;
};

// Each click is a class-agnostic scored instance matched only against its
// own target.
class InteractiveAccumulator {
 public:
  void add(const PointMask& pred, double score, const PointMask& gt);
  InteractiveSummary summary() const;
  const std::vector<double>& ious() const { return ious_; }

 private:
  ApAccumulator ap_;
  std::vector<double> ious_;
};

InteractiveSummary interactive_metrics(const std::vector<PointMask>& pred,
                                       const std::vector<double>& scores,
                                       const std::vector<PointMask>& gt);

}  // namespace uniseg
