#include "uniseg/metrics.hpp"

#include "uniseg/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace uniseg {

std::size_t intersection_size(const PointMask& a, const PointMask& b) {
  std::size_t count = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

double mask_iou(const PointMask& a, const PointMask& b) {
  const std::size_t inter = intersection_size(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---- report ------------------------------------------------------------------

double MetricsReport::headline_mean() const {
  return (pq + sem_miou + inst_map + inter_ap + ref_miou + ov_ap) / 6.0;
}

const std::vector<std::string>& metrics_keys() {
  static const std::vector<std::string> keys = {
      "pq",         "sem_miou",   "inst_map",  "inst_ap50",  "inst_ap25",
      "inter_ap",   "inter_ap50", "inter_ap25", "inter_miou", "ref_miou",
      "ref_acc25",  "ref_acc50",  "ov_ap",     "overall"};
  return keys;
}

namespace {

std::vector<double MetricsReport::*> report_fields() {
  return {&MetricsReport::pq,         &MetricsReport::sem_miou,   &MetricsReport::inst_map,
          &MetricsReport::inst_ap50,  &MetricsReport::inst_ap25,  &MetricsReport::inter_ap,
          &MetricsReport::inter_ap50, &MetricsReport::inter_ap25, &MetricsReport::inter_miou,
          &MetricsReport::ref_miou,   &MetricsReport::ref_acc25,  &MetricsReport::ref_acc50,
          &MetricsReport::ov_ap,      &MetricsReport::overall};
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::map<std::string, double> to_map(const MetricsReport& report) {
  std::map<std::string, double> out;
  const auto fields = report_fields();
  for (std::size_t k = 0; k < fields.size(); ++k) out[metrics_keys()[k]] = report.*fields[k];
  return out;
}

std::string serialize_report(const MetricsReport& report) {
  std::string out;
  const auto fields = report_fields();
  for (std::size_t k = 0; k < fields.size(); ++k) {
    out += metrics_keys()[k] + " = " + format_double(report.*fields[k]) + "\n";
  }
  return out;
}

MetricsReport parse_report(const std::string& text) {
  MetricsReport report;
  const auto fields = report_fields();
  std::set<std::string> seen;
  std::size_t offset = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("report: expected 'key = value'", line_start);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = std::find(metrics_keys().begin(), metrics_keys().end(), key);
    if (it == metrics_keys().end()) throw ParseError("report: unknown key '" + key + "'", line_start);
    if (!seen.insert(key).second) throw ParseError("report: duplicate key '" + key + "'", line_start);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      throw ParseError("report: bad number for '" + key + "'", line_start + eq + 1);
    }
    report.*fields[static_cast<std::size_t>(it - metrics_keys().begin())] = v;
  }
  if (seen.size() != fields.size()) throw ParseError("report: missing keys", offset);
  return report;
}

// ---- panoptic quality ------------------------------------------------------------

namespace {

PointMask without_void(const PointMask& mask, const std::vector<char>& void_points) {
  if (void_points.empty()) return mask;
  PointMask out;
  for (int p : mask) {
    if (p < 0 || static_cast<std::size_t>(p) >= void_points.size() || !void_points[static_cast<std::size_t>(p)]) {
      out.push_back(p);
    }
  }
  return out;
}

void require_disjoint(const std::vector<Segment>& segments, const char* what) {
  std::vector<int> all;
  for (const Segment& s : segments) all.insert(all.end(), s.points.begin(), s.points.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw ContractError(std::string("panoptic_quality: overlapping ") + what + " segments");
  }
}

}  // namespace

void PanopticAccumulator::add(const std::vector<Segment>& pred_in, const std::vector<Segment>& gt_in,
                              const std::vector<char>& void_points) {
  require_disjoint(pred_in, "predicted");
  require_disjoint(gt_in, "ground-truth");
  std::vector<Segment> pred, gt;
  for (const Segment& s : pred_in) {
    Segment t{without_void(s.points, void_points), s.cls};
    if (!t.points.empty()) pred.push_back(std::move(t));
  }
  for (const Segment& s : gt_in) {
    Segment t{without_void(s.points, void_points), s.cls};
    if (!t.points.empty()) gt.push_back(std::move(t));
  }

  std::vector<char> pred_hit(pred.size(), 0), gt_hit(gt.size(), 0);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    stats_[gt[g].cls].in_gt = true;
    for (std::size_t q = 0; q < pred.size(); ++q) {
      if (pred[q].cls != gt[g].cls) continue;
      const double iou = mask_iou(pred[q].points, gt[g].points);
      if (iou <= 0.5) continue;
      if (gt_hit[g] || pred_hit[q]) throw std::logic_error("panoptic_quality: non-unique match");
      gt_hit[g] = pred_hit[q] = 1;
      ClassStats& st = stats_[gt[g].cls];
      st.iou_sum += iou;
      ++st.tp;
    }
  }
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (!gt_hit[g]) ++stats_[gt[g].cls].fn;
  }
  for (std::size_t q = 0; q < pred.size(); ++q) {
    if (!pred_hit[q]) ++stats_[pred[q].cls].fp;
  }
}

double PanopticAccumulator::value() const {
  double total = 0.0;
  int classes = 0;
  for (const auto& [cls, st] : stats_) {
    if (!st.in_gt) continue;
    ++classes;
    const double denom = st.tp + 0.5 * st.fp + 0.5 * st.fn;
    total += denom > 0.0 ? st.iou_sum / denom : 0.0;
  }
  return classes == 0 ? 0.0 : 100.0 * total / classes;
}

double panoptic_quality(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                        const std::vector<char>& void_points) {
  PanopticAccumulator acc;
  acc.add(pred, gt, void_points);
  return acc.value();
}

// ---- semantic mIoU -----------------------------------------------------------------

void SemanticAccumulator::add(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size()) throw DimensionError("semantic_miou: label arrays differ in length");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt[i];
    if (g < 0) continue;
    const int p = pred[i];
    in_gt_[g] = true;
    if (p == g) {
      inter_union_[g].first += 1.0;
      inter_union_[g].second += 1.0;
    } else {
      inter_union_[g].second += 1.0;
      if (p >= 0) inter_union_[p].second += 1.0;
    }
  }
}

double SemanticAccumulator::value() const {
  double total = 0.0;
  int classes = 0;
  for (const auto& [cls, present] : in_gt_) {
    if (!present) continue;
    const auto& [inter, uni] = inter_union_.at(cls);
    total += uni > 0.0 ? inter / uni : 0.0;
    ++classes;
  }
  return classes == 0 ? 0.0 : 100.0 * total / classes;
}

double semantic_miou(const std::vector<int>& pred, const std::vector<int>& gt) {
  SemanticAccumulator acc;
  acc.add(pred, gt);
  return acc.value();
}

// ---- average precision -----------------------------------------------------------------

double interpolated_ap(const std::vector<bool>& ranked_tp, int gt_count) {
  if (gt_count <= 0) return 0.0;
  std::vector<double> precision, recall;
  int tp = 0;
  for (std::size_t k = 0; k < ranked_tp.size(); ++k) {
    tp += ranked_tp[k] ? 1 : 0;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / gt_count);
  }
  // Running max from the right gives the interpolated envelope.
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double total = 0.0;
  std::size_t k = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    while (k < recall.size() && recall[k] < r - 1e-12) ++k;
    if (k < recall.size()) total += precision[k];
  }
  return total / 101.0;
}

std::vector<double> map_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

void ApAccumulator::add(const std::vector<ScoredMask>& pred, const std::vector<Segment>& gt) {
  for (const Segment& g : gt) ++gt_count_[g.cls];
  scenes_.push_back({pred, gt});
}

double ApAccumulator::ap(double threshold) const {
  struct Detection {
    double score;
    std::size_t scene;
    std::size_t index;
    bool tp;
  };
  double total = 0.0;
  for (const auto& [cls, count] : gt_count_) {
    std::vector<Detection> dets;
    for (std::size_t s = 0; s < scenes_.size(); ++s) {
      const Scene& sc = scenes_[s];
      std::vector<std::size_t> order;
      for (std::size_t q = 0; q < sc.pred.size(); ++q) {
        if (sc.pred[q].cls == cls) order.push_back(q);
      }
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sc.pred[a].score > sc.pred[b].score;
      });
      std::vector<char> used(sc.gt.size(), 0);
      for (std::size_t q : order) {
        double best = -1.0;
        std::size_t best_g = sc.gt.size();
        for (std::size_t g = 0; g < sc.gt.size(); ++g) {
          if (used[g] || sc.gt[g].cls != cls) continue;
          const double iou = mask_iou(sc.pred[q].points, sc.gt[g].points);
          if (iou >= threshold && iou > best) {
            best = iou;
            best_g = g;
          }
        }
        if (best_g < sc.gt.size()) used[best_g] = 1;
        dets.push_back({sc.pred[q].score, s, q, best_g < sc.gt.size()});
      }
    }
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.scene != b.scene) return a.scene < b.scene;
      return a.index < b.index;
    });
    std::vector<bool> ranked;
    for (const Detection& d : dets) ranked.push_back(d.tp);
    total += interpolated_ap(ranked, count);
  }
  return gt_count_.empty() ? 0.0 : 100.0 * total / static_cast<double>(gt_count_.size());
}

ApSummary ApAccumulator::summary() const {
  ApSummary s;
  double total = 0.0;
  for (double t : map_thresholds()) total += ap(t);
  s.map = total / static_cast<double>(map_thresholds().size());
  s.ap50 = ap(0.5);
  s.ap25 = ap(0.25);
  return s;
}

// ---- referring / interactive -------------------------------------------------------------

ReferringSummary referring_metrics(const std::vector<double>& ious) {
  ReferringSummary s;
  if (ious.empty()) return s;
  const double n = static_cast<double>(ious.size());
  for (double iou : ious) {
    s.miou += iou;
    s.acc25 += iou >= 0.25 ? 1.0 : 0.0;
    s.acc50 += iou >= 0.5 ? 1.0 : 0.0;
  }
  s.miou = 100.0 * s.miou / n;
  s.acc25 = 100.0 * s.acc25 / n;
  s.acc50 = 100.0 * s.acc50 / n;
  return s;
}

ReferringSummary referring_metrics(const std::vector<PointMask>& pred,
                                   const std::vector<PointMask>& gt) {
  if (pred.size() != gt.size()) throw DimensionError("referring_metrics: one prediction per expression");
  std::vector<double> ious;
  for (std::size_t i = 0; i < pred.size(); ++i) ious.push_back(mask_iou(pred[i], gt[i]));
  return referring_metrics(ious);
}

void InteractiveAccumulator::add(const PointMask& pred, double score, const PointMask& gt) {
  ap_.add({ScoredMask{pred, 0, score}}, {Segment{gt, 0}});
  ious_.push_back(mask_iou(pred, gt));
}

InteractiveSummary InteractiveAccumulator::summary() const {
  InteractiveSummary s;
  s.ap = ap_.summary();
  if (!ious_.empty()) {
    s.miou = 100.0 * std::accumulate(ious_.begin(), ious_.end(), 0.0) / static_cast<double>(ious_.size());
  }
  return s;
}

InteractiveSummary interactive_metrics(const std::vector<PointMask>& pred,
                                       const std::vector<double>& scores,
                                       const std::vector<PointMask>& gt) {
  if (pred.size() != gt.size() || scores.size() != gt.size()) {
    throw DimensionError("interactive_metrics: one prediction and score per click");
  }
  InteractiveAccumulator acc;
  for (std::size_t i = 0; i < pred.size(); ++i) acc.add(pred[i], scores[i], gt[i]);
  return acc.summary();
}

}  // namespace uniseg
