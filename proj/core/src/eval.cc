#include "slv/eval.h"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

#include "slv/error.h"

namespace slv {
namespace {

std::vector<std::size_t> rank_by_score(std::size_t n,
                                       const auto& score_of) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score_of(a) > score_of(b);
  });
  return order;
}

const std::vector<Box>* gt_boxes(const GroundTruthSet& gt, const std::string& image,
                                 std::size_t class_id) {
  const auto img = gt.find(image);
  if (img == gt.end()) return nullptr;
  const auto cls = img->second.find(class_id);
  if (cls == img->second.end()) return nullptr;
  return &cls->second;
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<bool> match_detections(std::span<const Detection> dets,
                                   const GroundTruthSet& gt, double iou_threshold) {
  std::vector<bool> tp(dets.size(), false);
  std::map<std::pair<std::string, std::size_t>, std::vector<bool>> claimed;
  const auto order =
      rank_by_score(dets.size(), [&](std::size_t i) { return dets[i].score; });
  for (std::size_t i : order) {
    const Detection& d = dets[i];
    const auto* boxes = gt_boxes(gt, d.image_id, d.class_id);
    if (boxes == nullptr || boxes->empty()) continue;
    auto& used = claimed[{d.image_id, d.class_id}];
    if (used.empty()) used.assign(boxes->size(), false);

    double best = -1.0;
    std::size_t best_j = boxes->size();
    for (std::size_t j = 0; j < boxes->size(); ++j) {
      if (used[j]) continue;
      const double v = iou(d.box, (*boxes)[j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < boxes->size() && best > iou_threshold) {
      used[best_j] = true;
      tp[i] = true;
    }
  }
  return tp;
}

double average_precision(std::span<const ScoredFlag> flags, std::size_t n_gt,
                         ApMode mode) {
  if (n_gt == 0 || flags.empty()) return 0.0;
  const auto order =
      rank_by_score(flags.size(), [&](std::size_t i) { return flags[i].score; });

  std::vector<double> recall(order.size()), precision(order.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (flags[order[k]].true_positive) ++tp;
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }

  if (mode == ApMode::kElevenPoint) {
    double ap = 0.0;
    for (int t = 0; t <= 10; ++t) {
      const double level = t / 10.0;
      double p = 0.0;
      for (std::size_t k = 0; k < order.size(); ++k) {
        if (recall[k] >= level) p = std::max(p, precision[k]);
      }
      ap += p / 11.0;
    }
    return ap;
  }

  // Monotone envelope from the right, then integrate over recall steps.
  for (std::size_t k = order.size() - 1; k-- > 0;) {
    precision[k] = std::max(precision[k], precision[k + 1]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

double mean_ap(const std::map<std::size_t, double>& per_class_ap) {
  if (per_class_ap.empty()) throw InputError("mean_ap: no classes evaluated");
  double sum = 0.0;
  for (const auto& [c, ap] : per_class_ap) sum += ap;
  return sum / static_cast<double>(per_class_ap.size());
}

TopDetections top_detections(std::span<const Detection> dets) {
  TopDetections top;
  for (const Detection& d : dets) {
    const auto key = std::make_pair(d.image_id, d.class_id);
    const auto it = top.find(key);
    // Strict comparison keeps the earliest detection on ties.
    if (it == top.end() || d.score > it->second.score) top[key] = d;
  }
  return top;
}

std::map<std::size_t, double> corloc(const TopDetections& top, const GroundTruthSet& gt,
                                     double iou_threshold) {
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> counts;  // hits, images
  for (const auto& [image, per_class] : gt) {
    for (const auto& [c, boxes] : per_class) {
      if (boxes.empty()) continue;
      auto& [hits, images] = counts[c];
      ++images;
      const auto it = top.find({image, c});
      if (it == top.end()) continue;
      for (const Box& g : boxes) {
        if (iou(it->second.box, g) > iou_threshold) {
          ++hits;
          break;
        }
      }
    }
  }
  std::map<std::size_t, double> out;
  for (const auto& [c, hc] : counts) {
    out[c] = static_cast<double>(hc.first) / static_cast<double>(hc.second);
  }
  return out;
}

EvalReport evaluate_detections(std::span<const Detection> dets, const GroundTruthSet& gt,
                               std::span<const std::string> class_names, ApMode mode) {
  std::set<std::size_t> classes;
  std::map<std::size_t, std::size_t> n_gt;
  for (const auto& [image, per_class] : gt) {
    for (const auto& [c, boxes] : per_class) {
      if (boxes.empty()) continue;
      classes.insert(c);
      n_gt[c] += boxes.size();
    }
  }
  for (const auto& d : dets) classes.insert(d.class_id);

  const auto tp = match_detections(dets, gt);
  const auto loc = corloc(top_detections(dets), gt);

  EvalReport report;
  std::map<std::size_t, double> aps;
  for (std::size_t c : classes) {
    std::vector<ScoredFlag> flags;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (dets[i].class_id == c) flags.push_back({dets[i].score, tp[i]});
    }
    ClassMetrics m;
    m.class_id = c;
    m.name = c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    m.ap = average_precision(flags, n_gt[c], mode);
    if (const auto it = loc.find(c); it != loc.end()) m.corloc = it->second;
    aps[c] = m.ap;
    report.classes.push_back(std::move(m));
  }
  report.map = aps.empty() ? 0.0 : mean_ap(aps);
  return report;
}

std::string format_report(const EvalReport& report) {
  std::string out = "# slv-eval v1\nclass\tap\tcorloc\n";
  for (const auto& m : report.classes) {
    out += m.name + "\t" + format_fixed(m.ap) + "\t" +
           (m.corloc ? format_fixed(*m.corloc) : std::string("-")) + "\n";
  }
  out += "mAP\t" + format_fixed(report.map) + "\n";
  return out;
}

}  // namespace slv
