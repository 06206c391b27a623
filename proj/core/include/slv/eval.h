#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slv/geometry.h"

namespace slv {

inline constexpr double kPascalIou = 0.5;

struct Detection {
  std::string image_id;
  std::size_t class_id = 0;
  Box box;
  double score = 0.0;
};

// image id -> class id -> boxes.
using GroundTruthSet = std::map<std::string, std::map<std::size_t, std::vector<Box>>>;

// Greedy matching in descending score order (ties keep input order). A
// detection is a true positive when its best still-unmatched ground truth of
// the same image and class has IoU strictly above iou_threshold. Result is
// indexed like `dets`.
std::vector<bool> match_detections(std::span<const Detection> dets,
                                   const GroundTruthSet& gt,
                                   double iou_threshold = kPascalIou);

struct ScoredFlag {
  double score = 0.0;
  bool true_positive = false;
};

enum class ApMode {
  kAllPoints,    // area under the monotone precision envelope
  kElevenPoint,  // mean of max precision at recall 0, 0.1, ..., 1
};

// Detections are ranked internally by descending score (stable). Returns 0
// when n_gt is 0.
double average_precision(std::span<const ScoredFlag> flags, std::size_t n_gt,
                         ApMode mode = ApMode::kAllPoints);

// Throws InputError when empty.
double mean_ap(const std::map<std::size_t, double>& per_class_ap);

// (image id, class id) -> that pair's highest scoring detection.
using TopDetections = std::map<std::pair<std::string, std::size_t>, Detection>;

TopDetections top_detections(std::span<const Detection> dets);

// For every class present in at least one image: the fraction of those
// images whose top detection of that class overlaps some ground truth box of
// the class with IoU > 0.5. Classes absent everywhere are omitted.
std::map<std::size_t, double> corloc(const TopDetections& top, const GroundTruthSet& gt,
                                     double iou_threshold = kPascalIou);

struct ClassMetrics {
  std::size_t class_id = 0;
  std::string name;
  double ap = 0.0;
  std::optional<double> corloc;
};

struct EvalReport {
  std::vector<ClassMetrics> classes;
  double map = 0.0;
};

// Evaluates every class that has ground truth or detections. class_names
// maps ids to labels; ids without a name print as "class<id>".
EvalReport evaluate_detections(std::span<const Detection> dets, const GroundTruthSet& gt,
                               std::span<const std::string> class_names,
                               ApMode mode = ApMode::kAllPoints);

// Fixed text layout:
//   # slv-eval v1
//   class<TAB>ap<TAB>corloc
//   <name><TAB><ap %.6f><TAB><corloc %.6f or ->
//   ...
//   mAP<TAB><%.6f>
std::string format_report(const EvalReport& report);

}  // namespace slv
