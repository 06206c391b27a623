#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "slv/dataset.h"
#include "slv/eval.h"
#include "slv/synthetic.h"
#include "slv/trainer.h"
#include "slv/voting.h"

namespace slv {

// Runs fn(0..n-1) on a small worker pool. fn must only write to slots it
// owns; output order is the caller's index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Settings shared by the CLI subcommands, loadable from a JSON file:
//   {"synthetic": {...}, "train": {...}, "vote": {...}, "nms_iou": 0.3}
// Keys mirror the struct field names; absent keys keep their defaults. The
// CLI also hands `vote` to training, so one section governs every vote.
struct PipelineConfig {
  SyntheticSceneConfig synthetic;
  TrainConfig train;
  VoteConfig vote = VoteConfig::voc2007();
  double nms_iou = 0.3;
};

PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);

// Averaged proposal scores (C rows) for a record: from the model when one
// is given, otherwise the record's in-file scores. Throws InputError when
// neither is available.
ScoreMatrix proposal_scores(const DatasetRecord& record, const ToyScorer* model);

struct VoteRun {
  std::vector<PseudoLabelRecord> records;
  std::vector<std::string> heatmaps;  // paths written, in record order
  std::size_t failed = 0;
};

// Votes pseudo ground truth for every record, writes
// <out_dir>/pseudo_labels.jsonl and, when emit_heatmaps is set,
// <out_dir>/heatmaps/<image>_<class>.pgm for every positive class. A record
// that cannot be voted gets an "error" entry and the run continues.
VoteRun run_vote(const Dataset& dataset, const ToyScorer* model, const VoteConfig& config,
                 const std::string& out_dir, bool emit_heatmaps);

// Pseudo-labels produced by one labeling scheme for one image.
using SchemeLabels = std::vector<ClassBoxes>;

// Highest scoring proposal per positive class.
SchemeLabels label_conventional(const ScoreMatrix& scores, const DatasetRecord& record);
// Center of every greedy IoU cluster.
SchemeLabels label_clustering(const ScoreMatrix& scores, const DatasetRecord& record,
                              double cluster_iou = kDefaultClusterIou,
                              double center_floor = kDefaultCenterFloor);
// Spatial likelihood vote.
SchemeLabels label_slv(const ScoreMatrix& scores, const DatasetRecord& record,
                       const VoteConfig& config);

struct SchemeResult {
  std::string scheme;
  // class id -> (sum of IoUs, labeled box count)
  std::map<std::size_t, std::pair<double, std::size_t>> per_class;
  double iou_sum = 0.0;
  std::size_t count = 0;

  double mean_iou() const { return count == 0 ? 0.0 : iou_sum / static_cast<double>(count); }
  double class_mean_iou(std::size_t c) const;
};

// Mean IoU of each scheme's labeled boxes against the best matching ground
// truth box of the same class. Results sorted by scheme name.
std::vector<SchemeResult> compare_schemes(const Dataset& dataset, const ToyScorer* model,
                                          const VoteConfig& config,
                                          double cluster_iou = kDefaultClusterIou);

// scheme<TAB>class<TAB>mean_iou<TAB>boxes, one row per (scheme, class) and a
// final "all" row per scheme.
std::string format_scheme_report(const std::vector<SchemeResult>& results,
                                 const Dataset& dataset);

// Validates ids against the dataset (unknown image or class -> InputError)
// and evaluates against its ground truth.
EvalReport evaluate(const std::vector<Detection>& dets, const Dataset& dataset,
                    ApMode mode = ApMode::kAllPoints);

}  // namespace slv
