#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "slv/dataset.h"
#include "slv/eval.h"
#include "slv/mil.h"
#include "slv/score_matrix.h"
#include "slv/supervision.h"
#include "slv/voting.h"

namespace slv {

// Dense map from D-dim proposal features to `outputs` logits per proposal.
class LinearHead {
 public:
  LinearHead() = default;
  LinearHead(std::size_t outputs, std::size_t inputs);

  std::size_t outputs() const { return outputs_; }
  std::size_t inputs() const { return inputs_; }
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }

  // outputs x R matrix of logits.
  ScoreMatrix forward(const std::vector<std::vector<double>>& features) const;
  // grad_weights += d(logits)^T-contracted features.
  void accumulate_grad(const ScoreMatrix& grad_logits,
                       const std::vector<std::vector<double>>& features,
                       std::vector<double>& grad_weights) const;

  friend bool operator==(const LinearHead&, const LinearHead&) = default;

 private:
  std::size_t outputs_ = 0;
  std::size_t inputs_ = 0;
  std::vector<double> weights_;
};

// Stand-in for the fully connected heads of the detector: two MIL streams,
// K refinement classifiers, and the SLV re-classification / re-localization
// branches, all linear in the proposal features.
struct ToyScorer {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  LinearHead cls;
  LinearHead det;
  std::vector<LinearHead> refine;  // (C+1) outputs each
  LinearHead slv_cls;              // C+1 outputs
  LinearHead slv_loc;              // 4 outputs
  std::int64_t iteration = 0;

  static ToyScorer initialize(std::size_t num_classes, std::size_t feature_dim,
                              int refinement_branches, double init_scale,
                              std::uint64_t seed);

  friend bool operator==(const ToyScorer&, const ToyScorer&) = default;
};

// Forward outputs for one image.
struct ScorerOutputs {
  ScoreMatrix sigma_cls;
  ScoreMatrix sigma_det;
  ScoreMatrix phi0;
  std::vector<ScoreMatrix> refined;  // phi^1..phi^K, (C+1) rows
  ScoreMatrix phi_bar;               // mean of refined
  ScoreMatrix phi_s;                 // (C+1) rows
  std::vector<Offsets> t_s;
};

ScorerOutputs run_scorer(const ToyScorer& model, const DatasetRecord& record);

struct TrainConfig {
  std::int64_t iterations = 200;
  double learning_rate = 0.5;
  // Full-batch descent makes one iteration one epoch.
  std::int64_t ramp_epochs = 3;
  RampShape ramp_shape = RampShape::kLinear;
  // When false the SLV branch is removed entirely (MIL + refinement only).
  bool slv_branch = true;
  VoteConfig vote;
  double cluster_iou = kDefaultClusterIou;
  double center_floor = kDefaultCenterFloor;
  double fg_iou = kDefaultFgIou;
  double bg_iou_lo = kDefaultBgIouLo;
  double bg_iou_hi = kDefaultBgIouHi;
  int refinement_branches = kDefaultRefinementBranches;
  double init_scale = 0.01;
  std::uint64_t seed = 0;

  LossWeightSchedule schedule() const;
};

// Per-iteration means over images.
struct TraceEntry {
  std::int64_t iteration = 0;
  double l_w = 0.0;
  std::vector<double> l_r;
  double l_s = 0.0;
  double w_s = 0.0;
  double total = 0.0;
  std::size_t supervision_boxes = 0;  // summed over images
};

struct TrainResult {
  ToyScorer model;
  std::vector<TraceEntry> trace;
  // Supervision voted for each record at the last iteration.
  std::vector<Supervision> last_supervision;
};

// Throws NumericalError naming the iteration when a loss turns non-finite.
TrainResult train_toy(const Dataset& dataset, const TrainConfig& config);

// Test-time detections: scores are the mean of the refined classifiers and
// the SLV re-classification branch; boxes are proposals shifted by the
// re-localization offsets, then per-class NMS.
std::vector<Detection> detect(const ToyScorer& model, const DatasetRecord& record,
                              double nms_iou = 0.3, double min_score = 1e-4);

std::string model_to_json(const ToyScorer& model);
ToyScorer model_from_json(const std::string& text);
void save_model(const std::string& path, const ToyScorer& model);
ToyScorer load_model(const std::string& path);

// Tab-separated loss trace with a header row.
std::string format_trace(const std::vector<TraceEntry>& trace);

}  // namespace slv
