#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "slv/geometry.h"
#include "slv/score_matrix.h"

// Multiple-instance scoring: the two-stream proposal scorer, the image-level
// binary cross-entropy, and the cluster-weighted refinement loss together
// with their analytic gradients.
namespace slv {

// Log arguments are clamped into [kProbClamp, 1 - kProbClamp]. Inside the
// clamp the gradient is analytic; where the clamp is active it is zero.
inline constexpr double kProbClamp = 1e-8;
inline constexpr double kDefaultClusterIou = 0.5;
inline constexpr double kDefaultCenterFloor = 0.01;
inline constexpr int kDefaultRefinementBranches = 3;

// Binary per-class image annotation.
class ImageLabel {
 public:
  ImageLabel() = default;
  explicit ImageLabel(std::vector<int> y);

  std::size_t num_classes() const { return y_.size(); }
  bool positive(std::size_t c) const { return y_[c] != 0; }
  int operator[](std::size_t c) const { return y_[c]; }
  std::vector<std::size_t> positives() const;
  bool any_positive() const { return !positives().empty(); }
  const std::vector<int>& values() const { return y_; }

  friend bool operator==(const ImageLabel&, const ImageLabel&) = default;

 private:
  std::vector<int> y_;
};

struct VectorLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

struct MatrixLoss {
  double loss = 0.0;
  ScoreMatrix grad;
};

ScoreMatrix softmax_over_classes(const ScoreMatrix& logits);
ScoreMatrix softmax_over_proposals(const ScoreMatrix& logits);

// Backward passes: given the softmax output and dL/d(output), return
// dL/d(logits).
ScoreMatrix softmax_over_classes_backward(const ScoreMatrix& probs,
                                          const ScoreMatrix& grad_probs);
ScoreMatrix softmax_over_proposals_backward(const ScoreMatrix& probs,
                                            const ScoreMatrix& grad_probs);

// Elementwise product of the class-normalized and proposal-normalized streams.
ScoreMatrix wsddn_scores(const ScoreMatrix& sigma_cls,
                         const ScoreMatrix& sigma_det);

// Per-class sum over proposals.
std::vector<double> image_scores(const ScoreMatrix& phi0);

// Image-level multi-label binary cross-entropy and its gradient w.r.t. phi.
VectorLoss mil_loss(std::span<const double> phi, const ImageLabel& y);

struct ProposalCluster {
  std::vector<std::size_t> members;
  std::size_t label = 0;    // foreground class index
  double confidence = 0.0;  // score of the cluster center
  std::size_t center = 0;

  std::size_t size() const { return members.size(); }
};

// Partition of the R proposals into foreground clusters plus one background
// cluster. background_weights[i] is the loss weight of background[i].
struct ClusterSet {
  std::size_t num_proposals = 0;
  std::vector<ProposalCluster> foreground;
  std::vector<std::size_t> background;
  std::vector<double> background_weights;

  bool is_partition() const;
};

// Greedy IoU clustering. For every positive class in index order the highest
// scoring unassigned proposal seeds a cluster and absorbs every unassigned
// proposal with IoU >= iou_threshold to it; further seeds must score at least
// center_floor. Unassigned leftovers form the background, weighted by
// 1 - (max foreground score), clamped to [0,1].
//
// This is a simplified stand-in for the graph-based cluster generation of
// proposal cluster learning. `scores` may carry a trailing background row;
// only the first y.num_classes() rows are read.
ClusterSet build_clusters(const ScoreMatrix& scores, std::span<const Box> boxes,
                          const ImageLabel& y,
                          double iou_threshold = kDefaultClusterIou,
                          double center_floor = kDefaultCenterFloor);

// Weighted cluster cross-entropy over a (C+1)-row class-normalized matrix
// whose last row is background. Gradient is w.r.t. phi_k.
MatrixLoss refinement_loss(const ScoreMatrix& phi_k, const ClusterSet& clusters);

// Entrywise mean of the refined branch outputs.
ScoreMatrix average_refined_scores(std::span<const ScoreMatrix> branches);
ScoreMatrix average_refined_scores(const ScoreMatrix& phi1,
                                   const ScoreMatrix& phi2,
                                   const ScoreMatrix& phi3);

}  // namespace slv
