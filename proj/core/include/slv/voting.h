#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "slv/geometry.h"
#include "slv/mil.h"
#include "slv/score_matrix.h"

namespace slv {

// Per-pixel score accumulator for one class of one image.
class LikelihoodMap {
 public:
  LikelihoodMap() = default;
  LikelihoodMap(int height, int width, std::size_t class_id = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t class_id() const { return class_id_; }

  double at(int row, int col) const {
    return values_[static_cast<std::size_t>(row) * width_ + col];
  }
  double& at(int row, int col) {
    return values_[static_cast<std::size_t>(row) * width_ + col];
  }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double max_value() const;

  bool normalized() const { return normalized_; }
  // Set by normalize() when the map held no mass.
  bool empty() const { return empty_; }

 private:
  friend LikelihoodMap normalize(const LikelihoodMap& map);

  int height_ = 0;
  int width_ = 0;
  std::size_t class_id_ = 0;
  bool normalized_ = false;
  bool empty_ = false;
  std::vector<double> values_;
};

struct VoteConfig {
  double t_score = 0.001;
  double t_b_default = 0.5;
  std::map<std::size_t, double> t_b_per_class;

  double binarize_threshold(std::size_t class_id) const;
  // Throws ConfigError unless every threshold lies in (0,1). t_score = 0 is
  // accepted so that callers can disable the candidate filter.
  void validate() const;

  // T_score = 0.001, T_b = 0.5, person (VOC index 14) -> 0.2.
  static VoteConfig voc2007();
};

// The 20 PASCAL VOC class names in canonical index order.
const std::vector<std::string>& voc_class_names();

struct ClassBoxes {
  std::size_t class_id = 0;
  std::vector<Box> boxes;
  friend bool operator==(const ClassBoxes&, const ClassBoxes&) = default;
};

// Voted pseudo ground truth for one image. Only classes that produced at
// least one box are listed, in ascending class order.
struct Supervision {
  std::vector<ClassBoxes> classes;

  bool empty() const;
  std::size_t num_boxes() const;
  const ClassBoxes* find(std::size_t class_id) const;

  friend bool operator==(const Supervision&, const Supervision&) = default;
};

// Indices r with phi_bar(class_id, r) > t_score.
std::vector<std::size_t> select_candidates(const ScoreMatrix& phi_bar,
                                           std::span<const Box> boxes,
                                           std::size_t class_id, double t_score);

// Sums scores[r] over every candidate box covering each pixel. The fast path
// uses a 2-D difference array and two prefix-sum passes; the naive path
// loops over each box's pixels and serves as its oracle. `scores` is indexed
// by proposal, not by candidate position.
LikelihoodMap accumulate_fast(std::span<const std::size_t> candidates,
                              std::span<const Box> boxes,
                              std::span<const double> scores, int height, int width,
                              std::size_t class_id = 0);
LikelihoodMap accumulate_naive(std::span<const std::size_t> candidates,
                               std::span<const Box> boxes,
                               std::span<const double> scores, int height, int width,
                               std::size_t class_id = 0);

// Divides by the max entry. An all-zero map is returned unchanged and
// flagged empty().
LikelihoodMap normalize(const LikelihoodMap& map);

// Cell is set iff the normalized value is strictly greater than t_b.
BinaryGrid binarize(const LikelihoodMap& map, double t_b);

// Minimum bounding rectangles of the 8-connected regions of the grid.
std::vector<Box> vote_boxes(const BinaryGrid& grid);

// Full per-class trace, kept for heatmap export.
struct ClassVote {
  std::size_t class_id = 0;
  std::vector<std::size_t> candidates;
  LikelihoodMap map;  // normalized
  std::vector<Box> boxes;
};

ClassVote vote_class(const ScoreMatrix& phi_bar, std::span<const Box> boxes,
                     std::size_t class_id, int height, int width,
                     const VoteConfig& config);

// Runs the vote for every positive class. phi_bar may carry a trailing
// background row; only the first y.num_classes() rows are read.
Supervision generate_supervision(const ScoreMatrix& phi_bar, std::span<const Box> boxes,
                                 const ImageLabel& y, int height, int width,
                                 const VoteConfig& config);

// Binary PGM (P5): "P5\n<W> <H>\n255\n" followed by H*W bytes, row-major,
// byte = round(255 * value) with values clamped to [0,1].
void write_pgm(std::ostream& os, const LikelihoodMap& map);

}  // namespace slv
