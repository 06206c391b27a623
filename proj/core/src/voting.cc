#include "slv/voting.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "slv/error.h"

namespace slv {
namespace {

void check_accumulate_args(std::span<const std::size_t> candidates,
                           std::span<const Box> boxes, std::span<const double> scores,
                           int height, int width) {
  if (height <= 0 || width <= 0) {
    throw InputError("accumulate: image size must be positive");
  }
  if (boxes.size() != scores.size()) {
    throw InputError("accumulate: " + std::to_string(boxes.size()) + " boxes but " +
                     std::to_string(scores.size()) + " scores");
  }
  for (std::size_t r : candidates) {
    if (r >= boxes.size()) {
      throw InputError("accumulate: candidate index " + std::to_string(r) +
                       " out of range");
    }
    const Box& b = boxes[r];
    if (!b.valid() || !b.inside(height, width)) {
      throw InputError("accumulate: proposal " + std::to_string(r) +
                       " is not a valid box inside the image; clip it first");
    }
  }
}

}  // namespace

LikelihoodMap::LikelihoodMap(int height, int width, std::size_t class_id)
    : height_(height), width_(width), class_id_(class_id) {
  if (height < 0 || width < 0) throw InputError("LikelihoodMap: negative size");
  values_.assign(static_cast<std::size_t>(height) * width, 0.0);
}

double LikelihoodMap::max_value() const {
  if (values_.empty()) return 0.0;
  return *std::max_element(values_.begin(), values_.end());
}

double VoteConfig::binarize_threshold(std::size_t class_id) const {
  const auto it = t_b_per_class.find(class_id);
  return it == t_b_per_class.end() ? t_b_default : it->second;
}

void VoteConfig::validate() const {
  if (!(t_score >= 0.0 && t_score < 1.0)) {
    throw ConfigError("vote config: t_score must lie in [0,1)");
  }
  auto check_tb = [](double t, const std::string& what) {
    if (!(t > 0.0 && t < 1.0)) {
      throw ConfigError("vote config: " + what + " must lie in (0,1)");
    }
  };
  check_tb(t_b_default, "t_b_default");
  for (const auto& [c, t] : t_b_per_class) check_tb(t, "t_b for class " + std::to_string(c));
}

const std::vector<std::string>& voc_class_names() {
  static const std::vector<std::string> names = {
      "aeroplane", "bicycle", "bird",  "boat",      "bottle", "bus",         "car",
      "cat",       "chair",   "cow",   "diningtable", "dog",  "horse",       "motorbike",
      "person",    "pottedplant", "sheep", "sofa",  "train",  "tvmonitor"};
  return names;
}

VoteConfig VoteConfig::voc2007() {
  VoteConfig cfg;
  cfg.t_score = 0.001;
  cfg.t_b_default = 0.5;
  const auto& names = voc_class_names();
  const auto person = static_cast<std::size_t>(
      std::find(names.begin(), names.end(), "person") - names.begin());
  cfg.t_b_per_class[person] = 0.2;
  return cfg;
}

bool Supervision::empty() const { return num_boxes() == 0; }

std::size_t Supervision::num_boxes() const {
  std::size_t n = 0;
  for (const auto& cb : classes) n += cb.boxes.size();
  return n;
}

const ClassBoxes* Supervision::find(std::size_t class_id) const {
  for (const auto& cb : classes) {
    if (cb.class_id == class_id) return &cb;
  }
  return nullptr;
}

std::vector<std::size_t> select_candidates(const ScoreMatrix& phi_bar,
                                           std::span<const Box> boxes,
                                           std::size_t class_id, double t_score) {
  if (boxes.size() != phi_bar.cols()) {
    throw InputError("select_candidates: " + std::to_string(boxes.size()) +
                     " boxes for " + std::to_string(phi_bar.cols()) + " score columns");
  }
  if (class_id >= phi_bar.rows()) {
    throw InputError("select_candidates: class " + std::to_string(class_id) +
                     " out of range");
  }
  std::vector<std::size_t> out;
  const auto row = phi_bar.row(class_id);
  for (std::size_t r = 0; r < row.size(); ++r) {
    if (row[r] > t_score) out.push_back(r);
  }
  return out;
}

LikelihoodMap accumulate_fast(std::span<const std::size_t> candidates,
                              std::span<const Box> boxes, std::span<const double> scores,
                              int height, int width, std::size_t class_id) {
  check_accumulate_args(candidates, boxes, scores, height, width);

  const std::size_t stride = static_cast<std::size_t>(width) + 1;
  std::vector<double> diff(stride * (static_cast<std::size_t>(height) + 1), 0.0);
  for (std::size_t r : candidates) {
    const Box& b = boxes[r];
    const double s = scores[r];
    diff[static_cast<std::size_t>(b.y0) * stride + b.x0] += s;
    diff[static_cast<std::size_t>(b.y0) * stride + b.x1] -= s;
    diff[static_cast<std::size_t>(b.y1) * stride + b.x0] -= s;
    diff[static_cast<std::size_t>(b.y1) * stride + b.x1] += s;
  }

  LikelihoodMap map(height, width, class_id);
  auto out = map.values();
  // Row-wise prefix sums written straight into the output, then column-wise.
  for (int i = 0; i < height; ++i) {
    const double* src = diff.data() + static_cast<std::size_t>(i) * stride;
    double* dst = out.data() + static_cast<std::size_t>(i) * width;
    double run = 0.0;
    for (int j = 0; j < width; ++j) {
      run += src[j];
      dst[j] = run;
    }
  }
  for (int i = 1; i < height; ++i) {
    const double* prev = out.data() + static_cast<std::size_t>(i - 1) * width;
    double* cur = out.data() + static_cast<std::size_t>(i) * width;
    for (int j = 0; j < width; ++j) cur[j] += prev[j];
  }
  return map;
}

LikelihoodMap accumulate_naive(std::span<const std::size_t> candidates,
                               std::span<const Box> boxes, std::span<const double> scores,
                               int height, int width, std::size_t class_id) {
  check_accumulate_args(candidates, boxes, scores, height, width);
  LikelihoodMap map(height, width, class_id);
  for (std::size_t r : candidates) {
    const Box& b = boxes[r];
    for (int i = b.y0; i < b.y1; ++i) {
      for (int j = b.x0; j < b.x1; ++j) map.at(i, j) += scores[r];
    }
  }
  return map;
}

LikelihoodMap normalize(const LikelihoodMap& map) {
  LikelihoodMap out = map;
  out.normalized_ = true;
  const double mx = map.max_value();
  if (!(mx > 0.0)) {
    out.empty_ = true;
    return out;
  }
  for (double& v : out.values_) v /= mx;
  return out;
}

BinaryGrid binarize(const LikelihoodMap& map, double t_b) {
  if (!map.normalized()) {
    throw InputError("binarize: likelihood map has not been normalized");
  }
  BinaryGrid grid(map.height(), map.width());
  for (int i = 0; i < map.height(); ++i) {
    for (int j = 0; j < map.width(); ++j) grid.set(i, j, map.at(i, j) > t_b);
  }
  return grid;
}

std::vector<Box> vote_boxes(const BinaryGrid& grid) {
  std::vector<Box> out;
  for (const auto& comp : connected_components(grid)) {
    out.push_back(min_bounding_rect(comp));
  }
  return out;
}

ClassVote vote_class(const ScoreMatrix& phi_bar, std::span<const Box> boxes,
                     std::size_t class_id, int height, int width,
                     const VoteConfig& config) {
  ClassVote vote;
  vote.class_id = class_id;
  vote.candidates = select_candidates(phi_bar, boxes, class_id, config.t_score);
  vote.map = normalize(accumulate_fast(vote.candidates, boxes, phi_bar.row(class_id),
                                       height, width, class_id));
  if (!vote.map.empty()) {
    vote.boxes = vote_boxes(binarize(vote.map, config.binarize_threshold(class_id)));
  }
  return vote;
}

Supervision generate_supervision(const ScoreMatrix& phi_bar, std::span<const Box> boxes,
                                 const ImageLabel& y, int height, int width,
                                 const VoteConfig& config) {
  config.validate();
  const auto positives = y.positives();
  if (positives.empty()) {
    throw InputError("generate_supervision: image label has no positive class");
  }
  if (phi_bar.rows() < y.num_classes()) {
    throw InputError("generate_supervision: score matrix has fewer rows than classes");
  }
  Supervision sup;
  for (std::size_t c : positives) {
    ClassVote vote = vote_class(phi_bar, boxes, c, height, width, config);
    if (!vote.boxes.empty()) sup.classes.push_back({c, std::move(vote.boxes)});
  }
  return sup;
}

void write_pgm(std::ostream& os, const LikelihoodMap& map) {
  os << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
  std::string row(static_cast<std::size_t>(map.width()), '\0');
  for (int i = 0; i < map.height(); ++i) {
    for (int j = 0; j < map.width(); ++j) {
      const double v = std::clamp(map.at(i, j), 0.0, 1.0);
      row[static_cast<std::size_t>(j)] =
          static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v)));
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace slv
