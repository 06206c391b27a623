#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "slv/eval.h"
#include "slv/geometry.h"
#include "slv/mil.h"
#include "slv/score_matrix.h"
#include "slv/voting.h"

// Line-delimited JSON files. Every file starts with one header object
// naming its format and version; each following non-empty line is one
// record. Field layouts are documented in README.md.
namespace slv {

inline constexpr int kFormatVersion = 1;

struct DatasetRecord {
  std::string image_id;
  int height = 0;
  int width = 0;
  ImageLabel labels;
  std::vector<Box> proposals;
  // R rows of feature_dim values each; empty when the dataset has none.
  std::vector<std::vector<double>> features;
  // Averaged proposal scores (C x R) when supplied in-file.
  std::optional<ScoreMatrix> scores;
  // Ground truth boxes per class; only meaningful when has_ground_truth.
  std::vector<ClassBoxes> ground_truth;
  bool has_ground_truth = false;
};

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<std::string> class_names;
  std::vector<DatasetRecord> records;

  GroundTruthSet ground_truth() const;
  // Name for class c, falling back to "class<c>".
  std::string class_name(std::size_t c) const;
};

struct LoadedDataset {
  Dataset dataset;
  std::vector<std::string> warnings;  // e.g. proposals clipped to the image
};

// Throws ParseError naming the line, record and field on malformed input.
LoadedDataset parse_dataset(std::istream& in, const std::string& source = "<stream>");
LoadedDataset load_dataset(const std::string& path);
void write_dataset(std::ostream& out, const Dataset& dataset);
void save_dataset(const std::string& path, const Dataset& dataset);

struct PseudoLabelRecord {
  std::string image_id;
  Supervision supervision;
  std::optional<std::string> error;  // set when the record could not be voted
};

void write_pseudo_labels(std::ostream& out, std::size_t num_classes,
                         const std::vector<PseudoLabelRecord>& records);
std::vector<PseudoLabelRecord> parse_pseudo_labels(std::istream& in,
                                                   const std::string& source = "<stream>");

void write_detections(std::ostream& out, const std::vector<Detection>& dets);
std::vector<Detection> parse_detections(std::istream& in,
                                        const std::string& source = "<stream>");
std::vector<Detection> load_detections(const std::string& path);

}  // namespace slv
