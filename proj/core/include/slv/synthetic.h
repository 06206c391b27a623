#pragma once

#include <cstddef>
#include <cstdint>

#include "slv/dataset.h"

namespace slv {

// Scenes of elongated objects whose score model can prefer a small
// "discriminative part" over the full extent, so that pseudo-labeling
// schemes can be compared against known ground truth.
struct SyntheticSceneConfig {
  std::size_t images = 20;
  int height = 128;
  int width = 128;
  int min_objects = 1;
  int max_objects = 2;
  std::size_t num_classes = 3;
  int proposals_per_object = 32;
  int background_proposals = 16;
  // Fraction of each object's proposals drawn around its part sub-box.
  double part_proposal_fraction = 0.2;
  // Std-dev of proposal corner noise, relative to the object's size.
  double jitter = 0.08;
  // Probability that an object's part proposals outscore its full-extent
  // proposals in the averaged score model.
  double bias = 0.5;
  std::size_t noise_features = 2;

  void validate() const;  // throws ConfigError
};

// Feature layout: [1, full-box overlap per class, part overlap per class,
// cx/W, cy/H, w/W, h/H, noise...].
std::size_t synthetic_feature_dim(const SyntheticSceneConfig& config);

// Deterministic in (config, seed). Records carry features, averaged scores
// and ground truth.
Dataset generate_synthetic(const SyntheticSceneConfig& config, std::uint64_t seed);

}  // namespace slv
