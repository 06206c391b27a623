#include "slv/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "rng.h"
#include "slv/error.h"

namespace slv {
namespace {

using internal::Rng;

struct SceneObject {
  std::size_t class_id = 0;
  Box full;
  Box part;
  bool part_dominated = false;
};

enum class Origin { kFull, kPart, kBackground };

struct Proposal {
  Box box;
  Origin origin = Origin::kBackground;
  std::size_t object = 0;
};

Box jitter_box(Rng& rng, const Box& b, double jitter, int height, int width) {
  const double sx = jitter * b.width();
  const double sy = jitter * b.height();
  for (int attempt = 0; attempt < 16; ++attempt) {
    Box j{static_cast<int>(std::lround(b.x0 + sx * rng.normal())),
          static_cast<int>(std::lround(b.y0 + sy * rng.normal())),
          static_cast<int>(std::lround(b.x1 + sx * rng.normal())),
          static_cast<int>(std::lround(b.y1 + sy * rng.normal()))};
    j.x0 = std::max(j.x0, 0);
    j.y0 = std::max(j.y0, 0);
    j.x1 = std::min(j.x1, width);
    j.y1 = std::min(j.y1, height);
    if (j.width() >= 2 && j.height() >= 2) return j;
  }
  return b;
}

constexpr int kObjectGap = 2;

bool place_object(Rng& rng, const SyntheticSceneConfig& cfg,
                  const std::vector<SceneObject>& placed, SceneObject& obj) {
  const double min_side = std::min(cfg.height, cfg.width);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double long_side = rng.uniform(0.45, 0.7) * min_side;
    const double short_side = long_side * rng.uniform(0.3, 0.45);
    const bool horizontal = rng.bernoulli(0.5);
    const int w = std::max(4, static_cast<int>(std::lround(horizontal ? long_side : short_side)));
    const int h = std::max(4, static_cast<int>(std::lround(horizontal ? short_side : long_side)));
    if (w >= cfg.width || h >= cfg.height) continue;
    const int x0 = rng.uniform_int(0, cfg.width - w);
    const int y0 = rng.uniform_int(0, cfg.height - h);
    const Box full{x0, y0, x0 + w, y0 + h};
    // Objects keep a margin so their vote regions cannot touch and merge.
    const Box padded{full.x0 - kObjectGap, full.y0 - kObjectGap, full.x1 + kObjectGap,
                     full.y1 + kObjectGap};
    bool clear = true;
    for (const auto& other : placed) {
      if (iou(other.full, padded) > 0.0) clear = false;
    }
    if (!clear) continue;

    // Part covering 20-40% of the object's area, mostly along the long axis.
    const double area_frac = rng.uniform(0.2, 0.4);
    const double short_frac = rng.uniform(0.7, 1.0);
    const double long_frac = area_frac / short_frac;
    const int pw = std::max(1, static_cast<int>(std::lround(w * (horizontal ? long_frac : short_frac))));
    const int ph = std::max(1, static_cast<int>(std::lround(h * (horizontal ? short_frac : long_frac))));
    const int px0 = x0 + rng.uniform_int(0, w - pw);
    const int py0 = y0 + rng.uniform_int(0, h - ph);
    obj.full = full;
    obj.part = Box{px0, py0, px0 + pw, py0 + ph};
    return true;
  }
  return false;
}

}  // namespace

void SyntheticSceneConfig::validate() const {
  if (height < 16 || width < 16) throw ConfigError("synthetic: image must be at least 16x16");
  if (num_classes == 0) throw ConfigError("synthetic: need at least one class");
  if (min_objects < 1 || max_objects < min_objects) {
    throw ConfigError("synthetic: need 1 <= min_objects <= max_objects");
  }
  if (proposals_per_object < 1 || background_proposals < 0) {
    throw ConfigError("synthetic: proposal counts must be positive");
  }
  if (!(part_proposal_fraction >= 0.0 && part_proposal_fraction <= 1.0)) {
    throw ConfigError("synthetic: part_proposal_fraction must lie in [0,1]");
  }
  if (!(jitter >= 0.0)) throw ConfigError("synthetic: jitter must be non-negative");
  if (!(bias >= 0.0 && bias <= 1.0)) throw ConfigError("synthetic: bias must lie in [0,1]");
}

std::size_t synthetic_feature_dim(const SyntheticSceneConfig& config) {
  return 1 + 2 * config.num_classes + 4 + config.noise_features;
}

Dataset generate_synthetic(const SyntheticSceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Dataset ds;
  ds.num_classes = cfg.num_classes;
  ds.feature_dim = synthetic_feature_dim(cfg);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) ds.class_names.push_back("c" + std::to_string(c));

  for (std::size_t img = 0; img < cfg.images; ++img) {
    DatasetRecord rec;
    char id[32];
    std::snprintf(id, sizeof(id), "syn_%04zu", img);
    rec.image_id = id;
    rec.height = cfg.height;
    rec.width = cfg.width;
    rec.has_ground_truth = true;

    std::vector<SceneObject> objects;
    const int n_objects = rng.uniform_int(cfg.min_objects, cfg.max_objects);
    for (int k = 0; k < n_objects; ++k) {
      SceneObject obj;
      obj.class_id = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(cfg.num_classes) - 1));
      obj.part_dominated = rng.bernoulli(cfg.bias);
      if (place_object(rng, cfg, objects, obj)) objects.push_back(obj);
    }

    std::vector<Proposal> props;
    const int n_part = static_cast<int>(std::lround(cfg.part_proposal_fraction *
                                                    cfg.proposals_per_object));
    for (std::size_t o = 0; o < objects.size(); ++o) {
      for (int k = 0; k < cfg.proposals_per_object; ++k) {
        const bool part = k < n_part;
        const Box& src = part ? objects[o].part : objects[o].full;
        props.push_back({jitter_box(rng, src, cfg.jitter, cfg.height, cfg.width),
                         part ? Origin::kPart : Origin::kFull, o});
      }
    }
    for (int k = 0; k < cfg.background_proposals; ++k) {
      const int w = std::max(2, static_cast<int>(cfg.width * rng.uniform(0.1, 0.4)));
      const int h = std::max(2, static_cast<int>(cfg.height * rng.uniform(0.1, 0.4)));
      const int x0 = rng.uniform_int(0, cfg.width - w);
      const int y0 = rng.uniform_int(0, cfg.height - h);
      props.push_back({Box{x0, y0, x0 + w, y0 + h}, Origin::kBackground, 0});
    }
    for (std::size_t i = props.size(); i > 1; --i) {
      std::swap(props[i - 1], props[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }

    const std::size_t num_props = props.size();
    ScoreMatrix scores(cfg.num_classes, num_props, 0.0, Normalization::kProbability);
    for (std::size_t r = 0; r < num_props; ++r) {
      const Proposal& p = props[r];
      rec.proposals.push_back(p.box);
      for (std::size_t c = 0; c < cfg.num_classes; ++c) scores(c, r) = rng.uniform(0.0, 0.0005);
      if (p.origin == Origin::kBackground) {
        for (std::size_t c = 0; c < cfg.num_classes; ++c) {
          double overlap = 0.0;
          for (const auto& obj : objects) {
            if (obj.class_id == c) overlap = std::max(overlap, iou(p.box, obj.full));
          }
          scores(c, r) += 0.3 * overlap + rng.uniform(0.0, 0.002);
        }
        continue;
      }
      const SceneObject& obj = objects[p.object];
      const bool dominant = (p.origin == Origin::kPart) == obj.part_dominated;
      scores(obj.class_id, r) = dominant ? rng.uniform(0.4, 0.8) : rng.uniform(0.2, 0.4);
    }
    rec.scores = std::move(scores);

    for (std::size_t r = 0; r < num_props; ++r) {
      const Box& b = rec.proposals[r];
      std::vector<double> f;
      f.reserve(ds.feature_dim);
      f.push_back(1.0);
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < cfg.num_classes; ++c) {
          double overlap = 0.0;
          for (const auto& obj : objects) {
            if (obj.class_id == c) overlap = std::max(overlap, iou(b, pass == 0 ? obj.full : obj.part));
          }
          f.push_back(overlap + 0.05 * rng.normal());
        }
      }
      f.push_back((b.x0 + b.x1) / (2.0 * cfg.width));
      f.push_back((b.y0 + b.y1) / (2.0 * cfg.height));
      f.push_back(static_cast<double>(b.width()) / cfg.width);
      f.push_back(static_cast<double>(b.height()) / cfg.height);
      for (std::size_t k = 0; k < cfg.noise_features; ++k) f.push_back(rng.normal());
      rec.features.push_back(std::move(f));
    }

    std::vector<int> y(cfg.num_classes, 0);
    for (const auto& obj : objects) {
      y[obj.class_id] = 1;
      auto it = std::find_if(rec.ground_truth.begin(), rec.ground_truth.end(),
                             [&](const ClassBoxes& cb) { return cb.class_id == obj.class_id; });
      if (it == rec.ground_truth.end()) {
        rec.ground_truth.push_back({obj.class_id, {}});
        it = rec.ground_truth.end() - 1;
      }
      it->boxes.push_back(obj.full);
    }
    std::sort(rec.ground_truth.begin(), rec.ground_truth.end(),
              [](const ClassBoxes& a, const ClassBoxes& b) { return a.class_id < b.class_id; });
    rec.labels = ImageLabel(std::move(y));
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace slv
