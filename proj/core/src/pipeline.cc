#include "slv/pipeline.h"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "slv/error.h"

namespace slv {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Copies json[key] into `field` when present, rejecting type mismatches.
template <class T>
void read_field(const json& obj, const char* key, T& field, const std::string& section) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    field = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: " + section + "." + key + " has the wrong type");
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& section) {
  if (!obj.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!known.contains(key)) {
      throw ConfigError("config: unknown key '" + section + "." + key + "'");
    }
  }
}

void parse_synthetic(const json& j, SyntheticSceneConfig& c) {
  reject_unknown(j,
                 {"images", "height", "width", "min_objects", "max_objects", "num_classes",
                  "proposals_per_object", "background_proposals", "part_proposal_fraction",
                  "jitter", "bias", "noise_features"},
                 "synthetic");
  read_field(j, "images", c.images, "synthetic");
  read_field(j, "height", c.height, "synthetic");
  read_field(j, "width", c.width, "synthetic");
  read_field(j, "min_objects", c.min_objects, "synthetic");
  read_field(j, "max_objects", c.max_objects, "synthetic");
  read_field(j, "num_classes", c.num_classes, "synthetic");
  read_field(j, "proposals_per_object", c.proposals_per_object, "synthetic");
  read_field(j, "background_proposals", c.background_proposals, "synthetic");
  read_field(j, "part_proposal_fraction", c.part_proposal_fraction, "synthetic");
  read_field(j, "jitter", c.jitter, "synthetic");
  read_field(j, "bias", c.bias, "synthetic");
  read_field(j, "noise_features", c.noise_features, "synthetic");
  c.validate();
}

void parse_vote(const json& j, VoteConfig& v) {
  reject_unknown(j, {"preset", "t_score", "t_b_default", "t_b_per_class"}, "vote");
  if (const auto it = j.find("preset"); it != j.end()) {
    const auto name = it->is_string() ? it->get<std::string>() : std::string();
    if (name == "voc2007") {
      v = VoteConfig::voc2007();
    } else if (name == "plain") {
      v = VoteConfig{};
    } else {
      throw ConfigError("config: unknown vote preset '" + name + "'");
    }
  }
  read_field(j, "t_score", v.t_score, "vote");
  read_field(j, "t_b_default", v.t_b_default, "vote");
  if (const auto it = j.find("t_b_per_class"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("config: vote.t_b_per_class must be an object");
    v.t_b_per_class.clear();
    const auto& names = voc_class_names();
    for (const auto& [key, value] : it->items()) {
      std::size_t c = 0;
      const auto named = std::find(names.begin(), names.end(), key);
      if (named != names.end()) {
        c = static_cast<std::size_t>(named - names.begin());
      } else {
        try {
          std::size_t used = 0;
          c = std::stoul(key, &used);
          if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
          throw ConfigError("config: vote.t_b_per_class key '" + key +
                            "' is neither a class index nor a VOC class name");
        }
      }
      if (!value.is_number()) throw ConfigError("config: vote.t_b_per_class values must be numbers");
      v.t_b_per_class[c] = value.get<double>();
    }
  }
  v.validate();
}

void parse_train(const json& j, TrainConfig& t) {
  reject_unknown(j,
                 {"iterations", "learning_rate", "ramp_epochs", "ramp", "slv_branch",
                  "cluster_iou", "center_floor", "fg_iou", "bg_iou_lo", "bg_iou_hi",
                  "refinement_branches", "init_scale", "seed"},
                 "train");
  read_field(j, "iterations", t.iterations, "train");
  read_field(j, "learning_rate", t.learning_rate, "train");
  read_field(j, "ramp_epochs", t.ramp_epochs, "train");
  if (const auto it = j.find("ramp"); it != j.end()) {
    const auto shape = it->is_string() ? it->get<std::string>() : std::string();
    if (shape == "linear") {
      t.ramp_shape = RampShape::kLinear;
    } else if (shape == "off") {
      t.ramp_shape = RampShape::kOff;
    } else {
      throw ConfigError("config: train.ramp must be \"linear\" or \"off\"");
    }
  }
  read_field(j, "slv_branch", t.slv_branch, "train");
  read_field(j, "cluster_iou", t.cluster_iou, "train");
  read_field(j, "center_floor", t.center_floor, "train");
  read_field(j, "fg_iou", t.fg_iou, "train");
  read_field(j, "bg_iou_lo", t.bg_iou_lo, "train");
  read_field(j, "bg_iou_hi", t.bg_iou_hi, "train");
  read_field(j, "refinement_branches", t.refinement_branches, "train");
  read_field(j, "init_scale", t.init_scale, "train");
  read_field(j, "seed", t.seed, "train");
  if (t.iterations < 0) throw ConfigError("config: train.iterations must be non-negative");
  if (t.ramp_shape == RampShape::kLinear && t.ramp_epochs <= 0) {
    throw ConfigError("config: train.ramp_epochs must be positive");
  }
}

double best_iou(const Box& b, const DatasetRecord& rec, std::size_t class_id) {
  double best = 0.0;
  for (const auto& cb : rec.ground_truth) {
    if (cb.class_id != class_id) continue;
    for (const Box& g : cb.boxes) best = std::max(best, iou(b, g));
  }
  return best;
}

}  // namespace

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  const json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: not valid JSON");
  reject_unknown(j, {"synthetic", "train", "vote", "nms_iou"}, "<root>");
  PipelineConfig cfg;
  if (const auto it = j.find("synthetic"); it != j.end()) parse_synthetic(*it, cfg.synthetic);
  if (const auto it = j.find("vote"); it != j.end()) parse_vote(*it, cfg.vote);
  if (const auto it = j.find("train"); it != j.end()) parse_train(*it, cfg.train);
  read_field(j, "nms_iou", cfg.nms_iou, "<root>");
  if (!(cfg.nms_iou > 0.0 && cfg.nms_iou < 1.0)) {
    throw ConfigError("config: nms_iou must lie in (0,1)");
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pipeline_config(ss.str());
}

ScoreMatrix proposal_scores(const DatasetRecord& record, const ToyScorer* model) {
  if (model != nullptr) {
    if (record.features.empty()) {
      throw InputError("record '" + record.image_id + "' has no features to score");
    }
    const ScorerOutputs out = run_scorer(*model, record);
    return out.phi_bar.top_rows(model->num_classes);
  }
  if (!record.scores) {
    throw InputError("record '" + record.image_id + "' has no scores");
  }
  return *record.scores;
}

VoteRun run_vote(const Dataset& dataset, const ToyScorer* model, const VoteConfig& config,
                 const std::string& out_dir, bool emit_heatmaps) {
  config.validate();
  const std::size_t n = dataset.records.size();
  VoteRun run;
  run.records.resize(n);
  std::vector<std::vector<LikelihoodMap>> maps(n);

  parallel_for(n, [&](std::size_t i) {
    const DatasetRecord& rec = dataset.records[i];
    PseudoLabelRecord& out = run.records[i];
    out.image_id = rec.image_id;
    try {
      const ScoreMatrix scores = proposal_scores(rec, model);
      for (std::size_t c : rec.labels.positives()) {
        ClassVote vote = vote_class(scores, rec.proposals, c, rec.height, rec.width, config);
        if (!vote.boxes.empty()) out.supervision.classes.push_back({c, std::move(vote.boxes)});
        if (emit_heatmaps) maps[i].push_back(std::move(vote.map));
      }
    } catch (const InputError& e) {
      out.supervision = {};
      out.error = e.what();
      maps[i].clear();
    }
  });

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "pseudo_labels.jsonl", std::ios::binary);
    if (!out) throw InputError("cannot write to '" + out_dir + "'");
    write_pseudo_labels(out, dataset.num_classes, run.records);
  }
  if (emit_heatmaps) {
    const fs::path dir = fs::path(out_dir) / "heatmaps";
    fs::create_directories(dir);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& map : maps[i]) {
        const fs::path p =
            dir / (dataset.records[i].image_id + "_c" + std::to_string(map.class_id()) + ".pgm");
        std::ofstream out(p, std::ios::binary);
        if (!out) throw InputError("cannot write heatmap '" + p.string() + "'");
        write_pgm(out, map);
        run.heatmaps.push_back(p.string());
      }
    }
  }
  for (const auto& r : run.records) run.failed += r.error.has_value() ? 1 : 0;
  return run;
}

SchemeLabels label_conventional(const ScoreMatrix& scores, const DatasetRecord& record) {
  SchemeLabels out;
  if (record.proposals.empty()) return out;
  for (std::size_t c : record.labels.positives()) {
    const auto row = scores.row(c);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    out.push_back({c, {record.proposals[best]}});
  }
  return out;
}

SchemeLabels label_clustering(const ScoreMatrix& scores, const DatasetRecord& record,
                              double cluster_iou, double center_floor) {
  SchemeLabels out;
  if (record.proposals.empty() || !record.labels.any_positive()) return out;
  const ClusterSet clusters =
      build_clusters(scores, record.proposals, record.labels, cluster_iou, center_floor);
  for (const auto& cl : clusters.foreground) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const ClassBoxes& cb) { return cb.class_id == cl.label; });
    if (it == out.end()) {
      out.push_back({cl.label, {}});
      it = out.end() - 1;
    }
    it->boxes.push_back(record.proposals[cl.center]);
  }
  std::sort(out.begin(), out.end(),
            [](const ClassBoxes& a, const ClassBoxes& b) { return a.class_id < b.class_id; });
  return out;
}

SchemeLabels label_slv(const ScoreMatrix& scores, const DatasetRecord& record,
                       const VoteConfig& config) {
  if (!record.labels.any_positive()) return {};
  return generate_supervision(scores, record.proposals, record.labels, record.height,
                              record.width, config)
      .classes;
}

double SchemeResult::class_mean_iou(std::size_t c) const {
  const auto it = per_class.find(c);
  if (it == per_class.end() || it->second.second == 0) return 0.0;
  return it->second.first / static_cast<double>(it->second.second);
}

std::vector<SchemeResult> compare_schemes(const Dataset& dataset, const ToyScorer* model,
                                          const VoteConfig& config, double cluster_iou) {
  config.validate();
  const std::size_t n = dataset.records.size();
  // Scheme order here is already alphabetical.
  const std::vector<std::string> names = {"clustering", "conventional", "slv"};
  std::vector<std::vector<SchemeLabels>> labels(n, std::vector<SchemeLabels>(names.size()));

  parallel_for(n, [&](std::size_t i) {
    const DatasetRecord& rec = dataset.records[i];
    if (!rec.has_ground_truth) return;
    const ScoreMatrix scores = proposal_scores(rec, model);
    labels[i][0] = label_clustering(scores, rec, cluster_iou);
    labels[i][1] = label_conventional(scores, rec);
    labels[i][2] = label_slv(scores, rec, config);
  });

  std::vector<SchemeResult> results(names.size());
  for (std::size_t s = 0; s < names.size(); ++s) {
    SchemeResult& res = results[s];
    res.scheme = names[s];
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& cb : labels[i][s]) {
        for (const Box& b : cb.boxes) {
          const double v = best_iou(b, dataset.records[i], cb.class_id);
          auto& [sum, count] = res.per_class[cb.class_id];
          sum += v;
          ++count;
          res.iou_sum += v;
          ++res.count;
        }
      }
    }
  }
  return results;
}

std::string format_scheme_report(const std::vector<SchemeResult>& results,
                                 const Dataset& dataset) {
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  std::string out = "scheme\tclass\tmean_iou\tboxes\n";
  for (const auto& res : results) {
    for (const auto& [c, sc] : res.per_class) {
      out += res.scheme + "\t" + dataset.class_name(c) + "\t" + fixed(res.class_mean_iou(c)) +
             "\t" + std::to_string(sc.second) + "\n";
    }
    out += res.scheme + "\tall\t" + fixed(res.mean_iou()) + "\t" + std::to_string(res.count) +
           "\n";
  }
  return out;
}

EvalReport evaluate(const std::vector<Detection>& dets, const Dataset& dataset, ApMode mode) {
  std::set<std::string> ids;
  for (const auto& rec : dataset.records) ids.insert(rec.image_id);
  for (const auto& d : dets) {
    if (d.class_id >= dataset.num_classes) {
      throw InputError("evaluate: detection on image '" + d.image_id + "' has unknown class " +
                       std::to_string(d.class_id));
    }
    if (!ids.contains(d.image_id)) {
      throw InputError("evaluate: detection references unknown image '" + d.image_id + "'");
    }
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < dataset.num_classes; ++c) names.push_back(dataset.class_name(c));
  return evaluate_detections(dets, dataset.ground_truth(), names, mode);
}

}  // namespace slv
