#include "slv/trainer.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rng.h"
#include "slv/error.h"

namespace slv {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

void init_head(LinearHead& head, internal::Rng& rng, double scale) {
  for (double& w : head.weights()) w = scale * rng.normal();
}

std::vector<Offsets> offsets_from_logits(const ScoreMatrix& logits) {
  std::vector<Offsets> out(logits.cols());
  for (std::size_t r = 0; r < logits.cols(); ++r) {
    for (std::size_t k = 0; k < 4; ++k) out[r][k] = logits(k, r);
  }
  return out;
}

ScoreMatrix offsets_to_matrix(const std::vector<Offsets>& offsets, double scale) {
  ScoreMatrix m(4, offsets.size());
  for (std::size_t r = 0; r < offsets.size(); ++r) {
    for (std::size_t k = 0; k < 4; ++k) m(k, r) = scale * offsets[r][k];
  }
  return m;
}

void scale_in_place(ScoreMatrix& m, double s) {
  for (double& v : m.values()) v *= s;
}

void validate_for_training(const Dataset& ds) {
  if (ds.records.empty()) throw InputError("train: dataset is empty");
  if (ds.feature_dim == 0) throw InputError("train: dataset has no proposal features");
  for (const auto& rec : ds.records) {
    if (rec.proposals.empty()) {
      throw InputError("train: record '" + rec.image_id + "' has no proposals");
    }
    if (!rec.labels.any_positive()) {
      throw InputError("train: record '" + rec.image_id + "' has no positive label");
    }
  }
}

// Gradient buffers shaped like each head's weights.
struct HeadGrads {
  std::vector<double> cls, det, slv_cls, slv_loc;
  std::vector<std::vector<double>> refine;

  explicit HeadGrads(const ToyScorer& m)
      : cls(m.cls.weights().size(), 0.0),
        det(m.det.weights().size(), 0.0),
        slv_cls(m.slv_cls.weights().size(), 0.0),
        slv_loc(m.slv_loc.weights().size(), 0.0) {
    for (const auto& h : m.refine) refine.emplace_back(h.weights().size(), 0.0);
  }
};

void descend(std::vector<double>& w, const std::vector<double>& g, double step) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * g[i];
}

ordered_json head_json(const LinearHead& h) {
  return {{"outputs", h.outputs()}, {"inputs", h.inputs()}, {"weights", h.weights()}};
}

LinearHead head_from_json(const json& j, const std::string& name) {
  try {
    LinearHead h(j.at("outputs").get<std::size_t>(), j.at("inputs").get<std::size_t>());
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != h.weights().size()) {
      throw ParseError("model: head '" + name + "' has the wrong number of weights");
    }
    h.weights() = w;
    return h;
  } catch (const json::exception& e) {
    throw ParseError("model: head '" + name + "': " + e.what());
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

LinearHead::LinearHead(std::size_t outputs, std::size_t inputs)
    : outputs_(outputs), inputs_(inputs), weights_(outputs * inputs, 0.0) {}

ScoreMatrix LinearHead::forward(const std::vector<std::vector<double>>& features) const {
  ScoreMatrix out(outputs_, features.size());
  for (std::size_t r = 0; r < features.size(); ++r) {
    const auto& f = features[r];
    if (f.size() != inputs_) throw InputError("LinearHead: feature dimension mismatch");
    for (std::size_t o = 0; o < outputs_; ++o) {
      const double* w = weights_.data() + o * inputs_;
      double acc = 0.0;
      for (std::size_t d = 0; d < inputs_; ++d) acc += w[d] * f[d];
      out(o, r) = acc;
    }
  }
  return out;
}

void LinearHead::accumulate_grad(const ScoreMatrix& grad_logits,
                                 const std::vector<std::vector<double>>& features,
                                 std::vector<double>& grad_weights) const {
  for (std::size_t o = 0; o < outputs_; ++o) {
    double* g = grad_weights.data() + o * inputs_;
    for (std::size_t r = 0; r < features.size(); ++r) {
      const double d_logit = grad_logits(o, r);
      if (d_logit == 0.0) continue;
      const auto& f = features[r];
      for (std::size_t d = 0; d < inputs_; ++d) g[d] += d_logit * f[d];
    }
  }
}

ToyScorer ToyScorer::initialize(std::size_t num_classes, std::size_t feature_dim,
                                int refinement_branches, double init_scale,
                                std::uint64_t seed) {
  if (num_classes == 0 || feature_dim == 0) {
    throw ConfigError("ToyScorer: need at least one class and one feature");
  }
  if (refinement_branches < 1) throw ConfigError("ToyScorer: need at least one refinement branch");
  internal::Rng rng(seed);
  ToyScorer m;
  m.num_classes = num_classes;
  m.feature_dim = feature_dim;
  m.cls = LinearHead(num_classes, feature_dim);
  m.det = LinearHead(num_classes, feature_dim);
  m.refine.assign(static_cast<std::size_t>(refinement_branches),
                  LinearHead(num_classes + 1, feature_dim));
  m.slv_cls = LinearHead(num_classes + 1, feature_dim);
  m.slv_loc = LinearHead(4, feature_dim);
  init_head(m.cls, rng, init_scale);
  init_head(m.det, rng, init_scale);
  for (auto& h : m.refine) init_head(h, rng, init_scale);
  init_head(m.slv_cls, rng, init_scale);
  init_head(m.slv_loc, rng, init_scale);
  return m;
}

ScorerOutputs run_scorer(const ToyScorer& model, const DatasetRecord& record) {
  if (record.features.size() != record.proposals.size()) {
    throw InputError("record '" + record.image_id + "' has no features for its proposals");
  }
  ScorerOutputs out;
  out.sigma_cls = softmax_over_classes(model.cls.forward(record.features));
  out.sigma_det = softmax_over_proposals(model.det.forward(record.features));
  out.phi0 = wsddn_scores(out.sigma_cls, out.sigma_det);
  for (const auto& head : model.refine) {
    out.refined.push_back(softmax_over_classes(head.forward(record.features)));
  }
  out.phi_bar = average_refined_scores(out.refined);
  out.phi_s = softmax_over_classes(model.slv_cls.forward(record.features));
  out.t_s = offsets_from_logits(model.slv_loc.forward(record.features));
  return out;
}

LossWeightSchedule TrainConfig::schedule() const {
  return LossWeightSchedule{ramp_epochs, ramp_shape};
}

TrainResult train_toy(const Dataset& dataset, const TrainConfig& config) {
  validate_for_training(dataset);
  config.vote.validate();
  if (!(config.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  const LossWeightSchedule schedule = config.schedule();
  loss_weight(schedule, 0);  // rejects a non-positive ramp up front

  TrainResult result;
  result.model = ToyScorer::initialize(dataset.num_classes, dataset.feature_dim,
                                       config.refinement_branches, config.init_scale,
                                       config.seed);
  ToyScorer& model = result.model;
  const std::size_t num_branches = model.refine.size();
  const double inv_n = 1.0 / static_cast<double>(dataset.records.size());
  result.last_supervision.resize(dataset.records.size());

  for (std::int64_t it = 0; it < config.iterations; ++it) {
    const double w_s = loss_weight(schedule, it);
    HeadGrads grads(model);
    TraceEntry entry;
    entry.iteration = it;
    entry.w_s = w_s;
    entry.l_r.assign(num_branches, 0.0);

    for (std::size_t n = 0; n < dataset.records.size(); ++n) {
      const DatasetRecord& rec = dataset.records[n];
      const auto& feats = rec.features;
      const ScorerOutputs out = run_scorer(model, rec);

      // Image-level MIL loss through both streams.
      const VectorLoss lw = mil_loss(image_scores(out.phi0), rec.labels);
      ScoreMatrix d_cls(out.phi0.rows(), out.phi0.cols());
      ScoreMatrix d_det(out.phi0.rows(), out.phi0.cols());
      for (std::size_t c = 0; c < out.phi0.rows(); ++c) {
        for (std::size_t r = 0; r < out.phi0.cols(); ++r) {
          d_cls(c, r) = lw.grad[c] * out.sigma_det(c, r);
          d_det(c, r) = lw.grad[c] * out.sigma_cls(c, r);
        }
      }
      model.cls.accumulate_grad(softmax_over_classes_backward(out.sigma_cls, d_cls), feats,
                                grads.cls);
      model.det.accumulate_grad(softmax_over_proposals_backward(out.sigma_det, d_det), feats,
                                grads.det);

      // Refinement branch k is supervised by clusters built from branch k-1.
      std::vector<double> l_r(num_branches, 0.0);
      for (std::size_t k = 0; k < num_branches; ++k) {
        const ScoreMatrix& teacher = k == 0 ? out.phi0 : out.refined[k - 1];
        const ClusterSet clusters = build_clusters(teacher, rec.proposals, rec.labels,
                                                   config.cluster_iou, config.center_floor);
        const MatrixLoss lr = refinement_loss(out.refined[k], clusters);
        l_r[k] = lr.loss;
        model.refine[k].accumulate_grad(softmax_over_classes_backward(out.refined[k], lr.grad),
                                        feats, grads.refine[k]);
      }

      // The voted supervision is a constant: no gradient flows into phi_bar.
      double l_s = 0.0;
      if (config.slv_branch) {
        Supervision sup = generate_supervision(out.phi_bar, rec.proposals, rec.labels,
                                               rec.height, rec.width, config.vote);
        const ProposalTargets targets = assign_targets(
            rec.proposals, sup, config.fg_iou, {config.bg_iou_lo, config.bg_iou_hi});
        const SlvLoss ls = slv_loss(out.phi_s, out.t_s, targets);
        l_s = ls.loss;
        if (w_s > 0.0) {
          ScoreMatrix g_scores = ls.grad_scores;
          scale_in_place(g_scores, w_s);
          model.slv_cls.accumulate_grad(softmax_over_classes_backward(out.phi_s, g_scores),
                                        feats, grads.slv_cls);
          model.slv_loc.accumulate_grad(offsets_to_matrix(ls.grad_offsets, w_s), feats,
                                        grads.slv_loc);
        }
        entry.supervision_boxes += sup.num_boxes();
        result.last_supervision[n] = std::move(sup);
      }

      const double total = total_loss(lw.loss, l_r, l_s, w_s);
      if (!std::isfinite(total)) {
        throw NumericalError("train: non-finite loss at iteration " + std::to_string(it) +
                             " (record '" + rec.image_id + "')");
      }
      entry.l_w += lw.loss * inv_n;
      for (std::size_t k = 0; k < num_branches; ++k) entry.l_r[k] += l_r[k] * inv_n;
      entry.l_s += l_s * inv_n;
      entry.total += total * inv_n;
    }

    const double step = config.learning_rate * inv_n;
    descend(model.cls.weights(), grads.cls, step);
    descend(model.det.weights(), grads.det, step);
    for (std::size_t k = 0; k < num_branches; ++k) {
      descend(model.refine[k].weights(), grads.refine[k], step);
    }
    if (config.slv_branch && w_s > 0.0) {
      descend(model.slv_cls.weights(), grads.slv_cls, step);
      descend(model.slv_loc.weights(), grads.slv_loc, step);
    }
    model.iteration = it + 1;
    result.trace.push_back(std::move(entry));
  }
  return result;
}

std::vector<Detection> detect(const ToyScorer& model, const DatasetRecord& record,
                              double nms_iou, double min_score) {
  const ScorerOutputs out = run_scorer(model, record);
  std::vector<ScoreMatrix> parts = out.refined;
  parts.push_back(out.phi_s);
  const ScoreMatrix fused = average_refined_scores(parts);

  std::vector<Box> shifted;
  std::vector<std::size_t> source;
  for (std::size_t r = 0; r < record.proposals.size(); ++r) {
    const DecodedBox d = decode_offsets(record.proposals[r], out.t_s[r], record.height,
                                       record.width);
    if (!d.valid) continue;
    shifted.push_back(d.box);
    source.push_back(r);
  }

  std::vector<Detection> dets;
  for (std::size_t c = 0; c < model.num_classes; ++c) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::size_t i = 0; i < shifted.size(); ++i) {
      const double s = fused(c, source[i]);
      if (s < min_score) continue;
      boxes.push_back(shifted[i]);
      scores.push_back(s);
    }
    for (std::size_t i : nms(boxes, scores, nms_iou)) {
      dets.push_back({record.image_id, c, boxes[i], scores[i]});
    }
  }
  return dets;
}

std::string model_to_json(const ToyScorer& m) {
  ordered_json refine = ordered_json::array();
  for (const auto& h : m.refine) refine.push_back(head_json(h));
  const ordered_json j = {{"format", "slv-model"},
                          {"version", kFormatVersion},
                          {"num_classes", m.num_classes},
                          {"feature_dim", m.feature_dim},
                          {"iteration", m.iteration},
                          {"cls", head_json(m.cls)},
                          {"det", head_json(m.det)},
                          {"refine", std::move(refine)},
                          {"slv_cls", head_json(m.slv_cls)},
                          {"slv_loc", head_json(m.slv_loc)}};
  return j.dump() + "\n";
}

ToyScorer model_from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("model: not a JSON object");
  try {
    if (j.at("format").get<std::string>() != "slv-model") {
      throw ParseError("model: field 'format' is not 'slv-model'");
    }
    if (j.at("version").get<int>() != kFormatVersion) {
      throw ParseError("model: unsupported version");
    }
    ToyScorer m;
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.iteration = j.at("iteration").get<std::int64_t>();
    m.cls = head_from_json(j.at("cls"), "cls");
    m.det = head_from_json(j.at("det"), "det");
    for (const auto& h : j.at("refine")) m.refine.push_back(head_from_json(h, "refine"));
    m.slv_cls = head_from_json(j.at("slv_cls"), "slv_cls");
    m.slv_loc = head_from_json(j.at("slv_loc"), "slv_loc");
    const auto expect = [&](const LinearHead& h, std::size_t outputs, const char* name) {
      if (h.outputs() != outputs || h.inputs() != m.feature_dim) {
        throw ParseError(std::string("model: head '") + name + "' has the wrong shape");
      }
    };
    expect(m.cls, m.num_classes, "cls");
    expect(m.det, m.num_classes, "det");
    for (const auto& h : m.refine) expect(h, m.num_classes + 1, "refine");
    expect(m.slv_cls, m.num_classes + 1, "slv_cls");
    expect(m.slv_loc, 4, "slv_loc");
    if (m.refine.empty()) throw ParseError("model: no refinement heads");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

void save_model(const std::string& path, const ToyScorer& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write model file '" + path + "'");
  out << model_to_json(model);
}

ToyScorer load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

std::string format_trace(const std::vector<TraceEntry>& trace) {
  std::string out = "iteration\tl_w";
  const std::size_t k = trace.empty() ? 0 : trace.front().l_r.size();
  for (std::size_t i = 0; i < k; ++i) out += "\tl_r" + std::to_string(i + 1);
  out += "\tl_s\tw_s\ttotal\tsupervision_boxes\n";
  for (const auto& e : trace) {
    out += std::to_string(e.iteration) + "\t" + fmt(e.l_w);
    for (double v : e.l_r) out += "\t" + fmt(v);
    out += "\t" + fmt(e.l_s) + "\t" + fmt(e.w_s) + "\t" + fmt(e.total) + "\t" +
           std::to_string(e.supervision_boxes) + "\n";
  }
  return out;
}

}  // namespace slv
