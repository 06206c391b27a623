#include "slv/mil.h"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>

#include "slv/error.h"

namespace slv {
namespace {

bool clamp_active(double p) { return p < kProbClamp || p > 1.0 - kProbClamp; }

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void require_finite(const ScoreMatrix& m, const char* what) {
  if (!m.all_finite()) {
    throw InputError(std::string(what) + ": non-finite input");
  }
}

}  // namespace

ImageLabel::ImageLabel(std::vector<int> y) : y_(std::move(y)) {
  for (std::size_t c = 0; c < y_.size(); ++c) {
    if (y_[c] != 0 && y_[c] != 1) {
      throw InputError("ImageLabel: entry " + std::to_string(c) +
                       " is not 0 or 1");
    }
  }
}

std::vector<std::size_t> ImageLabel::positives() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < y_.size(); ++c) {
    if (y_[c] != 0) out.push_back(c);
  }
  return out;
}

ScoreMatrix softmax_over_classes(const ScoreMatrix& logits) {
  require_finite(logits, "softmax_over_classes");
  ScoreMatrix out(logits.rows(), logits.cols(), 0.0, Normalization::kOverClasses);
  for (std::size_t c = 0; c < logits.cols(); ++c) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < logits.rows(); ++r) mx = std::max(mx, logits(r, c));
    double sum = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      out(r, c) = std::exp(logits(r, c) - mx);
      sum += out(r, c);
    }
    for (std::size_t r = 0; r < logits.rows(); ++r) out(r, c) /= sum;
  }
  return out;
}

ScoreMatrix softmax_over_proposals(const ScoreMatrix& logits) {
  require_finite(logits, "softmax_over_proposals");
  ScoreMatrix out(logits.rows(), logits.cols(), 0.0, Normalization::kOverProposals);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto in = logits.row(r);
    auto dst = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - mx);
      sum += dst[c];
    }
    for (double& v : dst) v /= sum;
  }
  return out;
}

ScoreMatrix softmax_over_classes_backward(const ScoreMatrix& probs,
                                          const ScoreMatrix& grad_probs) {
  if (!probs.same_shape(grad_probs)) {
    throw InputError("softmax_over_classes_backward: shape mismatch");
  }
  ScoreMatrix out(probs.rows(), probs.cols());
  for (std::size_t c = 0; c < probs.cols(); ++c) {
    double dot = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) dot += probs(r, c) * grad_probs(r, c);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      out(r, c) = probs(r, c) * (grad_probs(r, c) - dot);
    }
  }
  return out;
}

ScoreMatrix softmax_over_proposals_backward(const ScoreMatrix& probs,
                                            const ScoreMatrix& grad_probs) {
  if (!probs.same_shape(grad_probs)) {
    throw InputError("softmax_over_proposals_backward: shape mismatch");
  }
  ScoreMatrix out(probs.rows(), probs.cols());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto p = probs.row(r);
    const auto g = grad_probs.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) dot += p[c] * g[c];
    auto dst = out.row(r);
    for (std::size_t c = 0; c < p.size(); ++c) dst[c] = p[c] * (g[c] - dot);
  }
  return out;
}

ScoreMatrix wsddn_scores(const ScoreMatrix& sigma_cls, const ScoreMatrix& sigma_det) {
  if (!sigma_cls.same_shape(sigma_det)) {
    throw InputError("wsddn_scores: shape mismatch");
  }
  if (sigma_cls.tag() != Normalization::kOverClasses ||
      sigma_det.tag() != Normalization::kOverProposals) {
    throw InputError(
        "wsddn_scores: expects a class-normalized and a proposal-normalized matrix");
  }
  ScoreMatrix out(sigma_cls.rows(), sigma_cls.cols(), 0.0, Normalization::kProbability);
  auto dst = out.values();
  const auto a = sigma_cls.values();
  const auto b = sigma_det.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a[i] * b[i];
  return out;
}

std::vector<double> image_scores(const ScoreMatrix& phi0) {
  std::vector<double> phi(phi0.rows(), 0.0);
  for (std::size_t c = 0; c < phi0.rows(); ++c) {
    for (double v : phi0.row(c)) phi[c] += v;
  }
  return phi;
}

VectorLoss mil_loss(std::span<const double> phi, const ImageLabel& y) {
  if (phi.size() != y.num_classes()) {
    throw InputError("mil_loss: " + std::to_string(phi.size()) +
                     " image scores for " + std::to_string(y.num_classes()) +
                     " classes");
  }
  VectorLoss out;
  out.grad.assign(phi.size(), 0.0);
  for (std::size_t c = 0; c < phi.size(); ++c) {
    const double p = phi[c];
    // image_scores may exceed 1 by rounding; anything beyond that is a bug
    // upstream.
    if (!std::isfinite(p) || p < 0.0 || p > 1.0 + 1e-9) {
      throw InputError("mil_loss: image score " + std::to_string(p) +
                       " for class " + std::to_string(c) + " outside [0,1]");
    }
    const double pc = clamp_prob(p);
    const double yc = y[c];
    out.loss -= yc * std::log(pc) + (1.0 - yc) * std::log(1.0 - pc);
    if (!clamp_active(p)) out.grad[c] = (pc - yc) / (pc * (1.0 - pc));
  }
  return out;
}

bool ClusterSet::is_partition() const {
  std::vector<int> hits(num_proposals, 0);
  auto mark = [&](std::size_t r) {
    if (r >= num_proposals) return false;
    ++hits[r];
    return true;
  };
  for (const auto& cl : foreground) {
    for (std::size_t r : cl.members) {
      if (!mark(r)) return false;
    }
  }
  for (std::size_t r : background) {
    if (!mark(r)) return false;
  }
  if (background.size() != background_weights.size()) return false;
  return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

ClusterSet build_clusters(const ScoreMatrix& scores, std::span<const Box> boxes,
                          const ImageLabel& y, double iou_threshold,
                          double center_floor) {
  const std::size_t num_classes = y.num_classes();
  const std::size_t num_props = boxes.size();
  if (scores.cols() != num_props) {
    throw InputError("build_clusters: " + std::to_string(scores.cols()) +
                     " score columns for " + std::to_string(num_props) + " boxes");
  }
  if (scores.rows() < num_classes) {
    throw InputError("build_clusters: score matrix has fewer rows than classes");
  }
  const auto positives = y.positives();
  if (positives.empty()) {
    throw InputError("build_clusters: image label has no positive class");
  }

  ClusterSet set;
  set.num_proposals = num_props;
  std::vector<bool> assigned(num_props, false);

  for (std::size_t c : positives) {
    bool first = true;
    while (true) {
      std::size_t best = num_props;
      for (std::size_t r = 0; r < num_props; ++r) {
        if (assigned[r]) continue;
        if (best == num_props || scores(c, r) > scores(c, best)) best = r;
      }
      if (best == num_props) break;
      if (!first && scores(c, best) < center_floor) break;
      first = false;

      ProposalCluster cluster;
      cluster.label = c;
      cluster.center = best;
      cluster.confidence = std::clamp(scores(c, best), 0.0, 1.0);
      for (std::size_t r = 0; r < num_props; ++r) {
        if (assigned[r]) continue;
        if (r == best || iou(boxes[best], boxes[r]) >= iou_threshold) {
          assigned[r] = true;
          cluster.members.push_back(r);
        }
      }
      set.foreground.push_back(std::move(cluster));
    }
  }

  for (std::size_t r = 0; r < num_props; ++r) {
    if (assigned[r]) continue;
    double max_fg = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) max_fg = std::max(max_fg, scores(c, r));
    set.background.push_back(r);
    set.background_weights.push_back(std::clamp(1.0 - max_fg, 0.0, 1.0));
  }
  assert(set.is_partition());
  return set;
}

MatrixLoss refinement_loss(const ScoreMatrix& phi_k, const ClusterSet& clusters) {
  const std::size_t rows = phi_k.rows();
  const std::size_t num_props = phi_k.cols();
  if (rows < 2) throw InputError("refinement_loss: need C+1 >= 2 rows");
  if (clusters.num_proposals != num_props) {
    throw InputError("refinement_loss: cluster set covers " +
                     std::to_string(clusters.num_proposals) + " proposals, scores have " +
                     std::to_string(num_props));
  }
  const std::size_t bg_row = rows - 1;
  const double inv_r = 1.0 / static_cast<double>(num_props);

  MatrixLoss out{0.0, ScoreMatrix(rows, num_props)};
  double acc = 0.0;
  for (std::size_t n = 0; n < clusters.foreground.size(); ++n) {
    const auto& cl = clusters.foreground[n];
    if (cl.label >= bg_row) {
      throw InputError("refinement_loss: cluster " + std::to_string(n) +
                       " has label outside the foreground rows");
    }
    if (cl.members.empty()) continue;
    const double m = static_cast<double>(cl.size());
    double sum = 0.0;
    for (std::size_t r : cl.members) sum += phi_k(cl.label, r);
    const double mean = sum / m;
    if (!std::isfinite(mean)) {
      throw NumericalError("refinement_loss: non-finite log argument in cluster " +
                           std::to_string(n));
    }
    acc += cl.confidence * m * std::log(clamp_prob(mean));
    if (!clamp_active(mean)) {
      const double g = -inv_r * cl.confidence / mean;
      for (std::size_t r : cl.members) out.grad(cl.label, r) += g;
    }
  }
  for (std::size_t i = 0; i < clusters.background.size(); ++i) {
    const std::size_t r = clusters.background[i];
    const double lambda = clusters.background_weights[i];
    const double p = phi_k(bg_row, r);
    if (!std::isfinite(p)) {
      throw NumericalError("refinement_loss: non-finite log argument in background cluster " +
                           std::to_string(clusters.foreground.size()));
    }
    acc += lambda * std::log(clamp_prob(p));
    if (!clamp_active(p)) out.grad(bg_row, r) += -inv_r * lambda / p;
  }
  out.loss = -inv_r * acc;
  return out;
}

ScoreMatrix average_refined_scores(std::span<const ScoreMatrix> branches) {
  if (branches.empty()) throw InputError("average_refined_scores: no branches");
  const ScoreMatrix& first = branches.front();
  for (const auto& b : branches) {
    if (!b.same_shape(first)) throw InputError("average_refined_scores: shape mismatch");
  }
  ScoreMatrix out(first.rows(), first.cols(), 0.0, first.tag());
  auto dst = out.values();
  for (const auto& b : branches) {
    const auto src = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double k = static_cast<double>(branches.size());
  for (double& v : dst) v /= k;
  return out;
}

ScoreMatrix average_refined_scores(const ScoreMatrix& phi1, const ScoreMatrix& phi2,
                                   const ScoreMatrix& phi3) {
  const ScoreMatrix all[] = {phi1, phi2, phi3};
  return average_refined_scores(all);
}

}  // namespace slv
