#include "slv/supervision.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "slv/error.h"
#include "slv/mil.h"

namespace slv {
namespace {

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < kSmoothL1Beta ? 0.5 * x * x / kSmoothL1Beta : a - 0.5 * kSmoothL1Beta;
}

double smooth_l1_grad(double x) {
  if (std::abs(x) < kSmoothL1Beta) return x / kSmoothL1Beta;
  return x > 0 ? 1.0 : -1.0;
}

}  // namespace

ProposalTargets assign_targets(std::span<const Box> boxes, const Supervision& sup,
                               double fg_iou, std::pair<double, double> bg_iou) {
  const auto [bg_lo, bg_hi] = bg_iou;
  if (bg_lo > bg_hi) throw ConfigError("assign_targets: background band is inverted");
  if (fg_iou < bg_hi) {
    throw ConfigError("assign_targets: foreground threshold " + std::to_string(fg_iou) +
                      " overlaps background band upper bound " + std::to_string(bg_hi));
  }

  ProposalTargets targets(boxes.size());
  if (sup.empty()) return targets;

  for (std::size_t r = 0; r < boxes.size(); ++r) {
    double best = -1.0;
    const Box* best_box = nullptr;
    std::size_t best_class = 0;
    for (const auto& cb : sup.classes) {
      for (const Box& g : cb.boxes) {
        const double v = iou(boxes[r], g);
        if (v > best) {
          best = v;
          best_box = &g;
          best_class = cb.class_id;
        }
      }
    }
    ProposalTarget& t = targets[r];
    if (best >= fg_iou) {
      t.kind = TargetKind::kForeground;
      t.class_id = best_class;
      t.offsets = encode_offsets(boxes[r], *best_box);
      t.weight = 1.0;
    } else if (best >= bg_lo && best < bg_hi) {
      t.kind = TargetKind::kBackground;
      t.weight = 1.0;
    }
  }
  return targets;
}

Offsets encode_offsets(const Box& p, const Box& g) {
  const double pw = p.width(), ph = p.height();
  const double gw = g.width(), gh = g.height();
  const double pcx = p.x0 + 0.5 * pw, pcy = p.y0 + 0.5 * ph;
  const double gcx = g.x0 + 0.5 * gw, gcy = g.y0 + 0.5 * gh;
  return {(gcx - pcx) / pw, (gcy - pcy) / ph, std::log(gw / pw), std::log(gh / ph)};
}

BoxF decode_offsets_exact(const Box& p, const Offsets& t) {
  const double pw = p.width(), ph = p.height();
  const double cx = p.x0 + 0.5 * pw + t[0] * pw;
  const double cy = p.y0 + 0.5 * ph + t[1] * ph;
  const double w = pw * std::exp(t[2]);
  const double h = ph * std::exp(t[3]);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

DecodedBox decode_offsets(const Box& p, const Offsets& t, int height, int width) {
  for (double v : t) {
    if (!std::isfinite(v)) throw InputError("decode_offsets: non-finite offset");
  }
  const BoxF f = decode_offsets_exact(p, t);
  auto to_int = [](double v, int lo, int hi) {
    return static_cast<int>(std::clamp(std::round(v), static_cast<double>(lo),
                                       static_cast<double>(hi)));
  };
  DecodedBox out;
  out.box = {to_int(f.x0, 0, width), to_int(f.y0, 0, height), to_int(f.x1, 0, width),
             to_int(f.y1, 0, height)};
  out.valid = out.box.valid();
  return out;
}

SlvLoss slv_loss(const ScoreMatrix& phi_s, std::span<const Offsets> t_s,
                 const ProposalTargets& targets) {
  const std::size_t rows = phi_s.rows();
  const std::size_t num_props = phi_s.cols();
  if (rows < 2) throw InputError("slv_loss: need C+1 >= 2 rows");
  if (t_s.size() != num_props || targets.size() != num_props) {
    throw InputError("slv_loss: scores, offsets and targets disagree on proposal count");
  }
  const std::size_t bg_row = rows - 1;

  SlvLoss out;
  out.grad_scores = ScoreMatrix(rows, num_props);
  out.grad_offsets.assign(num_props, Offsets{});

  std::size_t n_used = 0, n_fg = 0;
  for (const auto& t : targets) {
    if (t.kind != TargetKind::kIgnored) ++n_used;
    if (t.kind == TargetKind::kForeground) ++n_fg;
  }
  if (n_used == 0) {
    out.vacuous = true;
    return out;
  }

  const double inv_used = 1.0 / static_cast<double>(n_used);
  for (std::size_t r = 0; r < num_props; ++r) {
    const auto& t = targets[r];
    if (t.kind == TargetKind::kIgnored) continue;
    const std::size_t row = t.kind == TargetKind::kForeground ? t.class_id : bg_row;
    if (row >= rows) throw InputError("slv_loss: target class outside score rows");
    const double p = phi_s(row, r);
    if (!std::isfinite(p)) throw NumericalError("slv_loss: non-finite score");
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    out.cls -= t.weight * std::log(pc) * inv_used;
    if (p >= kProbClamp && p <= 1.0 - kProbClamp) {
      out.grad_scores(row, r) = -t.weight * inv_used / p;
    }
  }

  if (n_fg > 0) {
    const double inv_entries = 1.0 / (4.0 * static_cast<double>(n_fg));
    for (std::size_t r = 0; r < num_props; ++r) {
      const auto& t = targets[r];
      if (t.kind != TargetKind::kForeground) continue;
      for (std::size_t k = 0; k < 4; ++k) {
        const double d = t_s[r][k] - t.offsets[k];
        out.loc += smooth_l1(d) * inv_entries;
        out.grad_offsets[r][k] = smooth_l1_grad(d) * inv_entries;
      }
    }
  }
  out.loss = out.cls + out.loc;
  return out;
}

double loss_weight(const LossWeightSchedule& schedule, std::int64_t iteration) {
  if (schedule.shape == RampShape::kOff) return 0.0;
  if (schedule.ramp_length <= 0) {
    throw ConfigError("loss_weight: ramp length must be positive");
  }
  if (iteration < 0) throw InputError("loss_weight: negative iteration");
  if (iteration >= schedule.ramp_length) return 1.0;
  return static_cast<double>(iteration) / static_cast<double>(schedule.ramp_length);
}

double total_loss(double l_w, std::span<const double> l_r, double l_s, double w_s) {
  double sum = l_w;
  for (double v : l_r) sum += v;
  return sum + w_s * l_s;
}

}  // namespace slv
