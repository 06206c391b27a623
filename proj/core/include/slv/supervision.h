#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "slv/geometry.h"
#include "slv/score_matrix.h"
#include "slv/voting.h"

namespace slv {

// Center/size log-ratio parametrization: (dx, dy, dw, dh).
using Offsets = std::array<double, 4>;

inline constexpr double kDefaultFgIou = 0.5;
inline constexpr double kDefaultBgIouLo = 0.1;
inline constexpr double kDefaultBgIouHi = 0.5;
inline constexpr double kSmoothL1Beta = 1.0;

enum class TargetKind : std::uint8_t { kIgnored, kBackground, kForeground };

struct ProposalTarget {
  TargetKind kind = TargetKind::kIgnored;
  std::size_t class_id = 0;  // meaningful for foreground only
  Offsets offsets{};         // meaningful for foreground only
  double weight = 0.0;       // 1 for foreground/background, 0 when ignored
};

using ProposalTargets = std::vector<ProposalTarget>;

// Matches every proposal against its max-IoU supervision box (first box wins
// ties). IoU >= fg_iou -> foreground; IoU in [bg_lo, bg_hi) -> background;
// anything else is ignored. Throws ConfigError when fg_iou < bg_hi.
ProposalTargets assign_targets(std::span<const Box> boxes, const Supervision& sup,
                               double fg_iou = kDefaultFgIou,
                               std::pair<double, double> bg_iou = {kDefaultBgIouLo,
                                                                   kDefaultBgIouHi});

// Real-valued box, used for decoding before rounding.
struct BoxF {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

Offsets encode_offsets(const Box& proposal, const Box& target);
BoxF decode_offsets_exact(const Box& proposal, const Offsets& t);

struct DecodedBox {
  Box box;
  bool valid = false;  // false when rounding/clipping left no area
};

// Decodes, rounds to integer pixels, then clips to the image.
DecodedBox decode_offsets(const Box& proposal, const Offsets& t, int height, int width);

struct SlvLoss {
  double loss = 0.0;
  double cls = 0.0;
  double loc = 0.0;
  bool vacuous = false;  // no non-ignored proposal
  ScoreMatrix grad_scores;
  std::vector<Offsets> grad_offsets;
};

// Cross-entropy over non-ignored proposals (mean) plus smooth-L1 over the 4
// offsets of foreground proposals (mean over all 4*N_fg entries). phi_s has
// C+1 rows, the last being background.
SlvLoss slv_loss(const ScoreMatrix& phi_s, std::span<const Offsets> t_s,
                 const ProposalTargets& targets);

enum class RampShape { kLinear, kOff };

struct LossWeightSchedule {
  std::int64_t ramp_length = 1;
  RampShape shape = RampShape::kLinear;
};

// min(i / ramp_length, 1) for the linear ramp; identically 0 when off.
double loss_weight(const LossWeightSchedule& schedule, std::int64_t iteration);

double total_loss(double l_w, std::span<const double> l_r, double l_s, double w_s);

}  // namespace slv
