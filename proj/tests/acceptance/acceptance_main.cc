// Prints one PASS/FAIL line per acceptance criterion; exits non-zero when
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "oracles.h"
#include "slv/dataset.h"
#include "slv/eval.h"
#include "slv/mil.h"
#include "slv/pipeline.h"
#include "slv/supervision.h"
#include "slv/synthetic.h"
#include "slv/trainer.h"
#include "slv/voting.h"

namespace {

using Clock = std::chrono::steady_clock;
using namespace slv;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  if (!ok) ++failures;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

void oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> size(1, 64), count(0, 50);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = size(rng), w = size(rng), n = count(rng);
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int r = 0; r < n; ++r) {
      boxes.push_back(testing::random_box(rng, h, w));
      scores.push_back(u(rng));
    }
    const auto idx = iota_indices(boxes.size());
    const auto fast = accumulate_fast(idx, boxes, scores, h, w);
    const auto naive = accumulate_naive(idx, boxes, scores, h, w);
    for (std::size_t i = 0; i < fast.values().size(); ++i) {
      worst = std::max(worst, std::abs(fast.values()[i] - naive.values()[i]));
    }
  }
  const double t = seconds_since(start);
  report("oracle-equivalence", worst <= 1e-9 && t < 5.0,
         fmt("200 instances, max |fast-naive| = %.3g, %.3f s", worst, t));
}

ScoreMatrix random_matrix(std::mt19937& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> n(0.0, 1.5);
  ScoreMatrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

ScoreMatrix random_stochastic(std::mt19937& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  ScoreMatrix m(rows, cols, 0.0, Normalization::kOverClasses);
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += (m(r, c) = u(rng));
    for (std::size_t r = 0; r < rows; ++r) m(r, c) /= s;
  }
  return m;
}

// NaN-propagating running maximum.
void keep_worst(double& worst, double value) {
  if (!(value <= worst)) worst = value;
}

void gradient_suite() {
  const auto start = Clock::now();
  std::mt19937 rng(77);
  std::uniform_int_distribution<int> classes(1, 4), props(1, 8);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0), off(-1.0, 1.0);
  double worst_mil = 0.0, worst_ref = 0.0, worst_slv = 0.0;

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nc = classes(rng), nr = props(rng);
    std::vector<int> y(nc);
    for (auto& v : y) v = coin(rng);
    y[rng() % nc] = 1;
    const ImageLabel label(y);

    // Image-level loss, chained through both softmax streams to the logits.
    const ScoreMatrix xc = random_matrix(rng, nc, nr), xd = random_matrix(rng, nc, nr);
    const auto sc = softmax_over_classes(xc);
    const auto sd = softmax_over_proposals(xd);
    const auto lw = mil_loss(image_scores(wsddn_scores(sc, sd)), label);
    ScoreMatrix gc(nc, nr), gd(nc, nr);
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t r = 0; r < nr; ++r) {
        gc(c, r) = lw.grad[c] * sd(c, r);
        gd(c, r) = lw.grad[c] * sc(c, r);
      }
    const auto dxc = softmax_over_classes_backward(sc, gc);
    const auto dxd = softmax_over_proposals_backward(sd, gd);
    std::vector<double> analytic(dxc.values().begin(), dxc.values().end());
    analytic.insert(analytic.end(), dxd.values().begin(), dxd.values().end());
    std::vector<double> x(xc.values().begin(), xc.values().end());
    x.insert(x.end(), xd.values().begin(), xd.values().end());
    const auto numeric = testing::central_differences(
        [&](std::span<const double> v) {
          ScoreMatrix a(nc, nr, {v.begin(), v.begin() + nc * nr});
          ScoreMatrix b(nc, nr, {v.begin() + nc * nr, v.end()});
          return mil_loss(image_scores(wsddn_scores(softmax_over_classes(a),
                                                    softmax_over_proposals(b))),
                          label)
              .loss;
        },
        x);
    keep_worst(worst_mil, testing::relative_error(analytic, numeric));

    // Refinement loss w.r.t. the refined scores.
    std::vector<Box> boxes;
    for (std::size_t r = 0; r < nr; ++r) boxes.push_back(testing::random_box(rng, 24, 24));
    ScoreMatrix teacher(nc, nr);
    for (double& v : teacher.values()) v = u(rng);
    const auto clusters = build_clusters(teacher, boxes, label, 0.3);
    const ScoreMatrix phi = random_stochastic(rng, nc + 1, nr);
    const auto lr = refinement_loss(phi, clusters);
    const auto num_r = testing::central_differences(
        [&](std::span<const double> v) {
          return refinement_loss(ScoreMatrix(nc + 1, nr, {v.begin(), v.end()}), clusters).loss;
        },
        {phi.values().begin(), phi.values().end()});
    keep_worst(worst_ref, testing::relative_error(lr.grad.values(), num_r));

    // SLV loss w.r.t. scores and offsets, kept clear of the smooth-L1 kink.
    ProposalTargets targets(nr);
    std::vector<Offsets> pred(nr);
    for (std::size_t r = 0; r < nr; ++r) {
      const int kind = static_cast<int>(rng() % 3);
      for (auto& v : pred[r]) v = off(rng);
      if (kind == 2) {
        targets[r] = {TargetKind::kForeground, rng() % nc, {}, 1.0};
        for (int k = 0; k < 4; ++k) {
          if (std::abs(std::abs(pred[r][k]) - 1.0) < 0.05) pred[r][k] += 0.1;
          targets[r].offsets[k] = 0.0;
        }
      } else if (kind == 1) {
        targets[r] = {TargetKind::kBackground, 0, {}, 1.0};
      }
    }
    const ScoreMatrix phi_s = random_stochastic(rng, nc + 1, nr);
    const auto ls = slv_loss(phi_s, pred, targets);
    std::vector<double> a_s(ls.grad_scores.values().begin(), ls.grad_scores.values().end());
    std::vector<double> xs(phi_s.values().begin(), phi_s.values().end());
    for (std::size_t r = 0; r < nr; ++r)
      for (int k = 0; k < 4; ++k) {
        a_s.push_back(ls.grad_offsets[r][k]);
        xs.push_back(pred[r][k]);
      }
    const auto num_s = testing::central_differences(
        [&](std::span<const double> v) {
          ScoreMatrix p(nc + 1, nr, {v.begin(), v.begin() + (nc + 1) * nr});
          std::vector<Offsets> t(nr);
          for (std::size_t r = 0; r < nr; ++r)
            for (int k = 0; k < 4; ++k) t[r][k] = v[(nc + 1) * nr + 4 * r + k];
          return slv_loss(p, t, targets).loss;
        },
        xs);
    keep_worst(worst_slv, testing::relative_error(a_s, num_s));
  }
  const double t = seconds_since(start);
  double worst = worst_mil;
  keep_worst(worst, worst_ref);
  keep_worst(worst, worst_slv);
  report("gradient-suite", worst < 1e-5 && t < 10.0,
         fmt("100 instances, max rel err image %.2g / refinement %.2g / slv %.2g, %.3f s",
             worst_mil, worst_ref, worst_slv, t));
}

void single_voter() {
  const Box box{13, 7, 41, 29};
  const std::vector<Box> boxes = {box, {0, 0, 5, 5}};
  const ScoreMatrix phi(1, 2, {0.73, 0.0004});
  const auto sup = generate_supervision(phi, boxes, ImageLabel({1}), 48, 64, VoteConfig::voc2007());
  const bool ok = sup.classes.size() == 1 && sup.classes[0].class_id == 0 &&
                  sup.classes[0].boxes == std::vector<Box>{box};
  const Box got = sup.num_boxes() == 1 ? sup.classes[0].boxes[0] : Box{};
  report("single-voter", ok,
         fmt("voted (%d,%d,%d,%d) for proposal (13,7,41,29)", got.x0, got.y0, got.x1, got.y1));
}

// Measured once on this exact run (seed 7, 50 images, bias 0.9, in-file
// scores, voc2007 preset; GCC 11.4, x86-64, 2026-10-19) and frozen:
// slv 0.853348 vs conventional 0.362217. Regenerate only if the synthetic
// generator changes on purpose.
constexpr double kGoldenSchemeGap = 0.49113015681703714;
constexpr double kSchemeGapTolerance = 1e-9;

void scheme_comparison() {
  const auto start = Clock::now();
  SyntheticSceneConfig cfg;
  cfg.images = 50;
  cfg.bias = 0.9;
  const Dataset ds = generate_synthetic(cfg, 7);
  const auto results = compare_schemes(ds, nullptr, VoteConfig::voc2007());
  double slv_iou = 0.0, conv_iou = 0.0;
  for (const auto& r : results) {
    if (r.scheme == "slv") slv_iou = r.mean_iou();
    if (r.scheme == "conventional") conv_iou = r.mean_iou();
  }
  const double gap = slv_iou - conv_iou;
  const double t = seconds_since(start);
  const bool ok = gap >= 0.05 && std::abs(gap - kGoldenSchemeGap) < kSchemeGapTolerance && t < 30.0;
  report("scheme-comparison", ok,
         fmt("slv %.6f - conventional %.6f = %.17g (golden %.17g), %.3f s", slv_iou, conv_iou, gap,
             kGoldenSchemeGap, t));
}

void loss_weight_degeneracy() {
  SyntheticSceneConfig scfg;
  scfg.images = 8;
  const Dataset ds = generate_synthetic(scfg, 11);
  TrainConfig off;
  off.iterations = 40;
  off.seed = 5;
  off.ramp_shape = RampShape::kOff;
  TrainConfig mil_only = off;
  mil_only.ramp_shape = RampShape::kLinear;
  mil_only.slv_branch = false;
  const auto a = train_toy(ds, off);
  const auto b = train_toy(ds, mil_only);
  bool identical = a.trace.size() == b.trace.size();
  for (std::size_t i = 0; identical && i < a.trace.size(); ++i) {
    identical = a.trace[i].total == b.trace[i].total && a.trace[i].l_w == b.trace[i].l_w &&
                a.trace[i].l_r == b.trace[i].l_r && a.trace[i].w_s == 0.0;
  }
  const LossWeightSchedule sched{off.ramp_epochs, RampShape::kLinear};
  const double w0 = loss_weight(sched, 0), w_end = loss_weight(sched, sched.ramp_length);
  report("loss-weight-degeneracy", identical && w0 == 0.0 && w_end == 1.0,
         fmt("%zu-iteration trace %s; w_s(0) = %g, w_s(%lld) = %g", a.trace.size(),
             identical ? "bit-identical" : "differs", w0,
             static_cast<long long>(sched.ramp_length), w_end));
}

void metric_oracle() {
  const std::string dir = SLV_FIXTURE_DIR;
  const Dataset ds = load_dataset(dir + "/eval_dataset.jsonl").dataset;
  const auto dets = load_detections(dir + "/eval_detections.jsonl");
  const auto all = evaluate(dets, ds);
  const auto eleven = evaluate(dets, ds, ApMode::kElevenPoint);

  // The 0.85 cat detection on img2 sits at IoU exactly 0.5.
  std::vector<Detection> cat;
  for (const auto& d : dets)
    if (d.class_id == 0) cat.push_back(d);
  const auto tp = match_detections(cat, ds.ground_truth());
  const bool boundary_fp = iou(cat[1].box, {50, 50, 90, 90}) == 0.5 && !tp[1];

  const bool ok = all.classes.size() == 2 && std::abs(all.classes[0].ap - 5.0 / 9.0) < 1e-12 &&
                  std::abs(all.classes[1].ap - 2.0 / 3.0) < 1e-12 &&
                  std::abs(eleven.classes[0].ap - 6.0 / 11.0) < 1e-12 &&
                  std::abs(eleven.classes[1].ap - 2.0 / 3.0) < 1e-12 &&
                  all.classes[0].corloc == 0.5 && all.classes[1].corloc == 0.5 &&
                  std::abs(all.map - 11.0 / 18.0) < 1e-12 && boundary_fp;
  report("metric-oracle", ok,
         fmt("AP cat %.6f dog %.6f, CorLoc %.3f/%.3f, mAP %.6f, IoU-0.5 detection %s",
             all.classes[0].ap, all.classes[1].ap, all.classes[0].corloc.value_or(-1),
             all.classes[1].corloc.value_or(-1), all.map, boundary_fp ? "FP" : "TP"));
}

void defaults_audit() {
  const auto cfg = VoteConfig::voc2007();
  const auto& names = voc_class_names();
  const auto person = static_cast<std::size_t>(
      std::find(names.begin(), names.end(), "person") - names.begin());
  bool others = true;
  for (std::size_t c = 0; c < names.size(); ++c)
    if (c != person) others = others && cfg.binarize_threshold(c) == 0.5;
  const bool ok = cfg.t_score == 0.001 && cfg.t_b_default == 0.5 && person == 14 &&
                  cfg.binarize_threshold(person) == 0.2 && cfg.t_b_per_class.size() == 1 && others;
  report("defaults-audit", ok,
         fmt("t_score %g, t_b %g, person (index %zu) %g", cfg.t_score, cfg.t_b_default, person,
             cfg.binarize_threshold(person)));
}

void performance() {
  const int size = 1200;
  const std::size_t count = 2000;
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Box> boxes;
  std::vector<double> scores;
  for (std::size_t r = 0; r < count; ++r) {
    boxes.push_back(testing::random_box(rng, size, size));
    scores.push_back(u(rng));
  }
  const auto idx = iota_indices(count);
  double fast_best = 1e9;
  double checksum = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const auto start = Clock::now();
    const auto map = accumulate_fast(idx, boxes, scores, size, size);
    fast_best = std::min(fast_best, seconds_since(start));
    checksum += map.at(size / 2, size / 2);
  }
  const auto start = Clock::now();
  const auto naive = accumulate_naive(idx, boxes, scores, size, size);
  const double naive_t = seconds_since(start);
  checksum += naive.at(size / 2, size / 2);
  report("performance", fast_best < 0.050,
         fmt("fast %.2f ms (best of 5), naive %.1f ms, speedup %.0fx [checksum %.3f]",
             fast_best * 1e3, naive_t * 1e3, naive_t / fast_best, checksum));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria = {
      oracle_equivalence, gradient_suite, single_voter,   scheme_comparison,
      loss_weight_degeneracy, metric_oracle, defaults_audit, performance};
  for (const auto& run : criteria) {
    try {
      run();
    } catch (const std::exception& e) {
      report("criterion", false, std::string("threw: ") + e.what());
    }
  }
  return failures == 0 ? 0 : 1;
}
