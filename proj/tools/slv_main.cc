// slv: synthetic data generation, toy training, pseudo-label voting, labeling
// scheme comparison and PASCAL-style evaluation.
//
// Exit codes: 0 success, 1 input/config/parse error, 2 numerical error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "slv/dataset.h"
#include "slv/error.h"
#include "slv/pipeline.h"
#include "slv/synthetic.h"
#include "slv/trainer.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = "out";
};

slv::PipelineConfig load_config(const GlobalOptions& g) {
  return g.config_path.empty() ? slv::PipelineConfig{}
                               : slv::load_pipeline_config(g.config_path);
}

slv::Dataset read_dataset(const std::string& path) {
  auto loaded = slv::load_dataset(path);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  return std::move(loaded.dataset);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw slv::InputError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial likelihood voting for weakly supervised detection"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed")->expected(1);
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();

  // generate
  auto* gen = app.add_subcommand("generate", "Write a seeded synthetic dataset");
  std::optional<std::size_t> gen_images;
  std::optional<double> gen_bias, gen_jitter;
  gen->add_option("--images", gen_images, "Number of images");
  gen->add_option("--bias", gen_bias, "Discriminative-part bias in [0,1]");
  gen->add_option("--jitter", gen_jitter, "Proposal jitter (relative)");

  // train
  auto* train = app.add_subcommand("train", "Train the toy scorer with the SLV loss");
  std::string train_data;
  std::optional<std::int64_t> train_iters, train_ramp;
  std::optional<double> train_lr;
  bool no_slv = false, ramp_off = false;
  train->add_option("--data", train_data, "Dataset file")->required()->check(CLI::ExistingFile);
  train->add_option("--iterations", train_iters, "Gradient steps");
  train->add_option("--lr", train_lr, "Learning rate");
  train->add_option("--ramp-epochs", train_ramp, "Iterations until w_s reaches 1");
  train->add_flag("--ramp-off", ramp_off, "Keep w_s at zero");
  train->add_flag("--no-slv", no_slv, "Remove the SLV branch entirely");

  // vote
  auto* vote = app.add_subcommand("vote", "Vote pseudo ground truth boxes");
  std::string vote_data, vote_model, vote_preset;
  bool emit_heatmaps = false;
  vote->add_option("--data", vote_data, "Dataset file")->required()->check(CLI::ExistingFile);
  vote->add_option("--model", vote_model, "Trained model (default: in-file scores)")
      ->check(CLI::ExistingFile);
  vote->add_option("--preset", vote_preset, "Threshold preset: voc2007 or plain");
  vote->add_flag("--emit-heatmaps", emit_heatmaps, "Write one PGM per image and class");

  // compare-schemes
  auto* cmp = app.add_subcommand("compare-schemes", "Mean IoU of three labeling schemes");
  std::string cmp_data, cmp_model;
  cmp->add_option("--data", cmp_data, "Dataset file with ground truth")
      ->required()
      ->check(CLI::ExistingFile);
  cmp->add_option("--model", cmp_model, "Trained model (default: in-file scores)")
      ->check(CLI::ExistingFile);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "AP, mAP and CorLoc of a detections file");
  std::string ev_data, ev_dets;
  bool eleven_point = false;
  ev->add_option("--data", ev_data, "Dataset file with ground truth")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--detections", ev_dets, "Detections file")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_flag("--eleven-point", eleven_point, "Use 11-point interpolated AP");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    slv::PipelineConfig cfg = load_config(g);
    fs::create_directories(g.out_dir);
    const fs::path out = g.out_dir;

    if (*gen) {
      if (gen_images) cfg.synthetic.images = *gen_images;
      if (gen_bias) cfg.synthetic.bias = *gen_bias;
      if (gen_jitter) cfg.synthetic.jitter = *gen_jitter;
      const auto ds = slv::generate_synthetic(cfg.synthetic, g.seed.value_or(0));
      slv::save_dataset((out / "dataset.jsonl").string(), ds);
      std::cout << "wrote " << ds.records.size() << " records to "
                << (out / "dataset.jsonl").string() << '\n';
    } else if (*train) {
      const auto ds = read_dataset(train_data);
      if (g.seed) cfg.train.seed = *g.seed;
      if (train_iters) cfg.train.iterations = *train_iters;
      if (train_lr) cfg.train.learning_rate = *train_lr;
      if (train_ramp) cfg.train.ramp_epochs = *train_ramp;
      if (ramp_off) cfg.train.ramp_shape = slv::RampShape::kOff;
      if (no_slv) cfg.train.slv_branch = false;
      cfg.train.vote = cfg.vote;
      const auto result = slv::train_toy(ds, cfg.train);
      slv::save_model((out / "model.json").string(), result.model);
      write_text(out / "loss_trace.tsv", slv::format_trace(result.trace));
      std::vector<slv::Detection> dets;
      for (const auto& rec : ds.records) {
        auto d = slv::detect(result.model, rec, cfg.nms_iou);
        dets.insert(dets.end(), d.begin(), d.end());
      }
      std::ofstream det_out(out / "detections.jsonl", std::ios::binary);
      slv::write_detections(det_out, dets);
      if (!result.trace.empty()) {
        std::cout << "total loss " << result.trace.front().total << " -> "
                  << result.trace.back().total << " over " << result.trace.size()
                  << " iterations\n";
      }
    } else if (*vote) {
      const auto ds = read_dataset(vote_data);
      if (vote_preset == "voc2007") {
        cfg.vote = slv::VoteConfig::voc2007();
      } else if (vote_preset == "plain") {
        cfg.vote = slv::VoteConfig{};
      } else if (!vote_preset.empty()) {
        throw slv::ConfigError("unknown preset '" + vote_preset + "'");
      }
      std::optional<slv::ToyScorer> model;
      if (!vote_model.empty()) model = slv::load_model(vote_model);
      const auto run = slv::run_vote(ds, model ? &*model : nullptr, cfg.vote, g.out_dir,
                                     emit_heatmaps);
      for (const auto& r : run.records) {
        if (r.error) std::cerr << "error: " << r.image_id << ": " << *r.error << '\n';
      }
      std::cout << "voted " << run.records.size() - run.failed << " of " << run.records.size()
                << " records";
      if (emit_heatmaps) std::cout << ", " << run.heatmaps.size() << " heatmaps";
      std::cout << '\n';
      if (run.failed > 0) return kExitInput;
    } else if (*cmp) {
      const auto ds = read_dataset(cmp_data);
      std::optional<slv::ToyScorer> model;
      if (!cmp_model.empty()) model = slv::load_model(cmp_model);
      const auto results = slv::compare_schemes(ds, model ? &*model : nullptr, cfg.vote);
      const std::string report = slv::format_scheme_report(results, ds);
      write_text(out / "schemes.tsv", report);
      std::cout << report;
    } else if (*ev) {
      const auto ds = read_dataset(ev_data);
      const auto dets = slv::load_detections(ev_dets);
      const auto report = slv::evaluate(
          dets, ds, eleven_point ? slv::ApMode::kElevenPoint : slv::ApMode::kAllPoints);
      const std::string text = slv::format_report(report);
      write_text(out / "report.txt", text);
      std::cout << text;
    }
  } catch (const slv::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const slv::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return 0;
}
