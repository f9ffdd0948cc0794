// rsovseg command-line tool: train, eval, viz-corr, report and synth.

#include <CLI11.hpp>

#include <iostream>

#include "rsovseg/pipeline.hpp"

int main(int argc, char** argv) {
  using namespace rsovseg;
  CLI::App app{"Open-vocabulary remote-sensing segmentation"};
  app.require_subcommand(1);

  std::string config_path;
  TrainOverrides overrides;
  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("--config", config_path, "run config (JSON)")->required();
  train->add_option("--manifest", overrides.manifest, "dataset manifest (overrides config)");
  train->add_option("--output-dir", overrides.output_dir, "output directory");
  train->add_option("--seed", overrides.seed, "random seed");
  train->add_option("--max-iters", overrides.max_iters, "number of optimiser steps");
  train->add_option("--lr-vl", overrides.lr_vl, "learning rate of VL query/value projections");
  train->add_option("--lr-other", overrides.lr_other, "learning rate of all other modules");
  train->add_option("--batch-size", overrides.batch_size, "batch size");

  EvalOptions eval_opts;
  std::string phase = "eval";
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
  eval->add_option("--manifest", eval_opts.manifest, "dataset manifest")->required();
  eval->add_option("--split", eval_opts.split, "sample split to evaluate")->capture_default_str();
  eval->add_option("--phase", phase, "eval: all classes; train: seen classes, train masking")
      ->check(CLI::IsMember({"eval", "train"}))
      ->capture_default_str();
  eval->add_option("--output-dir", eval_opts.output_dir, "report directory")->capture_default_str();

  VizOptions viz;
  auto* viz_cmd = app.add_subcommand("viz-corr", "heatmap of the refined correlation of a class");
  viz_cmd->add_option("--checkpoint", viz.checkpoint, "checkpoint file")->required();
  viz_cmd->add_option("--image", viz.image, "input PNG (square)")->required();
  viz_cmd->add_option("--class", viz.class_name, "class name")->required();
  viz_cmd->add_option("--out", viz.out_path, "heatmap PNG")->required();
  viz_cmd->add_option("--overlay", viz.overlay_path, "optional overlay PNG");
  viz_cmd->add_option("--manifest", viz.manifest, "vocabulary and normalisation source");

  std::vector<std::filesystem::path> report_inputs;
  std::filesystem::path report_out = "average_report.txt";
  auto* report = app.add_subcommand("report", "average per-dataset reports");
  report->add_option("inputs", report_inputs, "report.txt files")->required();
  report->add_option("--out", report_out, "output report (.txt, plus .csv)")->capture_default_str();

  SyntheticSpec spec;
  std::filesystem::path synth_dir;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", synth_dir, "output directory")->required();
  synth->add_option("--seed", spec.seed)->capture_default_str();
  synth->add_option("--image-px", spec.image_px)->capture_default_str();
  synth->add_option("--classes", spec.n_classes)->capture_default_str();
  synth->add_option("--unseen", spec.n_unseen)->capture_default_str();
  synth->add_option("--images", spec.n_images)->capture_default_str();
  synth->add_option("--shapes", spec.shapes_per_image)->capture_default_str();
  synth->add_option("--noise", spec.noise)->capture_default_str();
  synth->add_option("--name", spec.name)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  if (*train) return cmd_train(config_path, overrides, std::cout, std::cerr);
  if (*eval) {
    eval_opts.phase = phase == "train" ? Phase::kTrain : Phase::kEval;
    return cmd_eval(eval_opts, std::cout, std::cerr);
  }
  if (*viz_cmd) return cmd_viz_corr(viz, std::cout, std::cerr);
  if (*report) return cmd_report(report_inputs, report_out, std::cout, std::cerr);
  if (*synth) return cmd_synth(spec, synth_dir, std::cout, std::cerr);
  return kExitInvalid;
}
