#include "rsovseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "rsovseg/checkpoint.hpp"
#include "rsovseg/errors.hpp"
#include "rsovseg/image_io.hpp"
#include "rsovseg/ops.hpp"
#include "rsovseg/spatial.hpp"
#include "rsovseg/training.hpp"

namespace rsovseg {

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const DataError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

MetricsReport evaluate(const Model& model, const DatasetManifest& manifest,
                       const std::string& split, Phase phase, int batch_size) {
  const ClassRegistry full = manifest.registry();
  const ClassRegistry registry = phase == Phase::kTrain ? training_registry(full) : full;
  const std::vector<TrainSample> samples = load_split(manifest, split, phase);
  const auto ignore = static_cast<std::uint8_t>(manifest.ignore_index);

  NoGradGuard no_grad;
  ConfusionAccumulator acc(registry.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const TrainBatch batch = make_batch(samples, idx);
    const Model::Output out = model.forward(batch.images, registry, false);
    const auto preds = predict(out.logits);
    for (std::size_t k = 0; k < preds.size(); ++k) acc.accumulate(preds[k], batch.masks[k], ignore);
  }
  return split_miou(acc.per_class_iou(), registry);
}

std::vector<double> correlation_heatmap(const Model& model, const ImageBatch& image,
                                        const ClassRegistry& registry, int class_index) {
  if (class_index < 0 || class_index >= registry.size()) {
    throw InvalidArgument("heatmap: class index out of range");
  }
  NoGradGuard no_grad;
  const Model::Output out = model.forward(image, registry, false);
  const CorrelationVolume& phi = out.refined;
  const int h = phi.height(), w = phi.width(), d = phi.channels();
  const auto v = phi.grid.data();
  std::vector<double> mag(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t base = ((static_cast<std::size_t>(class_index) * h + y) * w + x) * d;
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += v[base + c] * v[base + c];
      mag[static_cast<std::size_t>(y) * w + x] = std::sqrt(s);
    }
  }
  const int side = image.side();
  Tensor up = spatial::resize_bilinear(Tensor::from({1, h, w, 1}, std::move(mag)), side, side);
  std::vector<double> heat(up.data().begin(), up.data().end());
  const auto [lo, hi] = std::minmax_element(heat.begin(), heat.end());
  const double min = *lo, range = *hi - *lo;
  for (double& x : heat) x = range > 0.0 ? (x - min) / range : 0.0;
  return heat;
}

namespace {

std::filesystem::path under(const std::filesystem::path& dir, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : dir / path;
}

std::string format_loss_line(int iter, const LossRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g\n", iter, r.bce, r.sem, r.total);
  return buf;
}

// Piecewise-linear blue -> cyan -> yellow -> red ramp.
std::array<std::uint8_t, 3> colour_map(double t) {
  static constexpr double stops[4][3] = {{0, 0, 143}, {0, 255, 255}, {255, 255, 0}, {200, 0, 0}};
  t = std::clamp(t, 0.0, 1.0) * 3.0;
  const int i = std::min(2, static_cast<int>(t));
  const double f = t - i;
  std::array<std::uint8_t, 3> rgb;
  for (int k = 0; k < 3; ++k) {
    rgb[k] = static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  }
  return rgb;
}

}  // namespace

int cmd_train(const std::filesystem::path& config_path, const TrainOverrides& overrides,
              std::ostream& out, std::ostream& err) {
  std::string log;
  std::filesystem::path out_dir;
  try {
    RunConfig config = load_run_config(config_path);
    if (overrides.manifest) config.manifest = *overrides.manifest;
    if (overrides.output_dir) config.output_dir = *overrides.output_dir;
    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.max_iters) config.train.max_iters = *overrides.max_iters;
    if (overrides.lr_vl) config.train.lr_vl = *overrides.lr_vl;
    if (overrides.lr_other) config.train.lr_other = *overrides.lr_other;
    if (overrides.batch_size) config.train.batch_size = *overrides.batch_size;
    config.validate();

    std::filesystem::path manifest_path(config.manifest);
    if (manifest_path.is_relative() && !std::filesystem::exists(manifest_path)) {
      manifest_path = config_path.parent_path() / manifest_path;
    }
    const DatasetManifest manifest = load_manifest(manifest_path);
    config.model.seed = config.seed;
    config.model.templates = manifest.templates;
    const int iterations =
        config.train.max_iters > 0 ? config.train.max_iters : default_max_iters(manifest);
    config.train.max_iters = iterations;

    const ClassRegistry registry = training_registry(manifest.registry());
    if (registry.size() == 0) throw DataError("manifest has no seen classes to train on");
    const std::vector<TrainSample> samples = load_split(manifest, config.split, Phase::kTrain);
    Model model(config.model, registry.names);

    out_dir = resolve_output_dir(config.output_dir);
    const std::filesystem::path ckpt = under(out_dir, config.checkpoint);
    out << "training " << iterations << " iterations on " << samples.size() << " tiles, "
        << registry.size() << " seen classes, " << model.params().total_count()
        << " parameters\n";
    train(model, registry, samples, config.train, iterations, config.seed,
          [&](int it, const LossRecord& r) {
            log += format_loss_line(it, r);
            if (r.all_ignored) err << "warning: iteration " << it << " has no labeled pixels\n";
            if (config.checkpoint_every > 0 && it % config.checkpoint_every == 0 &&
                it != iterations) {
              save_checkpoint(ckpt, model, config, it);
            }
          });
    write_file_atomic(out_dir / "loss_log.txt", log);
    save_checkpoint(ckpt, model, config, iterations);
    write_file_atomic(out_dir / "config.json", emit_run_config(config));
    out << "wrote " << ckpt.string() << " and " << (out_dir / "loss_log.txt").string() << "\n";
    return kExitOk;
  } catch (...) {
    const int code = exit_code_for_current_exception(err);
    if (code == kExitNumerical && !out_dir.empty()) {
      try {
        write_file_atomic(out_dir / "loss_log.txt", log);
      } catch (...) {
      }
      err << "training aborted; loss log up to the failing step kept\n";
    }
    return code;
  }
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const Checkpoint ck = load_checkpoint(options.checkpoint);
    const DatasetManifest manifest = load_manifest(options.manifest);
    if (manifest.templates.size() != ck.model->config().templates.size()) {
      throw DataError("manifest has " + std::to_string(manifest.templates.size()) +
                      " prompt templates, checkpoint was trained with " +
                      std::to_string(ck.model->config().templates.size()));
    }
    const MetricsReport report = evaluate(*ck.model, manifest, options.split, options.phase);
    const std::filesystem::path dir = resolve_output_dir(options.output_dir);
    write_file_atomic(dir / "report.txt", report_to_text(report));
    write_file_atomic(dir / "report.csv", report_to_csv(report));
    out << report_to_text(report);
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

int cmd_viz_corr(const VizOptions& options, std::ostream& out, std::ostream& err) {
  try {
    const Checkpoint ck = load_checkpoint(options.checkpoint);
    ClassRegistry registry;
    Normalization norm;
    if (options.manifest) {
      const DatasetManifest manifest = load_manifest(*options.manifest);
      registry = manifest.registry();
      norm = manifest.normalization;
    } else {
      registry.names = ck.model->train_classes();
      registry.seen.assign(registry.names.size(), true);
    }
    registry.templates = ck.model->config().templates;
    const int cls = registry.index_of(options.class_name);
    if (cls < 0) {
      std::string known;
      for (const auto& n : registry.names) known += (known.empty() ? "" : ", ") + n;
      throw InvalidArgument("unknown class \"" + options.class_name + "\"; known classes: " + known);
    }
    const Raster rgb = read_png(options.image, 3);
    if (rgb.height != rgb.width) {
      throw DataError("viz-corr: image must be square, got " + std::to_string(rgb.width) + "x" +
                      std::to_string(rgb.height));
    }
    ImageBatch batch{ops::reshape(normalize_image(rgb, norm), {1, rgb.height, rgb.width, 3})};
    const std::vector<double> heat = correlation_heatmap(*ck.model, batch, registry, cls);

    Raster img{rgb.height, rgb.width, 3, std::vector<std::uint8_t>(rgb.pixels.size())};
    for (std::size_t p = 0; p < heat.size(); ++p) {
      const auto c = colour_map(heat[p]);
      for (int k = 0; k < 3; ++k) img.pixels[p * 3 + k] = c[k];
    }
    write_png(options.out_path, img);
    if (options.overlay_path) {
      Raster overlay = img;
      for (std::size_t i = 0; i < overlay.pixels.size(); ++i) {
        overlay.pixels[i] =
            static_cast<std::uint8_t>((static_cast<int>(img.pixels[i]) + rgb.pixels[i] + 1) / 2);
      }
      write_png(*options.overlay_path, overlay);
    }
    out << "wrote " << options.out_path.string() << "\n";
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

int cmd_report(const std::vector<std::filesystem::path>& inputs,
               const std::filesystem::path& out_path, std::ostream& out, std::ostream& err) {
  try {
    if (inputs.empty()) throw InvalidArgument("report: no input reports");
    std::vector<MetricsReport> reports;
    for (const auto& p : inputs) reports.push_back(parse_report_text(read_file(p)));
    const MetricsReport avg = average_reports(reports);
    std::filesystem::path csv = out_path;
    csv.replace_extension(".csv");
    write_file_atomic(out_path, report_to_text(avg));
    write_file_atomic(csv, report_to_csv(avg));
    out << report_to_text(avg);
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

int cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& dir, std::ostream& out,
              std::ostream& err) {
  try {
    const DatasetManifest m = generate_synthetic(spec, dir);
    out << "wrote " << m.samples.size() << " samples to " << dir.string() << "\n";
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

}  // namespace rsovseg
