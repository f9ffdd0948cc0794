#pragma once

// End-to-end entry points shared by the command-line tool and the tests.
// The cmd_* functions never throw; they report through `err` and return a
// process exit code (0 success, 2 invalid config/input, 3 numerical failure).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rsovseg/config.hpp"
#include "rsovseg/data.hpp"
#include "rsovseg/evaluation.hpp"
#include "rsovseg/model.hpp"

namespace rsovseg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitNumerical = 3;

/// Maps the currently handled exception to an exit code, printing it to `err`.
int exit_code_for_current_exception(std::ostream& err);

/// Runs the model over a split without gradients. The eval phase scores the
/// full registry against untouched masks; the train phase scores the seen
/// vocabulary against train-phase masks, as seen during training.
MetricsReport evaluate(const Model& model, const DatasetManifest& manifest,
                       const std::string& split, Phase phase, int batch_size = 4);

/// Normalised ([0,1]) magnitude of the refined correlation for one class,
/// bilinearly resized to the image. Row-major, image_side x image_side.
std::vector<double> correlation_heatmap(const Model& model, const ImageBatch& image,
                                        const ClassRegistry& registry, int class_index);

struct TrainOverrides {
  std::optional<std::string> manifest;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iters;
  std::optional<double> lr_vl;
  std::optional<double> lr_other;
  std::optional<int> batch_size;
};

int cmd_train(const std::filesystem::path& config_path, const TrainOverrides& overrides,
              std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  std::string split = "val";
  Phase phase = Phase::kEval;
  std::string output_dir = "eval";
};

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);

struct VizOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::string class_name;
  std::filesystem::path out_path;
  std::optional<std::filesystem::path> overlay_path;
  std::optional<std::filesystem::path> manifest;  // vocabulary and normalisation
};

int cmd_viz_corr(const VizOptions& options, std::ostream& out, std::ostream& err);

/// Averages key-value reports (one per dataset) into `out_path` (.txt) and a
/// sibling .csv.
int cmd_report(const std::vector<std::filesystem::path>& inputs,
               const std::filesystem::path& out_path, std::ostream& out, std::ostream& err);

int cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& dir, std::ostream& out,
              std::ostream& err);

}  // namespace rsovseg
