#pragma once

// Declarative run configuration (JSON). Every field has a default except the
// manifest path; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>

#include "rsovseg/model.hpp"
#include "rsovseg/training.hpp"

namespace rsovseg {

struct RunConfig {
  std::string manifest;
  std::string output_dir = "runs/default";
  std::uint64_t seed = 0;
  std::string split = "train";
  ModelConfig model;
  TrainConfig train;
  int checkpoint_every = 0;  // 0: only at the end
  std::string checkpoint = "checkpoint.bin";  // relative to output_dir unless absolute

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// `require_manifest` is false for configs embedded in checkpoints.
RunConfig parse_run_config(const std::string& json_text, bool require_manifest = true);
std::string emit_run_config(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

std::string emit_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& json_text);

/// Output directory after applying the RSOVSEG_OUTPUT_ROOT override: relative
/// paths are resolved against that root when it is set.
std::filesystem::path resolve_output_dir(const std::string& output_dir);

}  // namespace rsovseg
