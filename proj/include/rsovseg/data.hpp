#pragma once

// Dataset manifests, sample loading with seen/unseen handling, tiling and a
// deterministic synthetic dataset generator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rsovseg/backbones.hpp"
#include "rsovseg/image_io.hpp"
#include "rsovseg/labels.hpp"
#include "rsovseg/tensor.hpp"
#include "rsovseg/training.hpp"

namespace rsovseg {

struct ClassEntry {
  std::string name;
  bool seen = true;
  bool operator==(const ClassEntry&) const = default;
};

struct SampleRecord {
  std::string image;  // relative to the manifest directory unless absolute
  std::string mask;
  std::string split = "train";
  bool operator==(const SampleRecord&) const = default;
};

struct Normalization {
  std::array<double, 3> mean = {0.485, 0.456, 0.406};
  std::array<double, 3> std = {0.229, 0.224, 0.225};
  bool operator==(const Normalization&) const = default;
};

struct DatasetManifest {
  std::string name;
  std::string preset;  // optional: isaid, dlrsd or oem
  std::vector<ClassEntry> classes;
  std::vector<std::string> templates = default_prompt_templates();
  int ignore_index = kIgnoreIndex;
  int tile_px = 256;
  Normalization normalization;
  std::vector<SampleRecord> samples;
  std::filesystem::path root;  // not serialised

  void validate() const;
  ClassRegistry registry() const;
  bool operator==(const DatasetManifest& o) const {
    return name == o.name && preset == o.preset && classes == o.classes &&
           templates == o.templates && ignore_index == o.ignore_index && tile_px == o.tile_px &&
           normalization == o.normalization && samples == o.samples;
  }
};

/// Built-in seen/unseen splits; seen classes first.
std::vector<ClassEntry> preset_classes(const std::string& preset);
/// Default training length for a dataset (by preset, then name).
int default_max_iters(const DatasetManifest& manifest);

DatasetManifest parse_manifest(const std::string& json_text,
                               const std::filesystem::path& root = {});
std::string emit_manifest(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

enum class Phase { kTrain, kEval };

struct Sample {
  Tensor image;  // [H, W, 3], normalised
  GroundTruthMask mask;
};

/// Train phase remaps unseen-class pixels to ignore; eval leaves masks as is.
Sample load_sample(const DatasetManifest& manifest, std::size_t index, Phase phase);

/// Train-phase masking for a class registry (idempotent).
void mask_unseen(GroundTruthMask& mask, const ClassRegistry& registry,
                 std::uint8_t ignore_index = kIgnoreIndex);

/// Registry of the seen classes only, in their original order.
ClassRegistry training_registry(const ClassRegistry& full);
/// Maps a train-phase mask from full class indices to training indices.
GroundTruthMask to_training_labels(const GroundTruthMask& mask, const ClassRegistry& full,
                                   std::uint8_t ignore_index = kIgnoreIndex);

struct Tile {
  int row = 0;  // tile grid position
  int col = 0;
  Tensor image;
  GroundTruthMask mask;
};

struct TilingResult {
  std::vector<Tile> tiles;
  std::string rejected;  // reason, empty on success
  bool ok() const { return rejected.empty(); }
};

/// Non-overlapping tile_px tiles; right/bottom remainders are dropped.
TilingResult tile(const Tensor& image, const GroundTruthMask& mask, int tile_px);

/// Loads, tiles and (train phase) remaps every sample of `split`.
std::vector<TrainSample> load_split(const DatasetManifest& manifest, const std::string& split,
                                    Phase phase);

Tensor normalize_image(const Raster& rgb, const Normalization& norm);

struct SyntheticSpec {
  std::uint64_t seed = 0;
  int image_px = 64;
  int n_classes = 4;
  int n_images = 8;
  int shapes_per_image = 3;
  double noise = 0.02;  // per-pixel jitter amplitude, fraction of full scale
  int n_unseen = 1;
  int grid = 8;  // shape edges snap to this grid
  std::string name = "synthetic";
};

/// Class names available to the generator.
const std::vector<std::string>& synthetic_class_pool();

/// Writes images/, masks/ and manifest.json under `dir` and returns the
/// manifest. Class 0 is a textured background; the last n_unseen classes
/// are unseen; every class appears in at least one mask.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace rsovseg
