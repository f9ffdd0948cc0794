#pragma once

// Encoder interfaces (vision-language image/text encoders and the guidance
// encoder), the rotation ensemble, prompt construction and deterministic
// stub encoders used for desk-scale runs and tests.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rsovseg/nn.hpp"
#include "rsovseg/tensor.hpp"

namespace rsovseg {

/// Batch of square RGB images, layout [B, S, S, 3], already normalised.
struct ImageBatch {
  Tensor pixels;

  int batch() const { return pixels.dim(0); }
  int side() const { return pixels.dim(1); }
};

/// Spatially indexed features, layout [B, H, W, C].
struct DenseFeatureMap {
  Tensor grid;
  int stride = 1;  // input pixels per cell

  int batch() const { return grid.dim(0); }
  int height() const { return grid.dim(1); }
  int width() const { return grid.dim(2); }
  int channels() const { return grid.dim(3); }
};

/// Guidance features from three encoder depths, shallow to deep.
struct GuidancePyramid {
  DenseFeatureMap level1;
  DenseFeatureMap level2;
  DenseFeatureMap level3;
};

/// Text embeddings for N_C classes x P prompts.
struct TextEmbeddingSet {
  Tensor per_prompt;       // [N_C, P, d]
  Tensor prompt_averaged;  // [N_C, d]

  int classes() const { return per_prompt.dim(0); }
  int prompts() const { return per_prompt.dim(1); }
  int dim() const { return per_prompt.dim(2); }
};

inline constexpr const char* kClassPlaceholder = "[CLS]";

/// Remote-sensing prompt templates used by default.
const std::vector<std::string>& default_prompt_templates();

/// Ordered class vocabulary with seen/unseen flags and prompt templates.
struct ClassRegistry {
  std::vector<std::string> names;
  std::vector<bool> seen;
  std::vector<std::string> templates = default_prompt_templates();

  int size() const { return static_cast<int>(names.size()); }
  /// Throws InvalidArgument when a structural invariant is violated.
  void validate() const;
  /// Index of `name`, or -1.
  int index_of(const std::string& name) const;
  std::vector<int> seen_indices() const;
  std::vector<int> unseen_indices() const;
};

/// Rotation angles (degrees) of the test-time ensemble.
class RotationAngleSet {
 public:
  RotationAngleSet() : angles_{0, 90, 180, 270} {}
  explicit RotationAngleSet(std::vector<int> angles);

  const std::vector<int>& angles() const { return angles_; }
  int size() const { return static_cast<int>(angles_.size()); }

 private:
  std::vector<int> angles_;
};

// --- encoder interfaces ------------------------------------------------------

class VisionEncoder {
 public:
  virtual ~VisionEncoder() = default;
  /// [B, S, S, 3] -> [B, H, W, d]
  virtual DenseFeatureMap encode(const ImageBatch& images) const = 0;
  virtual int dim() const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  /// One d-vector per prompt: [n, d].
  virtual Tensor encode(const std::vector<std::string>& prompts) const = 0;
  virtual int dim() const = 0;
};

class GuidanceEncoder {
 public:
  virtual ~GuidanceEncoder() = default;
  /// Intermediate feature taps, shallow to deep.
  virtual std::vector<DenseFeatureMap> taps(const ImageBatch& images) const = 0;
  virtual std::vector<int> dims() const = 0;
};

// --- operations ---------------------------------------------------------------

/// Counter-clockwise rotation of the spatial grid of a [B, H, W, C] tensor.
Tensor rotate_map(const Tensor& grid, int angle_deg);
DenseFeatureMap rotate_map(const DenseFeatureMap& m, int angle_deg);
ImageBatch rotate_map(const ImageBatch& image, int angle_deg);

/// One dense embedding per angle, each rotated back to the input orientation.
std::vector<DenseFeatureMap> encode_image_ensemble(const ImageBatch& image,
                                                   const RotationAngleSet& angles,
                                                   const VisionEncoder& encoder);

/// N_C x P prompts, class-major.
std::vector<std::string> build_prompts(const ClassRegistry& registry);

TextEmbeddingSet encode_text(const std::vector<std::string>& prompts,
                             const TextEncoder& encoder,
                             const ClassRegistry& registry);

/// Picks the first, second and last tap and bilinearly resizes level3 to
/// `vl_grid` x `vl_grid` when it differs (vl_grid <= 0 keeps it as is). The
/// result carries no gradient path back into the encoder: the guidance
/// encoder is frozen and every downstream use sees constants.
GuidancePyramid encode_guidance(const ImageBatch& image,
                                const GuidanceEncoder& encoder,
                                int vl_grid = 0);

// --- stub encoders -------------------------------------------------------------

struct StubVisionConfig {
  int patch = 8;
  int dim = 32;
  /// Adds a single global self-attention layer whose query/value
  /// projections are trainable (fine-tuned at the VL learning rate).
  bool attention = true;
  bool operator==(const StubVisionConfig&) const = default;
};

struct StubTextConfig {
  int dim = 32;
  std::uint64_t seed = 7;
  bool attention = true;
  bool operator==(const StubTextConfig&) const = default;
};

struct StubGuidanceConfig {
  std::vector<int> strides = {4, 8, 8};
  std::vector<int> dims = {16, 32, 32};
  bool operator==(const StubGuidanceConfig&) const = default;
};

/// Patchify + fixed random linear projection, optionally followed by one
/// position-free global attention layer.
class StubVisionEncoder final : public VisionEncoder {
 public:
  StubVisionEncoder(ParamStore& store, const StubVisionConfig& config);
  DenseFeatureMap encode(const ImageBatch& images) const override;
  int dim() const override { return config_.dim; }
  const StubVisionConfig& config() const { return config_; }

 private:
  StubVisionConfig config_;
  Tensor patch_proj_;
  Linear q_, k_, v_, out_;
};

/// Hashes the full prompt (and each word) to pseudo-random token vectors.
/// Without attention the output is the unit-norm prompt-hash vector; with
/// attention the prompt token attends over the word tokens first.
class StubTextEncoder final : public TextEncoder {
 public:
  StubTextEncoder(ParamStore& store, const StubTextConfig& config);
  Tensor encode(const std::vector<std::string>& prompts) const override;
  int dim() const override { return config_.dim; }

 private:
  std::vector<double> token_vector(const std::string& token) const;

  StubTextConfig config_;
  Linear q_, k_, v_, out_;
};

/// One patchify + projection + tanh per level.
class StubGuidanceEncoder final : public GuidanceEncoder {
 public:
  StubGuidanceEncoder(ParamStore& store, const StubGuidanceConfig& config);
  std::vector<DenseFeatureMap> taps(const ImageBatch& images) const override;
  std::vector<int> dims() const override { return config_.dims; }

 private:
  StubGuidanceConfig config_;
  std::vector<Tensor> projections_;
};

}  // namespace rsovseg
