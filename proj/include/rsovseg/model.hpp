#pragma once

// The full segmentation network: rotation-ensemble correlation features,
// refinement, semantic back-projection (training only) and the decoder.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rsovseg/backbones.hpp"
#include "rsovseg/backprojection.hpp"
#include "rsovseg/correlation.hpp"
#include "rsovseg/decoder.hpp"
#include "rsovseg/refinement.hpp"

namespace rsovseg {

struct ModelConfig {
  std::string encoder = "stub";
  std::uint64_t seed = 0;
  StubVisionConfig vision;
  StubTextConfig text;
  StubGuidanceConfig guidance;
  std::vector<int> angles = {0, 90, 180, 270};
  std::vector<std::string> templates = default_prompt_templates();
  int d_phi = 128;
  int fusion_kernel = 3;
  int refine_blocks = 2;
  int window_size = 4;
  int num_heads = 4;
  int mlp_ratio = 4;
  int backproj_hidden = 0;  // 0: same as the level-3 guidance width
  std::vector<int> decoder_dims = {64, 32};
  bool resize_guidance = true;

  bool operator==(const ModelConfig&) const = default;
};

class Model {
 public:
  struct Output {
    SegmentationLogits logits;
    std::vector<Tensor> raw_correlations;  // per angle, [B,H,W,N_C,P]
    CorrelationVolume initial;             // after fusion
    CorrelationVolume refined;             // after the refinement stack
    GuidancePyramid guidance;              // as consumed (constants)
    std::optional<DenseFeatureMap> reconstruction;  // back-projected guidance
  };

  /// `train_classes` fixes the back-projection input width.
  Model(const ModelConfig& config, std::vector<std::string> train_classes);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Runs the pipeline for `registry`'s vocabulary. Back-projection requires
  /// the registry to match the training vocabulary size. A supplied pyramid
  /// replaces the guidance encoder; either way guidance is a constant.
  Output forward(const ImageBatch& images, const ClassRegistry& registry,
                 bool with_backprojection,
                 const std::optional<GuidancePyramid>& guidance = std::nullopt) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return config_; }
  const std::vector<std::string>& train_classes() const { return train_classes_; }
  const RotationAngleSet& angles() const { return angles_; }

  const VisionEncoder& vision_encoder() const { return *vision_; }
  const TextEncoder& text_encoder() const { return *text_; }
  const GuidanceEncoder& guidance_encoder() const { return *guidance_; }
  const FusionParams& fusion() const { return fusion_; }
  const std::vector<RefineBlockParams>& refine_blocks() const { return refine_; }
  const BackProjectionParams& back_projection() const { return backproj_; }
  const DecoderParams& decoder() const { return decoder_; }

 private:
  ModelConfig config_;
  std::vector<std::string> train_classes_;
  RotationAngleSet angles_;
  ParamStore store_;
  std::unique_ptr<VisionEncoder> vision_;
  std::unique_ptr<TextEncoder> text_;
  std::unique_ptr<GuidanceEncoder> guidance_;
  FusionParams fusion_;
  std::vector<RefineBlockParams> refine_;
  BackProjectionParams backproj_;
  DecoderParams decoder_;
};

}  // namespace rsovseg
