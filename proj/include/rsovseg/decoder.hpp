#pragma once

// Attention-aware upsampling decoder. Each stage doubles the correlation grid
// with a transposed convolution, derives spatial/channel attention from the
// class-averaged result, uses it to modulate a nearest-upsampled guidance map
// and fuses the two with a convolution. A final convolution and bilinear
// resize produce per-class logits at image resolution.

#include <vector>

#include "rsovseg/backbones.hpp"
#include "rsovseg/correlation.hpp"
#include "rsovseg/nn.hpp"

namespace rsovseg {

struct DecoderStageParams {
  TransposedConv2x2 up;     // C_in -> C_stage
  Conv2d spatial_attention;  // 7x7, 1 -> 1
  Conv2d channel_attention;  // 1x1, C_stage -> C_guidance
  Conv2d fuse;               // 3x3, C_stage + C_guidance -> C_stage
  int guidance_dim = 0;

  static DecoderStageParams create(ParamStore& store, const std::string& name, int in_channels,
                                   int stage_channels, int guidance_dim);
};

struct DecoderParams {
  std::vector<DecoderStageParams> stages;  // stage k uses guidance level (2 - k)
  Conv2d head;                             // C_last -> 1
  /// Bilinearly pre-resize guidance maps whose grid differs from the stage
  /// input grid; when false such maps are rejected.
  bool resize_guidance = true;

  static DecoderParams create(ParamStore& store, const std::string& name, int d_phi,
                              const std::vector<int>& stage_channels,
                              const std::vector<int>& guidance_dims);
};

/// Per-class logits, layout [B, S, S, N_C].
struct SegmentationLogits {
  Tensor grid;

  int batch() const { return grid.dim(0); }
  int height() const { return grid.dim(1); }
  int width() const { return grid.dim(2); }
  int classes() const { return grid.dim(3); }
};

struct StageAttention {
  Tensor spatial;  // [B, 2H, 2W, 1]
  Tensor channel;  // [B, 1, 1, C_guidance]
};

/// 2x transposed convolution applied per class.
CorrelationVolume upsample2x(const CorrelationVolume& phi, const DecoderStageParams& params);

/// Class average of an upsampled volume: [B, N_C, H, W, C] -> [B, H, W, C].
DenseFeatureMap class_average(const CorrelationVolume& phi);

StageAttention compute_attentions(const DenseFeatureMap& phi2x_classavg,
                                  const DecoderStageParams& params);

/// A_sp * up(g) + A_ch * up(g) + up(g), with up = 2x nearest neighbour.
DenseFeatureMap transform_guidance(const DenseFeatureMap& guidance, const StageAttention& att);

/// conv([phi2x(:, n), F'_g]) for every class n with shared weights.
CorrelationVolume fuse_stage(const CorrelationVolume& phi2x, const DenseFeatureMap& guidance,
                             const DecoderStageParams& params);

/// Resizes a guidance map to `grid` x `grid` (bilinear) when needed so that a
/// single 2x nearest upsampling matches the stage output.
DenseFeatureMap align_guidance(const DenseFeatureMap& g, int grid);

/// One full stage: upsample2x, attentions, guidance transform, fusion.
CorrelationVolume decoder_stage(const CorrelationVolume& phi, const DenseFeatureMap& guidance,
                                const DecoderStageParams& params, bool resize_guidance = true);

SegmentationLogits decode(const CorrelationVolume& phi, const GuidancePyramid& pyramid,
                          const DecoderParams& params, int out_px);

}  // namespace rsovseg
