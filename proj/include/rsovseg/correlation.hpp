#pragma once

// Image-text cosine correlation maps and their fusion into the initial
// correlation feature.

#include <vector>

#include "rsovseg/backbones.hpp"
#include "rsovseg/nn.hpp"

namespace rsovseg {

/// Per-class correlation features, layout [B, N_C, H, W, C]. Keeping the class
/// axis next to the batch axis lets spatial layers treat (B * N_C) as one
/// batch with weights shared across classes.
struct CorrelationVolume {
  Tensor grid;

  int batch() const { return grid.dim(0); }
  int classes() const { return grid.dim(1); }
  int height() const { return grid.dim(2); }
  int width() const { return grid.dim(3); }
  int channels() const { return grid.dim(4); }
};

/// Raw cosine maps of one rotation, layout [B, H, W, N_C, P], entries in [-1, 1].
/// Zero-norm vectors give 0.
Tensor cosine_correlation(const DenseFeatureMap& visual, const TextEmbeddingSet& text);

/// Stacks per-angle raw maps into [B, N_C, H, W, |angles| * P], angle-major
/// then prompt index.
Tensor stack_correlations(const std::vector<Tensor>& per_angle_raw);

struct FusionParams {
  Conv2d conv;  // 3x3, |angles| * P -> d_phi

  static FusionParams create(ParamStore& store, const std::string& name,
                             int in_channels, int d_phi, int kernel = 3);
};

/// Convolution over the stacked maps, applied per class with shared weights.
/// No nonlinearity follows.
CorrelationVolume fuse_correlations(const std::vector<Tensor>& per_angle_raw,
                                    const FusionParams& params);

}  // namespace rsovseg
