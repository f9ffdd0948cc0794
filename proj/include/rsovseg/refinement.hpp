#pragma once

// Correlation feature refinement: guidance-conditioned (shifted-)window
// self-attention over space, then position-free linear attention over the
// class axis conditioned on prompt-averaged text embeddings.

#include <vector>

#include "rsovseg/backbones.hpp"
#include "rsovseg/correlation.hpp"
#include "rsovseg/nn.hpp"

namespace rsovseg {

/// Pre-norm attention block whose queries and keys see [features, guidance]
/// while values see the features only, followed by a GELU MLP.
struct GuidedAttentionBlock {
  LayerNorm norm1;
  Linear query;  // 2 * d_phi -> d_phi
  Linear key;    // 2 * d_phi -> d_phi
  Linear value;  // d_phi -> d_phi
  Linear proj;   // d_phi -> d_phi
  LayerNorm norm2;
  Linear fc1;    // d_phi -> mlp_ratio * d_phi
  Linear fc2;    // mlp_ratio * d_phi -> d_phi

  static GuidedAttentionBlock create(ParamStore& store, const std::string& name,
                                     int d_phi, int mlp_ratio);
  Tensor mlp(const Tensor& x) const;
};

struct SpatialRefineParams {
  int window_size = 4;
  int shift_size = 2;
  int num_heads = 4;
  Linear guidance_proj;  // d_g3 -> d_phi
  GuidedAttentionBlock blocks[2];  // W-MSA, then SW-MSA
  Tensor relative_bias[2];         // [(2*ws-1)^2, heads] per block

  static SpatialRefineParams create(ParamStore& store, const std::string& name,
                                    int d_phi, int guidance_dim, int window_size,
                                    int num_heads, int mlp_ratio);
};

struct ClassRefineParams {
  int num_heads = 4;
  Linear text_proj;  // d_text -> d_phi
  GuidedAttentionBlock block;

  static ClassRefineParams create(ParamStore& store, const std::string& name,
                                  int d_phi, int text_dim, int num_heads,
                                  int mlp_ratio);
};

struct RefineBlockParams {
  SpatialRefineParams spatial;
  ClassRefineParams cls;
};

/// Window geometry used for a given grid. When the grid fits inside one
/// window the window shrinks to the grid and no shift is applied.
struct WindowPlan {
  int ws_h = 0;
  int ws_w = 0;
  int shift = 0;  // applied by the second block
};
WindowPlan plan_windows(int height, int width, int window_size, int shift_size);

/// Additive attention mask for shifted windows: [nWin, T, T] with 0 inside a
/// region and -100 across regions (all zeros when shift == 0).
Tensor shifted_window_mask(int height, int width, int ws_h, int ws_w, int shift);

CorrelationVolume spatial_refine(const CorrelationVolume& phi,
                                 const DenseFeatureMap& guidance3,
                                 const SpatialRefineParams& params);

CorrelationVolume class_refine(const CorrelationVolume& phi,
                               const TextEmbeddingSet& text,
                               const ClassRefineParams& params);

/// spatial_refine then class_refine for each entry of `blocks`.
CorrelationVolume refine_stack(const CorrelationVolume& phi,
                               const DenseFeatureMap& guidance3,
                               const TextEmbeddingSet& text,
                               const std::vector<RefineBlockParams>& blocks);

/// Linear-attention normaliser epsilon.
inline constexpr double kLinearAttentionEps = 1e-6;

}  // namespace rsovseg
