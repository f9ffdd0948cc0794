#pragma once

// Semantic back-projection: reconstructs the deepest guidance feature from the
// refined correlation volume. Training-only; its input width is bound to the
// training class count.

#include "rsovseg/backbones.hpp"
#include "rsovseg/correlation.hpp"
#include "rsovseg/nn.hpp"

namespace rsovseg {

struct BackProjectionParams {
  int num_classes = 0;  // N_C at training time
  int d_phi = 0;
  Linear fc1;  // N_C * d_phi -> hidden
  Linear fc2;  // hidden -> hidden
  Linear fc3;  // hidden -> d_g3

  static BackProjectionParams create(ParamStore& store, const std::string& name,
                                     int num_classes, int d_phi, int hidden,
                                     int guidance_dim);
};

/// Per cell: class-major concatenation of the N_C slices -> fc1 -> GELU ->
/// fc2 -> GELU -> fc3. Output layout [B, H, W, d_g3].
DenseFeatureMap back_project(const CorrelationVolume& phi, const BackProjectionParams& params);

/// mean((psi - sg(target))^2). The target never receives a gradient.
Tensor semantic_loss(const DenseFeatureMap& psi, const DenseFeatureMap& target);

}  // namespace rsovseg
