#include "rsovseg/correlation.hpp"

#include "rsovseg/errors.hpp"
#include "rsovseg/ops.hpp"

namespace rsovseg {

Tensor cosine_correlation(const DenseFeatureMap& visual, const TextEmbeddingSet& text) {
  if (visual.channels() != text.dim()) {
    throw ShapeError("cosine_correlation: visual dim " + std::to_string(visual.channels()) +
                     " != text dim " + std::to_string(text.dim()));
  }
  const int nc = text.classes();
  const int p = text.prompts();
  const int d = text.dim();
  Tensor v = ops::l2_normalize_last(visual.grid);
  Tensor t = ops::l2_normalize_last(ops::reshape(text.per_prompt, {nc * p, d}));
  Tensor corr = ops::matmul(v, ops::permute(t, {1, 0}));
  return ops::reshape(corr, {visual.batch(), visual.height(), visual.width(), nc, p});
}

Tensor stack_correlations(const std::vector<Tensor>& per_angle_raw) {
  if (per_angle_raw.empty()) throw ShapeError("stack_correlations: no inputs");
  const Shape& s = per_angle_raw.front().shape();
  if (s.size() != 5) throw ShapeError("stack_correlations: expected [B,H,W,N_C,P]");
  for (const auto& t : per_angle_raw) {
    if (t.shape() != s) {
      throw ShapeError("stack_correlations: inconsistent shapes " + to_string(t.shape()) +
                       " vs " + to_string(s));
    }
  }
  const int angles = static_cast<int>(per_angle_raw.size());
  Tensor stacked = ops::stack(per_angle_raw, 4);                  // [B,H,W,N_C,A,P]
  Tensor classes_first = ops::permute(stacked, {0, 3, 1, 2, 4, 5});  // [B,N_C,H,W,A,P]
  return ops::reshape(classes_first, {s[0], s[3], s[1], s[2], angles * s[4]});
}

FusionParams FusionParams::create(ParamStore& store, const std::string& name,
                                  int in_channels, int d_phi, int kernel) {
  return {Conv2d::create(store, name + ".conv", in_channels, d_phi, kernel, ParamGroup::kMain)};
}

CorrelationVolume fuse_correlations(const std::vector<Tensor>& per_angle_raw,
                                    const FusionParams& params) {
  Tensor stacked = stack_correlations(per_angle_raw);
  const Shape& s = stacked.shape();
  if (s[4] != params.conv.in_channels) {
    throw ShapeError("fuse_correlations: " + std::to_string(s[4]) +
                     " stacked channels, fusion expects " +
                     std::to_string(params.conv.in_channels));
  }
  Tensor per_class = ops::reshape(stacked, {s[0] * s[1], s[2], s[3], s[4]});
  Tensor fused = params.conv(per_class);
  return {ops::reshape(fused, {s[0], s[1], s[2], s[3], fused.dim(3)})};
}

}  // namespace rsovseg
