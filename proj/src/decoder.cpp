#include "rsovseg/decoder.hpp"

#include <algorithm>

#include "rsovseg/errors.hpp"
#include "rsovseg/ops.hpp"
#include "rsovseg/spatial.hpp"

namespace rsovseg {

DecoderStageParams DecoderStageParams::create(ParamStore& store, const std::string& name,
                                              int in_channels, int stage_channels,
                                              int guidance_dim) {
  DecoderStageParams p;
  p.up = TransposedConv2x2::create(store, name + ".up", in_channels, stage_channels,
                                   ParamGroup::kMain);
  p.spatial_attention = Conv2d::create(store, name + ".spatial_attention", 1, 1, 7,
                                       ParamGroup::kMain);
  p.channel_attention = Conv2d::create(store, name + ".channel_attention", stage_channels,
                                       guidance_dim, 1, ParamGroup::kMain);
  p.fuse = Conv2d::create(store, name + ".fuse", stage_channels + guidance_dim, stage_channels,
                          3, ParamGroup::kMain);
  p.guidance_dim = guidance_dim;
  return p;
}

DecoderParams DecoderParams::create(ParamStore& store, const std::string& name, int d_phi,
                                    const std::vector<int>& stage_channels,
                                    const std::vector<int>& guidance_dims) {
  if (stage_channels.empty() || stage_channels.size() != guidance_dims.size()) {
    throw InvalidArgument("decoder: need one guidance dim per stage");
  }
  DecoderParams p;
  int in = d_phi;
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    p.stages.push_back(DecoderStageParams::create(store, name + ".stage" + std::to_string(s), in,
                                                  stage_channels[s], guidance_dims[s]));
    in = stage_channels[s];
  }
  p.head = Conv2d::create(store, name + ".head", in, 1, 3, ParamGroup::kMain);
  return p;
}

CorrelationVolume upsample2x(const CorrelationVolume& phi, const DecoderStageParams& params) {
  const int b = phi.batch(), nc = phi.classes(), h = phi.height(), w = phi.width();
  Tensor x = ops::reshape(phi.grid, {b * nc, h, w, phi.channels()});
  Tensor y = params.up(x);
  return {ops::reshape(y, {b, nc, 2 * h, 2 * w, y.dim(3)})};
}

DenseFeatureMap class_average(const CorrelationVolume& phi) {
  return {ops::mean_axis(phi.grid, 1), 1};
}

StageAttention compute_attentions(const DenseFeatureMap& phi2x_classavg,
                                  const DecoderStageParams& params) {
  const Tensor& x = phi2x_classavg.grid;  // [B,H,W,C]
  Tensor channel_mean = ops::mean_axis(x, 3, true);  // [B,H,W,1]
  Tensor spatial_mean = ops::mean_axis(ops::mean_axis(x, 1, true), 2, true);  // [B,1,1,C]
  return {params.spatial_attention(channel_mean), params.channel_attention(spatial_mean)};
}

DenseFeatureMap transform_guidance(const DenseFeatureMap& guidance, const StageAttention& att) {
  Tensor up = spatial::upsample_nearest(guidance.grid, 2);
  const Shape& s = up.shape();
  if (att.spatial.rank() != 4 || att.spatial.dim(0) != s[0] || att.spatial.dim(1) != s[1] ||
      att.spatial.dim(2) != s[2] || att.spatial.dim(3) != 1) {
    throw ShapeError("transform_guidance: spatial attention " + to_string(att.spatial.shape()) +
                     " does not match upsampled guidance " + to_string(s));
  }
  if (att.channel.rank() != 4 || att.channel.dim(0) != s[0] || att.channel.dim(1) != 1 ||
      att.channel.dim(2) != 1 || att.channel.dim(3) != s[3]) {
    throw ShapeError("transform_guidance: channel attention " + to_string(att.channel.shape()) +
                     " does not match guidance channels " + to_string(s));
  }
  Tensor sp = ops::mul(ops::broadcast_to(att.spatial, s), up);
  Tensor ch = ops::mul(ops::broadcast_to(att.channel, s), up);
  return {ops::add(ops::add(sp, ch), up), std::max(1, guidance.stride / 2)};
}

CorrelationVolume fuse_stage(const CorrelationVolume& phi2x, const DenseFeatureMap& guidance,
                             const DecoderStageParams& params) {
  const int b = phi2x.batch(), nc = phi2x.classes(), h = phi2x.height(), w = phi2x.width();
  if (guidance.batch() != b || guidance.height() != h || guidance.width() != w) {
    throw ShapeError("fuse_stage: guidance " + to_string(guidance.grid.shape()) +
                     " does not match stage grid " + to_string(phi2x.grid.shape()));
  }
  const int cg = guidance.channels();
  Tensor g = ops::broadcast_to(ops::reshape(guidance.grid, {b, 1, h, w, cg}), {b, nc, h, w, cg});
  Tensor cat = ops::concat({phi2x.grid, g}, 4);
  Tensor y = params.fuse(ops::reshape(cat, {b * nc, h, w, cat.dim(4)}));
  return {ops::reshape(y, {b, nc, h, w, y.dim(3)})};
}

DenseFeatureMap align_guidance(const DenseFeatureMap& g, int grid) {
  if (g.height() == grid && g.width() == grid) return g;
  const int stride = std::max(1, g.stride * g.height() / grid);
  return {spatial::resize_bilinear(g.grid, grid, grid), stride};
}

CorrelationVolume decoder_stage(const CorrelationVolume& phi, const DenseFeatureMap& guidance,
                                const DecoderStageParams& params, bool resize_guidance) {
  if (guidance.channels() != params.guidance_dim) {
    throw ShapeError("decoder stage expects " + std::to_string(params.guidance_dim) +
                     " guidance channels, got " + std::to_string(guidance.channels()));
  }
  if (guidance.batch() != phi.batch()) throw ShapeError("decoder stage: batch mismatch");
  if (!resize_guidance && (guidance.height() != phi.height() || guidance.width() != phi.width())) {
    throw ShapeError("decoder stage: guidance grid " + std::to_string(guidance.height()) + "x" +
                     std::to_string(guidance.width()) + " does not upsample onto " +
                     std::to_string(2 * phi.height()) + "x" + std::to_string(2 * phi.width()));
  }
  DenseFeatureMap g = align_guidance(guidance, phi.height());
  CorrelationVolume up = upsample2x(phi, params);
  StageAttention att = compute_attentions(class_average(up), params);
  return fuse_stage(up, transform_guidance(g, att), params);
}

SegmentationLogits decode(const CorrelationVolume& phi, const GuidancePyramid& pyramid,
                          const DecoderParams& params, int out_px) {
  if (phi.height() != phi.width()) throw ShapeError("decode: correlation grid must be square");
  if (params.stages.size() > 2) throw InvalidArgument("decode: at most two guided stages");
  const DenseFeatureMap* guidance[2] = {&pyramid.level2, &pyramid.level1};
  CorrelationVolume x = phi;
  for (std::size_t s = 0; s < params.stages.size(); ++s) {
    x = decoder_stage(x, *guidance[s], params.stages[s], params.resize_guidance);
  }
  const int b = x.batch(), nc = x.classes(), h = x.height(), w = x.width();
  Tensor y = params.head(ops::reshape(x.grid, {b * nc, h, w, x.channels()}));  // [BN,h,w,1]
  y = spatial::resize_bilinear(y, out_px, out_px);
  y = ops::reshape(y, {b, nc, out_px, out_px});
  return {ops::permute(y, {0, 2, 3, 1})};
}

}  // namespace rsovseg
