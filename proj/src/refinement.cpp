#include "rsovseg/refinement.hpp"

#include <cmath>

#include "rsovseg/errors.hpp"
#include "rsovseg/ops.hpp"
#include "rsovseg/spatial.hpp"

namespace rsovseg {
namespace {

// [X, T, C] -> [X, heads, T, C / heads]
Tensor split_heads(const Tensor& x, int heads) {
  const int c = x.dim(2);
  return ops::permute(ops::reshape(x, {x.dim(0), x.dim(1), heads, c / heads}), {0, 2, 1, 3});
}

// [X, heads, T, dh] -> [X, T, heads * dh]
Tensor merge_heads(const Tensor& x) {
  Tensor t = ops::permute(x, {0, 2, 1, 3});
  return ops::reshape(t, {t.dim(0), t.dim(1), t.dim(2) * t.dim(3)});
}

Tensor relative_bias(const Tensor& table, int heads, int ws_h, int ws_w, int window_size) {
  const int t = ws_h * ws_w;
  const int span = 2 * window_size - 1;
  auto index = std::make_shared<ops::Index>(static_cast<std::size_t>(heads) * t * t);
  std::size_t k = 0;
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < t; ++j) {
        const int dy = i / ws_w - j / ws_w + window_size - 1;
        const int dx = i % ws_w - j % ws_w + window_size - 1;
        (*index)[k++] = static_cast<std::int64_t>(dy * span + dx) * heads + h;
      }
  return ops::gather(table, {1, heads, t, t}, index);
}

Tensor windowed_attention(const Tensor& x_norm, const Tensor& guide,
                          const GuidedAttentionBlock& blk, const Tensor& table,
                          const WindowPlan& plan, int shift, int heads, int window_size) {
  const int bn = x_norm.dim(0), h = x_norm.dim(1), w = x_norm.dim(2), c = x_norm.dim(3);
  Tensor qk_in = ops::concat({x_norm, guide}, 3);
  Tensor v_in = x_norm;
  if (shift > 0) {
    qk_in = spatial::roll(qk_in, -shift, -shift);
    v_in = spatial::roll(v_in, -shift, -shift);
  }
  Tensor qk_w = spatial::window_partition(qk_in, plan.ws_h, plan.ws_w);
  Tensor v_w = spatial::window_partition(v_in, plan.ws_h, plan.ws_w);
  const int nw_total = qk_w.dim(0);
  const int t = qk_w.dim(1);
  const int nw = nw_total / bn;

  Tensor q = split_heads(blk.query(qk_w), heads);
  Tensor k = split_heads(blk.key(qk_w), heads);
  Tensor v = split_heads(blk.value(v_w), heads);
  const double inv = 1.0 / std::sqrt(static_cast<double>(c / heads));
  Tensor scores = ops::scale(ops::bmm(q, k, false, true), inv);  // [NW, heads, T, T]
  const Shape score_shape = scores.shape();
  scores = ops::add(scores, ops::broadcast_to(relative_bias(table, heads, plan.ws_h, plan.ws_w,
                                                            window_size),
                                              score_shape));
  if (shift > 0) {
    Tensor mask = ops::reshape(shifted_window_mask(h, w, plan.ws_h, plan.ws_w, shift),
                               {1, nw, 1, t, t});
    mask = ops::reshape(ops::broadcast_to(mask, {bn, nw, heads, t, t}), score_shape);
    scores = ops::add(scores, mask);
  }
  Tensor out = blk.proj(merge_heads(ops::bmm(ops::softmax_last(scores), v)));
  out = spatial::window_reverse(out, bn, h, w, plan.ws_h, plan.ws_w);
  if (shift > 0) out = spatial::roll(out, shift, shift);
  return out;
}

}  // namespace

GuidedAttentionBlock GuidedAttentionBlock::create(ParamStore& store, const std::string& name,
                                                  int d_phi, int mlp_ratio) {
  GuidedAttentionBlock b;
  b.norm1 = LayerNorm::create(store, name + ".norm1", d_phi, ParamGroup::kMain);
  b.query = Linear::create(store, name + ".attn.query", 2 * d_phi, d_phi, ParamGroup::kMain);
  b.key = Linear::create(store, name + ".attn.key", 2 * d_phi, d_phi, ParamGroup::kMain);
  b.value = Linear::create(store, name + ".attn.value", d_phi, d_phi, ParamGroup::kMain);
  b.proj = Linear::create(store, name + ".attn.proj", d_phi, d_phi, ParamGroup::kMain);
  b.norm2 = LayerNorm::create(store, name + ".norm2", d_phi, ParamGroup::kMain);
  b.fc1 = Linear::create(store, name + ".mlp.fc1", d_phi, mlp_ratio * d_phi, ParamGroup::kMain);
  b.fc2 = Linear::create(store, name + ".mlp.fc2", mlp_ratio * d_phi, d_phi, ParamGroup::kMain);
  return b;
}

Tensor GuidedAttentionBlock::mlp(const Tensor& x) const {
  return fc2(ops::gelu(fc1(norm2(x))));
}

SpatialRefineParams SpatialRefineParams::create(ParamStore& store, const std::string& name,
                                                int d_phi, int guidance_dim, int window_size,
                                                int num_heads, int mlp_ratio) {
  if (window_size < 1) throw InvalidArgument("window size must be positive");
  if (num_heads < 1 || d_phi % num_heads != 0) {
    throw InvalidArgument("d_phi must be divisible by the number of heads");
  }
  SpatialRefineParams p;
  p.window_size = window_size;
  p.shift_size = window_size / 2;
  p.num_heads = num_heads;
  p.guidance_proj = Linear::create(store, name + ".guidance_proj", guidance_dim, d_phi,
                                   ParamGroup::kMain);
  const int span = 2 * window_size - 1;
  for (int i = 0; i < 2; ++i) {
    const std::string bn = name + ".block" + std::to_string(i);
    p.blocks[i] = GuidedAttentionBlock::create(store, bn, d_phi, mlp_ratio);
    p.relative_bias[i] = store.add(bn + ".attn.relative_bias", {span * span, num_heads},
                                   Initializer::normal(0.02), ParamGroup::kMain, false);
  }
  return p;
}

ClassRefineParams ClassRefineParams::create(ParamStore& store, const std::string& name,
                                            int d_phi, int text_dim, int num_heads,
                                            int mlp_ratio) {
  if (num_heads < 1 || d_phi % num_heads != 0) {
    throw InvalidArgument("d_phi must be divisible by the number of heads");
  }
  ClassRefineParams p;
  p.num_heads = num_heads;
  p.text_proj = Linear::create(store, name + ".text_proj", text_dim, d_phi, ParamGroup::kMain);
  p.block = GuidedAttentionBlock::create(store, name + ".block", d_phi, mlp_ratio);
  return p;
}

WindowPlan plan_windows(int height, int width, int window_size, int shift_size) {
  if (height <= window_size && width <= window_size) return {height, width, 0};
  if (height % window_size != 0 || width % window_size != 0) {
    throw ShapeError("window size " + std::to_string(window_size) + " does not divide grid " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  return {window_size, window_size, shift_size};
}

Tensor shifted_window_mask(int height, int width, int ws_h, int ws_w, int shift) {
  const int nwh = height / ws_h, nww = width / ws_w;
  const int t = ws_h * ws_w;
  std::vector<double> mask(static_cast<std::size_t>(nwh) * nww * t * t, 0.0);
  if (shift > 0) {
    auto region = [shift](int coord, int size, int ws) {
      if (coord < size - ws) return 0;
      return coord < size - shift ? 1 : 2;
    };
    std::size_t k = 0;
    for (int wy = 0; wy < nwh; ++wy)
      for (int wx = 0; wx < nww; ++wx)
        for (int i = 0; i < t; ++i)
          for (int j = 0; j < t; ++j) {
            const int yi = wy * ws_h + i / ws_w, xi = wx * ws_w + i % ws_w;
            const int yj = wy * ws_h + j / ws_w, xj = wx * ws_w + j % ws_w;
            const int ri = region(yi, height, ws_h) * 3 + region(xi, width, ws_w);
            const int rj = region(yj, height, ws_h) * 3 + region(xj, width, ws_w);
            mask[k++] = ri == rj ? 0.0 : -100.0;
          }
  }
  return Tensor::from({nwh * nww, t, t}, std::move(mask));
}

CorrelationVolume spatial_refine(const CorrelationVolume& phi, const DenseFeatureMap& guidance3,
                                 const SpatialRefineParams& params) {
  const int b = phi.batch(), nc = phi.classes(), h = phi.height(), w = phi.width(),
            c = phi.channels();
  if (guidance3.batch() != b || guidance3.height() != h || guidance3.width() != w) {
    throw ShapeError("spatial_refine: guidance " + to_string(guidance3.grid.shape()) +
                     " not aligned with correlation grid " + to_string(phi.grid.shape()));
  }
  const WindowPlan plan = plan_windows(h, w, params.window_size, params.shift_size);

  Tensor g = params.guidance_proj(guidance3.grid);  // [B,H,W,C]
  g = ops::reshape(g, {b, 1, h, w, c});
  g = ops::reshape(ops::broadcast_to(g, {b, nc, h, w, c}), {b * nc, h, w, c});

  Tensor x = ops::reshape(phi.grid, {b * nc, h, w, c});
  for (int i = 0; i < 2; ++i) {
    const GuidedAttentionBlock& blk = params.blocks[i];
    const int shift = i == 0 ? 0 : plan.shift;
    x = ops::add(x, windowed_attention(blk.norm1(x), g, blk, params.relative_bias[i], plan, shift,
                                       params.num_heads, params.window_size));
    x = ops::add(x, blk.mlp(x));
  }
  return {ops::reshape(x, {b, nc, h, w, c})};
}

CorrelationVolume class_refine(const CorrelationVolume& phi, const TextEmbeddingSet& text,
                               const ClassRefineParams& params) {
  const int b = phi.batch(), nc = phi.classes(), h = phi.height(), w = phi.width(),
            c = phi.channels();
  if (text.classes() != nc) {
    throw ShapeError("class_refine: volume has " + std::to_string(nc) + " classes, text has " +
                     std::to_string(text.classes()));
  }
  const int m = b * h * w;
  const int heads = params.num_heads;
  const GuidedAttentionBlock& blk = params.block;

  Tensor x = ops::reshape(ops::permute(phi.grid, {0, 2, 3, 1, 4}), {m, nc, c});
  Tensor guide = ops::broadcast_to(params.text_proj(text.prompt_averaged), {m, nc, c});

  Tensor xn = blk.norm1(x);
  Tensor qk_in = ops::concat({xn, guide}, 2);
  Tensor q = split_heads(ops::elu_plus_one(blk.query(qk_in)), heads);  // [M,h,N,dh]
  Tensor k = split_heads(ops::elu_plus_one(blk.key(qk_in)), heads);
  Tensor v = split_heads(blk.value(xn), heads);
  Tensor kv = ops::bmm(k, v, true, false);                 // [M,h,dh,dh]
  Tensor num = ops::bmm(q, kv);                            // [M,h,N,dh]
  Tensor ksum = ops::sum_axis(k, 2, true);                 // [M,h,1,dh]
  Tensor den = ops::add_scalar(ops::bmm(q, ksum, false, true), kLinearAttentionEps);
  Tensor attn = ops::div(num, ops::broadcast_to(den, num.shape()));
  x = ops::add(x, blk.proj(merge_heads(attn)));
  x = ops::add(x, blk.mlp(x));

  return {ops::permute(ops::reshape(x, {b, h, w, nc, c}), {0, 3, 1, 2, 4})};
}

CorrelationVolume refine_stack(const CorrelationVolume& phi, const DenseFeatureMap& guidance3,
                               const TextEmbeddingSet& text,
                               const std::vector<RefineBlockParams>& blocks) {
  if (blocks.empty()) throw InvalidArgument("refine_stack: no refinement blocks");
  CorrelationVolume x = phi;
  for (const auto& blk : blocks) {
    x = spatial_refine(x, guidance3, blk.spatial);
    x = class_refine(x, text, blk.cls);
  }
  return x;
}

}  // namespace rsovseg
