#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "rsovseg/data.hpp"
#include "rsovseg/evaluation.hpp"
#include "rsovseg/image_io.hpp"
#include "rsovseg/spatial.hpp"
#include "test_util.hpp"

namespace rsovseg::checks {

using testing::at4;
using testing::conv2d_oracle;
using testing::gelu_oracle;
using testing::layer_norm_oracle;
using testing::linear_oracle;
using testing::random_tensor;
using testing::weighted_sum;

namespace {

double max_diff(std::span<const double> a, const std::vector<double>& b) {
  return testing::max_abs_diff(a, b);
}

ClassRegistry make_registry(const std::vector<std::string>& names,
                            const std::vector<std::string>& templates) {
  ClassRegistry r;
  r.names = names;
  r.seen.assign(names.size(), true);
  r.templates = templates;
  return r;
}

double elu_plus_one_oracle(double x) { return x > 0.0 ? x + 1.0 : std::exp(x); }

// Row of a [rows, cols] row-major buffer.
std::span<const double> row(const std::vector<double>& v, int r, int cols) {
  return {v.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// fc2(gelu(fc1(LN2(x)))) added to x, for `rows` tokens of width c.
void mlp_residual_oracle(std::vector<double>& x, int rows, int c, const GuidedAttentionBlock& b) {
  auto xn = layer_norm_oracle(x, rows, c, b.norm2.gamma, b.norm2.beta);
  auto hid = linear_oracle(xn, rows, c, b.fc1.weight, b.fc1.bias);
  for (double& v : hid) v = gelu_oracle(v);
  auto out = linear_oracle(hid, rows, b.fc1.out_features(), b.fc2.weight, b.fc2.bias);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += out[i];
}

double grad_rel_error(const std::function<Tensor()>& f, ParamStore& store,
                      std::vector<Tensor> extra, std::size_t max_entries = 0) {
  return testing::grad_check_store(f, store, std::move(extra), {}, 1e-4, max_entries).max_rel_error;
}

// Encoder that averages 2x2 pixel blocks: rotation-equivariant by construction.
class PoolingEncoder final : public VisionEncoder {
 public:
  DenseFeatureMap encode(const ImageBatch& images) const override {
    const Tensor& x = images.pixels;
    const int b = x.dim(0), s = x.dim(1), h = s / 2;
    std::vector<double> out(static_cast<std::size_t>(b) * h * h * 3);
    for (int n = 0; n < b; ++n)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < h; ++j)
          for (int c = 0; c < 3; ++c)
            out[((static_cast<std::size_t>(n) * h + i) * h + j) * 3 + c] =
                0.25 * (x.at({n, 2 * i, 2 * j, c}) + x.at({n, 2 * i + 1, 2 * j, c}) +
                        x.at({n, 2 * i, 2 * j + 1, c}) + x.at({n, 2 * i + 1, 2 * j + 1, c}));
    return {Tensor::from({b, h, h, 3}, std::move(out)), 2};
  }
  int dim() const override { return 3; }
};

}  // namespace

ModelConfig small_model_config() {
  ModelConfig c;
  c.seed = 3;
  c.vision = {8, 16, true};
  c.text = {16, 7, true};
  c.guidance = {{4, 8, 8}, {6, 8, 8}};
  c.d_phi = 8;
  c.window_size = 2;
  c.num_heads = 2;
  c.mlp_ratio = 2;
  c.decoder_dims = {6, 4};
  return c;
}

void randomize(ParamStore& store, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& p : store.params()) {
    for (double& v : p.value.values()) v = d(rng);
  }
}

std::vector<TrainSample> random_samples(int count, int side, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TrainSample> out;
  for (int i = 0; i < count; ++i) {
    TrainSample s;
    s.image = random_tensor({side, side, 3}, rng);
    s.mask = GroundTruthMask(side, side);
    for (auto& l : s.mask.labels) l = static_cast<std::uint8_t>(rng() % classes);
    out.push_back(std::move(s));
  }
  return out;
}

// --- oracle comparisons -----------------------------------------------------------

Measure ensemble_with_equivariant_encoder() {
  std::mt19937_64 rng(21);
  ImageBatch img{random_tensor({2, 8, 8, 3}, rng)};
  PoolingEncoder enc;
  auto ens = encode_image_ensemble(img, RotationAngleSet(), enc);
  // The theta=90 entry re-derived by hand: pool the rotated image, rotate back.
  const auto direct = enc.encode(img).grid;
  double err = max_diff(ens[1].grid.data(), direct.values());
  err = std::max(err, max_diff(ens[0].grid.data(), direct.values()));
  // Same statement for a 90-degree rotated input.
  ImageBatch rot{spatial::rotate(img.pixels, 90)};
  auto ens_rot = encode_image_ensemble(rot, RotationAngleSet(), enc);
  err = std::max(err, max_diff(ens_rot[1].grid.data(), ens_rot[0].grid.values()));
  return {"ensemble entry 90 == entry 0 for an equivariant encoder", err, 1e-12};
}

Measure guidance_level3_resize() {
  ParamStore store(5);
  StubGuidanceEncoder enc(store, {{4, 8, 8}, {32, 64, 64}});
  std::mt19937_64 rng(22);
  ImageBatch img{random_tensor({1, 64, 64, 3}, rng)};
  const auto taps = enc.taps(img);
  const auto pyr = encode_guidance(img, enc, 16);
  const auto expect = testing::bilinear_oracle(taps[2].grid.values(), taps[2].grid.shape(), 16, 16);
  double err = pyr.level3.grid.shape() == Shape{1, 16, 16, 64}
                   ? max_diff(pyr.level3.grid.data(), expect)
                   : INFINITY;
  return {"guidance level3 8x8 -> 16x16 bilinear", err, 1e-12};
}

Measure cosine_example() {
  DenseFeatureMap v{Tensor::from({1, 1, 1, 2}, {1.0, 0.0}), 1};
  TextEmbeddingSet t;
  t.per_prompt = Tensor::from({1, 1, 2}, {1.0, 1.0});
  t.prompt_averaged = Tensor::from({1, 2}, {1.0, 1.0});
  const double c = cosine_correlation(v, t).item();
  return {"cosine((1,0),(1,1)) == 0.70711", std::abs(c - 0.70711), 1e-5};
}

Measure fusion_conv_oracle() {
  const int angles = 2, p = 2, nc = 2, h = 4, w = 4, d_phi = 2;
  std::mt19937_64 rng(23);
  std::vector<Tensor> raw;
  for (int a = 0; a < angles; ++a) raw.push_back(random_tensor({1, h, w, nc, p}, rng));
  ParamStore store(6);
  auto fusion = FusionParams::create(store, "fusion", angles * p, d_phi);
  randomize(store, 7);
  const auto fused = fuse_correlations(raw, fusion);
  double err = 0.0;
  for (int n = 0; n < nc; ++n) {
    std::vector<double> stacked;  // [1, h, w, angles * p], angle-major
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int a = 0; a < angles; ++a)
          for (int q = 0; q < p; ++q) stacked.push_back(raw[a].at({0, y, x, n, q}));
    const auto expect = conv2d_oracle(stacked, {1, h, w, angles * p}, fusion.conv.weight,
                                      fusion.conv.bias, 3);
    Tensor got = ops::slice(fused.grid, 1, n, n + 1);
    err = std::max(err, max_diff(got.data(), expect));
  }
  return {"fusion 3x3 conv vs sliding-window oracle", err, 1e-5};
}

Measure spatial_refine_oracle() {
  const int nc = 2, h = 4, w = 4, c = 4, heads = 2, ws = 2, gd = 3;
  const int hw = h * w, dh = c / heads, span = 2 * ws - 1;
  ParamStore store(8);
  auto p = SpatialRefineParams::create(store, "sp", c, gd, ws, heads, 2);
  randomize(store, 9);
  std::mt19937_64 rng(24);
  Tensor phi = random_tensor({1, nc, h, w, c}, rng);
  Tensor g3 = random_tensor({1, h, w, gd}, rng);
  const auto got = spatial_refine({phi}, {g3, 8}, p);

  const auto gproj = linear_oracle(g3.values(), hw, gd, p.guidance_proj.weight, p.guidance_proj.bias);
  std::vector<double> expect;
  for (int n = 0; n < nc; ++n) {
    std::vector<double> x(phi.values().begin() + n * hw * c, phi.values().begin() + (n + 1) * hw * c);
    for (int bi = 0; bi < 2; ++bi) {
      const int shift = bi == 0 ? 0 : ws / 2;
      const GuidedAttentionBlock& blk = p.blocks[bi];
      const auto& table = p.relative_bias[bi].values();
      const auto xn = layer_norm_oracle(x, hw, c, blk.norm1.gamma, blk.norm1.beta);
      std::vector<double> qk_in;
      for (int t = 0; t < hw; ++t) {
        qk_in.insert(qk_in.end(), xn.begin() + t * c, xn.begin() + (t + 1) * c);
        qk_in.insert(qk_in.end(), gproj.begin() + t * c, gproj.begin() + (t + 1) * c);
      }
      const auto q = linear_oracle(qk_in, hw, 2 * c, blk.query.weight, blk.query.bias);
      const auto k = linear_oracle(qk_in, hw, 2 * c, blk.key.weight, blk.key.bias);
      const auto v = linear_oracle(xn, hw, c, blk.value.weight, blk.value.bias);
      // A cell at (y, x) sits at (y - shift, x - shift) mod size in the rolled
      // grid; cells whose shift wrapped around may not attend to cells that
      // did not.
      auto rolled = [&](int coord, int size) { return ((coord - shift) % size + size) % size; };
      auto wrapped = [&](int r, int size) { return shift > 0 && r + shift >= size; };
      std::vector<double> attn(static_cast<std::size_t>(hw) * c, 0.0);
      for (int a = 0; a < hw; ++a) {
        const int ry = rolled(a / w, h), rx = rolled(a % w, w);
        for (int hd = 0; hd < heads; ++hd) {
          std::vector<int> members;
          std::vector<double> scores;
          for (int b = 0; b < hw; ++b) {
            const int sy = rolled(b / w, h), sx = rolled(b % w, w);
            if (sy / ws != ry / ws || sx / ws != rx / ws) continue;
            double s = dot(row(q, a, c).subspan(hd * dh, dh), row(k, b, c).subspan(hd * dh, dh)) /
                       std::sqrt(static_cast<double>(dh));
            const int rel = (ry % ws - sy % ws + ws - 1) * span + (rx % ws - sx % ws + ws - 1);
            s += table[static_cast<std::size_t>(rel) * heads + hd];
            if (wrapped(ry, h) != wrapped(sy, h) || wrapped(rx, w) != wrapped(sx, w)) s += -100.0;
            members.push_back(b);
            scores.push_back(s);
          }
          const double mx = *std::max_element(scores.begin(), scores.end());
          double z = 0.0;
          for (double& s : scores) z += (s = std::exp(s - mx));
          for (std::size_t m = 0; m < members.size(); ++m)
            for (int d = 0; d < dh; ++d)
              attn[static_cast<std::size_t>(a) * c + hd * dh + d] +=
                  scores[m] / z * v[static_cast<std::size_t>(members[m]) * c + hd * dh + d];
        }
      }
      const auto proj = linear_oracle(attn, hw, c, blk.proj.weight, blk.proj.bias);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];
      mlp_residual_oracle(x, hw, c, blk);
    }
    expect.insert(expect.end(), x.begin(), x.end());
  }
  return {"spatial_refine 4x4 window 2 vs per-window attention oracle",
          max_diff(got.grid.data(), expect), 1e-4};
}

Measure class_refine_oracle() {
  const int nc = 3, h = 2, w = 3, c = 4, heads = 2, dt = 5;
  const int dh = c / heads;
  ParamStore store(10);
  auto p = ClassRefineParams::create(store, "cls", c, dt, heads, 2);
  randomize(store, 11);
  std::mt19937_64 rng(25);
  Tensor phi = random_tensor({1, nc, h, w, c}, rng);
  TextEmbeddingSet text;
  text.per_prompt = random_tensor({nc, 1, dt}, rng);
  text.prompt_averaged = ops::reshape(text.per_prompt, {nc, dt});
  const auto got = class_refine({phi}, text, p);

  const GuidedAttentionBlock& blk = p.block;
  const auto guide = linear_oracle(text.prompt_averaged.values(), nc, dt, p.text_proj.weight,
                                   p.text_proj.bias);
  std::vector<double> expect(phi.size());
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      std::vector<double> x;
      for (int n = 0; n < nc; ++n)
        for (int ch = 0; ch < c; ++ch) x.push_back(phi.at({0, n, y, xx, ch}));
      const auto xn = layer_norm_oracle(x, nc, c, blk.norm1.gamma, blk.norm1.beta);
      std::vector<double> qk_in;
      for (int n = 0; n < nc; ++n) {
        qk_in.insert(qk_in.end(), xn.begin() + n * c, xn.begin() + (n + 1) * c);
        qk_in.insert(qk_in.end(), guide.begin() + n * c, guide.begin() + (n + 1) * c);
      }
      auto q = linear_oracle(qk_in, nc, 2 * c, blk.query.weight, blk.query.bias);
      auto k = linear_oracle(qk_in, nc, 2 * c, blk.key.weight, blk.key.bias);
      const auto v = linear_oracle(xn, nc, c, blk.value.weight, blk.value.bias);
      for (double& e : q) e = elu_plus_one_oracle(e);
      for (double& e : k) e = elu_plus_one_oracle(e);
      // Quadratic form: every (i, j) kernel value written out.
      std::vector<double> attn(static_cast<std::size_t>(nc) * c, 0.0);
      for (int hd = 0; hd < heads; ++hd)
        for (int i = 0; i < nc; ++i) {
          double den = kLinearAttentionEps;
          std::vector<double> num(dh, 0.0);
          for (int j = 0; j < nc; ++j) {
            const double kij =
                dot(row(q, i, c).subspan(hd * dh, dh), row(k, j, c).subspan(hd * dh, dh));
            den += kij;
            for (int d = 0; d < dh; ++d) num[d] += kij * v[static_cast<std::size_t>(j) * c + hd * dh + d];
          }
          for (int d = 0; d < dh; ++d) attn[static_cast<std::size_t>(i) * c + hd * dh + d] = num[d] / den;
        }
      const auto proj = linear_oracle(attn, nc, c, blk.proj.weight, blk.proj.bias);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];
      mlp_residual_oracle(x, nc, c, blk);
      for (int n = 0; n < nc; ++n)
        for (int ch = 0; ch < c; ++ch)
          expect[(((static_cast<std::size_t>(n) * h + y) * w + xx) * c) + ch] = x[n * c + ch];
    }
  return {"class_refine N_C=3 vs quadratic linear-attention oracle",
          max_diff(got.grid.data(), expect), 1e-4};
}

Measure back_project_oracle() {
  const int h = 2, w = 2, nc = 3, d = 4, hidden = 5, dg = 6;
  ParamStore store(12);
  auto p = BackProjectionParams::create(store, "bp", nc, d, hidden, dg);
  randomize(store, 13);
  std::mt19937_64 rng(26);
  Tensor phi = random_tensor({1, nc, h, w, d}, rng);
  const auto got = back_project({phi}, p);
  std::vector<double> expect;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::vector<double> cell;
      for (int n = 0; n < nc; ++n)
        for (int ch = 0; ch < d; ++ch) cell.push_back(phi.at({0, n, y, x, ch}));
      auto a = linear_oracle(cell, 1, nc * d, p.fc1.weight, p.fc1.bias);
      for (double& e : a) e = gelu_oracle(e);
      auto b = linear_oracle(a, 1, hidden, p.fc2.weight, p.fc2.bias);
      for (double& e : b) e = gelu_oracle(e);
      auto out = linear_oracle(b, 1, hidden, p.fc3.weight, p.fc3.bias);
      expect.insert(expect.end(), out.begin(), out.end());
    }
  return {"back_project (2,2,3,4) vs per-cell matmul oracle", max_diff(got.grid.data(), expect), 1e-5};
}

Measure semantic_loss_oracle() {
  std::mt19937_64 rng(27);
  Tensor a = random_tensor({1, 2, 2, 8}, rng), b = random_tensor({1, 2, 2, 8}, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.values()[i] - b.values()[i]) * (a.values()[i] - b.values()[i]);
  s /= static_cast<double>(a.size());
  const double got = semantic_loss({a, 1}, {b, 1}).item();
  return {"semantic_loss (2,2,8) vs scalar-loop oracle", std::abs(got - s), 1e-7};
}

Measure transposed_conv_oracle() {
  const int nc = 2, h = 3, w = 3, cin = 2, cout = 3;
  ParamStore store(14);
  auto p = DecoderStageParams::create(store, "st", cin, cout, 2);
  randomize(store, 15);
  std::mt19937_64 rng(28);
  Tensor phi = random_tensor({1, nc, h, w, cin}, rng);
  const auto got = upsample2x({phi}, p);
  const auto& wt = p.up.weight.values();
  std::vector<double> expect(static_cast<std::size_t>(nc) * 2 * h * 2 * w * cout);
  for (int n = 0; n < nc; ++n) {
    for (int i = 0; i < 2 * h * 2 * w; ++i)
      for (int o = 0; o < cout; ++o)
        expect[(static_cast<std::size_t>(n) * 4 * h * w + i) * cout + o] = p.up.bias.values()[o];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ky = 0; ky < 2; ++ky)
          for (int kx = 0; kx < 2; ++kx)
            for (int o = 0; o < cout; ++o)
              for (int c = 0; c < cin; ++c) {
                const std::size_t dst =
                    ((static_cast<std::size_t>(n) * 2 * h + 2 * y + ky) * 2 * w + 2 * x + kx) * cout + o;
                expect[dst] += phi.at({0, n, y, x, c}) * wt[static_cast<std::size_t>(c) * 4 * cout + (ky * 2 + kx) * cout + o];
              }
  }
  return {"transposed conv 3x3 vs scatter oracle", max_diff(got.grid.data(), expect), 1e-5};
}

Measure attention_pooling_oracle() {
  const int h = 4, w = 4, c = 3, cg = 2;
  ParamStore store(16);
  auto p = DecoderStageParams::create(store, "st", 4, c, cg);
  randomize(store, 17);
  std::mt19937_64 rng(29);
  Tensor x = random_tensor({1, h, w, c}, rng);
  const auto att = compute_attentions({x, 1}, p);
  std::vector<double> channel_mean, spatial_mean(c, 0.0);
  for (int i = 0; i < h * w; ++i) {
    double s = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      s += x.values()[static_cast<std::size_t>(i) * c + ch];
      spatial_mean[ch] += x.values()[static_cast<std::size_t>(i) * c + ch] / (h * w);
    }
    channel_mean.push_back(s / c);
  }
  const auto sp = conv2d_oracle(channel_mean, {1, h, w, 1}, p.spatial_attention.weight,
                                p.spatial_attention.bias, 7);
  const auto ch = conv2d_oracle(spatial_mean, {1, 1, 1, c}, p.channel_attention.weight,
                                p.channel_attention.bias, 1);
  const double err = std::max(max_diff(att.spatial.data(), sp), max_diff(att.channel.data(), ch));
  return {"attention pooling vs mean oracle", err, 1e-6};
}

Measure transform_guidance_oracle() {
  std::mt19937_64 rng(30);
  Tensor g = random_tensor({2, 2, 3, 3}, rng);
  StageAttention att{random_tensor({2, 4, 6, 1}, rng), random_tensor({2, 1, 1, 3}, rng)};
  const auto got = transform_guidance({g, 8}, att);
  std::vector<double> expect;
  for (int b = 0; b < 2; ++b)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x)
        for (int c = 0; c < 3; ++c) {
          const double u = g.at({b, y / 2, x / 2, c});
          expect.push_back(att.spatial.at({b, y, x, 0}) * u + att.channel.at({b, 0, 0, c}) * u + u);
        }
  return {"guidance transform vs broadcast-arithmetic oracle", max_diff(got.grid.data(), expect), 1e-6};
}

Measure fuse_stage_oracle() {
  const int nc = 2, h = 4, w = 4, c = 3, cg = 2;
  ParamStore store(18);
  auto p = DecoderStageParams::create(store, "st", 4, c, cg);
  randomize(store, 19);
  std::mt19937_64 rng(31);
  Tensor phi = random_tensor({1, nc, h, w, c}, rng);
  Tensor g = random_tensor({1, h, w, cg}, rng);
  const auto got = fuse_stage({phi}, {g, 4}, p);
  std::vector<double> expect;
  for (int n = 0; n < nc; ++n) {
    std::vector<double> cat;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch) cat.push_back(phi.at({0, n, y, x, ch}));
        for (int ch = 0; ch < cg; ++ch) cat.push_back(g.at({0, y, x, ch}));
      }
    const auto y = conv2d_oracle(cat, {1, h, w, c + cg}, p.fuse.weight, p.fuse.bias, 3);
    expect.insert(expect.end(), y.begin(), y.end());
  }
  return {"stage fusion conv vs sliding-window oracle", max_diff(got.grid.data(), expect), 1e-5};
}

Measure decode_finite_difference() {
  ParamStore store(20);
  auto dec = DecoderParams::create(store, "dec", 4, {4, 3}, {3, 2});
  randomize(store, 21, 0.4);
  std::mt19937_64 rng(32);
  Tensor phi = random_tensor({1, 2, 4, 4, 4}, rng);
  GuidancePyramid pyr{{random_tensor({1, 8, 8, 2}, rng), 4},
                      {random_tensor({1, 4, 4, 3}, rng), 8},
                      {random_tensor({1, 4, 4, 5}, rng), 8}};
  auto f = [&] { return weighted_sum(decode({phi}, pyr, dec, 16).grid); };
  return {"decode (4,4,2,4) gradient vs finite differences", grad_rel_error(f, store, {phi}), 1e-3};
}

Measure bce_loop_oracle() {
  const int b = 2, s = 3, nc = 4;
  std::mt19937_64 rng(33);
  Tensor logits = random_tensor({b, s, s, nc}, rng, 2.0);
  std::vector<GroundTruthMask> masks;
  for (int i = 0; i < b; ++i) {
    GroundTruthMask m(s, s);
    for (auto& l : m.labels) l = rng() % 5 == 0 ? kIgnoreIndex : static_cast<std::uint8_t>(rng() % nc);
    masks.push_back(m);
  }
  double total = 0.0;
  int pixels = 0;
  for (int i = 0; i < b; ++i)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const int label = masks[i].at(y, x);
        if (label == kIgnoreIndex) continue;
        ++pixels;
        for (int c = 0; c < nc; ++c) {
          const double prob = 1.0 / (1.0 + std::exp(-logits.at({i, y, x, c})));
          total += c == label ? -std::log(prob) : -std::log(1.0 - prob);
        }
      }
  const double got = bce_loss({logits}, masks).loss.item();
  return {"bce vs elementwise loop oracle", std::abs(got - total / pixels), 1e-6};
}

Measure predict_loop_oracle() {
  const int b = 2, s = 6, nc = 5;
  std::mt19937_64 rng(34);
  std::vector<double> v(static_cast<std::size_t>(b) * s * s * nc);
  for (double& x : v) x = static_cast<double>(static_cast<int>(rng() % 5)) - 2.0;  // frequent ties
  Tensor logits = Tensor::from({b, s, s, nc}, v);
  const auto pred = predict({logits});
  double mismatches = 0.0;
  for (int i = 0; i < b; ++i)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        int best = 0;
        for (int c = 1; c < nc; ++c)
          if (logits.at({i, y, x, c}) > logits.at({i, y, x, best})) best = c;
        if (pred[i].at(y, x) != best) mismatches += 1.0;
      }
  return {"predict vs scalar-loop argmax oracle", mismatches, 0.0};
}

Measure iou_hand_case() {
  LabelMap pred(4, 4, 0), gt(4, 4, 0);
  for (int i = 0; i < 6; ++i) pred.labels[i] = 1;      // cells 0..5
  for (int i = 3; i < 7; ++i) gt.labels[i] = 1;        // cells 3..6, overlap 3
  ConfusionAccumulator acc(2);
  acc.accumulate(pred, gt);
  const auto iou = acc.iou(1);
  return {"IoU hand case 3/7", iou ? std::abs(*iou - 3.0 / 7.0) : INFINITY, 1e-15};
}

Measure synthetic_coverage(const std::filesystem::path& scratch) {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.n_classes = 4;
  spec.n_images = 8;
  const auto dir = scratch / "coverage";
  const auto manifest = generate_synthetic(spec, dir);
  std::set<int> present;
  for (const auto& s : manifest.samples) {
    const Raster m = read_png(dir / s.mask, 1);
    for (auto px : m.pixels) present.insert(px);
  }
  double missing = 0.0;
  for (int c = 0; c < spec.n_classes; ++c) missing += present.count(c) ? 0.0 : 1.0;
  return {"synthetic masks cover every class", missing, 0.0};
}

Measure repeated_batch_descent() {
  ModelConfig cfg = small_model_config();
  Model model(cfg, {"left", "right"});
  const ClassRegistry reg = make_registry({"left", "right"}, cfg.templates);
  // Two constant colours split down the middle: separable per pixel.
  const int s = 32;
  TrainBatch batch;
  std::vector<double> px(static_cast<std::size_t>(2) * s * s * 3);
  GroundTruthMask m(s, s);
  for (int i = 0; i < 2; ++i)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const bool right = (i == 0) ? x >= s / 2 : y >= s / 2;
        for (int c = 0; c < 3; ++c)
          px[((static_cast<std::size_t>(i) * s + y) * s + x) * 3 + c] = right ? (c == 0 ? 1.0 : -1.0) : (c == 2 ? 1.0 : -1.0);
      }
  batch.images = {Tensor::from({2, s, s, 3}, px)};
  for (int i = 0; i < 2; ++i) {
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) m.at(y, x) = ((i == 0) ? x >= s / 2 : y >= s / 2) ? 1 : 0;
    batch.masks.push_back(m);
  }
  TrainConfig tc;
  tc.lr_other = 1e-4;
  tc.lr_vl = 1e-6;
  AdamW opt(model.params(), tc);
  double worst = 0.0, prev = INFINITY;
  for (int t = 0; t < 50; ++t) {
    const double loss = train_step(batch, model, reg, opt, tc).total;
    worst = std::max(worst, loss - prev);
    prev = loss;
  }
  return {"repeated batch: loss non-increasing over 50 steps", worst, 0.0};
}

std::vector<Measure> derived_examples(const std::filesystem::path& scratch) {
  return {ensemble_with_equivariant_encoder(),
          guidance_level3_resize(),
          cosine_example(),
          fusion_conv_oracle(),
          spatial_refine_oracle(),
          class_refine_oracle(),
          back_project_oracle(),
          semantic_loss_oracle(),
          transposed_conv_oracle(),
          attention_pooling_oracle(),
          transform_guidance_oracle(),
          fuse_stage_oracle(),
          decode_finite_difference(),
          bce_loop_oracle(),
          predict_loop_oracle(),
          iou_hand_case(),
          synthetic_coverage(scratch),
          repeated_batch_descent()};
}

std::vector<Measure> metric_table_oracle() {
  constexpr double kTol = 0.01 + 1e-9;
  ClassRegistry reg = make_registry({"seen", "unseen"}, default_prompt_templates());
  reg.seen = {true, false};
  std::vector<Measure> out;
  auto split = [&](double s, double u, double h) {
    const auto r = split_miou({s / 100.0, u / 100.0}, reg);
    const double got = r.h_miou ? round2(*r.h_miou) : INFINITY;
    out.push_back({"h-mIoU(" + format2(s) + ", " + format2(u) + ") == " + format2(h),
                   std::abs(got - h), kTol});
  };
  split(75.48, 51.46, 61.20);
  split(62.28, 35.77, 45.44);
  auto average = [&](std::vector<double> hs, double expect) {
    std::vector<MetricsReport> reports;
    std::string label;
    for (double h : hs) {
      MetricsReport r;
      r.h_miou = h;
      reports.push_back(r);
      label += (label.empty() ? "" : ", ") + format2(h);
    }
    const auto avg = average_reports(reports);
    out.push_back({"mean h-mIoU(" + label + ") == " + format2(expect),
                   std::abs(round2(*avg.h_miou) - expect), kTol});
  };
  average({61.20, 47.48, 49.66}, 52.78);
  average({59.73, 41.86, 49.13}, 50.24);
  return out;
}

// --- properties --------------------------------------------------------------------

std::vector<Measure> gradient_suite(const std::string& only) {
  constexpr double kTol = 1e-6;
  const int h = 4, w = 4, nc = 2, d = 8;
  std::vector<Measure> out;
  std::mt19937_64 rng(40);
  auto want = [&](const char* group) { return only.empty() || only == group; };
  if (want("spatial_refine")) {
    ParamStore store(41);
    auto p = SpatialRefineParams::create(store, "sp", d, 5, 2, 2, 2);
    randomize(store, 42, 0.3);
    Tensor phi = random_tensor({1, nc, h, w, d}, rng), g = random_tensor({1, h, w, 5}, rng);
    auto f = [&] { return weighted_sum(spatial_refine({phi}, {g, 8}, p).grid); };
    out.push_back({"grad spatial_refine", grad_rel_error(f, store, {phi, g}), kTol});
  }
  if (want("class_refine")) {
    ParamStore store(43);
    auto p = ClassRefineParams::create(store, "cls", d, 6, 2, 2);
    randomize(store, 44, 0.3);
    Tensor phi = random_tensor({1, nc, h, w, d}, rng);
    TextEmbeddingSet text;
    text.per_prompt = random_tensor({nc, 1, 6}, rng);
    text.prompt_averaged = random_tensor({nc, 6}, rng);
    auto f = [&] { return weighted_sum(class_refine({phi}, text, p).grid); };
    out.push_back({"grad class_refine", grad_rel_error(f, store, {phi, text.prompt_averaged}), kTol});
  }
  if (want("back_project")) {
    ParamStore store(45);
    auto p = BackProjectionParams::create(store, "bp", nc, d, 7, 5);
    randomize(store, 46, 0.3);
    Tensor phi = random_tensor({1, nc, h, w, d}, rng);
    auto f = [&] { return weighted_sum(back_project({phi}, p).grid); };
    out.push_back({"grad back_project", grad_rel_error(f, store, {phi}), kTol});
  }
  if (want("semantic_loss")) {
    ParamStore store(47);
    Tensor psi = random_tensor({1, h, w, 5}, rng), target = random_tensor({1, h, w, 5}, rng);
    auto f = [&] { return semantic_loss({psi, 1}, {target, 1}); };
    out.push_back({"grad semantic_loss", grad_rel_error(f, store, {psi}), kTol});
  }
  if (want("decoder")) {
    ParamStore store(48);
    auto st = DecoderStageParams::create(store, "st", d, 5, 3);
    randomize(store, 49, 0.3);
    Tensor phi = random_tensor({1, nc, h, w, d}, rng);
    Tensor g = random_tensor({1, h, w, 3}, rng);
    Tensor up = random_tensor({1, 2 * h, 2 * w, 5}, rng);
    Tensor asp = random_tensor({1, 2 * h, 2 * w, 1}, rng), ach = random_tensor({1, 1, 1, 3}, rng);
    Tensor phi2x = random_tensor({1, nc, 2 * h, 2 * w, 5}, rng), g2x = random_tensor({1, 2 * h, 2 * w, 3}, rng);
    auto f_up = [&] { return weighted_sum(upsample2x({phi}, st).grid); };
    out.push_back({"grad upsample2x", grad_rel_error(f_up, store, {phi}), kTol});
    auto f_att = [&] {
      auto a = compute_attentions({up, 1}, st);
      return ops::add(weighted_sum(a.spatial, 1), weighted_sum(a.channel, 2));
    };
    out.push_back({"grad compute_attentions", grad_rel_error(f_att, store, {up}), kTol});
    auto f_tg = [&] { return weighted_sum(transform_guidance({g, 8}, {asp, ach}).grid); };
    out.push_back({"grad transform_guidance", grad_rel_error(f_tg, store, {g, asp, ach}), kTol});
    auto f_fuse = [&] { return weighted_sum(fuse_stage({phi2x}, {g2x, 4}, st).grid); };
    out.push_back({"grad fuse_stage", grad_rel_error(f_fuse, store, {phi2x, g2x}), kTol});
  }
  if (want("decoder")) {
    ParamStore store(50);
    auto dec = DecoderParams::create(store, "dec", d, {6, 4}, {3, 2});
    randomize(store, 51, 0.3);
    Tensor phi = random_tensor({1, nc, h, w, d}, rng);
    GuidancePyramid pyr{{random_tensor({1, 8, 8, 2}, rng), 4},
                        {random_tensor({1, 4, 4, 3}, rng), 8},
                        {random_tensor({1, 4, 4, 5}, rng), 8}};
    auto f = [&] { return weighted_sum(decode({phi}, pyr, dec, 16).grid); };
    out.push_back({"grad decode", grad_rel_error(f, store, {phi}), kTol});
  }
  if (want("pipeline")) {
    ModelConfig cfg = small_model_config();
    Model model(cfg, {"roof", "water"});
    const ClassRegistry reg = make_registry({"roof", "water"}, cfg.templates);
    const auto samples = random_samples(1, 32, 2, 52);
    const TrainBatch batch = make_batch(samples, {0});
    auto f = [&] {
      auto o = model.forward(batch.images, reg, true);
      Tensor bce = bce_loss(o.logits, batch.masks).loss;
      return total_loss(bce, semantic_loss(*o.reconstruction, o.guidance.level3));
    };
    out.push_back({"grad end-to-end pipeline", grad_rel_error(f, model.params(), {}, 12), kTol});
  }
  return out;
}

StopGradientResult stop_gradient() {
  ModelConfig cfg = small_model_config();
  Model model(cfg, {"roof", "water"});
  const ClassRegistry reg = make_registry({"roof", "water"}, cfg.templates);
  const auto samples = random_samples(2, 32, 2, 60);
  const TrainBatch batch = make_batch(samples, {0, 1});
  StopGradientResult r;

  // Open every guidance-encoder parameter to gradients so a leaking path
  // would show up.
  for (auto& p : model.params().params())
    if (p.name.rfind("guidance.", 0) == 0) p.value.set_requires_grad(true);
  model.params().zero_grad();
  {
    auto o = model.forward(batch.images, reg, true);
    semantic_loss(*o.reconstruction, o.guidance.level3).backward();
  }
  double bp = 0.0;
  for (auto& p : model.params().params()) {
    for (double g : p.value.grad()) {
      if (p.name.rfind("guidance.", 0) == 0) r.max_guidance_param_grad = std::max(r.max_guidance_param_grad, std::abs(g));
      if (p.name.rfind("backproj", 0) == 0) bp += g * g;
    }
  }
  r.backproj_grad_norm = std::sqrt(bp);

  // Supplied pyramid whose level3 is a leaf that asks for gradients.
  model.params().zero_grad();
  GuidancePyramid pyr = encode_guidance(batch.images, model.guidance_encoder());
  Tensor level3 = pyr.level3.grid.clone();
  level3.set_requires_grad(true);
  pyr.level3.grid = level3;
  {
    auto o = model.forward(batch.images, reg, true, pyr);
    semantic_loss(*o.reconstruction, {level3, pyr.level3.stride}).backward();
  }
  for (double g : level3.grad()) r.max_level3_grad = std::max(r.max_level3_grad, std::abs(g));
  return r;
}

FreezingResult freezing(int steps) {
  ModelConfig cfg = small_model_config();
  Model model(cfg, {"roof", "water", "tree"});
  const ClassRegistry reg = make_registry({"roof", "water", "tree"}, cfg.templates);
  FreezingResult r;
  const auto groups = partition_parameters(model.params());
  std::set<const Parameter*> seen_params;
  std::size_t values = 0;
  for (const auto* list : {&groups.vl_qv, &groups.main, &groups.frozen})
    for (const Parameter* p : *list) {
      seen_params.insert(p);
      values += p->value.size();
    }
  r.partition_exact = groups.count() == model.params().params().size() &&
                      seen_params.size() == groups.count() &&
                      values == model.params().total_count() && !groups.vl_qv.empty();

  auto snapshot = [](const std::vector<Parameter*>& ps) {
    std::vector<std::vector<double>> s;
    for (const Parameter* p : ps) s.push_back(p->value.values());
    return s;
  };
  const auto frozen0 = snapshot(groups.frozen), vl0 = snapshot(groups.vl_qv), main0 = snapshot(groups.main);
  TrainConfig tc;
  tc.batch_size = 2;
  train(model, reg, random_samples(4, 32, 3, 61), tc, steps, 62, [](int, const LossRecord&) {});
  r.frozen_unchanged = snapshot(groups.frozen) == frozen0;
  const auto vl1 = snapshot(groups.vl_qv), main1 = snapshot(groups.main);
  for (std::size_t i = 0; i < vl1.size(); ++i) r.vl_qv_changed |= vl1[i] != vl0[i];
  // Every main tensor must move, not just some of them.
  r.main_changed = true;
  for (std::size_t i = 0; i < main1.size(); ++i) r.main_changed &= main1[i] != main0[i];
  return r;
}

Measure rotation_equivariance() {
  ModelConfig cfg = small_model_config();
  Model model(cfg, {"roof", "water", "tree"});
  const ClassRegistry reg = make_registry({"roof", "water", "tree"}, cfg.templates);
  std::mt19937_64 rng(70);
  ImageBatch img{random_tensor({2, 32, 32, 3}, rng)};
  ImageBatch rot{spatial::rotate(img.pixels, 90)};
  NoGradGuard no_grad;
  const auto a = model.forward(img, reg, false);
  const auto b = model.forward(rot, reg, false);
  const int n = static_cast<int>(a.raw_correlations.size());
  std::vector<Tensor> expected;
  for (int i = 0; i < n; ++i) {
    const Tensor& src = a.raw_correlations[(i + 1) % n];
    const Shape& s = src.shape();
    Tensor r = spatial::rotate(ops::reshape(src, {s[0], s[1], s[2], s[3] * s[4]}), 90);
    expected.push_back(ops::reshape(r, s));
  }
  const Tensor lhs = stack_correlations(b.raw_correlations);
  const Tensor rhs = stack_correlations(expected);
  return {"rotation-ensemble equivariance of stacked correlations",
          testing::max_abs_diff(lhs.data(), rhs.data()), 1e-5};
}

Measure class_permutation() {
  ModelConfig cfg = small_model_config();
  const std::vector<std::string> names{"roof", "water", "tree", "road", "ship"};
  Model model(cfg, {"roof", "water", "tree"});
  std::mt19937_64 rng(71);
  std::vector<int> perm(names.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::string> permuted;
  for (int i : perm) permuted.push_back(names[i]);
  ImageBatch img{random_tensor({2, 32, 32, 3}, rng)};
  NoGradGuard no_grad;
  const auto p0 = predict(model.forward(img, make_registry(names, cfg.templates), false).logits);
  const auto p1 = predict(model.forward(img, make_registry(permuted, cfg.templates), false).logits);
  double diff = 0.0;
  for (std::size_t b = 0; b < p0.size(); ++b)
    for (std::size_t i = 0; i < p0[b].labels.size(); ++i)
      diff += perm[p1[b].labels[i]] != p0[b].labels[i] ? 1.0 : 0.0;
  return {"class-permutation equivariance of predictions", diff, 0.0};
}

}  // namespace rsovseg::checks
