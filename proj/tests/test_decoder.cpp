#include <gtest/gtest.h>

#include <random>

#include "checks.hpp"
#include "rsovseg/decoder.hpp"
#include "rsovseg/errors.hpp"
#include "rsovseg/spatial.hpp"
#include "test_util.hpp"

namespace rsovseg {
namespace {

using testing::random_tensor;

void expect_measure(const checks::Measure& m) { EXPECT_LE(m.error, m.tolerance) << m.name; }

TEST(Upsample, ScatterOracle) { expect_measure(checks::transposed_conv_oracle()); }

TEST(Upsample, SingleCellReproducesKernel) {
  ParamStore store(1);
  auto p = DecoderStageParams::create(store, "st", 1, 2, 1);
  checks::randomize(store, 2);
  for (double& b : p.up.bias.values()) b = 0.0;
  const auto out = upsample2x({Tensor::from({1, 1, 1, 1, 1}, {3.0})}, p);
  ASSERT_EQ(out.grid.shape(), (Shape{1, 1, 2, 2, 2}));
  for (int i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(out.grid.values()[i], 3.0 * p.up.weight.values()[i]);
  const auto zero = upsample2x({Tensor::zeros({1, 1, 1, 1, 1})}, p);
  for (double v : zero.grid.values()) EXPECT_EQ(v, 0.0);
}

TEST(Attentions, MeanOracle) { expect_measure(checks::attention_pooling_oracle()); }

TEST(Attentions, ChannelMeanArithmetic) {
  // Channels (1, 3) at every pixel.
  Tensor x = Tensor::zeros({1, 2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    x.values()[2 * i] = 1.0;
    x.values()[2 * i + 1] = 3.0;
  }
  const Tensor mean = ops::mean_axis(x, 3);
  for (double v : mean.values()) EXPECT_EQ(v, 2.0);
  Tensor vol = Tensor::from({1, 2, 1, 1, 1}, {1.0, 5.0});
  EXPECT_EQ(class_average({vol}).grid.item(), 3.0);
}

TEST(TransformGuidance, ZeroAndUnitAttention) {
  std::mt19937_64 rng(3);
  DenseFeatureMap g{random_tensor({1, 2, 2, 3}, rng), 8};
  const Tensor up = spatial::upsample_nearest(g.grid, 2);
  auto a0 = transform_guidance(g, {Tensor::zeros({1, 4, 4, 1}), Tensor::zeros({1, 1, 1, 3})});
  EXPECT_EQ(a0.grid.values(), up.values());
  auto a1 = transform_guidance(g, {Tensor::full({1, 4, 4, 1}, 1.0), Tensor::zeros({1, 1, 1, 3})});
  EXPECT_EQ(a1.grid.values(), ops::scale(up, 2.0).values());
}

TEST(TransformGuidance, ElementwiseOracle) { expect_measure(checks::transform_guidance_oracle()); }

TEST(TransformGuidance, MismatchRejected) {
  DenseFeatureMap g{Tensor::zeros({1, 2, 2, 3}), 8};
  EXPECT_THROW(transform_guidance(g, {Tensor::zeros({1, 2, 2, 1}), Tensor::zeros({1, 1, 1, 3})}),
               ShapeError);
  EXPECT_THROW(transform_guidance(g, {Tensor::zeros({1, 4, 4, 1}), Tensor::zeros({1, 1, 1, 2})}),
               ShapeError);
}

TEST(FuseStage, ConvolutionOracle) { expect_measure(checks::fuse_stage_oracle()); }

TEST(FuseStage, SelectorKernelPassesCorrelation) {
  ParamStore store(4);
  auto p = DecoderStageParams::create(store, "st", 2, 2, 3);
  for (double& w : p.fuse.weight.values()) w = 0.0;
  // Centre tap (ky = kx = 1) of the first two input channels, identity.
  const int cin = 5, centre = (1 * 3 + 1) * cin;
  p.fuse.weight.values()[(centre + 0) * 2 + 0] = 1.0;
  p.fuse.weight.values()[(centre + 1) * 2 + 1] = 1.0;
  std::mt19937_64 rng(5);
  Tensor phi = random_tensor({1, 2, 4, 4, 2}, rng);
  const auto out = fuse_stage({phi}, {random_tensor({1, 4, 4, 3}, rng), 4}, p);
  EXPECT_EQ(out.grid.values(), phi.values());
  EXPECT_THROW(fuse_stage({phi}, {Tensor::zeros({1, 2, 2, 3}), 4}, p), ShapeError);
}

TEST(Decode, OutputShapeAndPermutation) {
  ParamStore store(6);
  auto dec = DecoderParams::create(store, "dec", 8, {6, 4}, {5, 3});
  std::mt19937_64 rng(7);
  const int nc = 3;
  Tensor phi = random_tensor({1, nc, 8, 8, 8}, rng);
  GuidancePyramid pyr{{random_tensor({1, 16, 16, 3}, rng), 4},
                      {random_tensor({1, 8, 8, 5}, rng), 8},
                      {random_tensor({1, 8, 8, 4}, rng), 8}};
  const auto logits = decode({phi}, pyr, dec, 64);
  EXPECT_EQ(logits.grid.shape(), (Shape{1, 64, 64, nc}));

  std::vector<int> perm{2, 0, 1};
  std::vector<Tensor> slices;
  for (int i : perm) slices.push_back(ops::slice(phi, 1, i, i + 1));
  const auto permuted = decode({ops::concat(slices, 1)}, pyr, dec, 64);
  for (int i = 0; i < nc; ++i) {
    // The class average in each stage sums classes in a different order.
    EXPECT_LE(testing::max_abs_diff(ops::slice(permuted.grid, 3, i, i + 1).data(),
                                    ops::slice(logits.grid, 3, perm[i], perm[i] + 1).data()),
              1e-12);
  }
}

TEST(Decode, GuidanceResizeAndRejection) {
  ParamStore store(8);
  auto dec = DecoderParams::create(store, "dec", 4, {4, 3}, {3, 2});
  std::mt19937_64 rng(9);
  Tensor phi = random_tensor({1, 2, 4, 4, 4}, rng);
  // Level2 at 8x8 for a 4x4 correlation grid: resized down by default.
  GuidancePyramid pyr{{random_tensor({1, 8, 8, 2}, rng), 4},
                      {random_tensor({1, 8, 8, 3}, rng), 4},
                      {random_tensor({1, 4, 4, 5}, rng), 8}};
  EXPECT_EQ(decode({phi}, pyr, dec, 32).grid.shape(), (Shape{1, 32, 32, 2}));
  dec.resize_guidance = false;
  EXPECT_THROW(decode({phi}, pyr, dec, 32), ShapeError);
  dec.resize_guidance = true;
  pyr.level2.grid = random_tensor({1, 4, 4, 7}, rng);
  EXPECT_THROW(decode({phi}, pyr, dec, 32), ShapeError);
}

TEST(Decode, EndToEndFiniteDifferences) { expect_measure(checks::decode_finite_difference()); }

TEST(DecoderGradients, MatchFiniteDifferences) {
  for (const auto& m : checks::gradient_suite("decoder")) expect_measure(m);
}

}  // namespace
}  // namespace rsovseg
