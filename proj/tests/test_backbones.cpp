#include <gtest/gtest.h>

#include <random>

#include "checks.hpp"
#include "rsovseg/backbones.hpp"
#include "rsovseg/errors.hpp"
#include "rsovseg/spatial.hpp"
#include "test_util.hpp"

namespace rsovseg {
namespace {

using testing::random_tensor;

TEST(Rotation, TwoByTwoExampleAndInverse) {
  Tensor x = Tensor::from({1, 2, 2, 1}, {1, 2, 3, 4});
  EXPECT_EQ(rotate_map(x, 90).values(), (std::vector<double>{2, 4, 1, 3}));
  std::mt19937_64 rng(1);
  Tensor g = random_tensor({1, 8, 8, 3}, rng);
  EXPECT_EQ(rotate_map(rotate_map(g, 270), 90).values(), g.values());
}

TEST(RotationAngleSet, RejectsInvalidSets) {
  EXPECT_THROW(RotationAngleSet({90, 180}), InvalidArgument);
  EXPECT_THROW(RotationAngleSet({0, 45}), InvalidArgument);
  EXPECT_THROW(RotationAngleSet({0, 90, 90}), InvalidArgument);
  EXPECT_EQ(RotationAngleSet().size(), 4);
}

TEST(Ensemble, SingleAngleIsPlainEncoding) {
  ParamStore store(1);
  StubVisionEncoder enc(store, {8, 16, true});
  std::mt19937_64 rng(2);
  ImageBatch img{random_tensor({1, 32, 32, 3}, rng)};
  auto ens = encode_image_ensemble(img, RotationAngleSet({0}), enc);
  ASSERT_EQ(ens.size(), 1u);
  EXPECT_EQ(ens[0].grid.values(), enc.encode(img).grid.values());
}

TEST(Ensemble, EntriesFollowDefinitionAndShape) {
  ParamStore store(3);
  StubVisionEncoder enc(store, {8, 16, true});
  std::mt19937_64 rng(4);
  ImageBatch img{random_tensor({2, 32, 32, 3}, rng)};
  RotationAngleSet angles;
  auto ens = encode_image_ensemble(img, angles, enc);
  ASSERT_EQ(ens.size(), 4u);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    EXPECT_EQ(ens[i].grid.shape(), (Shape{2, 4, 4, 16}));
    const int a = angles.angles()[i];
    const Tensor expect = rotate_map(enc.encode(rotate_map(img, a)).grid, -a);
    EXPECT_EQ(ens[i].grid.values(), expect.values());
  }
}

TEST(Ensemble, EquivariantEncoderOracle) {
  const auto m = checks::ensemble_with_equivariant_encoder();
  EXPECT_LE(m.error, m.tolerance) << m.name;
}

class BadEncoder final : public VisionEncoder {
 public:
  explicit BadEncoder(Shape s) : shape_(std::move(s)) {}
  DenseFeatureMap encode(const ImageBatch&) const override { return {Tensor::zeros(shape_), 8}; }
  int dim() const override { return 4; }

 private:
  Shape shape_;
};

TEST(Ensemble, RejectsNonSquareOrWrongWidth) {
  ImageBatch img{Tensor::zeros({1, 16, 16, 3})};
  EXPECT_THROW(encode_image_ensemble(img, RotationAngleSet({0}), BadEncoder({1, 2, 3, 4})), ShapeError);
  EXPECT_THROW(encode_image_ensemble(img, RotationAngleSet({0}), BadEncoder({1, 2, 2, 5})), ShapeError);
}

TEST(Prompts, ClassMajorSubstitution) {
  ClassRegistry reg;
  reg.names = {"ship", "storage tank"};
  reg.seen = {true, false};
  const auto prompts = build_prompts(reg);
  ASSERT_EQ(prompts.size(), 8u);
  EXPECT_EQ(prompts[0], "A satellite image of a ship");
  EXPECT_EQ(prompts[3], "An aerial image of a ship");
  EXPECT_EQ(prompts[4], "A satellite image of a storage tank");
}

TEST(Prompts, TemplateNeedsExactlyOnePlaceholder) {
  ClassRegistry reg;
  reg.names = {"ship"};
  reg.seen = {true};
  reg.templates = {"no placeholder"};
  EXPECT_THROW(build_prompts(reg), InvalidArgument);
  reg.templates = {"[CLS] and [CLS]"};
  EXPECT_THROW(build_prompts(reg), InvalidArgument);
}

TEST(Registry, Validation) {
  ClassRegistry reg;
  reg.names = {"a", "b"};
  reg.seen = {false, false};
  EXPECT_THROW(reg.validate(), InvalidArgument);
  reg.seen = {true, false};
  EXPECT_NO_THROW(reg.validate());
  reg.names = {"a", "a"};
  EXPECT_THROW(reg.validate(), InvalidArgument);
  reg.names = {"a", "b"};
  EXPECT_EQ(reg.index_of("b"), 1);
  EXPECT_EQ(reg.index_of("c"), -1);
  EXPECT_EQ(reg.unseen_indices(), std::vector<int>{1});
}

TEST(TextEncoding, ShapesUnitNormAndAveraging) {
  ParamStore store(5);
  StubTextEncoder enc(store, {16, 7, true});
  ClassRegistry reg;
  reg.names = {"ship", "harbor", "plane"};
  reg.seen = {true, true, false};
  const auto text = encode_text(build_prompts(reg), enc, reg);
  EXPECT_EQ(text.per_prompt.shape(), (Shape{3, 4, 16}));
  EXPECT_EQ(text.prompt_averaged.shape(), (Shape{3, 16}));
  for (int i = 0; i < 12; ++i) {
    double n = 0.0;
    for (int d = 0; d < 16; ++d) n += text.per_prompt.values()[i * 16 + d] * text.per_prompt.values()[i * 16 + d];
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
  for (int d = 0; d < 16; ++d) {
    double mean = 0.0;
    for (int p = 0; p < 4; ++p) mean += text.per_prompt.at({1, p, d}) / 4.0;
    EXPECT_NEAR(text.prompt_averaged.at({1, d}), mean, 1e-15);
  }
}

TEST(TextEncoding, StubWithoutAttentionIsPromptHash) {
  ParamStore store(6);
  StubTextEncoder enc(store, {8, 7, false});
  EXPECT_TRUE(store.params().empty());
  const Tensor a = enc.encode({"A satellite image of a ship"});
  const Tensor b = enc.encode({"A satellite image of a ship"});
  const Tensor c = enc.encode({"A satellite image of a port"});
  EXPECT_EQ(a.values(), b.values());
  EXPECT_NE(a.values(), c.values());
}

TEST(Guidance, StubShapesAndDeterminism) {
  ParamStore store(7);
  StubGuidanceEncoder enc(store, {{4, 8, 8}, {32, 64, 64}});
  std::mt19937_64 rng(8);
  ImageBatch img{random_tensor({1, 64, 64, 3}, rng)};
  const auto a = encode_guidance(img, enc);
  const auto b = encode_guidance(img, enc);
  EXPECT_EQ(a.level1.grid.shape(), (Shape{1, 16, 16, 32}));
  EXPECT_EQ(a.level3.grid.shape(), (Shape{1, 8, 8, 64}));
  EXPECT_EQ(a.level3.stride, 8);
  EXPECT_EQ(a.level3.grid.values(), b.level3.grid.values());
  EXPECT_FALSE(a.level3.grid.requires_grad());
}

TEST(Guidance, Level3ResizeOracle) {
  const auto m = checks::guidance_level3_resize();
  EXPECT_LE(m.error, m.tolerance) << m.name;
}

TEST(Guidance, FewerThanThreeTapsRejected) {
  ParamStore store(9);
  EXPECT_THROW(StubGuidanceEncoder(store, {{4, 8}, {8, 8}}), InvalidArgument);
}

}  // namespace
}  // namespace rsovseg
