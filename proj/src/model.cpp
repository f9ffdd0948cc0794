#include "rsovseg/model.hpp"

#include "rsovseg/errors.hpp"
#include "rsovseg/ops.hpp"

namespace rsovseg {

Model::Model(const ModelConfig& config, std::vector<std::string> train_classes)
    : config_(config),
      train_classes_(std::move(train_classes)),
      angles_(config.angles),
      store_(config.seed) {
  if (config_.encoder != "stub") {
    throw ConfigError("encoder \"" + config_.encoder +
                      "\" is not available in this build (supported: stub)");
  }
  if (config_.text.dim != config_.vision.dim) {
    throw ConfigError("vision and text embedding dims must match");
  }
  if (config_.guidance.dims.size() < 3) throw ConfigError("guidance needs three levels");
  if (config_.refine_blocks < 1) throw ConfigError("refine_blocks must be >= 1");
  if (config_.decoder_dims.empty() || config_.decoder_dims.size() > 2) {
    throw ConfigError("decoder_dims must have one or two stages");
  }
  if (train_classes_.empty()) throw ConfigError("model needs at least one training class");

  vision_ = std::make_unique<StubVisionEncoder>(store_, config_.vision);
  text_ = std::make_unique<StubTextEncoder>(store_, config_.text);
  guidance_ = std::make_unique<StubGuidanceEncoder>(store_, config_.guidance);

  const int prompts = static_cast<int>(config_.templates.size());
  const int dg3 = config_.guidance.dims.back();
  fusion_ = FusionParams::create(store_, "fusion", angles_.size() * prompts, config_.d_phi,
                                 config_.fusion_kernel);
  for (int i = 0; i < config_.refine_blocks; ++i) {
    const std::string name = "refine" + std::to_string(i);
    refine_.push_back({SpatialRefineParams::create(store_, name + ".spatial", config_.d_phi, dg3,
                                                   config_.window_size, config_.num_heads,
                                                   config_.mlp_ratio),
                       ClassRefineParams::create(store_, name + ".class", config_.d_phi,
                                                 config_.text.dim, config_.num_heads,
                                                 config_.mlp_ratio)});
  }
  const int hidden = config_.backproj_hidden > 0 ? config_.backproj_hidden : dg3;
  backproj_ = BackProjectionParams::create(store_, "backproj",
                                           static_cast<int>(train_classes_.size()),
                                           config_.d_phi, hidden, dg3);
  const std::vector<int> guidance_dims = {config_.guidance.dims[1], config_.guidance.dims[0]};
  decoder_ = DecoderParams::create(
      store_, "decoder", config_.d_phi, config_.decoder_dims,
      std::vector<int>(guidance_dims.begin(),
                       guidance_dims.begin() + static_cast<long>(config_.decoder_dims.size())));
  decoder_.resize_guidance = config_.resize_guidance;
}

Model::Output Model::forward(const ImageBatch& images, const ClassRegistry& registry,
                             bool with_backprojection,
                             const std::optional<GuidancePyramid>& guidance) const {
  registry.validate();
  if (registry.templates.size() != config_.templates.size()) {
    throw InvalidArgument("registry has " + std::to_string(registry.templates.size()) +
                          " prompt templates, model was built for " +
                          std::to_string(config_.templates.size()));
  }
  if (with_backprojection && registry.size() != backproj_.num_classes) {
    throw InvalidArgument("back-projection is bound to " + std::to_string(backproj_.num_classes) +
                          " training classes, registry has " + std::to_string(registry.size()));
  }
  if (images.pixels.rank() != 4 || images.pixels.dim(1) != images.pixels.dim(2)) {
    throw ShapeError("images must be [B,S,S,3], got " + to_string(images.pixels.shape()));
  }

  Output out;
  const auto ensemble = encode_image_ensemble(images, angles_, *vision_);
  const TextEmbeddingSet text = encode_text(build_prompts(registry), *text_, registry);
  for (const auto& e : ensemble) out.raw_correlations.push_back(cosine_correlation(e, text));
  out.initial = fuse_correlations(out.raw_correlations, fusion_);

  const int grid = out.initial.height();
  if (guidance) {
    auto constant = [](const DenseFeatureMap& m) {
      return DenseFeatureMap{ops::stop_gradient(m.grid), m.stride};
    };
    out.guidance = {constant(guidance->level1), constant(guidance->level2),
                    align_guidance(constant(guidance->level3), grid)};
  } else {
    out.guidance = encode_guidance(images, *guidance_, grid);
  }

  out.refined = refine_stack(out.initial, out.guidance.level3, text, refine_);
  if (with_backprojection) out.reconstruction = back_project(out.refined, backproj_);
  out.logits = decode(out.refined, out.guidance, decoder_, images.side());
  return out;
}

}  // namespace rsovseg
