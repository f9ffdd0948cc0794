#include "rsovseg/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "rsovseg/errors.hpp"
#include "rsovseg/ops.hpp"
#include "rsovseg/spatial.hpp"

namespace rsovseg {
namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::size_t count_occurrences(const std::string& s, const std::string& what) {
  std::size_t n = 0;
  for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos + what.size())) ++n;
  return n;
}

// Single-query-set global attention shared by the stub VL encoders:
// x + out(softmax(q k^T / sqrt(d)) v).
Tensor residual_attention(const Tensor& queries_from, const Tensor& tokens,
                          const Linear& q, const Linear& k, const Linear& v,
                          const Linear& out) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(tokens.dim(-1)));
  Tensor scores = ops::scale(ops::bmm(q(queries_from), k(tokens), false, true), inv);
  Tensor mixed = ops::bmm(ops::softmax_last(scores), v(tokens));
  return ops::add(queries_from, out(mixed));
}

}  // namespace

const std::vector<std::string>& default_prompt_templates() {
  static const std::vector<std::string> templates = {
      "A satellite image of a [CLS]",
      "A land use image of a [CLS]",
      "A remote sensing image of a [CLS]",
      "An aerial image of a [CLS]",
  };
  return templates;
}

void ClassRegistry::validate() const {
  if (names.empty()) throw InvalidArgument("class registry is empty");
  if (seen.size() != names.size()) {
    throw InvalidArgument("class registry: seen flags do not cover every class");
  }
  if (std::none_of(seen.begin(), seen.end(), [](bool s) { return s; })) {
    throw InvalidArgument("class registry: no seen class");
  }
  std::set<std::string> unique(names.begin(), names.end());
  if (unique.size() != names.size()) throw InvalidArgument("class registry: duplicate class names");
  if (templates.empty()) throw InvalidArgument("class registry: no prompt templates");
}

int ClassRegistry::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::vector<int> ClassRegistry::seen_indices() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (seen[i]) out.push_back(i);
  }
  return out;
}

std::vector<int> ClassRegistry::unseen_indices() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (!seen[i]) out.push_back(i);
  }
  return out;
}

RotationAngleSet::RotationAngleSet(std::vector<int> angles) : angles_(std::move(angles)) {
  std::set<int> unique;
  for (int a : angles_) {
    if (a != 0 && a != 90 && a != 180 && a != 270) {
      throw InvalidArgument("rotation angle must be one of 0/90/180/270, got " + std::to_string(a));
    }
    if (!unique.insert(a).second) throw InvalidArgument("duplicate rotation angle " + std::to_string(a));
  }
  if (!unique.count(0)) throw InvalidArgument("rotation angle set must contain 0");
}

Tensor rotate_map(const Tensor& grid, int angle_deg) {
  return spatial::rotate(grid, angle_deg);
}

DenseFeatureMap rotate_map(const DenseFeatureMap& m, int angle_deg) {
  return {spatial::rotate(m.grid, angle_deg), m.stride};
}

ImageBatch rotate_map(const ImageBatch& image, int angle_deg) {
  return {spatial::rotate(image.pixels, angle_deg)};
}

std::vector<DenseFeatureMap> encode_image_ensemble(const ImageBatch& image,
                                                   const RotationAngleSet& angles,
                                                   const VisionEncoder& encoder) {
  std::vector<DenseFeatureMap> out;
  out.reserve(angles.angles().size());
  for (int angle : angles.angles()) {
    DenseFeatureMap f = encoder.encode(rotate_map(image, angle));
    if (f.grid.rank() != 4 || f.height() != f.width()) {
      throw ShapeError("vision encoder returned a non-square map " + to_string(f.grid.shape()));
    }
    if (f.channels() != encoder.dim()) {
      throw ShapeError("vision encoder returned " + std::to_string(f.channels()) +
                       " channels, declared " + std::to_string(encoder.dim()));
    }
    out.push_back(rotate_map(f, -angle));
  }
  return out;
}

std::vector<std::string> build_prompts(const ClassRegistry& registry) {
  const std::string placeholder = kClassPlaceholder;
  for (const auto& t : registry.templates) {
    if (count_occurrences(t, placeholder) != 1) {
      throw InvalidArgument("prompt template must contain exactly one [CLS]: \"" + t + "\"");
    }
  }
  std::vector<std::string> prompts;
  prompts.reserve(registry.names.size() * registry.templates.size());
  for (const auto& name : registry.names) {
    for (const auto& t : registry.templates) {
      std::string p = t;
      p.replace(p.find(placeholder), placeholder.size(), name);
      prompts.push_back(std::move(p));
    }
  }
  return prompts;
}

TextEmbeddingSet encode_text(const std::vector<std::string>& prompts,
                             const TextEncoder& encoder,
                             const ClassRegistry& registry) {
  const int nc = registry.size();
  const int p = static_cast<int>(registry.templates.size());
  if (static_cast<int>(prompts.size()) != nc * p) {
    throw InvalidArgument("expected " + std::to_string(nc * p) + " prompts, got " +
                          std::to_string(prompts.size()));
  }
  Tensor e = encoder.encode(prompts);
  if (e.rank() != 2 || e.dim(0) != nc * p || e.dim(1) != encoder.dim()) {
    throw ShapeError("text encoder returned " + to_string(e.shape()) + " for " +
                     std::to_string(prompts.size()) + " prompts of dim " +
                     std::to_string(encoder.dim()));
  }
  TextEmbeddingSet set;
  set.per_prompt = ops::reshape(e, {nc, p, encoder.dim()});
  set.prompt_averaged = ops::mean_axis(set.per_prompt, 1);
  return set;
}

GuidancePyramid encode_guidance(const ImageBatch& image,
                                const GuidanceEncoder& encoder, int vl_grid) {
  auto taps = encoder.taps(image);
  if (taps.size() < 3) {
    throw InvalidArgument("guidance encoder exposes " + std::to_string(taps.size()) +
                          " taps, need at least 3");
  }
  auto frozen = [](const DenseFeatureMap& m) {
    return DenseFeatureMap{ops::stop_gradient(m.grid), m.stride};
  };
  GuidancePyramid pyr{frozen(taps[0]), frozen(taps[1]), frozen(taps.back())};
  if (vl_grid > 0 && (pyr.level3.height() != vl_grid || pyr.level3.width() != vl_grid)) {
    const int stride = std::max(1, pyr.level3.stride * pyr.level3.height() / vl_grid);
    pyr.level3 = {spatial::resize_bilinear(pyr.level3.grid, vl_grid, vl_grid), stride};
  }
  return pyr;
}

// --- stubs ---------------------------------------------------------------------

StubVisionEncoder::StubVisionEncoder(ParamStore& store, const StubVisionConfig& config)
    : config_(config) {
  if (config.patch < 1 || config.dim < 1) throw InvalidArgument("stub vision: bad config");
  patch_proj_ = store.add("vl.image.patch_proj", {config.patch * config.patch * 3, config.dim},
                          Initializer::xavier(), ParamGroup::kFrozen);
  if (config.attention) {
    q_ = Linear::create(store, "vl.image.attn.q", config.dim, config.dim, ParamGroup::kVlQueryValue);
    k_ = Linear::create(store, "vl.image.attn.k", config.dim, config.dim, ParamGroup::kFrozen);
    v_ = Linear::create(store, "vl.image.attn.v", config.dim, config.dim, ParamGroup::kVlQueryValue);
    out_ = Linear::create(store, "vl.image.attn.out", config.dim, config.dim, ParamGroup::kFrozen,
                          true, 0.5);
  }
}

DenseFeatureMap StubVisionEncoder::encode(const ImageBatch& images) const {
  if (images.pixels.rank() != 4 || images.pixels.dim(3) != 3) {
    throw ShapeError("stub vision: expected [B,S,S,3], got " + to_string(images.pixels.shape()));
  }
  Tensor x = ops::matmul(spatial::patchify(images.pixels, config_.patch), patch_proj_);
  if (config_.attention) {
    const Shape grid = x.shape();
    Tensor tokens = ops::reshape(x, {grid[0], grid[1] * grid[2], grid[3]});
    x = ops::reshape(residual_attention(tokens, tokens, q_, k_, v_, out_), grid);
  }
  return {x, config_.patch};
}

StubTextEncoder::StubTextEncoder(ParamStore& store, const StubTextConfig& config)
    : config_(config) {
  if (config.dim < 1) throw InvalidArgument("stub text: bad config");
  if (config.attention) {
    q_ = Linear::create(store, "vl.text.attn.q", config.dim, config.dim, ParamGroup::kVlQueryValue);
    k_ = Linear::create(store, "vl.text.attn.k", config.dim, config.dim, ParamGroup::kFrozen);
    v_ = Linear::create(store, "vl.text.attn.v", config.dim, config.dim, ParamGroup::kVlQueryValue);
    out_ = Linear::create(store, "vl.text.attn.out", config.dim, config.dim, ParamGroup::kFrozen,
                          true, 0.5);
  }
}

std::vector<double> StubTextEncoder::token_vector(const std::string& token) const {
  std::mt19937_64 rng(config_.seed ^ fnv1a(token));
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(config_.dim));
  double ss = 0.0;
  for (auto& x : v) {
    x = d(rng);
    ss += x * x;
  }
  const double inv = 1.0 / std::sqrt(ss);
  for (auto& x : v) x *= inv;
  return v;
}

Tensor StubTextEncoder::encode(const std::vector<std::string>& prompts) const {
  const int d = config_.dim;
  std::vector<Tensor> rows;
  rows.reserve(prompts.size());
  for (const auto& prompt : prompts) {
    std::vector<double> tok = token_vector(prompt);
    if (!config_.attention) {
      rows.push_back(Tensor::from({1, d}, std::move(tok)));
      continue;
    }
    std::istringstream words(prompt);
    int count = 1;
    for (std::string w; words >> w; ++count) {
      auto v = token_vector(w);
      tok.insert(tok.end(), v.begin(), v.end());
    }
    Tensor tokens = Tensor::from({1, count, d}, std::move(tok));
    Tensor head = ops::slice(tokens, 1, 0, 1);
    Tensor e = residual_attention(head, tokens, q_, k_, v_, out_);
    rows.push_back(ops::l2_normalize_last(ops::reshape(e, {1, d})));
  }
  return ops::concat(rows, 0);
}

StubGuidanceEncoder::StubGuidanceEncoder(ParamStore& store, const StubGuidanceConfig& config)
    : config_(config) {
  if (config.strides.size() != config.dims.size() || config.strides.size() < 3) {
    throw InvalidArgument("stub guidance: need matching strides/dims for at least 3 levels");
  }
  for (std::size_t l = 0; l < config.strides.size(); ++l) {
    const int s = config.strides[l];
    projections_.push_back(store.add("guidance.level" + std::to_string(l + 1) + ".proj",
                                     {s * s * 3, config.dims[l]}, Initializer::xavier(2.0),
                                     ParamGroup::kFrozen));
  }
}

std::vector<DenseFeatureMap> StubGuidanceEncoder::taps(const ImageBatch& images) const {
  std::vector<DenseFeatureMap> out;
  for (std::size_t l = 0; l < projections_.size(); ++l) {
    const int s = config_.strides[l];
    Tensor f = ops::tanh(ops::matmul(spatial::patchify(images.pixels, s), projections_[l]));
    out.push_back({f, s});
  }
  return out;
}

}  // namespace rsovseg
