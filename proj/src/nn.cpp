#include "rsovseg/nn.hpp"

#include <cmath>
#include <random>

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

std::vector<double> initial_values(const Shape& shape, Initializer init,
                                   std::uint64_t seed) {
  const std::size_t n = numel(shape);
  std::vector<double> v(n, 0.0);
  std::mt19937_64 rng(seed);
  switch (init.kind) {
    case Initializer::Kind::kZeros:
      break;
    case Initializer::Kind::kOnes:
      std::fill(v.begin(), v.end(), 1.0);
      break;
    case Initializer::Kind::kXavierUniform: {
      // fan_out is the last dim, fan_in everything before it.
      const double fan_out = shape.empty() ? 1.0 : shape.back();
      const double fan_in = static_cast<double>(n) / fan_out;
      const double bound = init.scale * std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> d(-bound, bound);
      for (auto& x : v) x = d(rng);
      break;
    }
    case Initializer::Kind::kNormal: {
      std::normal_distribution<double> d(0.0, init.scale);
      for (auto& x : v) x = d(rng);
      break;
    }
    case Initializer::Kind::kUniform: {
      std::uniform_real_distribution<double> d(-init.scale, init.scale);
      for (auto& x : v) x = d(rng);
      break;
    }
  }
  return v;
}

}  // namespace

const char* to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kUnassigned: return "unassigned";
    case ParamGroup::kVlQueryValue: return "vl_qv";
    case ParamGroup::kMain: return "main";
    case ParamGroup::kFrozen: return "frozen";
  }
  return "?";
}

Tensor ParamStore::add(const std::string& name, Shape shape, Initializer init,
                       ParamGroup group, bool weight_decay) {
  if (find(name) != nullptr) throw InvalidArgument("duplicate parameter " + name);
  auto values = initial_values(shape, init, seed_ ^ fnv1a(name));
  Tensor t = Tensor::from(std::move(shape), std::move(values),
                          group != ParamGroup::kFrozen);
  params_.push_back({name, t, group, weight_decay});
  return t;
}

const Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* ParamStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParamStore::total_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void ParamStore::set_group(const std::string& prefix, ParamGroup group) {
  for (auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) {
      p.group = group;
      p.value.set_requires_grad(group != ParamGroup::kFrozen);
    }
  }
}

Linear Linear::create(ParamStore& store, const std::string& name, int in,
                      int out, ParamGroup group, bool with_bias, double gain) {
  Linear l;
  l.weight = store.add(name + ".weight", {in, out}, Initializer::xavier(gain), group);
  if (with_bias) {
    l.bias = store.add(name + ".bias", {out}, Initializer::zeros(), group, false);
  }
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = ops::matmul(x, weight);
  return bias.defined() ? ops::add_bias(y, bias) : y;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name,
                            int dim, ParamGroup group) {
  LayerNorm ln;
  ln.gamma = store.add(name + ".weight", {dim}, Initializer::ones(), group, false);
  ln.beta = store.add(name + ".bias", {dim}, Initializer::zeros(), group, false);
  return ln;
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return ops::layer_norm_last(x, gamma, beta);
}

Conv2d Conv2d::create(ParamStore& store, const std::string& name, int in,
                      int out, int kernel, ParamGroup group) {
  if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("conv kernel must be odd");
  Conv2d c;
  c.kernel = kernel;
  c.in_channels = in;
  c.weight = store.add(name + ".weight", {kernel * kernel * in, out},
                       Initializer::xavier(), group);
  c.bias = store.add(name + ".bias", {out}, Initializer::zeros(), group, false);
  return c;
}

Tensor Conv2d::operator()(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(3) != in_channels) {
    throw ShapeError("conv2d: expected [N,H,W," + std::to_string(in_channels) +
                     "], got " + to_string(x.shape()));
  }
  return ops::add_bias(ops::matmul(spatial::im2col(x, kernel), weight), bias);
}

TransposedConv2x2 TransposedConv2x2::create(ParamStore& store,
                                            const std::string& name, int in,
                                            int out, ParamGroup group) {
  TransposedConv2x2 t;
  t.weight = store.add(name + ".weight", {in, 4 * out}, Initializer::xavier(), group);
  t.bias = store.add(name + ".bias", {out}, Initializer::zeros(), group, false);
  return t;
}

Tensor TransposedConv2x2::operator()(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(3) != weight.dim(0)) {
    throw ShapeError("transposed conv: channel mismatch for " + to_string(x.shape()));
  }
  return ops::add_bias(spatial::depth_to_space(ops::matmul(x, weight), 2), bias);
}

}  // namespace rsovseg
