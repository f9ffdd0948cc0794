#pragma once

// Parameter registry and the small set of layers the pipeline is built from.

#include <cstdint>
#include <string>
#include <vector>

#include "rsovseg/tensor.hpp"

namespace rsovseg {

/// Optimisation policy a parameter belongs to.
enum class ParamGroup {
  kUnassigned,    // rejected by partition_parameters()
  kVlQueryValue,  // query/value projections of the VL encoders
  kMain,          // every pipeline module
  kFrozen,        // remaining VL weights and the whole guidance encoder
};

const char* to_string(ParamGroup group);

struct Initializer {
  enum class Kind { kZeros, kOnes, kXavierUniform, kNormal, kUniform };
  Kind kind = Kind::kZeros;
  double scale = 1.0;  // gain for Xavier, stddev for Normal, bound for Uniform

  static Initializer zeros() { return {Kind::kZeros, 0.0}; }
  static Initializer ones() { return {Kind::kOnes, 1.0}; }
  static Initializer xavier(double gain = 1.0) { return {Kind::kXavierUniform, gain}; }
  static Initializer normal(double stddev) { return {Kind::kNormal, stddev}; }
  static Initializer uniform(double bound) { return {Kind::kUniform, bound}; }
};

struct Parameter {
  std::string name;
  Tensor value;
  ParamGroup group = ParamGroup::kUnassigned;
  bool weight_decay = true;
};

/// Owns every named parameter of a model. Layers keep shared handles to the
/// tensors registered here, so in-place optimiser updates are visible to them.
/// Initial values depend only on (seed, name).
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor add(const std::string& name, Shape shape, Initializer init,
             ParamGroup group, bool weight_decay = true);

  const std::vector<Parameter>& params() const { return params_; }
  std::vector<Parameter>& params() { return params_; }
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);
  std::size_t total_count() const;
  void zero_grad();
  /// Reassigns the group of every parameter whose name starts with `prefix`.
  void set_group(const std::string& prefix, ParamGroup group);

 private:
  std::uint64_t seed_;
  std::vector<Parameter> params_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]; undefined when the layer has no bias

  static Linear create(ParamStore& store, const std::string& name, int in,
                       int out, ParamGroup group, bool with_bias = true,
                       double gain = 1.0);
  Tensor operator()(const Tensor& x) const;
  int in_features() const { return weight.dim(0); }
  int out_features() const { return weight.dim(1); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParamStore& store, const std::string& name, int dim,
                          ParamGroup group);
  Tensor operator()(const Tensor& x) const;
};

/// Stride-1 "same" convolution on [N, H, W, C_in] grids.
struct Conv2d {
  int kernel = 1;
  int in_channels = 0;
  Tensor weight;  // [k*k*C_in, C_out], rows ordered (ky, kx, c_in)
  Tensor bias;    // [C_out]

  static Conv2d create(ParamStore& store, const std::string& name, int in,
                       int out, int kernel, ParamGroup group);
  Tensor operator()(const Tensor& x) const;
  int out_channels() const { return weight.dim(1); }
};

/// 2x2 / stride-2 transposed convolution: [N, H, W, C_in] -> [N, 2H, 2W, C_out].
struct TransposedConv2x2 {
  Tensor weight;  // [C_in, 4*C_out], columns ordered (ky, kx, c_out)
  Tensor bias;    // [C_out]

  static TransposedConv2x2 create(ParamStore& store, const std::string& name,
                                  int in, int out, ParamGroup group);
  Tensor operator()(const Tensor& x) const;
  int out_channels() const { return bias.dim(0); }
};

}  // namespace rsovseg
