#pragma once

// Losses, parameter-group policy and the AdamW optimisation loop.

#include <cstdint>
#include <functional>
#include <vector>

#include "rsovseg/decoder.hpp"
#include "rsovseg/labels.hpp"
#include "rsovseg/model.hpp"

namespace rsovseg {

struct TrainConfig {
  double lr_vl = 2e-6;
  double lr_other = 2e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 4;
  int max_iters = 0;  // 0: per-dataset default
  double bce_weight = 1.0;
  double sem_weight = 1.0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct BceResult {
  Tensor loss;
  bool all_ignored = false;  // no labeled pixel in the batch; loss is 0
};

/// Mean over labeled pixels of the per-class binary cross-entropy summed over
/// classes, computed from logits. `masks` holds one map per batch item.
BceResult bce_loss(const SegmentationLogits& logits, const std::vector<GroundTruthMask>& masks,
                   std::uint8_t ignore_index = kIgnoreIndex);

Tensor total_loss(const Tensor& bce, const Tensor& sem, double bce_weight = 1.0,
                  double sem_weight = 1.0);

struct ParameterGroups {
  std::vector<Parameter*> vl_qv;
  std::vector<Parameter*> main;
  std::vector<Parameter*> frozen;

  std::size_t count() const { return vl_qv.size() + main.size() + frozen.size(); }
};

/// Splits every parameter of `store` by its group; an unassigned parameter
/// is an error.
ParameterGroups partition_parameters(ParamStore& store);

class AdamW {
 public:
  AdamW(ParamStore& store, const TrainConfig& config);

  /// One update of every trainable parameter from its current gradient.
  void step();
  long iterations() const { return t_; }

 private:
  struct Slot {
    Parameter* param;
    double lr;
    std::vector<double> m;
    std::vector<double> v;
  };
  TrainConfig config_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

struct TrainBatch {
  ImageBatch images;
  std::vector<GroundTruthMask> masks;  // indices into the training vocabulary
};

struct LossRecord {
  double bce = 0.0;
  double sem = 0.0;
  double total = 0.0;
  bool all_ignored = false;
};

/// Forward, backward and one optimiser update. A non-finite loss or gradient
/// raises NumericalError before any parameter is touched.
LossRecord train_step(const TrainBatch& batch, Model& model, const ClassRegistry& registry,
                      AdamW& optimizer, const TrainConfig& config);

struct TrainSample {
  Tensor image;  // [S, S, 3], normalised
  GroundTruthMask mask;
};

/// Deterministic batch order: each epoch is a fresh seeded shuffle and
/// batches always hold `batch_size` samples, drawn across epoch boundaries.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, int batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::size_t size_;
  int batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

TrainBatch make_batch(const std::vector<TrainSample>& samples,
                      const std::vector<std::size_t>& indices);

/// Runs `iterations` steps; `on_step(iter, record)` is called after each
/// update (iter counts from 1).
void train(Model& model, const ClassRegistry& registry, const std::vector<TrainSample>& samples,
           const TrainConfig& config, int iterations, std::uint64_t seed,
           const std::function<void(int, const LossRecord&)>& on_step);

}  // namespace rsovseg
