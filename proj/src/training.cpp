#include "rsovseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rsovseg/errors.hpp"
#include "rsovseg/ops.hpp"

namespace rsovseg {

void TrainConfig::validate() const {
  if (!(lr_vl >= 0.0) || !(lr_other >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_iters < 0) throw ConfigError("max_iters must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw ConfigError("invalid AdamW betas/eps");
  }
}

BceResult bce_loss(const SegmentationLogits& logits, const std::vector<GroundTruthMask>& masks,
                   std::uint8_t ignore_index) {
  const Tensor& x = logits.grid;
  const int b = logits.batch(), h = logits.height(), w = logits.width(), nc = logits.classes();
  if (static_cast<int>(masks.size()) != b) {
    throw ShapeError("bce_loss: " + std::to_string(masks.size()) + " masks for batch of " +
                     std::to_string(b));
  }
  for (const auto& m : masks) {
    if (m.height != h || m.width != w) {
      throw ShapeError("bce_loss: mask " + std::to_string(m.height) + "x" +
                       std::to_string(m.width) + " vs logits " + to_string(x.shape()));
    }
  }
  const auto xv = x.data();
  std::size_t labeled = 0;
  double sum = 0.0;
  for (int n = 0; n < b; ++n) {
    for (std::size_t p = 0; p < masks[n].labels.size(); ++p) {
      const std::uint8_t y = masks[n].labels[p];
      if (y == ignore_index) continue;
      if (y >= nc) {
        throw InvalidArgument("bce_loss: label " + std::to_string(y) + " >= " +
                              std::to_string(nc) + " classes");
      }
      ++labeled;
      const double* row = &xv[(static_cast<std::size_t>(n) * h * w + p) * nc];
      for (int c = 0; c < nc; ++c) {
        const double z = row[c];
        if (std::isnan(z)) throw NumericalError("bce_loss: NaN logit");
        const double t = c == y ? 1.0 : 0.0;
        sum += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
      }
    }
  }
  if (labeled == 0) return {Tensor::scalar(0.0), true};

  const double inv = 1.0 / static_cast<double>(labeled);
  auto masks_copy = std::make_shared<std::vector<GroundTruthMask>>(masks);
  auto backward = [masks_copy, inv, nc, h, w, ignore_index](Node& out) {
    Node& in = *out.inputs[0];
    in.ensure_grad();
    const double g = out.grad[0] * inv;
    for (std::size_t n = 0; n < masks_copy->size(); ++n) {
      const auto& labels = (*masks_copy)[n].labels;
      for (std::size_t p = 0; p < labels.size(); ++p) {
        const std::uint8_t y = labels[p];
        if (y == ignore_index) continue;
        const std::size_t base = (n * h * w + p) * nc;
        for (int c = 0; c < nc; ++c) {
          const double z = in.value[base + c];
          const double s = 1.0 / (1.0 + std::exp(-z));
          in.grad[base + c] += g * (s - (c == y ? 1.0 : 0.0));
        }
      }
    }
  };
  return {make_result({}, {sum * inv}, {x}, backward), false};
}

Tensor total_loss(const Tensor& bce, const Tensor& sem, double bce_weight, double sem_weight) {
  return ops::add(ops::scale(bce, bce_weight), ops::scale(sem, sem_weight));
}

ParameterGroups partition_parameters(ParamStore& store) {
  ParameterGroups groups;
  for (auto& p : store.params()) {
    switch (p.group) {
      case ParamGroup::kVlQueryValue: groups.vl_qv.push_back(&p); break;
      case ParamGroup::kMain: groups.main.push_back(&p); break;
      case ParamGroup::kFrozen: groups.frozen.push_back(&p); break;
      case ParamGroup::kUnassigned:
        throw ConfigError("parameter \"" + p.name + "\" has no optimisation group");
    }
  }
  return groups;
}

AdamW::AdamW(ParamStore& store, const TrainConfig& config) : config_(config) {
  const ParameterGroups groups = partition_parameters(store);
  for (Parameter* p : groups.vl_qv) {
    slots_.push_back({p, config.lr_vl, std::vector<double>(p->value.size()),
                      std::vector<double>(p->value.size())});
  }
  for (Parameter* p : groups.main) {
    slots_.push_back({p, config.lr_other, std::vector<double>(p->value.size()),
                      std::vector<double>(p->value.size())});
  }
}

void AdamW::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (Slot& s : slots_) {
    auto value = s.param->value.mutable_data();
    const auto grad = s.param->value.grad();
    const double decay = s.param->weight_decay ? s.lr * config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
      value[i] -= decay * value[i];
      value[i] -= s.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + config_.eps);
    }
  }
}

LossRecord train_step(const TrainBatch& batch, Model& model, const ClassRegistry& registry,
                      AdamW& optimizer, const TrainConfig& config) {
  model.params().zero_grad();
  const Model::Output out = model.forward(batch.images, registry, true);
  const BceResult bce = bce_loss(out.logits, batch.masks);
  const Tensor sem = semantic_loss(*out.reconstruction, out.guidance.level3);
  const Tensor loss = total_loss(bce.loss, sem, config.bce_weight, config.sem_weight);

  LossRecord record{bce.loss.item(), sem.item(), loss.item(), bce.all_ignored};
  if (!std::isfinite(record.total)) {
    throw NumericalError("non-finite loss (bce=" + std::to_string(record.bce) +
                         ", sem=" + std::to_string(record.sem) + ")");
  }
  loss.backward();
  for (const auto& p : model.params().params()) {
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in " + p.name);
    }
  }
  optimizer.step();
  return record;
}

BatchSampler::BatchSampler(std::size_t dataset_size, int batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_size_(batch_size), seed_(seed) {
  if (dataset_size == 0) throw DataError("no training samples");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> batch;
  while (static_cast<int>(batch.size()) < batch_size_) {
    if (cursor_ == order_.size()) {
      order_.resize(size_);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      std::mt19937_64 rng(seed_ + 0x9E3779B97F4A7C15ULL * ++epoch_);
      std::shuffle(order_.begin(), order_.end(), rng);
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

TrainBatch make_batch(const std::vector<TrainSample>& samples,
                      const std::vector<std::size_t>& indices) {
  TrainBatch batch;
  std::vector<Tensor> images;
  for (std::size_t i : indices) {
    images.push_back(samples.at(i).image);
    batch.masks.push_back(samples[i].mask);
  }
  batch.images.pixels = ops::stack(images, 0);
  return batch;
}

void train(Model& model, const ClassRegistry& registry, const std::vector<TrainSample>& samples,
           const TrainConfig& config, int iterations, std::uint64_t seed,
           const std::function<void(int, const LossRecord&)>& on_step) {
  config.validate();
  AdamW optimizer(model.params(), config);
  BatchSampler sampler(samples.size(), config.batch_size, seed);
  for (int it = 1; it <= iterations; ++it) {
    const TrainBatch batch = make_batch(samples, sampler.next());
    const LossRecord record = train_step(batch, model, registry, optimizer, config);
    if (on_step) on_step(it, record);
  }
}

}  // namespace rsovseg
