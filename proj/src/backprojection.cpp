#include "rsovseg/backprojection.hpp"

#include "rsovseg/errors.hpp"
#include "rsovseg/ops.hpp"

namespace rsovseg {

BackProjectionParams BackProjectionParams::create(ParamStore& store, const std::string& name,
                                                  int num_classes, int d_phi, int hidden,
                                                  int guidance_dim) {
  if (num_classes < 1) throw InvalidArgument("back-projection needs at least one class");
  BackProjectionParams p;
  p.num_classes = num_classes;
  p.d_phi = d_phi;
  p.fc1 = Linear::create(store, name + ".fc1", num_classes * d_phi, hidden, ParamGroup::kMain);
  p.fc2 = Linear::create(store, name + ".fc2", hidden, hidden, ParamGroup::kMain);
  p.fc3 = Linear::create(store, name + ".fc3", hidden, guidance_dim, ParamGroup::kMain);
  return p;
}

DenseFeatureMap back_project(const CorrelationVolume& phi, const BackProjectionParams& params) {
  if (phi.classes() != params.num_classes || phi.channels() != params.d_phi) {
    throw ShapeError("back_project: bound to " + std::to_string(params.num_classes) +
                     " classes x " + std::to_string(params.d_phi) + " channels, got " +
                     to_string(phi.grid.shape()));
  }
  const int b = phi.batch(), h = phi.height(), w = phi.width();
  Tensor cells = ops::reshape(ops::permute(phi.grid, {0, 2, 3, 1, 4}),
                              {b, h, w, phi.classes() * phi.channels()});
  Tensor y = ops::gelu(params.fc1(cells));
  y = ops::gelu(params.fc2(y));
  return {params.fc3(y), 1};
}

Tensor semantic_loss(const DenseFeatureMap& psi, const DenseFeatureMap& target) {
  if (psi.grid.shape() != target.grid.shape()) {
    throw ShapeError("semantic_loss: " + to_string(psi.grid.shape()) + " vs " +
                     to_string(target.grid.shape()));
  }
  Tensor diff = ops::sub(psi.grid, ops::stop_gradient(target.grid));
  return ops::mean_all(ops::mul(diff, diff));
}

}  // namespace rsovseg
