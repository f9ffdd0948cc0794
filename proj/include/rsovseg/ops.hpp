#pragma once

// Differentiable tensor operations. All ops are pure: they allocate a new
// output and, when recording, a backward closure that accumulates into the
// gradients of the inputs.

#include <cstdint>
#include <memory>
#include <vector>

#include "rsovseg/tensor.hpp"

namespace rsovseg::ops {

using Index = std::vector<std::int64_t>;
using IndexPtr = std::shared_ptr<const Index>;

/// Row-compressed sparse linear map: output i is the weighted sum of the
/// input entries cols[offsets[i] .. offsets[i+1]).
struct SparseMap {
  std::vector<std::int64_t> offsets;
  std::vector<std::int64_t> cols;
  std::vector<double> weights;
};
using SparseMapPtr = std::shared_ptr<const SparseMap>;

// --- structural -------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
/// out[i] = x[index[i]] (0 where index is negative).
Tensor gather(const Tensor& x, Shape out_shape, IndexPtr index);
Tensor sparse_map(const Tensor& x, Shape out_shape, SparseMapPtr map);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
/// Numpy-style expansion of size-1 (or missing leading) dimensions.
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor slice(const Tensor& x, int axis, int begin, int end);
Tensor concat(const std::vector<Tensor>& xs, int axis);
/// Stacks equally shaped tensors along a new axis.
Tensor stack(const std::vector<Tensor>& xs, int axis);

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double c);
/// x[..., j] + bias[j]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor gelu(const Tensor& x);
/// elu(x) + 1, the positive feature map used by linear attention.
Tensor elu_plus_one(const Tensor& x);
Tensor tanh(const Tensor& x);

// --- linear algebra ---------------------------------------------------------

/// x[..., k] @ w[k, n] -> [..., n]
Tensor matmul(const Tensor& x, const Tensor& w);
/// Batched product over all leading dims: op(a)[.., m, k] @ op(b)[.., k, n].
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false,
           bool trans_b = false);

// --- normalisation / reductions ---------------------------------------------

Tensor softmax_last(const Tensor& x);
Tensor layer_norm_last(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, double eps = 1e-5);
/// Unit L2 norm along the last axis; rows with zero norm map to zero.
Tensor l2_normalize_last(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, int axis, bool keepdim = false);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

/// Forward value of x with no gradient path back to its producers.
inline Tensor stop_gradient(const Tensor& x) { return x.detach(); }

}  // namespace rsovseg::ops
