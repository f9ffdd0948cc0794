#pragma once

// Dense numeric kernels behind the autograd ops.
//
// Every kernel exists twice: an OpenMP version (namespace `kernels`) used by
// the library and a straight-line serial version (namespace
// `kernels::serial`) kept as the reference for tests and benchmarks. Both
// compute each output element with the same loop order, so their results are
// bitwise identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace rsovseg::kernels {

/// Shape of one (optionally batched) matrix product C = op(A) * op(B).
/// op(A) is m x k, op(B) is k x n; A/B are stored row-major in their
/// untransposed layout. `batch` independent products are laid out
/// contiguously; a zero stride broadcasts that operand over the batch.
struct GemmShape {
  std::size_t batch = 1;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool trans_a = false;
  bool trans_b = false;
  std::size_t stride_a = 0;
  std::size_t stride_b = 0;
  std::size_t stride_c = 0;
};

/// C (+)= op(A) op(B). When `accumulate` is false C is overwritten.
void gemm(const GemmShape& s, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate);

/// out[i] = index[i] < 0 ? 0 : in[index[i]]
void gather(std::span<const double> in, std::span<const std::int64_t> index,
            std::span<double> out);

/// CSR sparse map: out[i] = sum_{e in [offsets[i], offsets[i+1])} w[e] * in[col[e]]
void sparse_apply(std::span<const double> in,
                  std::span<const std::int64_t> offsets,
                  std::span<const std::int64_t> cols,
                  std::span<const double> weights, std::span<double> out);

/// Row-wise softmax over contiguous rows of length `cols`.
void softmax_rows(std::span<const double> in, std::size_t cols,
                  std::span<double> out);

/// Exact (erf) GELU.
void gelu(std::span<const double> in, std::span<double> out);

namespace serial {

void gemm(const GemmShape& s, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate);
void gather(std::span<const double> in, std::span<const std::int64_t> index,
            std::span<double> out);
void sparse_apply(std::span<const double> in,
                  std::span<const std::int64_t> offsets,
                  std::span<const std::int64_t> cols,
                  std::span<const double> weights, std::span<double> out);
void softmax_rows(std::span<const double> in, std::size_t cols,
                  std::span<double> out);
void gelu(std::span<const double> in, std::span<double> out);

}  // namespace serial

/// Scatter-add is the adjoint of gather; it stays serial in both builds
/// because concurrent writers would make accumulation order (and therefore
/// rounding) thread-count dependent.
void scatter_add(std::span<const double> grad_out,
                 std::span<const std::int64_t> index,
                 std::span<double> grad_in);
void sparse_apply_transpose(std::span<const double> grad_out,
                            std::span<const std::int64_t> offsets,
                            std::span<const std::int64_t> cols,
                            std::span<const double> weights,
                            std::span<double> grad_in);

}  // namespace rsovseg::kernels
