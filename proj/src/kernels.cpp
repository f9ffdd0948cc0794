#include "rsovseg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rsovseg::kernels {
namespace {

// One output row of a gemm. Shared by the serial and OpenMP drivers so both
// produce identical rounding.
inline void gemm_row(const GemmShape& s, const double* a, const double* b,
                     double* c_row, std::size_t i, double* scratch,
                     bool accumulate) {
  const std::size_t n = s.n;
  const std::size_t k = s.k;
  const std::size_t m = s.m;
  if (s.trans_b) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* b_row = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = s.trans_a ? a[p * m + i] : a[i * k + p];
        acc += av * b_row[p];
      }
      scratch[j] = acc;
    }
  } else {
    std::fill(scratch, scratch + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = s.trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) scratch[j] += av * b_row[j];
    }
  }
  if (accumulate) {
    for (std::size_t j = 0; j < n; ++j) c_row[j] += scratch[j];
  } else {
    std::copy(scratch, scratch + n, c_row);
  }
}

inline void softmax_row(const double* in, double* out, std::size_t cols) {
  double mx = in[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
}

inline double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double sparse_row(const double* in, const std::int64_t* offsets,
                         const std::int64_t* cols, const double* weights,
                         std::size_t i) {
  double acc = 0.0;
  for (std::int64_t e = offsets[i]; e < offsets[i + 1]; ++e) {
    acc += weights[e] * in[cols[e]];
  }
  return acc;
}

}  // namespace

void gemm(const GemmShape& s, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate) {
  const std::size_t rows = s.batch * s.m;
  if (rows == 0 || s.n == 0) return;
#pragma omp parallel
  {
    std::vector<double> scratch(s.n);
#pragma omp for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t bi = r / s.m;
      const std::size_t i = r % s.m;
      gemm_row(s, a.data() + bi * s.stride_a, b.data() + bi * s.stride_b,
               c.data() + bi * s.stride_c + i * s.n, i, scratch.data(),
               accumulate);
    }
  }
}

void gather(std::span<const double> in, std::span<const std::int64_t> index,
            std::span<double> out) {
  const std::size_t n = out.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = index[i] < 0 ? 0.0 : in[static_cast<std::size_t>(index[i])];
  }
}

void sparse_apply(std::span<const double> in,
                  std::span<const std::int64_t> offsets,
                  std::span<const std::int64_t> cols,
                  std::span<const double> weights, std::span<double> out) {
  const std::size_t n = out.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = sparse_row(in.data(), offsets.data(), cols.data(), weights.data(),
                        i);
  }
}

void softmax_rows(std::span<const double> in, std::size_t cols,
                  std::span<double> out) {
  const std::size_t rows = in.size() / cols;
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(in.data() + r * cols, out.data() + r * cols, cols);
  }
}

void gelu(std::span<const double> in, std::span<double> out) {
  const std::size_t n = in.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) out[i] = gelu_scalar(in[i]);
}

namespace serial {

void gemm(const GemmShape& s, std::span<const double> a,
          std::span<const double> b, std::span<double> c, bool accumulate) {
  std::vector<double> scratch(s.n);
  for (std::size_t bi = 0; bi < s.batch; ++bi) {
    for (std::size_t i = 0; i < s.m; ++i) {
      gemm_row(s, a.data() + bi * s.stride_a, b.data() + bi * s.stride_b,
               c.data() + bi * s.stride_c + i * s.n, i, scratch.data(),
               accumulate);
    }
  }
}

void gather(std::span<const double> in, std::span<const std::int64_t> index,
            std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = index[i] < 0 ? 0.0 : in[static_cast<std::size_t>(index[i])];
  }
}

void sparse_apply(std::span<const double> in,
                  std::span<const std::int64_t> offsets,
                  std::span<const std::int64_t> cols,
                  std::span<const double> weights, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = sparse_row(in.data(), offsets.data(), cols.data(), weights.data(),
                        i);
  }
}

void softmax_rows(std::span<const double> in, std::size_t cols,
                  std::span<double> out) {
  for (std::size_t r = 0; r < in.size() / cols; ++r) {
    softmax_row(in.data() + r * cols, out.data() + r * cols, cols);
  }
}

void gelu(std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = gelu_scalar(in[i]);
}

}  // namespace serial

void scatter_add(std::span<const double> grad_out,
                 std::span<const std::int64_t> index,
                 std::span<double> grad_in) {
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    if (index[i] >= 0) grad_in[static_cast<std::size_t>(index[i])] += grad_out[i];
  }
}

void sparse_apply_transpose(std::span<const double> grad_out,
                            std::span<const std::int64_t> offsets,
                            std::span<const std::int64_t> cols,
                            std::span<const double> weights,
                            std::span<double> grad_in) {
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const double g = grad_out[i];
    if (g == 0.0) continue;
    for (std::int64_t e = offsets[i]; e < offsets[i + 1]; ++e) {
      grad_in[static_cast<std::size_t>(cols[e])] += weights[e] * g;
    }
  }
}

}  // namespace rsovseg::kernels
