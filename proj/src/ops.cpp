#include "rsovseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsovseg/errors.hpp"
#include "rsovseg/kernels.hpp"

namespace rsovseg::ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    s[i] = s[i + 1] * static_cast<std::size_t>(shape[i + 1]);
  }
  return s;
}

int norm_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw ShapeError("axis out of range");
  return a;
}

// Elementwise unary op with derivative expressed through (x, y).
template <class F, class D>
Tensor unary(const Tensor& x, F f, D df) {
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [df](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      in.grad[i] += o.grad[i] * df(in.value[i], o.value[i]);
    }
  });
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  return make_result(std::move(shape), x.values(), {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.requires_grad) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i];
  });
}

Tensor gather(const Tensor& x, Shape out_shape, IndexPtr index) {
  if (index->size() != numel(out_shape)) {
    throw ShapeError("gather: index size does not match output shape");
  }
  std::vector<double> out(index->size());
  kernels::gather(x.data(), *index, out);
  return make_result(std::move(out_shape), std::move(out), {x},
                     [index](Node& o) {
                       Node& in = *o.inputs[0];
                       if (!in.requires_grad) return;
                       kernels::scatter_add(o.grad, *index, in.grad);
                     });
}

Tensor sparse_map(const Tensor& x, Shape out_shape, SparseMapPtr map) {
  if (map->offsets.size() != numel(out_shape) + 1) {
    throw ShapeError("sparse_map: row count does not match output shape");
  }
  std::vector<double> out(numel(out_shape));
  kernels::sparse_apply(x.data(), map->offsets, map->cols, map->weights, out);
  return make_result(std::move(out_shape), std::move(out), {x}, [map](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.requires_grad) return;
    kernels::sparse_apply_transpose(o.grad, map->offsets, map->cols,
                                    map->weights, in.grad);
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  const auto in_strides = strides_of(x.shape());
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (int i = 0; i < r; ++i) {
    out_shape[i] = x.shape()[perm[i]];
    src_stride[i] = in_strides[perm[i]];
  }
  auto index = std::make_shared<Index>(x.size());
  std::vector<int> counter(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*index)[i] = static_cast<std::int64_t>(src);
    for (int d = r - 1; d >= 0; --d) {
      if (++counter[d] < out_shape[d]) {
        src += src_stride[d];
        break;
      }
      src -= src_stride[d] * static_cast<std::size_t>(out_shape[d] - 1);
      counter[d] = 0;
    }
  }
  return gather(x, std::move(out_shape), std::move(index));
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  const int r = static_cast<int>(shape.size());
  const int xr = x.rank();
  if (xr > r) throw ShapeError("broadcast_to: rank too small");
  Shape padded(r - xr, 1);
  padded.insert(padded.end(), x.shape().begin(), x.shape().end());
  const auto in_strides = strides_of(padded);
  for (int i = 0; i < r; ++i) {
    if (padded[i] != shape[i] && padded[i] != 1) {
      throw ShapeError("broadcast_to: cannot expand " + to_string(x.shape()) +
                       " to " + to_string(shape));
    }
  }
  if (padded == shape) return reshape(x, shape);
  auto index = std::make_shared<Index>(numel(shape));
  std::vector<int> counter(r, 0);
  for (std::size_t i = 0; i < index->size(); ++i) {
    std::size_t src = 0;
    for (int d = 0; d < r; ++d) {
      if (padded[d] != 1) src += in_strides[d] * static_cast<std::size_t>(counter[d]);
    }
    (*index)[i] = static_cast<std::int64_t>(src);
    for (int d = r - 1; d >= 0; --d) {
      if (++counter[d] < shape[d]) break;
      counter[d] = 0;
    }
  }
  return gather(x, shape, std::move(index));
}

Tensor slice(const Tensor& x, int axis, int begin, int end) {
  const int a = norm_axis(axis, x.rank());
  if (begin < 0 || end > x.shape()[a] || begin > end) throw ShapeError("slice: bad range");
  Shape out_shape = x.shape();
  out_shape[a] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= x.shape()[i];
  for (int i = a + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  auto index = std::make_shared<Index>(numel(out_shape));
  std::size_t k = 0;
  const std::size_t len = static_cast<std::size_t>(x.shape()[a]);
  for (std::size_t o = 0; o < outer; ++o) {
    for (int j = begin; j < end; ++j) {
      const std::size_t base = (o * len + static_cast<std::size_t>(j)) * inner;
      for (std::size_t i = 0; i < inner; ++i) (*index)[k++] = static_cast<std::int64_t>(base + i);
    }
  }
  return gather(x, std::move(out_shape), std::move(index));
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const int r = xs[0].rank();
  const int a = norm_axis(axis, r);
  Shape out_shape = xs[0].shape();
  out_shape[a] = 0;
  for (const auto& t : xs) {
    if (t.rank() != r) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i != a && t.shape()[i] != xs[0].shape()[i]) {
        throw ShapeError("concat: shape mismatch " + to_string(t.shape()) +
                         " vs " + to_string(xs[0].shape()));
      }
    }
    out_shape[a] += t.shape()[a];
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= out_shape[i];
  for (int i = a + 1; i < r; ++i) inner *= out_shape[i];
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> chunk(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) chunk[t] = static_cast<std::size_t>(xs[t].shape()[a]) * inner;
  std::size_t k = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t t = 0; t < xs.size(); ++t) {
      const double* src = xs[t].data().data() + o * chunk[t];
      std::copy(src, src + chunk[t], out.begin() + static_cast<std::ptrdiff_t>(k));
      k += chunk[t];
    }
  }
  return make_result(std::move(out_shape), std::move(out), xs,
                     [outer, chunk](Node& o) {
                       std::size_t k = 0;
                       for (std::size_t oi = 0; oi < outer; ++oi) {
                         for (std::size_t t = 0; t < chunk.size(); ++t) {
                           Node& in = *o.inputs[t];
                           if (in.requires_grad) {
                             double* dst = in.grad.data() + oi * chunk[t];
                             for (std::size_t i = 0; i < chunk[t]; ++i) dst[i] += o.grad[k + i];
                           }
                           k += chunk[t];
                         }
                       }
                     });
}

Tensor stack(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ShapeError("stack: no inputs");
  const int r = xs[0].rank() + 1;
  const int a = norm_axis(axis, r);
  std::vector<Tensor> expanded;
  expanded.reserve(xs.size());
  for (const auto& t : xs) {
    if (t.shape() != xs[0].shape()) throw ShapeError("stack: shape mismatch");
    Shape s = t.shape();
    s.insert(s.begin() + a, 1);
    expanded.push_back(reshape(t, s));
  }
  return concat(expanded, a);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (int t = 0; t < 2; ++t) {
      Node& in = *o.inputs[t];
      if (!in.requires_grad) continue;
      for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& x = *o.inputs[0];
    Node& y = *o.inputs[1];
    if (x.requires_grad) for (std::size_t i = 0; i < o.grad.size(); ++i) x.grad[i] += o.grad[i];
    if (y.requires_grad) for (std::size_t i = 0; i < o.grad.size(); ++i) y.grad[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& x = *o.inputs[0];
    Node& y = *o.inputs[1];
    if (x.requires_grad) for (std::size_t i = 0; i < o.grad.size(); ++i) x.grad[i] += o.grad[i] * y.value[i];
    if (y.requires_grad) for (std::size_t i = 0; i < o.grad.size(); ++i) y.grad[i] += o.grad[i] * x.value[i];
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& x = *o.inputs[0];
    Node& y = *o.inputs[1];
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double inv = 1.0 / y.value[i];
      if (x.requires_grad) x.grad[i] += o.grad[i] * inv;
      if (y.requires_grad) y.grad[i] -= o.grad[i] * o.value[i] * inv;
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; },
               [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v + c; },
               [](double, double) { return 1.0; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = static_cast<std::size_t>(x.dim(-1));
  if (bias.rank() != 1 || static_cast<std::size_t>(bias.dim(0)) != n) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) +
                     " does not match " + to_string(x.shape()));
  }
  std::vector<double> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.values()[i % n];
  return make_result(x.shape(), std::move(out), {x, bias}, [n](Node& o) {
    Node& in = *o.inputs[0];
    Node& b = *o.inputs[1];
    if (in.requires_grad) for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i];
    if (b.requires_grad) for (std::size_t i = 0; i < o.grad.size(); ++i) b.grad[i % n] += o.grad[i];
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  kernels::gelu(x.data(), out);
  return make_result(x.shape(), std::move(out), {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.requires_grad) return;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double v = in.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      in.grad[i] += o.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor elu_plus_one(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v + 1.0 : std::exp(v); },
      [](double v, double y) { return v > 0.0 ? 1.0 : y; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || x.rank() < 1 || x.dim(-1) != w.dim(0)) {
    throw ShapeError("matmul: " + to_string(x.shape()) + " @ " + to_string(w.shape()));
  }
  const std::size_t k = static_cast<std::size_t>(w.dim(0));
  const std::size_t n = static_cast<std::size_t>(w.dim(1));
  const std::size_t m = x.size() / k;
  Shape out_shape = x.shape();
  out_shape.back() = static_cast<int>(n);
  std::vector<double> out(m * n);
  kernels::GemmShape s{1, m, n, k, false, false, 0, 0, 0};
  kernels::gemm(s, x.data(), w.data(), out, false);
  return make_result(std::move(out_shape), std::move(out), {x, w},
                     [m, n, k](Node& o) {
                       Node& xn = *o.inputs[0];
                       Node& wn = *o.inputs[1];
                       if (xn.requires_grad) {
                         // dX[m,k] = dY[m,n] W[k,n]^T
                         kernels::GemmShape g{1, m, k, n, false, true, 0, 0, 0};
                         kernels::gemm(g, o.grad, wn.value, xn.grad, true);
                       }
                       if (wn.requires_grad) {
                         // dW[k,n] = X[m,k]^T dY[m,n]
                         kernels::GemmShape g{1, k, n, m, true, false, 0, 0, 0};
                         kernels::gemm(g, xn.value, o.grad, wn.grad, true);
                       }
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.rank() < 2 || a.rank() != b.rank()) throw ShapeError("bmm: rank mismatch");
  for (int i = 0; i < a.rank() - 2; ++i) {
    if (a.shape()[i] != b.shape()[i]) throw ShapeError("bmm: batch mismatch");
  }
  const std::size_t ar = a.dim(-2), ac = a.dim(-1), br = b.dim(-2), bc = b.dim(-1);
  const std::size_t m = trans_a ? ac : ar;
  const std::size_t k = trans_a ? ar : ac;
  const std::size_t kb = trans_b ? bc : br;
  const std::size_t n = trans_b ? br : bc;
  if (k != kb) {
    throw ShapeError("bmm: inner mismatch " + to_string(a.shape()) + " @ " + to_string(b.shape()));
  }
  const std::size_t batch = a.size() / (ar * ac);
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(static_cast<int>(m));
  out_shape.push_back(static_cast<int>(n));
  std::vector<double> out(batch * m * n);
  kernels::GemmShape s{batch, m, n, k, trans_a, trans_b, m * k, k * n, m * n};
  kernels::gemm(s, a.data(), b.data(), out, false);
  return make_result(
      std::move(out_shape), std::move(out), {a, b},
      [batch, m, n, k, trans_a, trans_b](Node& o) {
        Node& an = *o.inputs[0];
        Node& bn = *o.inputs[1];
        if (an.requires_grad) {
          if (!trans_a) {
            // dA[m,k] = dC[m,n] op(B)^T
            kernels::GemmShape g{batch, m, k, n, false, !trans_b, m * n, k * n, m * k};
            kernels::gemm(g, o.grad, bn.value, an.grad, true);
          } else {
            // dA[k,m] = op(B)[k,n] dC^T
            kernels::GemmShape g{batch, k, m, n, trans_b, true, k * n, m * n, m * k};
            kernels::gemm(g, bn.value, o.grad, an.grad, true);
          }
        }
        if (bn.requires_grad) {
          if (!trans_b) {
            // dB[k,n] = op(A)^T dC
            kernels::GemmShape g{batch, k, n, m, !trans_a, false, m * k, m * n, k * n};
            kernels::gemm(g, an.value, o.grad, bn.grad, true);
          } else {
            // dB[n,k] = dC^T op(A)
            kernels::GemmShape g{batch, n, k, m, true, trans_a, m * n, m * k, k * n};
            kernels::gemm(g, o.grad, an.value, bn.grad, true);
          }
        }
      });
}

Tensor softmax_last(const Tensor& x) {
  const std::size_t cols = static_cast<std::size_t>(x.dim(-1));
  std::vector<double> out(x.size());
  kernels::softmax_rows(x.data(), cols, out);
  return make_result(x.shape(), std::move(out), {x}, [cols](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.requires_grad) return;
    for (std::size_t r = 0; r < o.value.size() / cols; ++r) {
      const double* y = o.value.data() + r * cols;
      const double* dy = o.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
      double* dx = in.grad.data() + r * cols;
      for (std::size_t j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor layer_norm_last(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, double eps) {
  const std::size_t n = static_cast<std::size_t>(x.dim(-1));
  if (gamma.size() != n || beta.size() != n) throw ShapeError("layer_norm: affine size mismatch");
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xv = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xv[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xv[j] - mean) * (xv[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xv[j] - mean) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * gamma.values()[j] + beta.values()[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [n, rows, xhat, inv_std](Node& o) {
                       Node& xn = *o.inputs[0];
                       Node& g = *o.inputs[1];
                       Node& b = *o.inputs[2];
                       const double nn = static_cast<double>(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* dy = o.grad.data() + r * n;
                         const double* h = xhat->data() + r * n;
                         if (g.requires_grad) for (std::size_t j = 0; j < n; ++j) g.grad[j] += dy[j] * h[j];
                         if (b.requires_grad) for (std::size_t j = 0; j < n; ++j) b.grad[j] += dy[j];
                         if (!xn.requires_grad) continue;
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dh = dy[j] * g.value[j];
                           s1 += dh;
                           s2 += dh * h[j];
                         }
                         const double is = (*inv_std)[r];
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dh = dy[j] * g.value[j];
                           xn.grad[r * n + j] += is / nn * (nn * dh - s1 - h[j] * s2);
                         }
                       }
                     });
}

Tensor l2_normalize_last(const Tensor& x) {
  const std::size_t n = static_cast<std::size_t>(x.dim(-1));
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size(), 0.0);
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xv = x.data().data() + r * n;
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += xv[j] * xv[j];
    const double norm = std::sqrt(ss);
    (*norms)[r] = norm;
    if (norm > 0.0) {
      for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[j] / norm;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [n, rows, norms](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.requires_grad) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double norm = (*norms)[r];
      if (norm == 0.0) continue;
      const double* y = o.value.data() + r * n;
      const double* dy = o.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < n; ++j) in.grad[r * n + j] += (dy[j] - y[j] * dot) / norm;
    }
  });
}

Tensor sum_axis(const Tensor& x, int axis, bool keepdim) {
  const int a = norm_axis(axis, x.rank());
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= x.shape()[i];
  for (int i = a + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  const std::size_t len = static_cast<std::size_t>(x.shape()[a]);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[a] = 1;
  } else {
    out_shape.erase(out_shape.begin() + a);
  }
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < len; ++j) {
      const double* src = x.data().data() + (o * len + j) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [outer, inner, len](Node& o) {
                       Node& in = *o.inputs[0];
                       if (!in.requires_grad) return;
                       for (std::size_t oi = 0; oi < outer; ++oi) {
                         for (std::size_t j = 0; j < len; ++j) {
                           double* dst = in.grad.data() + (oi * len + j) * inner;
                           const double* src = o.grad.data() + oi * inner;
                           for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor mean_axis(const Tensor& x, int axis, bool keepdim) {
  const int a = norm_axis(axis, x.rank());
  return scale(sum_axis(x, a, keepdim), 1.0 / static_cast<double>(x.shape()[a]));
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({}, {s}, {x}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.requires_grad) return;
    for (double& g : in.grad) g += o.grad[0];
  });
}

Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

}  // namespace rsovseg::ops
