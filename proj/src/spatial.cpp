#include "rsovseg/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include "rsovseg/errors.hpp"

namespace rsovseg::spatial {
namespace {

using ops::Index;
using ops::IndexPtr;

template <class T, class Build>
std::shared_ptr<const T> cached(const std::string& key, Build build) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const T>> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto value = std::make_shared<const T>(build());
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(key, std::move(value)).first->second;
}

struct Grid {
  int n, h, w, c;
};

Grid grid_of(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected [N,H,W,C], got " + to_string(x.shape()));
  }
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

std::string key_of(const char* op, const Grid& g, std::initializer_list<int> extra) {
  std::string k = op;
  for (int v : {g.n, g.h, g.w, g.c}) k += ':' + std::to_string(v);
  for (int v : extra) k += '/' + std::to_string(v);
  return k;
}

inline std::int64_t flat(const Grid& g, int n, int y, int x, int c) {
  return ((static_cast<std::int64_t>(n) * g.h + y) * g.w + x) * g.c + c;
}

// Source cell for each destination cell of a per-sample spatial remap.
template <class SrcOf>
Index build_spatial(const Grid& in, const Grid& out, SrcOf src_of) {
  Index idx(static_cast<std::size_t>(out.n) * out.h * out.w * out.c);
  std::size_t k = 0;
  for (int n = 0; n < out.n; ++n) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        auto [sy, sx] = src_of(y, x);
        for (int c = 0; c < out.c; ++c) {
          idx[k++] = (sy < 0 || sx < 0) ? -1 : flat(in, n, sy, sx, c);
        }
      }
    }
  }
  return idx;
}

}  // namespace

Tensor rotate(const Tensor& x, int angle_deg) {
  const Grid g = grid_of(x, "rotate");
  if (angle_deg % 90 != 0 || angle_deg < -270 || angle_deg > 270) {
    throw InvalidArgument("rotate: unsupported angle " + std::to_string(angle_deg));
  }
  if (g.h != g.w) {
    throw ShapeError("rotate: grid must be square, got " + to_string(x.shape()));
  }
  const int quarter = ((angle_deg / 90) % 4 + 4) % 4;
  if (quarter == 0) return x;
  const int last = g.h - 1;
  auto index = cached<Index>(key_of("rot", g, {quarter}), [&] {
    return build_spatial(g, g, [&](int y, int xx) -> std::pair<int, int> {
      switch (quarter) {
        case 1: return {xx, last - y};
        case 2: return {last - y, last - xx};
        default: return {last - xx, y};
      }
    });
  });
  return ops::gather(x, x.shape(), index);
}

Tensor roll(const Tensor& x, int dh, int dw) {
  const Grid g = grid_of(x, "roll");
  const int sh = ((dh % g.h) + g.h) % g.h;
  const int sw = ((dw % g.w) + g.w) % g.w;
  if (sh == 0 && sw == 0) return x;
  auto index = cached<Index>(key_of("roll", g, {sh, sw}), [&] {
    return build_spatial(g, g, [&](int y, int xx) -> std::pair<int, int> {
      return {(y - sh + g.h) % g.h, (xx - sw + g.w) % g.w};
    });
  });
  return ops::gather(x, x.shape(), index);
}

Tensor window_partition(const Tensor& x, int ws_h, int ws_w) {
  const Grid g = grid_of(x, "window_partition");
  if (ws_h <= 0 || ws_w <= 0 || g.h % ws_h != 0 || g.w % ws_w != 0) {
    throw ShapeError("window_partition: window " + std::to_string(ws_h) + "x" +
                     std::to_string(ws_w) + " does not tile " + to_string(x.shape()));
  }
  const int nwh = g.h / ws_h, nww = g.w / ws_w;
  auto index = cached<Index>(key_of("winp", g, {ws_h, ws_w}), [&] {
    Index idx(x.size());
    std::size_t k = 0;
    for (int n = 0; n < g.n; ++n)
      for (int wy = 0; wy < nwh; ++wy)
        for (int wx = 0; wx < nww; ++wx)
          for (int iy = 0; iy < ws_h; ++iy)
            for (int ix = 0; ix < ws_w; ++ix)
              for (int c = 0; c < g.c; ++c)
                idx[k++] = flat(g, n, wy * ws_h + iy, wx * ws_w + ix, c);
    return idx;
  });
  return ops::gather(x, {g.n * nwh * nww, ws_h * ws_w, g.c}, index);
}

Tensor window_reverse(const Tensor& windows, int n, int h, int w, int ws_h,
                      int ws_w) {
  if (windows.rank() != 3) throw ShapeError("window_reverse: expected rank 3");
  const int c = windows.dim(2);
  const int nwh = h / ws_h, nww = w / ws_w;
  if (windows.dim(0) != n * nwh * nww || windows.dim(1) != ws_h * ws_w) {
    throw ShapeError("window_reverse: window tensor " + to_string(windows.shape()) +
                     " inconsistent with grid");
  }
  const Grid g{n, h, w, c};
  auto index = cached<Index>(key_of("winr", g, {ws_h, ws_w}), [&] {
    Index idx(windows.size());
    for (int b = 0; b < n; ++b)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int win = (b * nwh + y / ws_h) * nww + x / ws_w;
          const int pos = (y % ws_h) * ws_w + x % ws_w;
          for (int ch = 0; ch < c; ++ch) {
            idx[static_cast<std::size_t>(flat(g, b, y, x, ch))] =
                (static_cast<std::int64_t>(win) * ws_h * ws_w + pos) * c + ch;
          }
        }
    return idx;
  });
  return ops::gather(windows, {n, h, w, c}, index);
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  const Grid g = grid_of(x, "upsample_nearest");
  if (factor < 1) throw InvalidArgument("upsample_nearest: factor must be >= 1");
  if (factor == 1) return x;
  const Grid o{g.n, g.h * factor, g.w * factor, g.c};
  auto index = cached<Index>(key_of("upn", g, {factor}), [&] {
    return build_spatial(g, o, [&](int y, int xx) -> std::pair<int, int> {
      return {y / factor, xx / factor};
    });
  });
  return ops::gather(x, {o.n, o.h, o.w, o.c}, index);
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  const Grid g = grid_of(x, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw InvalidArgument("resize_bilinear: empty output");
  if (out_h == g.h && out_w == g.w) return x;
  auto map = cached<ops::SparseMap>(key_of("bil", g, {out_h, out_w}), [&] {
    struct Tap {
      int i0, i1;
      double w0, w1;
    };
    auto taps = [](int in, int out) {
      std::vector<Tap> t(static_cast<std::size_t>(out));
      const double ratio = static_cast<double>(in) / out;
      for (int d = 0; d < out; ++d) {
        double src = (d + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        const int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
        const int i1 = std::min(i0 + 1, in - 1);
        const double l = src - i0;
        t[d] = {i0, i1, 1.0 - l, l};
      }
      return t;
    };
    const auto ty = taps(g.h, out_h);
    const auto tx = taps(g.w, out_w);
    ops::SparseMap m;
    const std::size_t total = static_cast<std::size_t>(g.n) * out_h * out_w * g.c;
    m.offsets.reserve(total + 1);
    m.cols.reserve(total * 4);
    m.weights.reserve(total * 4);
    m.offsets.push_back(0);
    for (int n = 0; n < g.n; ++n)
      for (int y = 0; y < out_h; ++y)
        for (int xx = 0; xx < out_w; ++xx)
          for (int c = 0; c < g.c; ++c) {
            const Tap& a = ty[y];
            const Tap& b = tx[xx];
            const int ys[2] = {a.i0, a.i1};
            const double wy[2] = {a.w0, a.w1};
            const int xs[2] = {b.i0, b.i1};
            const double wx[2] = {b.w0, b.w1};
            for (int p = 0; p < 2; ++p)
              for (int q = 0; q < 2; ++q) {
                m.cols.push_back(flat(g, n, ys[p], xs[q], c));
                m.weights.push_back(wy[p] * wx[q]);
              }
            m.offsets.push_back(static_cast<std::int64_t>(m.cols.size()));
          }
    return m;
  });
  return ops::sparse_map(x, {g.n, out_h, out_w, g.c}, map);
}

Tensor im2col(const Tensor& x, int k) {
  const Grid g = grid_of(x, "im2col");
  if (k < 1 || k % 2 == 0) throw InvalidArgument("im2col: kernel must be odd");
  if (k == 1) return x;
  const int pad = k / 2;
  const int cols = k * k * g.c;
  auto index = cached<Index>(key_of("im2col", g, {k}), [&] {
    Index idx(static_cast<std::size_t>(g.n) * g.h * g.w * cols);
    std::size_t i = 0;
    for (int n = 0; n < g.n; ++n)
      for (int y = 0; y < g.h; ++y)
        for (int xx = 0; xx < g.w; ++xx)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int sy = y + ky - pad, sx = xx + kx - pad;
              const bool in = sy >= 0 && sy < g.h && sx >= 0 && sx < g.w;
              for (int c = 0; c < g.c; ++c) idx[i++] = in ? flat(g, n, sy, sx, c) : -1;
            }
    return idx;
  });
  return ops::gather(x, {g.n, g.h, g.w, cols}, index);
}

Tensor patchify(const Tensor& x, int p) {
  const Grid g = grid_of(x, "patchify");
  if (p < 1 || g.h % p != 0 || g.w % p != 0) {
    throw ShapeError("patchify: patch " + std::to_string(p) + " does not tile " +
                     to_string(x.shape()));
  }
  const int gh = g.h / p, gw = g.w / p;
  auto index = cached<Index>(key_of("patch", g, {p}), [&] {
    Index idx(x.size());
    std::size_t i = 0;
    for (int n = 0; n < g.n; ++n)
      for (int y = 0; y < gh; ++y)
        for (int xx = 0; xx < gw; ++xx)
          for (int py = 0; py < p; ++py)
            for (int px = 0; px < p; ++px)
              for (int c = 0; c < g.c; ++c) idx[i++] = flat(g, n, y * p + py, xx * p + px, c);
    return idx;
  });
  return ops::gather(x, {g.n, gh, gw, p * p * g.c}, index);
}

Tensor depth_to_space(const Tensor& x, int f) {
  const Grid g = grid_of(x, "depth_to_space");
  if (f < 1 || g.c % (f * f) != 0) {
    throw ShapeError("depth_to_space: channels not divisible by factor^2");
  }
  const int c = g.c / (f * f);
  const Grid o{g.n, g.h * f, g.w * f, c};
  auto index = cached<Index>(key_of("d2s", g, {f}), [&] {
    Index idx(x.size());
    std::size_t i = 0;
    for (int n = 0; n < o.n; ++n)
      for (int y = 0; y < o.h; ++y)
        for (int xx = 0; xx < o.w; ++xx)
          for (int ch = 0; ch < c; ++ch)
            idx[i++] = flat(g, n, y / f, xx / f, ((y % f) * f + xx % f) * c + ch);
    return idx;
  });
  return ops::gather(x, {o.n, o.h, o.w, o.c}, index);
}

}  // namespace rsovseg::spatial
