#pragma once

// Index-remapping operations on channel-last grids shaped [N, H, W, C].
// Each op builds (and caches per shape) an index table and runs through
// ops::gather / ops::sparse_map, so all of them are differentiable.

#include "rsovseg/ops.hpp"

namespace rsovseg::spatial {

/// Counter-clockwise rotation by a multiple of 90 degrees (negative allowed).
/// For a 2x2 grid [[a,b],[c,d]], +90 gives [[b,d],[a,c]]. Requires H == W.
Tensor rotate(const Tensor& x, int angle_deg);

/// out[h][w] = x[(h - dh) mod H][(w - dw) mod W]  (torch.roll semantics).
Tensor roll(const Tensor& x, int dh, int dw);

/// [N, H, W, C] -> [N * nWin, ws_h * ws_w, C], windows in row-major order.
Tensor window_partition(const Tensor& x, int ws_h, int ws_w);
/// Inverse of window_partition.
Tensor window_reverse(const Tensor& windows, int n, int h, int w, int ws_h,
                      int ws_w);

/// Nearest-neighbour upsampling by an integer factor.
Tensor upsample_nearest(const Tensor& x, int factor);

/// Bilinear resize with half-pixel centres (align_corners = false); source
/// coordinates below zero are clamped to zero.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

/// Patch extraction for a k x k convolution with zero padding k/2 and
/// stride 1: [N, H, W, C] -> [N, H, W, k*k*C], ordered (ky, kx, c).
Tensor im2col(const Tensor& x, int k);

/// Non-overlapping p x p patches: [N, H, W, C] -> [N, H/p, W/p, p*p*C],
/// ordered (py, px, c).
Tensor patchify(const Tensor& x, int p);

/// [N, H, W, f*f*C] -> [N, f*H, f*W, C]; channel block (fy, fx) lands at
/// output offset (fy, fx) inside each f x f cell.
Tensor depth_to_space(const Tensor& x, int f);

}  // namespace rsovseg::spatial
