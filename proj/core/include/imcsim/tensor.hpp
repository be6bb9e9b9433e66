#pragma once

// NHWC tensors and the patch layouts shared by the float and IMC MVM routes.
//
// Forward conv patch of output position (b, y, x) has 9*C entries ordered
// (ky, kx, c), taken from input (b, y+ky-1, x+kx-1, c) with zero padding.
// Backward patch of input position (b, y, x) has 9*C_out entries ordered
// (ky, kx, co), taken from output gradient (b, y+1-ky, x+1-kx, co); the
// matching stored matrix is the kernel flipped to Wb[(ky,kx,co)][ci] =
// W[(ky,kx,ci)][co].

#include <cstddef>
#include <span>
#include <vector>

#include "imcsim/error.hpp"

namespace imcsim::train {

struct Tensor {
  int n = 0;
  int h = 1;
  int w = 1;
  int c = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int h_, int w_, int c_, double fill = 0.0)
      : n(n_), h(h_), w(w_), c(c_), data(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill) {}

  std::size_t size() const { return data.size(); }
  int features() const { return h * w * c; }
  std::size_t index(int b, int y, int x, int ch) const {
    return ((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch;
  }
  double& at(int b, int y, int x, int ch) { return data[index(b, y, x, ch)]; }
  double at(int b, int y, int x, int ch) const { return data[index(b, y, x, ch)]; }
  bool same_shape(const Tensor& o) const { return n == o.n && h == o.h && w == o.w && c == o.c; }
};

/// Forward patches: (n*h*w) x (9*c), row-major.
template <typename T>
std::vector<T> im2col3x3(std::span<const T> x, int n, int h, int w, int c) {
  if (x.size() != static_cast<std::size_t>(n) * h * w * c) throw DimensionError("im2col: tensor size mismatch");
  const std::size_t cols = static_cast<std::size_t>(9) * c;
  std::vector<T> out(static_cast<std::size_t>(n) * h * w * cols, T{});
  std::size_t row = 0;
  for (int b = 0; b < n; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx, ++row) {
        T* dst = out.data() + row * cols;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            T* slot = dst + static_cast<std::size_t>(ky * 3 + kx) * c;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            const T* src = x.data() + ((static_cast<std::size_t>(b) * h + sy) * w + sx) * c;
            for (int ch = 0; ch < c; ++ch) slot[ch] = src[ch];
          }
        }
      }
    }
  }
  return out;
}

/// Backward patches over the zero-padded output gradient: (n*h*w) x (9*c).
template <typename T>
std::vector<T> backward_patches3x3(std::span<const T> g, int n, int h, int w, int c) {
  if (g.size() != static_cast<std::size_t>(n) * h * w * c) throw DimensionError("backward patches: size mismatch");
  const std::size_t cols = static_cast<std::size_t>(9) * c;
  std::vector<T> out(static_cast<std::size_t>(n) * h * w * cols, T{});
  std::size_t row = 0;
  for (int b = 0; b < n; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx, ++row) {
        T* dst = out.data() + row * cols;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + 1 - ky;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + 1 - kx;
            T* slot = dst + static_cast<std::size_t>(ky * 3 + kx) * c;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            const T* src = g.data() + ((static_cast<std::size_t>(b) * h + sy) * w + sx) * c;
            for (int ch = 0; ch < c; ++ch) slot[ch] = src[ch];
          }
        }
      }
    }
  }
  return out;
}

/// Wb[(ky,kx,co)][ci] = W[(ky,kx,ci)][co] for a (9*cin) x cout kernel.
template <typename T>
std::vector<T> flip_kernel3x3(std::span<const T> w, int cin, int cout) {
  if (w.size() != static_cast<std::size_t>(9) * cin * cout) throw DimensionError("flip_kernel: size mismatch");
  std::vector<T> out(w.size());
  for (int k = 0; k < 9; ++k) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int co = 0; co < cout; ++co) {
        out[(static_cast<std::size_t>(k) * cout + co) * cin + ci] = w[(static_cast<std::size_t>(k) * cin + ci) * cout + co];
      }
    }
  }
  return out;
}

/// Row-major transpose of a rows x cols matrix.
template <typename T>
std::vector<T> transpose(std::span<const T> m, int rows, int cols) {
  std::vector<T> out(m.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out[static_cast<std::size_t>(c) * rows + r] = m[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return out;
}

/// out (m x n) = a (m x k) * b (k x n), all row-major. Accumulates into out
/// when accumulate is set.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, int m, int k, int n,
            bool accumulate = false);
/// out (k x n) = a^T * b with a (m x k), b (m x n).
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, int m, int k, int n);

}  // namespace imcsim::train
