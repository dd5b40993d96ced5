#pragma once
// Separable bicubic resampling (Keys kernel, a = -0.5) with antialiasing on
// downscale. One implementation backs dataset synthesis, the LR degradation
// model, the bicubic baseline, and the SR models' global input skip, so all
// of them agree bit-for-bit.

#include <cmath>
#include <vector>

#include "casr/image.hpp"
#include "casr/tensor.hpp"

namespace casr {

namespace detail {

inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct ResampleTaps {
  int support = 0;                 // taps per output sample
  std::vector<int> index;          // [out * support] clamped source indices
  std::vector<double> weight;      // [out * support] normalized weights
};

inline ResampleTaps make_taps(int in, int out) {
  if (in <= 0 || out <= 0) throw ShapeError("resize: sizes must be positive");
  const double scale = static_cast<double>(in) / out;
  const double kscale = std::max(scale, 1.0);  // widen the kernel when shrinking
  ResampleTaps t;
  t.support = static_cast<int>(std::ceil(kscale * 2.0)) * 2;
  t.index.resize(static_cast<std::size_t>(out) * t.support);
  t.weight.resize(static_cast<std::size_t>(out) * t.support);
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - kscale * 2.0)) + 1;
    double sum = 0.0;
    for (int s = 0; s < t.support; ++s) {
      const int src = lo + s;
      const double w = cubic_kernel((center - src) / kscale);
      t.index[static_cast<std::size_t>(o) * t.support + s] =
          std::min(std::max(src, 0), in - 1);
      t.weight[static_cast<std::size_t>(o) * t.support + s] = w;
      sum += w;
    }
    for (int s = 0; s < t.support; ++s)
      t.weight[static_cast<std::size_t>(o) * t.support + s] /= sum;
  }
  return t;
}

}  // namespace detail

// Resize a raw row-major plane in double precision.
inline void resize_bicubic_plane(const double* src, int h, int w, double* dst, int oh, int ow) {
  const auto tx = detail::make_taps(w, ow);
  const auto ty = detail::make_taps(h, oh);
  std::vector<double> mid(static_cast<std::size_t>(h) * ow);
  for (int i = 0; i < h; ++i) {
    const double* row = src + static_cast<std::size_t>(i) * w;
    for (int o = 0; o < ow; ++o) {
      double acc = 0.0;
      for (int s = 0; s < tx.support; ++s)
        acc += tx.weight[static_cast<std::size_t>(o) * tx.support + s] *
               row[tx.index[static_cast<std::size_t>(o) * tx.support + s]];
      mid[static_cast<std::size_t>(i) * ow + o] = acc;
    }
  }
  for (int o = 0; o < oh; ++o) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int s = 0; s < ty.support; ++s)
        acc += ty.weight[static_cast<std::size_t>(o) * ty.support + s] *
               mid[static_cast<std::size_t>(ty.index[static_cast<std::size_t>(o) * ty.support + s]) * ow + j];
      dst[static_cast<std::size_t>(o) * ow + j] = acc;
    }
  }
}

// General resize; output intensities are clamped back into [0, peak] because
// the cubic kernel's negative lobes overshoot at edges.
template <typename T>
Image<T> resize_bicubic(const Image<T>& img, int oh, int ow) {
  if (oh <= 0 || ow <= 0) throw ShapeError("resize_bicubic: target must be positive");
  std::vector<double> src(img.v.begin(), img.v.end());
  std::vector<double> dst(static_cast<std::size_t>(oh) * ow);
  resize_bicubic_plane(src.data(), img.height, img.width, dst.data(), oh, ow);
  Image<T> out(oh, ow, img.peak);
  const double peak = static_cast<double>(img.peak);
  for (std::size_t i = 0; i < dst.size(); ++i)
    out.v[i] = static_cast<T>(std::min(std::max(dst[i], 0.0), peak));
  return out;
}

// The degradation model: antialiased bicubic 2x downsampling.
template <typename T>
Image<T> downsample_2x(const Image<T>& img) {
  if (img.height % 2 != 0 || img.width % 2 != 0)
    throw ShapeError("downsample_2x: dimensions must be even");
  if (img.height < 2 || img.width < 2) throw ShapeError("downsample_2x: image too small");
  return resize_bicubic(img, img.height / 2, img.width / 2);
}

// The reconstruction baseline and the models' global skip.
template <typename T>
Image<T> upsample_2x(const Image<T>& img) {
  return resize_bicubic(img, img.height * 2, img.width * 2);
}

// Batch variant over an [N,1,H,W] activation tensor.
template <typename T>
Tensor<T> upsample_2x_tensor(const Tensor<T>& x, double peak) {
  if (x.rank() != 4 || x.dim(1) != 1)
    throw ShapeError("upsample_2x_tensor: expected [N,1,H,W], got " + x.shape_str());
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({n, 1, 2 * h, 2 * w});
  std::vector<double> src(static_cast<std::size_t>(h) * w), dst(static_cast<std::size_t>(4) * h * w);
  for (int img = 0; img < n; ++img) {
    const T* xp = x.data() + static_cast<std::size_t>(img) * h * w;
    for (std::size_t i = 0; i < src.size(); ++i) src[i] = static_cast<double>(xp[i]);
    resize_bicubic_plane(src.data(), h, w, dst.data(), 2 * h, 2 * w);
    T* yp = y.data() + static_cast<std::size_t>(img) * 4 * h * w;
    for (std::size_t i = 0; i < dst.size(); ++i)
      yp[i] = static_cast<T>(std::min(std::max(dst[i], 0.0), peak));
  }
  return y;
}

}  // namespace casr
