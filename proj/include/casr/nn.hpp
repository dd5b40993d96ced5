#pragma once
// Minimal training-capable layer zoo: stride-1 convolutions via per-image
// im2col + Eigen GEMM, dense layers, pointwise activations, 2x2 average
// pooling, global average pooling, pixel shuffle, dropout, and Adam.
//
// Layers cache what their backward pass needs; backward accumulates into
// parameter gradients and returns the gradient w.r.t. the layer input.
// Everything is deterministic given the seeds handed to init().

#include <Eigen/Core>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "casr/common.hpp"
#include "casr/tensor.hpp"

namespace casr {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

template <typename T>
void check_finite(const Tensor<T>& t, const char* who) {
  if (!all_finite(t.data(), t.v.size()))
    throw NumericError(std::string(who) + ": non-finite activation values");
}

// ---------------------------------------------------------------------------
// Conv2d: stride 1, square kernel, zero padding (default "same" for odd k).
// Weight layout: [cout, cin*k*k] row-major, patch index varying (c, ki, kj).
// ---------------------------------------------------------------------------
template <typename T>
struct Conv2d {
  int cin = 0, cout = 0, k = 3, pad = 1;
  Tensor<T> w, b, gw, gb;
  Tensor<T> x_;  // cached input

  Conv2d() = default;
  Conv2d(int cin_, int cout_, int k_) : cin(cin_), cout(cout_), k(k_), pad(k_ / 2) {
    w = Tensor<T>({cout, cin * k * k});
    b = Tensor<T>({cout});
    gw = Tensor<T>(w.shape);
    gb = Tensor<T>(b.shape);
  }

  // He-normal weights scaled by `gain`; zero biases.
  void init(Rng& rng, double gain = 1.0) {
    const double std = gain * std::sqrt(2.0 / static_cast<double>(cin * k * k));
    for (auto& x : w.v) x = static_cast<T>(rng.normal(0.0, std));
    b.zero();
  }

  void zero_grad() {
    gw.zero();
    gb.zero();
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
  }

  void im2col(const T* x, int h, int wdt, T* cols) const {
    // cols is (cin*k*k) x (h*wdt), column-major; one column per output pixel.
    const int hw = h * wdt;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < wdt; ++j) {
        T* col = cols + static_cast<std::size_t>(i * wdt + j) * (cin * k * k);
        int r = 0;
        for (int c = 0; c < cin; ++c) {
          const T* plane = x + static_cast<std::size_t>(c) * hw;
          for (int ki = 0; ki < k; ++ki) {
            const int ii = i + ki - pad;
            if (ii < 0 || ii >= h) {
              for (int kj = 0; kj < k; ++kj) col[r++] = T(0);
              continue;
            }
            const T* row = plane + static_cast<std::size_t>(ii) * wdt;
            for (int kj = 0; kj < k; ++kj) {
              const int jj = j + kj - pad;
              col[r++] = (jj < 0 || jj >= wdt) ? T(0) : row[jj];
            }
          }
        }
      }
    }
  }

  void col2im_add(const T* cols, int h, int wdt, T* gx) const {
    const int hw = h * wdt;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < wdt; ++j) {
        const T* col = cols + static_cast<std::size_t>(i * wdt + j) * (cin * k * k);
        int r = 0;
        for (int c = 0; c < cin; ++c) {
          T* plane = gx + static_cast<std::size_t>(c) * hw;
          for (int ki = 0; ki < k; ++ki) {
            const int ii = i + ki - pad;
            if (ii < 0 || ii >= h) {
              r += k;
              continue;
            }
            T* row = plane + static_cast<std::size_t>(ii) * wdt;
            for (int kj = 0; kj < k; ++kj) {
              const int jj = j + kj - pad;
              if (jj >= 0 && jj < wdt) row[jj] += col[r];
              ++r;
            }
          }
        }
      }
    }
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.rank() != 4 || x.dim(1) != cin)
      throw ShapeError("Conv2d: expected [N," + std::to_string(cin) + ",H,W], got " +
                       x.shape_str());
    x_ = x;
    const int n = x.dim(0), h = x.dim(2), wdt = x.dim(3), hw = h * wdt;
    const int kk = cin * k * k;
    Tensor<T> y({n, cout, h, wdt});
    cols_.resize(static_cast<std::size_t>(kk) * hw);
    Eigen::Map<const MatRM<T>> wm(w.data(), cout, kk);
    for (int img = 0; img < n; ++img) {
      const T* xp = x.data() + static_cast<std::size_t>(img) * cin * hw;
      T* yp = y.data() + static_cast<std::size_t>(img) * cout * hw;
      im2col(xp, h, wdt, cols_.data());
      Eigen::Map<const MatCM<T>> cm(cols_.data(), kk, hw);
      Eigen::Map<MatRM<T>> ym(yp, cout, hw);
      ym.noalias() = wm * cm;
      for (int m = 0; m < cout; ++m) ym.row(m).array() += b.v[static_cast<std::size_t>(m)];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = x_.dim(0), h = x_.dim(2), wdt = x_.dim(3), hw = h * wdt;
    const int kk = cin * k * k;
    require_shape(gy, {n, cout, h, wdt}, "Conv2d::backward");
    Tensor<T> gx(x_.shape);
    cols_.resize(static_cast<std::size_t>(kk) * hw);
    dcols_.resize(cols_.size());
    Eigen::Map<const MatRM<T>> wm(w.data(), cout, kk);
    Eigen::Map<MatRM<T>> gwm(gw.data(), cout, kk);
    for (int img = 0; img < n; ++img) {
      const T* xp = x_.data() + static_cast<std::size_t>(img) * cin * hw;
      const T* gp = gy.data() + static_cast<std::size_t>(img) * cout * hw;
      T* gxp = gx.data() + static_cast<std::size_t>(img) * cin * hw;
      im2col(xp, h, wdt, cols_.data());
      Eigen::Map<const MatCM<T>> cm(cols_.data(), kk, hw);
      Eigen::Map<const MatRM<T>> gm(gp, cout, hw);
      gwm.noalias() += gm * cm.transpose();
      for (int m = 0; m < cout; ++m) gb.v[static_cast<std::size_t>(m)] += gm.row(m).sum();
      Eigen::Map<MatCM<T>> dcm(dcols_.data(), kk, hw);
      dcm.noalias() = wm.transpose() * gm;
      col2im_add(dcols_.data(), h, wdt, gxp);
    }
    return gx;
  }

 private:
  std::vector<T> cols_, dcols_;
};

// ---------------------------------------------------------------------------
// Linear: y = x W + b with x [N, in], W [in, out].
// ---------------------------------------------------------------------------
template <typename T>
struct Linear {
  int in = 0, out = 0;
  Tensor<T> w, b, gw, gb;
  Tensor<T> x_;

  Linear() = default;
  Linear(int in_, int out_) : in(in_), out(out_) {
    w = Tensor<T>({in, out});
    b = Tensor<T>({out});
    gw = Tensor<T>(w.shape);
    gb = Tensor<T>(b.shape);
  }

  void init(Rng& rng, double gain = 1.0) {
    const double std = gain * std::sqrt(2.0 / static_cast<double>(in));
    for (auto& x : w.v) x = static_cast<T>(rng.normal(0.0, std));
    b.zero();
  }

  void zero_grad() {
    gw.zero();
    gb.zero();
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out_refs) {
    out_refs.push_back({prefix + ".w", &w, &gw});
    out_refs.push_back({prefix + ".b", &b, &gb});
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.rank() != 2 || x.dim(1) != in)
      throw ShapeError("Linear: expected [N," + std::to_string(in) + "], got " + x.shape_str());
    x_ = x;
    const int n = x.dim(0);
    Tensor<T> y({n, out});
    Eigen::Map<const MatRM<T>> xm(x.data(), n, in);
    Eigen::Map<const MatRM<T>> wm(w.data(), in, out);
    Eigen::Map<MatRM<T>> ym(y.data(), n, out);
    ym.noalias() = xm * wm;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out; ++j) y.v[static_cast<std::size_t>(i) * out + j] += b.v[static_cast<std::size_t>(j)];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = x_.dim(0);
    require_shape(gy, {n, out}, "Linear::backward");
    Tensor<T> gx(x_.shape);
    Eigen::Map<const MatRM<T>> xm(x_.data(), n, in);
    Eigen::Map<const MatRM<T>> gm(gy.data(), n, out);
    Eigen::Map<const MatRM<T>> wm(w.data(), in, out);
    Eigen::Map<MatRM<T>> gwm(gw.data(), in, out);
    Eigen::Map<MatRM<T>> gxm(gx.data(), n, in);
    gwm.noalias() += xm.transpose() * gm;
    gxm.noalias() = gm * wm.transpose();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out; ++j) gb.v[static_cast<std::size_t>(j)] += gy.v[static_cast<std::size_t>(i) * out + j];
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Pointwise activations
// ---------------------------------------------------------------------------
template <typename T>
struct ReLU {
  Tensor<T> x_;
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    if (!gy.same_shape(x_)) throw ShapeError("ReLU::backward: shape mismatch");
    Tensor<T> gx(gy.shape);
    for (std::size_t i = 0; i < gy.v.size(); ++i) gx.v[i] = x_.v[i] > T(0) ? gy.v[i] : T(0);
    return gx;
  }
};

template <typename T>
struct Sigmoid {
  Tensor<T> y_;
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    for (std::size_t i = 0; i < x.v.size(); ++i)
      y.v[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x.v[i]))));
    y_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    if (!gy.same_shape(y_)) throw ShapeError("Sigmoid::backward: shape mismatch");
    Tensor<T> gx(gy.shape);
    for (std::size_t i = 0; i < gy.v.size(); ++i) gx.v[i] = gy.v[i] * y_.v[i] * (T(1) - y_.v[i]);
    return gx;
  }
};

// Inverted dropout; identity in eval mode. Mask order is deterministic for a
// given RNG stream.
template <typename T>
struct Dropout {
  double p = 0.5;
  std::vector<unsigned char> mask_;

  explicit Dropout(double p_ = 0.5) : p(p_) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("Dropout: p must be in [0,1)");
  }

  Tensor<T> forward(const Tensor<T>& x, bool train, Rng* rng) {
    if (!train) {
      mask_.clear();
      return x;
    }
    if (!rng) throw ConfigError("Dropout: training forward needs an RNG");
    Tensor<T> y(x.shape);
    mask_.resize(x.v.size());
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < x.v.size(); ++i) {
      mask_[i] = rng->uniform() >= p ? 1 : 0;
      y.v[i] = mask_[i] ? x.v[i] * scale : T(0);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (mask_.empty()) return gy;  // eval-mode pass-through
    if (gy.v.size() != mask_.size()) throw ShapeError("Dropout::backward: shape mismatch");
    Tensor<T> gx(gy.shape);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < gy.v.size(); ++i) gx.v[i] = mask_[i] ? gy.v[i] * scale : T(0);
    return gx;
  }
};

// Row-wise RMS normalization on [N,F]: y = x / sqrt(mean_j x_j^2 + eps).
// Parameter-free. Decouples the head's effective step size from the scale of
// the upstream features, which matters when the optimizer budget is small.
template <typename T>
struct RmsNorm {
  static constexpr double kEps = 1e-6;

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.rank() != 2) throw ShapeError("RmsNorm: expected [N,F], got " + x.shape_str());
    const int n = x.dim(0), f = x.dim(1);
    y_ = Tensor<T>(x.shape);
    r_.assign(static_cast<std::size_t>(n), T(0));
    for (int i = 0; i < n; ++i) {
      const T* row = x.data() + static_cast<std::size_t>(i) * f;
      double ss = 0.0;
      for (int j = 0; j < f; ++j) ss += static_cast<double>(row[j]) * row[j];
      const T r = static_cast<T>(std::sqrt(ss / f + kEps));
      r_[static_cast<std::size_t>(i)] = r;
      T* yrow = y_.data() + static_cast<std::size_t>(i) * f;
      for (int j = 0; j < f; ++j) yrow[j] = row[j] / r;
    }
    return y_;
  }

  // d/dx of y = x/r with r = sqrt(mean x^2 + eps): gx = (gy - y*mean(gy.y))/r.
  Tensor<T> backward(const Tensor<T>& gy) {
    require_shape(gy, y_.shape, "RmsNorm::backward");
    const int n = y_.dim(0), f = y_.dim(1);
    Tensor<T> gx(y_.shape);
    for (int i = 0; i < n; ++i) {
      const T* yrow = y_.data() + static_cast<std::size_t>(i) * f;
      const T* grow = gy.data() + static_cast<std::size_t>(i) * f;
      T* out = gx.data() + static_cast<std::size_t>(i) * f;
      double dot = 0.0;
      for (int j = 0; j < f; ++j) dot += static_cast<double>(grow[j]) * yrow[j];
      const T m = static_cast<T>(dot / f);
      const T r = r_[static_cast<std::size_t>(i)];
      for (int j = 0; j < f; ++j) out[j] = (grow[j] - yrow[j] * m) / r;
    }
    return gx;
  }

  Tensor<T> y_;
  std::vector<T> r_;
};

// ---------------------------------------------------------------------------
// Pooling and reshaping
// ---------------------------------------------------------------------------
template <typename T>
struct AvgPool2 {
  std::vector<int> in_shape_;
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
      throw ShapeError("AvgPool2: expected [N,C,2h,2w], got " + x.shape_str());
    in_shape_ = x.shape;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
    Tensor<T> y({n, c, h, w});
    const int ih = x.dim(2), iw = x.dim(3);
    for (int nc = 0; nc < n * c; ++nc) {
      const T* src = x.data() + static_cast<std::size_t>(nc) * ih * iw;
      T* dst = y.data() + static_cast<std::size_t>(nc) * h * w;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          dst[i * w + j] = static_cast<T>(0.25) * (src[(2 * i) * iw + 2 * j] +
                                                   src[(2 * i) * iw + 2 * j + 1] +
                                                   src[(2 * i + 1) * iw + 2 * j] +
                                                   src[(2 * i + 1) * iw + 2 * j + 1]);
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape_);
    const int n = in_shape_[0], c = in_shape_[1], ih = in_shape_[2], iw = in_shape_[3];
    const int h = ih / 2, w = iw / 2;
    require_shape(gy, {n, c, h, w}, "AvgPool2::backward");
    for (int nc = 0; nc < n * c; ++nc) {
      const T* src = gy.data() + static_cast<std::size_t>(nc) * h * w;
      T* dst = gx.data() + static_cast<std::size_t>(nc) * ih * iw;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const T g = static_cast<T>(0.25) * src[i * w + j];
          dst[(2 * i) * iw + 2 * j] = g;
          dst[(2 * i) * iw + 2 * j + 1] = g;
          dst[(2 * i + 1) * iw + 2 * j] = g;
          dst[(2 * i + 1) * iw + 2 * j + 1] = g;
        }
    }
    return gx;
  }
};

// 2x2/stride-2 max pooling. Unlike averaging it preserves the amplitude of
// pixel-scale bright returns, which carry most of the class signature.
template <typename T>
struct MaxPool2 {
  std::vector<int> in_shape_;
  std::vector<int> arg_;
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
      throw ShapeError("MaxPool2: expected [N,C,2h,2w], got " + x.shape_str());
    in_shape_ = x.shape;
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
    Tensor<T> y({n, c, h, w});
    arg_.assign(y.v.size(), 0);
    const int ih = x.dim(2), iw = x.dim(3);
    for (int nc = 0; nc < n * c; ++nc) {
      const T* src = x.data() + static_cast<std::size_t>(nc) * ih * iw;
      T* dst = y.data() + static_cast<std::size_t>(nc) * h * w;
      int* amx = arg_.data() + static_cast<std::size_t>(nc) * h * w;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const int cand[4] = {(2 * i) * iw + 2 * j, (2 * i) * iw + 2 * j + 1,
                               (2 * i + 1) * iw + 2 * j, (2 * i + 1) * iw + 2 * j + 1};
          int best = cand[0];
          for (int k = 1; k < 4; ++k)
            if (src[cand[k]] > src[best]) best = cand[k];
          dst[i * w + j] = src[best];
          amx[i * w + j] = best;
        }
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape_);
    const int n = in_shape_[0], c = in_shape_[1], ih = in_shape_[2], iw = in_shape_[3];
    const int h = ih / 2, w = iw / 2;
    require_shape(gy, {n, c, h, w}, "MaxPool2::backward");
    gx.zero();
    for (int nc = 0; nc < n * c; ++nc) {
      const T* src = gy.data() + static_cast<std::size_t>(nc) * h * w;
      T* dst = gx.data() + static_cast<std::size_t>(nc) * ih * iw;
      const int* amx = arg_.data() + static_cast<std::size_t>(nc) * h * w;
      for (int i = 0; i < h * w; ++i) dst[amx[i]] += src[i];
    }
    return gx;
  }
};

// [N,C,H,W] -> [N,C] channel means.
template <typename T>
struct GlobalAvgPool {
  std::vector<int> in_shape_;
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("GlobalAvgPool: expected rank-4 input");
    in_shape_ = x.shape;
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<T> y({n, c});
    for (int nc = 0; nc < n * c; ++nc) {
      const T* src = x.data() + static_cast<std::size_t>(nc) * hw;
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += static_cast<double>(src[i]);
      y.v[static_cast<std::size_t>(nc)] = static_cast<T>(acc / hw);
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = in_shape_[0], c = in_shape_[1], hw = in_shape_[2] * in_shape_[3];
    require_shape(gy, {n, c}, "GlobalAvgPool::backward");
    Tensor<T> gx(in_shape_);
    for (int nc = 0; nc < n * c; ++nc) {
      const T g = gy.v[static_cast<std::size_t>(nc)] / static_cast<T>(hw);
      T* dst = gx.data() + static_cast<std::size_t>(nc) * hw;
      for (int i = 0; i < hw; ++i) dst[i] = g;
    }
    return gx;
  }
};

// Depth-to-space with factor 2: [N,4C,H,W] -> [N,C,2H,2W].
template <typename T>
struct PixelShuffle2 {
  std::vector<int> in_shape_;
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.rank() != 4 || x.dim(1) % 4 != 0)
      throw ShapeError("PixelShuffle2: channel count must be divisible by 4");
    in_shape_ = x.shape;
    const int n = x.dim(0), c = x.dim(1) / 4, h = x.dim(2), w = x.dim(3);
    Tensor<T> y({n, c, 2 * h, 2 * w});
    for (int img = 0; img < n; ++img)
      for (int oc = 0; oc < c; ++oc)
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            const T* src = x.data() +
                           ((static_cast<std::size_t>(img) * x.dim(1) + oc * 4 + di * 2 + dj) *
                            h * w);
            T* dst = y.data() + (static_cast<std::size_t>(img) * c + oc) * 4 * h * w;
            for (int i = 0; i < h; ++i)
              for (int j = 0; j < w; ++j)
                dst[(2 * i + di) * 2 * w + (2 * j + dj)] = src[i * w + j];
          }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    const int n = in_shape_[0], c4 = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    const int c = c4 / 4;
    require_shape(gy, {n, c, 2 * h, 2 * w}, "PixelShuffle2::backward");
    Tensor<T> gx(in_shape_);
    for (int img = 0; img < n; ++img)
      for (int oc = 0; oc < c; ++oc)
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            T* dst = gx.data() +
                     ((static_cast<std::size_t>(img) * c4 + oc * 4 + di * 2 + dj) * h * w);
            const T* src = gy.data() + (static_cast<std::size_t>(img) * c + oc) * 4 * h * w;
            for (int i = 0; i < h; ++i)
              for (int j = 0; j < w; ++j)
                dst[i * w + j] = src[(2 * i + di) * 2 * w + (2 * j + dj)];
          }
    return gx;
  }
};

// Per-channel scaling by a gate vector (the attention multiply):
// y[n,c,:,:] = x[n,c,:,:] * gate[n,c].
template <typename T>
struct ChannelScale {
  Tensor<T> x_, gate_;
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& gate) {
    if (x.rank() != 4 || gate.rank() != 2 || gate.dim(0) != x.dim(0) || gate.dim(1) != x.dim(1))
      throw ShapeError("ChannelScale: gate must be [N,C] matching the input");
    x_ = x;
    gate_ = gate;
    const int hw = x.dim(2) * x.dim(3);
    Tensor<T> y(x.shape);
    for (int nc = 0; nc < x.dim(0) * x.dim(1); ++nc) {
      const T g = gate.v[static_cast<std::size_t>(nc)];
      const T* src = x.data() + static_cast<std::size_t>(nc) * hw;
      T* dst = y.data() + static_cast<std::size_t>(nc) * hw;
      for (int i = 0; i < hw; ++i) dst[i] = src[i] * g;
    }
    return y;
  }
  // Returns gradient w.r.t. x; writes gradient w.r.t. gate.
  Tensor<T> backward(const Tensor<T>& gy, Tensor<T>& ggate) {
    if (!gy.same_shape(x_)) throw ShapeError("ChannelScale::backward: shape mismatch");
    const int hw = x_.dim(2) * x_.dim(3);
    Tensor<T> gx(x_.shape);
    ggate = Tensor<T>(gate_.shape);
    for (int nc = 0; nc < x_.dim(0) * x_.dim(1); ++nc) {
      const T g = gate_.v[static_cast<std::size_t>(nc)];
      const T* gp = gy.data() + static_cast<std::size_t>(nc) * hw;
      const T* xp = x_.data() + static_cast<std::size_t>(nc) * hw;
      T* dst = gx.data() + static_cast<std::size_t>(nc) * hw;
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) {
        dst[i] = gp[i] * g;
        acc += static_cast<double>(gp[i]) * static_cast<double>(xp[i]);
      }
      ggate.v[static_cast<std::size_t>(nc)] = static_cast<T>(acc);
    }
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy on logits (mean over the batch, natural log).
// ---------------------------------------------------------------------------
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels,
                             Tensor<T>* grad = nullptr) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: expected [N,C] logits");
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<std::size_t>(n) != labels.size())
    throw ShapeError("softmax_cross_entropy: label count mismatch");
  if (n == 0) throw DomainError("softmax_cross_entropy: empty batch");
  if (grad) *grad = Tensor<T>(logits.shape);
  double loss = 0.0;
  std::vector<double> p(static_cast<std::size_t>(c));
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw DomainError("softmax_cross_entropy: label out of range");
    const T* row = logits.data() + static_cast<std::size_t>(i) * c;
    double mx = static_cast<double>(row[0]);
    for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      p[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(row[j]) - mx);
      z += p[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < c; ++j) p[static_cast<std::size_t>(j)] /= z;
    loss -= std::log(std::max(p[static_cast<std::size_t>(y)], 1e-300));
    if (grad) {
      T* g = grad->data() + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j)
        g[j] = static_cast<T>((p[static_cast<std::size_t>(j)] - (j == y ? 1.0 : 0.0)) / n);
    }
  }
  return loss / n;
}

// ---------------------------------------------------------------------------
// Adam (bias-corrected, no weight decay).
// ---------------------------------------------------------------------------
template <typename T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    if (!(lr > 0.0)) throw ConfigError("Adam: learning rate must be positive");
  }

  void step(std::vector<ParamRef<T>>& params) {
    if (m_.empty()) {
      for (auto& p : params) {
        m_.emplace_back(p.value->shape);
        v_.emplace_back(p.value->shape);
      }
    }
    if (m_.size() != params.size()) throw ConfigError("Adam: parameter set changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i].value;
      auto& g = *params[i].grad;
      if (!p.same_shape(m_[i])) throw ConfigError("Adam: parameter shape changed between steps");
      for (std::size_t j = 0; j < p.v.size(); ++j) {
        const double gj = static_cast<double>(g.v[j]);
        const double mj = b1_ * static_cast<double>(m_[i].v[j]) + (1.0 - b1_) * gj;
        const double vj = b2_ * static_cast<double>(v_[i].v[j]) + (1.0 - b2_) * gj * gj;
        m_[i].v[j] = static_cast<T>(mj);
        v_[i].v[j] = static_cast<T>(vj);
        p.v[j] -= static_cast<T>(lr_ * (mj / c1) / (std::sqrt(vj / c2) + eps_));
      }
    }
  }

  long steps_taken() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

template <typename T>
void zero_grads(std::vector<ParamRef<T>>& params) {
  for (auto& p : params) p.grad->zero();
}

}  // namespace casr
