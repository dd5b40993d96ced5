#pragma once
// Single-channel intensity image plus batch <-> tensor conversions.
// Intensities live in [0, peak]; peak ("M" in the metric formulas) defaults
// to 1 and must agree between images that are compared.

#include <span>
#include <vector>

#include "casr/common.hpp"
#include "casr/tensor.hpp"

namespace casr {

template <typename T>
struct Image {
  int height = 0;
  int width = 0;
  T peak = T(1);
  std::vector<T> v;  // row-major, height*width

  Image() = default;
  Image(int h, int w, T peak_ = T(1)) : height(h), width(w), peak(peak_) {
    if (h <= 0 || w <= 0) throw ShapeError("Image: dimensions must be positive");
    if (!(peak > T(0))) throw DomainError("Image: peak must be positive");
    v.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), T(0));
  }

  static Image constant(int h, int w, T value, T peak_ = T(1)) {
    Image img(h, w, peak_);
    std::fill(img.v.begin(), img.v.end(), value);
    return img;
  }

  T& at(int i, int j) { return v[static_cast<std::size_t>(i) * width + j]; }
  T at(int i, int j) const { return v[static_cast<std::size_t>(i) * width + j]; }
  std::size_t size() const { return v.size(); }
};

template <typename T>
void require_same_shape(const Image<T>& a, const Image<T>& b, const char* who) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError(std::string(who) + ": image shapes differ (" + std::to_string(a.height) +
                     "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
}

template <typename T>
void require_same_peak(const Image<T>& a, const Image<T>& b, const char* who) {
  if (!(a.peak == b.peak))
    throw ConfigError(std::string(who) + ": peak values differ");
}

// Packs equally-shaped images into an [N,1,H,W] activation tensor.
template <typename T>
Tensor<T> batch_to_tensor(std::span<const Image<T>> batch) {
  if (batch.empty()) throw DomainError("batch_to_tensor: empty batch");
  const int h = batch[0].height, w = batch[0].width;
  Tensor<T> t({static_cast<int>(batch.size()), 1, h, w});
  T* dst = t.data();
  for (const auto& img : batch) {
    if (img.height != h || img.width != w)
      throw ShapeError("batch_to_tensor: images in a batch must share one shape");
    std::copy(img.v.begin(), img.v.end(), dst);
    dst += img.size();
  }
  return t;
}

template <typename T>
std::vector<Image<T>> tensor_to_batch(const Tensor<T>& t, T peak = T(1)) {
  if (t.rank() != 4 || t.dim(1) != 1)
    throw ShapeError("tensor_to_batch: expected [N,1,H,W], got " + t.shape_str());
  std::vector<Image<T>> out;
  out.reserve(static_cast<std::size_t>(t.dim(0)));
  const std::size_t plane = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
  const T* src = t.data();
  for (int n = 0; n < t.dim(0); ++n, src += plane) {
    Image<T> img(t.dim(2), t.dim(3), peak);
    std::copy(src, src + plane, img.v.begin());
    out.push_back(std::move(img));
  }
  return out;
}

template <typename U, typename T>
Image<U> image_cast(const Image<T>& src) {
  Image<U> out(src.height, src.width, static_cast<U>(src.peak));
  for (std::size_t i = 0; i < src.v.size(); ++i) out.v[i] = static_cast<U>(src.v[i]);
  return out;
}

}  // namespace casr
