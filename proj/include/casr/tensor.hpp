#pragma once
// Dense row-major tensor with a small shape vector. Intentionally minimal:
// the network code maps slices into Eigen matrices for the heavy lifting.

#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "casr/common.hpp"

namespace casr {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw ShapeError("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  void fill(T x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(T(0)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
  }
};

template <typename T>
void require_shape(const Tensor<T>& t, const std::vector<int>& want, const char* who) {
  if (t.shape != want) {
    Tensor<T> w;  // only for shape_str
    w.shape = want;
    throw ShapeError(std::string(who) + ": expected shape " + w.shape_str() + ", got " +
                     t.shape_str());
  }
}

// Named view of one trainable parameter and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

}  // namespace casr
