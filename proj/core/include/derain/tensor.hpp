#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "derain/common.hpp"

namespace derain {

// Row-major dense tensor. For images the layout is (h, w, c) with the channel
// axis fastest; for conv kernels (kh, kw, in_ch, out_ch) with out_ch fastest.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T, AlignedAllocator<T>> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(size_t(s.numel()), T(0)) {}

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, T v) {
    Tensor t(s);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return full(Shape::scalar(), v); }

  int64_t size() const { return int64_t(data.size()); }
  bool empty() const { return data.empty(); }

  int h() const { return shape.d[0]; }
  int w() const { return shape.d[1]; }
  int c() const { return shape.ndim >= 3 ? shape.d[2] : 1; }

  T& operator[](int64_t i) { return data[size_t(i)]; }
  const T& operator[](int64_t i) const { return data[size_t(i)]; }

  // image access
  T& at(int y, int x, int ch) { return data[size_t((int64_t(y) * w() + x) * c() + ch)]; }
  const T& at(int y, int x, int ch) const {
    return data[size_t((int64_t(y) * w() + x) * c() + ch)];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
  Tensor<U> out(t.shape);
  for (int64_t i = 0; i < t.size(); ++i) out[i] = U(t[i]);
  return out;
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& t) {
  Tensor<T> out = t;
  for (auto& v : out.data) v = std::min(T(1), std::max(T(0), v));
  return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape == b.shape, "max_abs_diff: shape mismatch ", a.shape.str(), " vs ",
          b.shape.str());
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <typename T>
double mean_value(const Tensor<T>& t) {
  double s = 0;
  for (auto v : t.data) s += double(v);
  return t.size() ? s / double(t.size()) : 0.0;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (auto v : t.data)
    if (!std::isfinite(double(v))) return false;
  return true;
}

// Rec. 601 luma. 1-channel input passes through.
template <typename T>
Tensor<T> luminance(const Tensor<T>& img) {
  require(img.shape.ndim == 3, "luminance: expected (h,w,c) image, got ", img.shape.str());
  int ch = img.c();
  require(ch == 1 || ch == 3, "luminance: expected 1 or 3 channels, got ", ch);
  Tensor<T> out(Shape::image(img.h(), img.w(), 1));
  if (ch == 1) {
    out.data = img.data;
    return out;
  }
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x)
      out.at(y, x, 0) = T(0.299) * img.at(y, x, 0) + T(0.587) * img.at(y, x, 1) +
                        T(0.114) * img.at(y, x, 2);
  return out;
}

template <typename T>
Tensor<T> random01(Shape s, Rng& rng) {
  Tensor<T> t(s);
  for (auto& v : t.data) v = T(rng.uniform());
  return t;
}

}  // namespace derain
