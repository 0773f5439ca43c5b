#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tergan/errors.hpp"

namespace tergan {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major array. Images are stored NHWC, matrices as [rows, cols].
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw ValidationError("tensor data size " + std::to_string(data_.size()) +
                            " does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Same data, new shape with equal element count.
  BasicTensor reshaped(Shape s) const {
    if (shape_size(s) != size())
      throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(s));
    BasicTensor out;
    out.shape_ = std::move(s);
    out.data_ = data_;
    return out;
  }
  void reshape(Shape s) {
    if (shape_size(s) != size())
      throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(s));
    shape_ = std::move(s);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Number of elements per leading-axis entry.
  std::size_t row_size() const { return shape_.empty() ? 0 : size() / shape_[0]; }

  /// Copy of rows [begin, end) along the leading axis.
  BasicTensor rows(std::size_t begin, std::size_t end) const {
    Shape s = shape_;
    s[0] = end - begin;
    const std::size_t rs = row_size();
    return BasicTensor(std::move(s), std::vector<T>(data_.begin() + begin * rs, data_.begin() + end * rs));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Concatenates tensors along the leading axis; trailing dims must agree.
template <class T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
    throw ValidationError("concat_rows: incompatible shapes " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()));
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<T> d(a.data().begin(), a.data().end());
  d.insert(d.end(), b.data().begin(), b.data().end());
  return BasicTensor<T>(std::move(s), std::move(d));
}

/// Column-wise concatenation of two [N, a] and [N, b] matrices.
template <class T>
BasicTensor<T> concat_cols(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw ValidationError("concat_cols: incompatible shapes " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  BasicTensor<T> out({n, ca + cb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.ptr() + i * ca, ca, out.ptr() + i * (ca + cb));
    std::copy_n(b.ptr() + i * cb, cb, out.ptr() + i * (ca + cb) + ca);
  }
  return out;
}

/// Inverse of concat_cols: splits [N, a+b] at column `a`.
template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_cols(const BasicTensor<T>& m, std::size_t a) {
  if (m.rank() != 2 || a > m.dim(1))
    throw ValidationError("split_cols: bad split of " + shape_string(m.shape()));
  const std::size_t n = m.dim(0), c = m.dim(1), b = c - a;
  BasicTensor<T> left({n, a}), right({n, b});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(m.ptr() + i * c, a, left.ptr() + i * a);
    std::copy_n(m.ptr() + i * c + a, b, right.ptr() + i * b);
  }
  return {std::move(left), std::move(right)};
}

template <class T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src, T scale = T{1}) {
  if (dst.size() != src.size())
    throw ValidationError("add_inplace: size mismatch " + shape_string(dst.shape()) + " vs " +
                          shape_string(src.shape()));
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += scale * s[i];
}

}  // namespace tergan
