#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace styleformer {

/// Raised when operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation meets or would produce NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid configurations (schedules, presets, variants).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(std::size_t rows, std::size_t cols);

/// Dense row-major matrix. The shape is fixed at construction; element
/// values may be written through the non-const accessors.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(rows_, cols_));
    }
  }
  Tensor(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged tensor literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Tensor row_vector(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor(1, n, std::move(values));
  }
  static Tensor identity(std::size_t n) {
    Tensor out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
    return out;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  const std::vector<T>& values() const noexcept { return data_; }

  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(rows_, cols_, std::move(out));
  }

  /// Exact (bitwise for finite values) equality.
  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// H x W x C feature map, row-major over (y, x, c).
template <class T>
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<T> data;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t c, T fill = T{0})
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  T operator()(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
  T& operator()(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * width + x) * channels + c];
  }
  bool operator==(const FeatureMap&) const = default;
};

/// Flattens H x W x C into (H*W) x C with pixel index p = y*W + x.
template <class T>
Tensor<T> flatten(const FeatureMap<T>& map) {
  return Tensor<T>(map.height * map.width, map.channels, map.data);
}

template <class T>
FeatureMap<T> unflatten(const Tensor<T>& sheet, std::size_t height, std::size_t width) {
  if (sheet.rows() != height * width) {
    throw ShapeError("cannot unflatten " + shape_string(sheet.rows(), sheet.cols()) + " into " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  FeatureMap<T> out;
  out.height = height;
  out.width = width;
  out.channels = sheet.cols();
  out.data = sheet.values();
  return out;
}

/// Side length of a square sheet with n pixels; throws if n is not square.
std::size_t square_side(std::size_t pixels);

}  // namespace styleformer
