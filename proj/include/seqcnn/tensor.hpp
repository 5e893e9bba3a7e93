#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqcnn {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

template <class T>
concept Scalar = std::same_as<T, float> || std::same_as<T, double>;

template <Scalar T>
constexpr DType dtype_of() {
  return std::same_as<T, float> ? DType::F32 : DType::F64;
}

std::string to_string(DType dtype);
DType parse_dtype(const std::string& text);

/// Raised for any shape or dtype disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of rank 1..4 holding binary32 or binary64 scalars.
///
/// The dtype is a runtime property; kernels dispatch on it with
/// `visit_dtype`. There is no implicit conversion or broadcasting: callers
/// convert with `cast` and reshape with `reshaped`.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::F32);

  static Tensor filled(Shape shape, double value, DType dtype = DType::F32);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            DType dtype = DType::F32);

  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return numel_; }
  bool empty() const { return shape_.empty(); }

  template <Scalar T>
  std::span<T> values() {
    check_dtype(dtype_of<T>());
    if constexpr (std::same_as<T, float>) {
      return f32_;
    } else {
      return f64_;
    }
  }

  template <Scalar T>
  std::span<const T> values() const {
    check_dtype(dtype_of<T>());
    if constexpr (std::same_as<T, float>) {
      return f32_;
    } else {
      return f64_;
    }
  }

  double get(std::size_t flat) const;
  void set(std::size_t flat, double value);
  std::vector<double> to_vector() const;

  Tensor reshaped(Shape shape) const;
  Tensor cast(DType dtype) const;
  void fill(double value);

  bool all_finite() const;

  /// Same dtype, same shape, bitwise-equal payload.
  bool identical(const Tensor& other) const;

 private:
  void check_dtype(DType expected) const;

  Shape shape_;
  std::size_t numel_ = 0;
  DType dtype_ = DType::F32;
  std::vector<float> f32_;
  std::vector<double> f64_;
};

template <class F>
decltype(auto) visit_dtype(DType dtype, F&& fn) {
  if (dtype == DType::F32) {
    return fn.template operator()<float>();
  }
  return fn.template operator()<double>();
}

void require_shape(const Tensor& t, const Shape& expected, const char* what);
void require_same_dtype(const Tensor& a, const Tensor& b, const char* what);

}  // namespace seqcnn
