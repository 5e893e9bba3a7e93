#include "seqcnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace seqcnn {

std::string to_string(DType dtype) { return dtype == DType::F32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& text) {
  if (text == "f32" || text == "binary32" || text == "float") return DType::F32;
  if (text == "f64" || text == "binary64" || text == "double") return DType::F64;
  throw std::invalid_argument("unknown dtype '" + text + "' (expected f32 or f64)");
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
  if (shape_.empty() || shape_.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape_.size()));
  }
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (shape_[i] == 0) {
      throw ShapeError("tensor extent " + std::to_string(i) + " is zero in " +
                       shape_string(shape_));
    }
  }
  numel_ = shape_numel(shape_);
  if (dtype_ == DType::F32) {
    f32_.assign(numel_, 0.0f);
  } else {
    f64_.assign(numel_, 0.0);
  }
}

Tensor Tensor::filled(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  t.fill(value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  Tensor t(std::move(shape), dtype);
  if (values.size() != t.numel()) {
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values for shape " + shape_string(t.shape()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) t.set(i, values[i]);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_string(shape_));
  }
  return shape_[axis];
}

double Tensor::get(std::size_t flat) const {
  return dtype_ == DType::F32 ? static_cast<double>(f32_.at(flat)) : f64_.at(flat);
}

void Tensor::set(std::size_t flat, double value) {
  if (dtype_ == DType::F32) {
    f32_.at(flat) = static_cast<float>(value);
  } else {
    f64_.at(flat) = value;
  }
}

std::vector<double> Tensor::to_vector() const {
  if (dtype_ == DType::F64) return f64_;
  return {f32_.begin(), f32_.end()};
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel_) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  if (t.shape_.empty() || t.shape_.size() > 4) {
    throw ShapeError("tensor rank must be 1..4");
  }
  return t;
}

Tensor Tensor::cast(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor t(shape_, dtype);
  if (dtype == DType::F64) {
    for (std::size_t i = 0; i < numel_; ++i) t.f64_[i] = static_cast<double>(f32_[i]);
  } else {
    for (std::size_t i = 0; i < numel_; ++i) t.f32_[i] = static_cast<float>(f64_[i]);
  }
  return t;
}

void Tensor::fill(double value) {
  if (dtype_ == DType::F32) {
    std::fill(f32_.begin(), f32_.end(), static_cast<float>(value));
  } else {
    std::fill(f64_.begin(), f64_.end(), value);
  }
}

bool Tensor::all_finite() const {
  if (dtype_ == DType::F32) {
    for (float v : f32_) {
      if (!std::isfinite(v)) return false;
    }
  } else {
    for (double v : f64_) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

bool Tensor::identical(const Tensor& other) const {
  if (dtype_ != other.dtype_ || shape_ != other.shape_) return false;
  if (dtype_ == DType::F32) {
    return std::memcmp(f32_.data(), other.f32_.data(), numel_ * sizeof(float)) == 0;
  }
  return std::memcmp(f64_.data(), other.f64_.data(), numel_ * sizeof(double)) == 0;
}

void Tensor::check_dtype(DType expected) const {
  if (expected != dtype_) {
    throw ShapeError("dtype mismatch: tensor holds " + to_string(dtype_) + ", requested " +
                     to_string(expected));
  }
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_string(expected) +
                     ", got " + shape_string(t.shape()));
  }
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dtype() != b.dtype()) {
    throw ShapeError(std::string(what) + ": dtype mismatch (" + to_string(a.dtype()) + " vs " +
                     to_string(b.dtype()) + ")");
  }
}

}  // namespace seqcnn
