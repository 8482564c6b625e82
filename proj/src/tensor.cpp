#include "adnl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace adnl {

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("tensor of shape " + shape_string(shape_) + " given " + std::to_string(values_.size()) +
                     " values");
  }
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(float v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

std::size_t Tensor::stride0() const {
  if (shape_.empty()) return 1;
  return shape_[0] == 0 ? 0 : values_.size() / static_cast<std::size_t>(shape_[0]);
}

Tensor slice_rows(const Tensor& t, int begin, int end) {
  if (t.rank() == 0 || begin < 0 || end > t.dim(0) || begin > end) {
    throw ShapeError("bad row slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                     shape_string(t.shape()));
  }
  Shape shape = t.shape();
  shape[0] = end - begin;
  const std::size_t stride = t.stride0();
  std::vector<float> values(t.values().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                            t.values().begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(shape), std::move(values));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("cannot concatenate " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<float> values;
  values.reserve(a.size() + b.size());
  values.insert(values.end(), a.values().begin(), a.values().end());
  values.insert(values.end(), b.values().begin(), b.values().end());
  return Tensor(std::move(shape), std::move(values));
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_string(expected) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace adnl
