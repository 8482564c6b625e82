#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adnl {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense row-major float array. Image batches are NCHW.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  std::vector<float>& storage() { return values_; }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }

  // Same storage, new shape with the same element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(float v);
  bool all_finite() const;

  // Number of elements per leading-axis entry.
  std::size_t stride0() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> values_;
};

// Copies rows [begin, end) along the leading axis.
Tensor slice_rows(const Tensor& t, int begin, int end);
// Concatenates along the leading axis; trailing shapes must agree.
Tensor concat_rows(const Tensor& a, const Tensor& b);

void require_shape(const Tensor& t, const Shape& expected, const char* what);

}  // namespace adnl
