#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace scd {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// (batch, channel, row, col)
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::int64_t elems() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense 4-D float64 tensor, row-major with w fastest. Carries a gradient
// buffer of identical shape when requires_grad is set; gradients always
// accumulate and are cleared only by zero_grad().
class Tensor {
 public:
  explicit Tensor(Shape shape, bool requires_grad = false);

  static TensorPtr zeros(Shape s, bool requires_grad = false);
  static TensorPtr full(Shape s, double value, bool requires_grad = false);
  static TensorPtr from_data(Shape s, std::vector<double> values,
                             bool requires_grad = false);
  static TensorPtr scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return std::int64_t(data_.size()); }
  bool requires_grad() const { return requires_grad_; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::span<const double> grad() const;
  std::span<double> grad();

  // Sole element of a 1-element tensor.
  double item() const;
  double grad_item() const;

  std::int64_t index(int n, int c, int h, int w) const {
    return ((std::int64_t(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
  double& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }

  void zero_grad();
  void fill(double v);

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_;
};

}  // namespace scd
