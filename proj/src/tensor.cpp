#include "scd/tensor.hpp"

#include <utility>

namespace scd {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) +
         "x" + std::to_string(w);
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : shape_(shape), requires_grad_(requires_grad) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
    throw ShapeError("all tensor dims must be >= 1, got " + shape.str());
  }
  data_.assign(static_cast<std::size_t>(shape.elems()), 0.0);
  if (requires_grad_) {
    grad_.assign(data_.size(), 0.0);
  }
}

TensorPtr Tensor::zeros(Shape s, bool requires_grad) {
  return std::make_shared<Tensor>(s, requires_grad);
}

TensorPtr Tensor::full(Shape s, double value, bool requires_grad) {
  auto t = std::make_shared<Tensor>(s, requires_grad);
  t->fill(value);
  return t;
}

TensorPtr Tensor::from_data(Shape s, std::vector<double> values,
                            bool requires_grad) {
  auto t = std::make_shared<Tensor>(s, requires_grad);
  if (std::int64_t(values.size()) != s.elems()) {
    throw ShapeError("data length " + std::to_string(values.size()) +
                     " does not match shape " + s.str());
  }
  t->data_ = std::move(values);
  return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
  return full(Shape{1, 1, 1, 1}, value, requires_grad);
}

std::span<const double> Tensor::grad() const {
  if (!requires_grad_) {
    throw std::logic_error("tensor has no gradient buffer");
  }
  return grad_;
}

std::span<double> Tensor::grad() {
  if (!requires_grad_) {
    throw std::logic_error("tensor has no gradient buffer");
  }
  return grad_;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() requires a 1-element tensor, got " + shape_.str());
  }
  return data_[0];
}

double Tensor::grad_item() const {
  if (size() != 1) {
    throw ShapeError("grad_item() requires a 1-element tensor");
  }
  return grad()[0];
}

void Tensor::zero_grad() {
  if (requires_grad_) {
    grad_.assign(grad_.size(), 0.0);
  }
}

void Tensor::fill(double v) {
  data_.assign(data_.size(), v);
}

}  // namespace scd
