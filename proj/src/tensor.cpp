#include "thermocast/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <utility>

#include "thermocast/errors.hpp"

namespace thermocast {

namespace {

void validate(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero-sized dimension in shape " + to_string(shape));
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate(shape_);
  data_.assign(thermocast::numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate(shape_);
  if (thermocast::numel(shape_) != data_.size()) {
    throw ShapeError("shape " + to_string(shape_) + " needs " + std::to_string(thermocast::numel(shape_)) +
                     " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double value) {
  Tensor t;
  t.data_[0] = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
  return Tensor(std::move(shape), std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index of rank " + std::to_string(index.size()) + " for shape " + to_string(shape_));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw ShapeError("index out of bounds for shape " + to_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (thermocast::numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace thermocast
