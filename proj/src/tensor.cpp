#include "carigen/tensor.hpp"

#include <cmath>
#include <sstream>

namespace carigen {

std::int64_t Tensor::shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data.size()))
    throw ShapeError("data size does not match shape " + shape_str(shape_));
  data_ = std::move(data);
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t{std::vector<int>{}};
  t.data_[0] = v;
  return t;
}

namespace {
std::int64_t flat_offset(const std::vector<int>& shape, std::initializer_list<int> idx) {
  if (idx.size() != shape.size())
    throw ShapeError("index rank mismatch for shape " + Tensor::shape_str(shape));
  std::int64_t off = 0;
  auto it = idx.begin();
  for (size_t d = 0; d < shape.size(); ++d, ++it) {
    if (*it < 0 || *it >= shape[d]) throw ShapeError("index out of range");
    off = off * shape[d] + *it;
  }
  return off;
}
}  // namespace

double& Tensor::at(std::initializer_list<int> idx) {
  return data_[static_cast<size_t>(flat_offset(shape_, idx))];
}

double Tensor::at(std::initializer_list<int> idx) const {
  return data_[static_cast<size_t>(flat_offset(shape_, idx))];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor with " + std::to_string(numel()) + " elements");
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != numel())
    throw ShapeError("reshape " + shape_str() + " -> " + shape_str(shape) + " changes element count");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

}  // namespace carigen
