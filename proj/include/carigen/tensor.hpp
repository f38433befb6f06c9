#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace carigen {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Dense row-major tensor of doubles. Rank 0 tensors (shape {}) hold a
/// single scalar. Value semantics throughout; moves are cheap.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  /// Value of a one-element tensor.
  double item() const;

  /// Same data, new shape (element count must match).
  Tensor reshaped(std::vector<int> shape) const;

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const;
  static std::string shape_str(const std::vector<int>& shape);
  static std::int64_t shape_numel(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace carigen
