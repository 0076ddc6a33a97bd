#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cpmf/errors.hpp"

namespace cpmf {

// Row-major dense f64 tensor. Shapes are fixed at construction; element
// storage is contiguous.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (std::size_t d : shape_) n *= d;
    data_.assign(n, 0.0);
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double* row(std::size_t i) { return data_.data() + i * cols(); }
  const double* row(std::size_t i) const { return data_.data() + i * cols(); }

  double& at(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v) { data_.assign(data_.size(), v); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void require_shape(const Tensor& other, const std::string& what) const {
    if (!same_shape(other)) throw ShapeError(what);
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace cpmf
