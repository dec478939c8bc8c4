// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flowforge {

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  std::size_t n = 1;
  for (std::size_t extent : shape_) {
    if (extent == 0) {
      throw std::invalid_argument("tensor: zero extent in shape " + shape_to_string(shape_));
    }
    n *= extent;
  }
  if (shape_.empty() || n != data_.size()) {
    throw std::invalid_argument("tensor: shape " + shape_to_string(shape_) + " does not match data length " +
                                std::to_string(data_.size()));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("tensor: non-finite value rejected at construction");
    }
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> data) {
  std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

std::size_t Tensor::last_extent() const { return shape_.empty() ? 1 : shape_.back(); }

std::size_t Tensor::outer_extent() const {
  if (shape_.empty()) return 1;
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) n *= shape_[i];
  return n;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const { return shape_to_string(shape_); }

}  // namespace flowforge
