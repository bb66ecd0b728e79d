#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace divelab {

/// Dense row-major matrix of doubles. One row per example throughout the library.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    assert(data.size() == rows * cols);
  }

  std::span<double> row(std::size_t i) {
    assert(i < rows);
    return {data.data() + i * cols, cols};
  }
  std::span<const double> row(std::size_t i) const {
    assert(i < rows);
    return {data.data() + i * cols, cols};
  }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool operator==(const Matrix&) const = default;
};

}  // namespace divelab
