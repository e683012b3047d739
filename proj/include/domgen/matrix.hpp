#pragma once

#include <cstddef>
#include <vector>

#include "domgen/errors.hpp"

namespace domgen {

// Dense row-major matrix of 64-bit floats. Invariant: data.size() == rows*cols.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> d);

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Matrix& o) const = default;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix hconcat(const Matrix& a, const Matrix& b);

// Squared Euclidean distance between row r of a and row s of b.
double row_sqdist(const Matrix& a, std::size_t r, const Matrix& b, std::size_t s);

// Throws numeric_error if any entry is NaN or infinite.
void ensure_finite(const Matrix& m, const char* what);

}  // namespace domgen
