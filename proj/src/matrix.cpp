#include "domgen/matrix.hpp"

#include <cmath>
#include <string>

namespace domgen {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> d)
    : rows(r), cols(c), data(std::move(d)) {
  if (data.size() != rows * cols) {
    throw shape_error("matrix data length " + std::to_string(data.size()) +
                      " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw shape_error("matmul: inner dimensions " + std::to_string(a.cols) + " vs " +
                      std::to_string(b.rows));
  }
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) {
    throw shape_error("matmul_at_b: row counts " + std::to_string(a.rows) + " vs " +
                      std::to_string(b.rows));
  }
  Matrix c(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) {
    throw shape_error("matmul_a_bt: column counts " + std::to_string(a.cols) + " vs " +
                      std::to_string(b.cols));
  }
  Matrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      c.at(i, j) = s;
    }
  }
  return c;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) {
    throw shape_error("hconcat: row counts " + std::to_string(a.rows) + " vs " +
                      std::to_string(b.rows));
  }
  Matrix c(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* crow = c.row(i);
    const double* arow = a.row(i);
    const double* brow = b.row(i);
    for (std::size_t j = 0; j < a.cols; ++j) crow[j] = arow[j];
    for (std::size_t j = 0; j < b.cols; ++j) crow[a.cols + j] = brow[j];
  }
  return c;
}

double row_sqdist(const Matrix& a, std::size_t r, const Matrix& b, std::size_t s) {
  if (a.cols != b.cols) {
    throw shape_error("row_sqdist: column counts " + std::to_string(a.cols) + " vs " +
                      std::to_string(b.cols));
  }
  const double* x = a.row(r);
  const double* y = b.row(s);
  double d = 0.0;
  for (std::size_t j = 0; j < a.cols; ++j) {
    const double t = x[j] - y[j];
    d += t * t;
  }
  return d;
}

void ensure_finite(const Matrix& m, const char* what) {
  for (double v : m.data) {
    if (!std::isfinite(v)) {
      throw numeric_error(std::string(what) + ": non-finite entry");
    }
  }
}

}  // namespace domgen
