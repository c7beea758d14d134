// Dense row-major double matrix, just enough for desk-scale experiments.
#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cal {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

// C = A * B^T  (A: m x n, B: p x n, C: m x p)
inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_bt: inner dimension mismatch");
  Matrix c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j) c(i, j) = dot(a.row(i), b.row(j), a.cols);
  return c;
}

// C = A^T * B  (A: m x n, B: m x p, C: n x p)
inline Matrix matmul_at(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_at: outer dimension mismatch");
  Matrix c(a.cols, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    const double* br = b.row(i);
    for (int j = 0; j < a.cols; ++j) {
      double aij = ar[j];
      if (aij == 0.0) continue;
      double* cr = c.row(j);
      for (int k = 0; k < b.cols; ++k) cr[k] += aij * br[k];
    }
  }
  return c;
}

// C = A * B  (A: m x n, B: n x p)
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      double aik = ar[k];
      if (aik == 0.0) continue;
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
    }
  }
  return c;
}

}  // namespace cal
