// Stable softmax, row L2 normalization with its backward pass, and a
// central-finite-difference gradient checker.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cal/matrix.hpp"

namespace cal {

inline double logsumexp(const double* v, int n) {
  double m = v[0];
  for (int i = 1; i < n; ++i) m = std::max(m, v[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline std::vector<double> stable_softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("stable_softmax: empty input");
  for (double v : logits)
    if (std::isnan(v)) throw std::invalid_argument("stable_softmax: NaN logit");
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

// Row-normalizes M; returns the normalized matrix and the original row norms
// (needed by l2_normalize_backward).
inline std::pair<Matrix, std::vector<double>> l2_normalize_rows(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  std::vector<double> norms(m.rows);
  for (int i = 0; i < m.rows; ++i) {
    double n2 = dot(m.row(i), m.row(i), m.cols);
    double n = std::sqrt(n2);
    if (!(n > 0.0)) throw std::invalid_argument("l2_normalize_rows: zero row (dead feature)");
    norms[i] = n;
    for (int j = 0; j < m.cols; ++j) out(i, j) = m(i, j) / n;
  }
  return {std::move(out), std::move(norms)};
}

// Backward of f = g / ||g||: grad_g_i = (grad_f_i - (f_i . grad_f_i) f_i) / ||g_i||.
inline Matrix l2_normalize_backward(const Matrix& grad_f, const Matrix& f,
                                    const std::vector<double>& norms) {
  if (!grad_f.same_shape(f) || static_cast<int>(norms.size()) != f.rows)
    throw std::invalid_argument("l2_normalize_backward: shape mismatch");
  Matrix grad_g(f.rows, f.cols);
  for (int i = 0; i < f.rows; ++i) {
    double radial = dot(f.row(i), grad_f.row(i), f.cols);
    for (int j = 0; j < f.cols; ++j)
      grad_g(i, j) = (grad_f(i, j) - radial * f(i, j)) / norms[i];
  }
  return grad_g;
}

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
inline double check_gradient(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x0,
                             const std::vector<double>& analytic, double h = 1e-5) {
  if (x0.size() != analytic.size())
    throw std::invalid_argument("check_gradient: gradient size mismatch");
  double worst = 0.0;
  std::vector<double> x = x0;
  for (size_t k = 0; k < x0.size(); ++k) {
    x[k] = x0[k] + h;
    double fp = f(x);
    x[k] = x0[k] - h;
    double fm = f(x);
    x[k] = x0[k];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("check_gradient: non-finite evaluation");
    double fd = (fp - fm) / (2.0 * h);
    double err = std::abs(analytic[k] - fd) / std::max(1.0, std::abs(analytic[k]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace cal
