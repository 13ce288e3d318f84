#pragma once

// Small dense linear algebra, generic over double and Jet.

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "finslerlab/error.hpp"
#include "finslerlab/jet.hpp"

namespace finslerlab {

template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, const T& fill)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<T>& data() const noexcept { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Rank-3 array indexed (i, j, k), each in [0, n).
template <class T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t n, const T& fill) : n_(n), data_(n * n * n, fill) {}

  std::size_t dim() const noexcept { return n_; }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * n_ + j) * n_ + k]; }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * n_ + j) * n_ + k];
  }
  const std::vector<T>& data() const noexcept { return data_; }

 private:
  std::size_t n_ = 0;
  std::vector<T> data_;
};

template <class T>
Matrix<double> values(const Matrix<T>& m) {
  Matrix<double> out(m.rows(), m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = value_of(m(i, j));
  }
  return out;
}

template <class T>
std::vector<double> values(const std::vector<T>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(value_of(e));
  return out;
}

template <class T>
Tensor3<double> values(const Tensor3<T>& t) {
  Tensor3<double> out(t.dim(), 0.0);
  const std::size_t n = t.dim();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) out(i, j, k) = value_of(t(i, j, k));
  return out;
}

/// LU factorisation with partial pivoting (pivot chosen on the value slot).
template <class T>
struct LU {
  Matrix<T> lu;
  std::vector<std::size_t> perm;
  int sign = 1;

  explicit LU(Matrix<T> a) : lu(std::move(a)), perm(lu.rows()) {
    const std::size_t n = lu.rows();
    if (lu.cols() != n) throw PreconditionError("LU: matrix is not square");
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      double best = std::abs(value_of(lu(k, k)));
      for (std::size_t i = k + 1; i < n; ++i) {
        const double v = std::abs(value_of(lu(i, k)));
        if (v > best) {
          best = v;
          p = i;
        }
      }
      if (best == 0.0) throw SingularMetric("LU: exactly singular matrix");
      if (p != k) {
        for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(p, j));
        std::swap(perm[k], perm[p]);
        sign = -sign;
      }
      const T inv = 1.0 / lu(k, k);
      for (std::size_t i = k + 1; i < n; ++i) {
        lu(i, k) = lu(i, k) * inv;
        for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= lu(i, k) * lu(k, j);
      }
    }
  }

  T determinant() const {
    T det = lu(0, 0);
    for (std::size_t i = 1; i < lu.rows(); ++i) det = det * lu(i, i);
    if (sign < 0) det = -det;
    return det;
  }

  std::vector<T> solve(const std::vector<T>& b) const {
    const std::size_t n = lu.rows();
    std::vector<T> x;
    x.reserve(n);
    for (std::size_t i = 0; i < n; ++i) x.push_back(b[perm[i]]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) x[i] -= lu(i, j) * x[j];
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu(i, j) * x[j];
      x[i] = x[i] / lu(i, i);
    }
    return x;
  }

  Matrix<T> inverse() const {
    const std::size_t n = lu.rows();
    const T zero = constant_like(lu(0, 0), 0.0);
    Matrix<T> out(n, n, zero);
    for (std::size_t c = 0; c < n; ++c) {
      std::vector<T> e(n, zero);
      e[c] = constant_like(zero, 1.0);
      const auto col = solve(e);
      for (std::size_t r = 0; r < n; ++r) out(r, c) = col[r];
    }
    return out;
  }
};

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

inline double norm_inf(const Matrix<double>& m) {
  double best = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) row += std::abs(m(i, j));
    best = std::max(best, row);
  }
  return best;
}

}  // namespace finslerlab
