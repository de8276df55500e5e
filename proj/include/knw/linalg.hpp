#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "knw/errors.hpp"

namespace knw {

inline double dot(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline double norm_inf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scal(double a, std::span<double> x) {
  for (double& v : x) v *= a;
}

// Dense row-major matrix, sized on construction.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
};

// y = A x for row-major A.
inline void matvec(const Matrix& a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < a.rows; ++i) y[i] = dot(a.row(i), x);
}

// Symmetric eigendecomposition by the cyclic Jacobi method. `a` is destroyed;
// on return `eigvals[k]` pairs with column k of `eigvecs` (A = V diag(w) V^T).
// Intended for the small Gram matrices in this project (n of order tens).
inline void jacobi_eigen_sym(Matrix a, std::vector<double>& eigvals,
                             Matrix& eigvecs) {
  if (a.rows != a.cols) throw ContractViolation("jacobi_eigen_sym: matrix not square");
  const std::size_t n = a.rows;
  eigvecs = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) eigvecs(i, i) = 1.0;

  auto off_diag = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps && off_diag() > 1e-14; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = std::copysign(1.0, theta) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double vkp = eigvecs(k, p), vkq = eigvecs(k, q);
          eigvecs(k, p) = c * vkp - s * vkq;
          eigvecs(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  eigvals.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigvals[i] = a(i, i);
}

// Minimum-norm solution of min_w ||B^T w - t||_2 where B is n x p with
// n << p, via the eigendecomposition of the Gram matrix G = B B^T.
// Eigenvalues below `rcond * max_eig` are treated as zero.
class GramSolver {
 public:
  explicit GramSolver(const Matrix& b, double rcond = 1e-12) : n_(b.rows) {
    Matrix g(n_, n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i; j < n_; ++j)
        g(i, j) = g(j, i) = dot(b.row(i), b.row(j));
    jacobi_eigen_sym(std::move(g), eigvals_, eigvecs_);
    double max_eig = 0.0;
    for (double w : eigvals_) max_eig = std::max(max_eig, w);
    cutoff_ = rcond * max_eig;
  }

  // Solves G w = rhs in the pseudo-inverse sense.
  std::vector<double> solve(std::span<const double> rhs) const {
    std::vector<double> coeff(n_, 0.0), w(n_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      if (eigvals_[k] <= cutoff_) continue;
      double proj = 0.0;
      for (std::size_t i = 0; i < n_; ++i) proj += eigvecs_(i, k) * rhs[i];
      coeff[k] = proj / eigvals_[k];
    }
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n_; ++k) acc += eigvecs_(i, k) * coeff[k];
      w[i] = acc;
    }
    return w;
  }

 private:
  std::size_t n_;
  std::vector<double> eigvals_;
  Matrix eigvecs_;
  double cutoff_;
};

// Singular values of the wide row matrix `b` (n x p, n <= p) by one-sided
// Jacobi rotations applied to the rows. Returns values sorted descending.
inline std::vector<double> singular_values_rows(Matrix b) {
  const std::size_t n = b.rows;
  if (n == 0) throw ContractViolation("singular_values_rows: empty matrix");

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = dot(b.row(p), b.row(p));
        double aqq = dot(b.row(q), b.row(q));
        double apq = dot(b.row(p), b.row(q));
        if (app <= 0.0 || aqq <= 0.0) continue;
        off = std::max(off, std::abs(apq) / std::sqrt(app * aqq));
        if (std::abs(apq) < 1e-15 * std::sqrt(app * aqq)) continue;
        double theta = (aqq - app) / (2.0 * apq);
        double t = std::copysign(1.0, theta) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        auto rp = b.row(p), rq = b.row(q);
        for (std::size_t k = 0; k < b.cols; ++k) {
          double vp = rp[k], vq = rq[k];
          rp[k] = c * vp - s * vq;
          rq[k] = s * vp + c * vq;
        }
      }
    }
    if (off < 1e-14) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t i = 0; i < n; ++i) sigma[i] = norm2(b.row(i));
  std::sort(sigma.begin(), sigma.end(), std::greater<double>());
  return sigma;
}

}  // namespace knw
