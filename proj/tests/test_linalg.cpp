#include <doctest.h>

#include <cmath>
#include <vector>

#include "knw/linalg.hpp"
#include "knw/rng.hpp"

using namespace knw;

TEST_CASE("jacobi eigendecomposition reconstructs a symmetric matrix") {
  Matrix m(3, 3);
  double vals[3][3] = {{4.0, 1.0, -2.0}, {1.0, 3.0, 0.5}, {-2.0, 0.5, 5.0}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = vals[i][j];

  std::vector<double> w;
  Matrix v;
  jacobi_eigen_sym(m, w, v);

  // A == V diag(w) V^T
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += v(i, k) * w[k] * v(j, k);
      CHECK(acc == doctest::Approx(vals[i][j]).epsilon(1e-12));
    }
  }
  // columns orthonormal
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += v(k, a) * v(k, b);
      CHECK(acc == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("jacobi eigenvalues of [[2,1],[1,2]] are 1 and 3") {
  Matrix m(2, 2);
  m(0, 0) = 2;
  m(0, 1) = 1;
  m(1, 0) = 1;
  m(1, 1) = 2;
  std::vector<double> w;
  Matrix v;
  jacobi_eigen_sym(m, w, v);
  double lo = std::min(w[0], w[1]), hi = std::max(w[0], w[1]);
  CHECK(lo == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(hi == doctest::Approx(3.0).epsilon(1e-13));
}

TEST_CASE("gram solver matches a hand-solved least squares problem") {
  Matrix b(2, 3);
  b(0, 0) = 1;
  b(1, 1) = 1;
  GramSolver solver(b);
  std::vector<double> rhs = {1.0, 2.0};  // B t with t = (1,2,5)
  auto w = solver.solve(rhs);
  CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("gram solver returns the minimum-norm solution when rank deficient") {
  Matrix b(2, 2);
  b(0, 0) = b(0, 1) = b(1, 0) = b(1, 1) = 1.0;
  GramSolver solver(b);
  std::vector<double> rhs = {2.0, 2.0};  // B t with t = (1,1)
  auto w = solver.solve(rhs);
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("singular values of a diagonal-like row matrix") {
  Matrix b(2, 3);
  b(0, 0) = 3.0;
  b(1, 1) = 4.0;
  auto sigma = singular_values_rows(b);
  CHECK(sigma[0] == doctest::Approx(4.0).epsilon(1e-13));
  CHECK(sigma[1] == doctest::Approx(3.0).epsilon(1e-13));
}

TEST_CASE("one-sided jacobi agrees with the gram-eigenvalue route") {
  // Same quantity by two independent algorithms.
  Matrix b(4, 17);
  std::uint64_t s = 99;
  for (std::size_t i = 0; i < b.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j)
      b(i, j) = 2.0 * (splitmix64(s) >> 11) * 0x1.0p-53 - 1.0;

  auto sigma = singular_values_rows(b);

  Matrix g(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) g(i, j) = dot(b.row(i), b.row(j));
  std::vector<double> w;
  Matrix v;
  jacobi_eigen_sym(g, w, v);
  std::sort(w.begin(), w.end(), std::greater<double>());

  for (int k = 0; k < 4; ++k)
    CHECK(sigma[k] == doctest::Approx(std::sqrt(std::max(0.0, w[k]))).epsilon(1e-10));
}
