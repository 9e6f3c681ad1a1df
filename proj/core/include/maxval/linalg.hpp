#pragma once

#include <cstddef>
#include <vector>

namespace maxval {

// Small dense row-major matrix. Sized for N x N softmax Hessians and the
// modest normal-equation systems of the ridge learner; not a general BLAS.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> a_;
};

// Solves A x = b for symmetric positive definite A via Cholesky.
// Throws NumericError if the factorization breaks down.
std::vector<double> cholesky_solve(const Matrix& a, const std::vector<double>& b);

// Spectral norm of a symmetric matrix by power iteration.
double operator_norm_sym(const Matrix& a, int max_iters = 512, double tol = 1e-13);

}  // namespace maxval
