#ifndef EKR_MATRIX_HPP
#define EKR_MATRIX_HPP

#include <cstddef>
#include <vector>

namespace ekr {

// Dense row-major matrix of doubles. Small and deliberately boring: every
// solver in the toolkit runs on problems of at most a few hundred rows or
// columns, and results must be bit-reproducible across runs.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

private:
  std::size_t rows_{0};
  std::size_t cols_{0};
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix scale(const Matrix& a, double s);

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

// Least-squares solve of min ||A X - B|| by Householder QR, one RHS column
// at a time is avoided: B may carry several columns. Requires rows >= cols;
// throws numeric_error when A is rank deficient.
Matrix least_squares_solve(const Matrix& a, const Matrix& b);

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// On return eigenvectors holds one eigenvector per column, aligned with
// eigenvalues. Input must be symmetric; only the given triangle is trusted.
void symmetric_eigendecompose(const Matrix& a, Matrix& eigenvectors,
                              std::vector<double>& eigenvalues);

// Moore-Penrose pseudo-inverse of a symmetric positive semi-definite matrix.
// Eigenvalues below rel_tol times the largest are treated as exact zeros.
Matrix pseudo_inverse_spd(const Matrix& a, double rel_tol = 1e-12);

} // namespace ekr

#endif
