#include "ekr/matrix.hpp"

#include "ekr/errors.hpp"

#include <cmath>
#include <cstddef>
#include <string>

namespace ekr {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw data_error("matrix multiply: inner dimensions disagree (" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + ")");
  }
  Matrix out(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw data_error("matrix add: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.values().size(); ++i) out.values()[i] += b.values()[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw data_error("matrix subtract: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.values().size(); ++i) out.values()[i] -= b.values()[i];
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  if (a.cols() != x.size()) throw data_error("matvec: dimension mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* row = a.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

Matrix least_squares_solve(const Matrix& a, const Matrix& b) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (b.rows() != m) throw data_error("least squares: rhs row count mismatch");
  if (m < n) throw data_error("least squares: fewer rows than columns");

  Matrix r = a;
  Matrix qtb = b;
  const std::size_t k = b.cols();

  // Householder triangularization applied to [A | B] column block.
  for (std::size_t j = 0; j < n; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < m; ++i) norm += r(i, j) * r(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue; // column already zero below the diagonal
    if (r(j, j) > 0.0) norm = -norm;

    std::vector<double> v(m - j);
    v[0] = r(j, j) - norm;
    for (std::size_t i = j + 1; i < m; ++i) v[i - j] = r(i, j);
    double vnorm2 = 0.0;
    for (double vv : v) vnorm2 += vv * vv;
    if (vnorm2 == 0.0) continue;

    r(j, j) = norm;
    for (std::size_t i = j + 1; i < m; ++i) r(i, j) = 0.0;

    for (std::size_t c = j + 1; c < n; ++c) {
      double dot = 0.0;
      for (std::size_t i = j; i < m; ++i) dot += v[i - j] * r(i, c);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = j; i < m; ++i) r(i, c) -= f * v[i - j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      double dot = 0.0;
      for (std::size_t i = j; i < m; ++i) dot += v[i - j] * qtb(i, c);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = j; i < m; ++i) qtb(i, c) -= f * v[i - j];
    }
  }

  double max_diag = 0.0;
  for (std::size_t j = 0; j < n; ++j) max_diag = std::max(max_diag, std::fabs(r(j, j)));
  const double tol = 1e-12 * std::max(max_diag, 1.0);

  Matrix x(n, k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t jj = n; jj-- > 0;) {
      double acc = qtb(jj, c);
      for (std::size_t cc = jj + 1; cc < n; ++cc) acc -= r(jj, cc) * x(cc, c);
      if (std::fabs(r(jj, jj)) <= tol) {
        throw numeric_error("least squares: rank-deficient system (column " +
                            std::to_string(jj) + ")");
      }
      x(jj, c) = acc / r(jj, jj);
    }
  }
  return x;
}

void symmetric_eigendecompose(const Matrix& a, Matrix& eigenvectors,
                              std::vector<double>& eigenvalues) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw data_error("eigendecompose: matrix not square");

  Matrix m = a;
  Matrix v = Matrix::identity(n);

  double frob = 0.0;
  for (double x : m.values()) frob += x * x;
  frob = std::sqrt(frob);
  const double stop = 1e-14 * std::max(frob, 1e-300);

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * m(p, q) * m(p, q);
    if (std::sqrt(off) <= stop) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        const double app = m(p, p);
        const double aqq = m(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t i = 0; i < n; ++i) {
          const double mip = m(i, p);
          const double miq = m(i, q);
          m(i, p) = c * mip - s * miq;
          m(i, q) = s * mip + c * miq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double mpi = m(p, i);
          const double mqi = m(q, i);
          m(p, i) = c * mpi - s * mqi;
          m(q, i) = s * mpi + c * mqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v(i, p);
          const double viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  eigenvalues.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = m(i, i);
  eigenvectors = v;
}

Matrix pseudo_inverse_spd(const Matrix& a, double rel_tol) {
  Matrix v;
  std::vector<double> w;
  symmetric_eigendecompose(a, v, w);
  double max_ev = 0.0;
  for (double x : w) max_ev = std::max(max_ev, std::fabs(x));
  const double cut = rel_tol * std::max(max_ev, 1e-300);

  const std::size_t n = a.rows();
  Matrix out(n, n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (std::fabs(w[k]) <= cut) continue;
    const double inv = 1.0 / w[k];
    for (std::size_t i = 0; i < n; ++i) {
      const double vik = v(i, k) * inv;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += vik * v(j, k);
    }
  }
  return out;
}

} // namespace ekr
