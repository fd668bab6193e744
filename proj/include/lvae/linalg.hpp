#pragma once

// Dense linear-algebra kernels used throughout the library:
//   - symmetric eigendecomposition (Householder tridiagonalization followed by
//     implicit-shift QL),
//   - matrix exponential (scaling and squaring with a degree-6 Pade approximant),
//   - principal logarithm of a proper rotation,
//   - log-determinant of symmetric positive definite matrices.
//
// Eigen is used only as a container and for small Cholesky / Schur factorizations.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "lvae/errors.hpp"

namespace lvae {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column j pairs with values(j)
};

namespace detail {

// Reduces the symmetric matrix held in `a` to tridiagonal form. On return `a`
// holds the accumulated orthogonal transform, `d` the diagonal and `e` the
// subdiagonal with e[0] = 0.
inline void householder_tridiagonalize(Matrix& a, Vector& d, Vector& e) {
  const Eigen::Index n = a.rows();
  d.setZero(n);
  e.setZero(n);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const Eigen::Index l = i - 1;
    double h = 0.0;
    if (l > 0) {
      double scale = 0.0;
      for (Eigen::Index k = 0; k <= l; ++k) scale += std::abs(a(i, k));
      if (scale == 0.0) {
        e(i) = a(i, l);
      } else {
        for (Eigen::Index k = 0; k <= l; ++k) {
          a(i, k) /= scale;
          h += a(i, k) * a(i, k);
        }
        double f = a(i, l);
        double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        e(i) = scale * g;
        h -= f * g;
        a(i, l) = f - g;
        f = 0.0;
        for (Eigen::Index j = 0; j <= l; ++j) {
          a(j, i) = a(i, j) / h;
          g = 0.0;
          for (Eigen::Index k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
          for (Eigen::Index k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
          e(j) = g / h;
          f += e(j) * a(i, j);
        }
        const double hh = f / (h + h);
        for (Eigen::Index j = 0; j <= l; ++j) {
          f = a(i, j);
          g = e(j) - hh * f;
          e(j) = g;
          for (Eigen::Index k = 0; k <= j; ++k) a(j, k) -= f * e(k) + g * a(i, k);
        }
      }
    } else {
      e(i) = a(i, l);
    }
    d(i) = h;
  }
  d(0) = 0.0;
  e(0) = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d(i) != 0.0) {
      for (Eigen::Index j = 0; j < i; ++j) {
        double g = 0.0;
        for (Eigen::Index k = 0; k < i; ++k) g += a(i, k) * a(k, j);
        for (Eigen::Index k = 0; k < i; ++k) a(k, j) -= g * a(k, i);
      }
    }
    d(i) = a(i, i);
    a(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      a(j, i) = 0.0;
      a(i, j) = 0.0;
    }
  }
}

// Implicit-shift QL on a tridiagonal matrix, accumulating rotations into z.
inline void tridiagonal_ql(Vector& d, Vector& e, Matrix& z, std::size_t max_iterations) {
  const Eigen::Index n = d.size();
  if (n == 0) return;
  for (Eigen::Index i = 1; i < n; ++i) e(i - 1) = e(i);
  e(n - 1) = 0.0;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (Eigen::Index l = 0; l < n; ++l) {
    std::size_t iter = 0;
    Eigen::Index m = l;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d(m)) + std::abs(d(m + 1));
        if (std::abs(e(m)) <= eps * dd) break;
      }
      if (m != l) {
        if (iter++ == max_iterations) {
          throw NumericError("symmetric eigensolver failed to converge", iter);
        }
        double g = (d(l + 1) - d(l)) / (2.0 * e(l));
        double r = std::hypot(g, 1.0);
        g = d(m) - d(l) + e(l) / (g + std::copysign(r, g));
        double s = 1.0;
        double c = 1.0;
        double p = 0.0;
        Eigen::Index i = m - 1;
        bool underflow = false;
        for (; i >= l; --i) {
          double f = s * e(i);
          const double b = c * e(i);
          r = std::hypot(f, g);
          e(i + 1) = r;
          if (r == 0.0) {
            d(i + 1) -= p;
            e(m) = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d(i + 1) - p;
          r = (d(i) - g) * s + 2.0 * c * b;
          p = s * r;
          d(i + 1) = g + p;
          g = c * r - b;
          for (Eigen::Index k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (underflow) continue;
        d(l) -= p;
        e(l) = g;
        e(m) = 0.0;
      }
    } while (m != l);
  }
}

// First entry with magnitude above 1e-12 is made positive.
inline void canonicalize_sign(Eigen::Ref<Vector> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

}  // namespace detail

// Full eigendecomposition of a symmetric matrix. Eigenvalues are returned in
// descending order; exact ties are ordered lexicographically (descending) on
// the sign-normalized eigenvectors so the output is deterministic.
inline SymmetricEigen symmetric_eigen(const Matrix& a, std::size_t max_iterations = 60) {
  if (a.rows() != a.cols()) throw ParameterError("symmetric_eigen: matrix must be square");
  const Eigen::Index n = a.rows();
  Matrix z = symmetrized(a);
  Vector d;
  Vector e;
  detail::householder_tridiagonalize(z, d, e);
  detail::tridiagonal_ql(d, e, z, max_iterations);

  for (Eigen::Index j = 0; j < n; ++j) detail::canonicalize_sign(z.col(j));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
    if (d(x) != d(y)) return d(x) > d(y);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (z(i, x) != z(i, y)) return z(i, x) > z(i, y);
    }
    return x < y;
  });

  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    out.values(j) = d(order[static_cast<std::size_t>(j)]);
    out.vectors.col(j) = z.col(order[static_cast<std::size_t>(j)]);
  }
  return out;
}

// exp(A) by scaling and squaring with the [6/6] Pade approximant.
inline Matrix expm(const Matrix& a) {
  if (a.rows() != a.cols()) throw ParameterError("expm: matrix must be square");
  const Eigen::Index n = a.rows();
  if (n == 0) return a;
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / 0.5))));
  const Matrix scaled = a / std::ldexp(1.0, squarings);

  // c_j = (2q - j)! q! / ((2q)! j! (q - j)!), q = 6
  constexpr double c[7] = {1.0,
                           1.0 / 2.0,
                           5.0 / 44.0,
                           1.0 / 66.0,
                           1.0 / 792.0,
                           1.0 / 15840.0,
                           1.0 / 665280.0};
  const Matrix ident = Matrix::Identity(n, n);
  Matrix power = ident;
  Matrix num = c[0] * ident;
  Matrix den = c[0] * ident;
  for (int j = 1; j <= 6; ++j) {
    power = power * scaled;
    num += c[j] * power;
    den += ((j % 2 == 0) ? c[j] : -c[j]) * power;
  }
  Matrix result = den.partialPivLu().solve(num);
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

// Principal logarithm of a proper rotation (orthogonal, det = +1). The result
// is skew-symmetric. Rotations by exactly pi are handled by pairing the -1
// eigenvalues.
inline Matrix rotation_log(const Matrix& r) {
  const Eigen::Index n = r.rows();
  if (r.cols() != n) throw ParameterError("rotation_log: matrix must be square");
  if (n == 0) return r;
  Eigen::RealSchur<Matrix> schur(r);
  const Matrix& t = schur.matrixT();
  const Matrix& q = schur.matrixU();
  Matrix block = Matrix::Zero(n, n);
  std::vector<Eigen::Index> negatives;
  for (Eigen::Index i = 0; i < n;) {
    if (i + 1 < n && std::abs(t(i + 1, i)) > 1e-14) {
      const double sine = 0.5 * (t(i + 1, i) - t(i, i + 1));
      const double cosine = 0.5 * (t(i, i) + t(i + 1, i + 1));
      const double theta = std::atan2(sine, cosine);
      block(i + 1, i) = theta;
      block(i, i + 1) = -theta;
      i += 2;
    } else {
      if (t(i, i) < 0.0) negatives.push_back(i);
      i += 1;
    }
  }
  if (negatives.size() % 2 != 0) throw NumericError("rotation_log: determinant is -1");
  for (std::size_t p = 0; p < negatives.size(); p += 2) {
    block(negatives[p + 1], negatives[p]) = M_PI;
    block(negatives[p], negatives[p + 1]) = -M_PI;
  }
  const Matrix log = q * block * q.transpose();
  return 0.5 * (log - log.transpose());
}

// log det of a symmetric positive definite matrix via Cholesky.
inline double log_det_spd(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericError("log_det_spd: matrix is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace lvae
