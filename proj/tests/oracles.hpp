#pragma once

// Reference implementations used only by the tests. None of them call into the
// library's numerical code, so a bug there cannot hide behind a shared helper.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Cyclic Jacobi rotations; eigenvalues returned in descending order.
inline Vector jacobi_eigenvalues(Matrix a, int sweeps = 100) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Matrix j = Matrix::Identity(n, n);
        j(p, p) = c;
        j(q, q) = c;
        j(p, q) = s;
        j(q, p) = -s;
        a = j.transpose() * a * j;
      }
    }
  }
  Vector d = a.diagonal();
  std::sort(d.data(), d.data() + d.size(), std::greater<>());
  return d;
}

// Plain Taylor series with scaling and squaring.
inline Matrix taylor_expm(const Matrix& a) {
  int squarings = 0;
  double norm = a.cwiseAbs().maxCoeff() * static_cast<double>(a.rows());
  while (norm > 0.1) {
    norm /= 2.0;
    ++squarings;
  }
  const Matrix scaled = a / std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(a.rows(), a.cols());
  Matrix sum = term;
  for (int i = 1; i < 30; ++i) {
    term = term * scaled / static_cast<double>(i);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

// sum_i log N(x_i; mu, W W^T + s2 I) with the dense n x n covariance.
inline double dense_log_likelihood(const Matrix& w, const Vector& mu, double s2, const Matrix& x) {
  const Eigen::Index n = w.rows();
  const Matrix c = w * w.transpose() + s2 * Matrix::Identity(n, n);
  const Matrix c_inv = c.inverse();
  const double log_det = std::log(c.determinant());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector r = x.row(i).transpose() - mu;
    total += -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_det + r.dot(c_inv * r));
  }
  return total;
}

// Per-datum ELBO terms summed over rows, written directly from the Gaussian
// formulas for q(z|x) = N(V(x - mu), diag(D)).
struct DirectElbo {
  double kl = 0.0;
  double recon = 0.0;
};

inline DirectElbo direct_elbo(const Matrix& w, const Matrix& v, const Vector& d, const Vector& mu, double s2,
                              const Matrix& x) {
  const double n = static_cast<double>(w.rows());
  DirectElbo out;
  const double trace_term = (w * d.asDiagonal() * w.transpose()).trace();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector r = x.row(i).transpose() - mu;
    const Vector m = v * r;
    for (Eigen::Index j = 0; j < d.size(); ++j) out.kl += 0.5 * (m(j) * m(j) + d(j) - 1.0 - std::log(d(j)));
    out.recon += -0.5 * n * std::log(2.0 * std::numbers::pi * s2) - 0.5 * ((r - w * m).squaredNorm() + trace_term) / s2;
  }
  return out;
}

// Central differences of f at x.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double rel_step = 1e-6) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * (1.0 + std::abs(x(i)));
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

// KL(N(m, D) || N(0, 1)) by composite Simpson quadrature of q log(q / p).
inline double kl_quadrature(double m, double d, int intervals = 20000) {
  const double sd = std::sqrt(d);
  const double lo = m - 14.0 * sd;
  const double hi = m + 14.0 * sd;
  const double h = (hi - lo) / intervals;
  const auto integrand = [&](double z) {
    const double log_q = -0.5 * std::log(2.0 * std::numbers::pi * d) - 0.5 * (z - m) * (z - m) / d;
    const double log_p = -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * z * z;
    return std::exp(log_q) * (log_q - log_p);
  };
  double sum = integrand(lo) + integrand(hi);
  for (int i = 1; i < intervals; ++i) sum += integrand(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

// Posterior mean of z given x by self-normalized importance sampling with the
// prior as proposal.
inline Vector importance_posterior_mean(const Matrix& w, const Vector& mu, double s2, const Vector& x,
                                        int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index k = w.cols();
  std::vector<Vector> zs;
  std::vector<double> logw;
  for (int s = 0; s < samples; ++s) {
    Vector z(k);
    for (Eigen::Index j = 0; j < k; ++j) z(j) = normal(rng);
    logw.push_back(-0.5 * (x - mu - w * z).squaredNorm() / s2);
    zs.push_back(std::move(z));
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  Vector mean = Vector::Zero(k);
  double total = 0.0;
  for (std::size_t s = 0; s < zs.size(); ++s) {
    const double weight = std::exp(logw[s] - top);
    mean += weight * zs[s];
    total += weight;
  }
  return mean / total;
}

// Writes an unsigned-byte IDX file with the given dimensions.
inline void write_idx(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims,
                      const std::vector<unsigned char>& payload) {
  std::ofstream out(path, std::ios::binary);
  const unsigned char magic[4] = {0, 0, 0x08, static_cast<unsigned char>(dims.size())};
  out.write(reinterpret_cast<const char*>(magic), 4);
  for (auto d : dims) {
    const unsigned char be[4] = {static_cast<unsigned char>(d >> 24), static_cast<unsigned char>(d >> 16),
                                 static_cast<unsigned char>(d >> 8), static_cast<unsigned char>(d)};
    out.write(reinterpret_cast<const char*>(be), 4);
  }
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

// Data with zero mean and covariance exactly diag(variances): rows
// +/- sqrt(n v_j) e_j.
inline Matrix axis_aligned_data(const std::vector<double>& variances) {
  const auto n = static_cast<Eigen::Index>(variances.size());
  Matrix x = Matrix::Zero(2 * n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double a = std::sqrt(static_cast<double>(n) * variances[static_cast<std::size_t>(j)]);
    x(2 * j, j) = a;
    x(2 * j + 1, j) = -a;
  }
  return x;
}

}  // namespace oracle
