#pragma once

// Closed-form probabilistic PCA: maximum-likelihood fit, exact log marginal
// likelihood and posterior, stationary points built from arbitrary eigenvector
// subsets, and the first-order stability test for perturbing a column of W.
//
// Every likelihood evaluation goes through the k x k matrix M = W^T W + s2 I:
//   log det C  = (n - k) log s2 + log det M
//   C^{-1}     = (I - W M^{-1} W^T) / s2
//   C^{-1} W   = W M^{-1}

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"
#include "lvae/linalg.hpp"

namespace lvae {

struct PpcaModel {
  Matrix weights;  // n x k
  Vector mean;     // n
  double noise = 1.0;

  Eigen::Index ambient_dim() const noexcept { return weights.rows(); }
  Eigen::Index latent_dim() const noexcept { return weights.cols(); }

  void validate() const {
    if (!(noise > 0.0) || !std::isfinite(noise)) throw ParameterError("PpcaModel: noise variance must be > 0");
    if (mean.size() != weights.rows()) throw ParameterError("PpcaModel: mean and weights disagree on n");
    if (!weights.allFinite() || !mean.allFinite()) throw ParameterError("PpcaModel: entries must be finite");
  }
};

// A fitted or constructed model plus a flag raised when some requested column
// could not be materialized (its eigenvalue did not exceed the noise) and was
// left at zero.
struct PpcaFit {
  PpcaModel model;
  bool zero_column_warning = false;
};

struct GaussianPosterior {
  Vector mean;
  Matrix covariance;
};

struct StationarySpec {
  std::vector<Eigen::Index> retained;  // sorted, distinct eigenvalue indices (0-based)
  double noise = 1.0;
  Eigen::Index latent_dim = 1;
};

enum class Stability { stable, unstable, marginal };

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::stable:
      return "stable";
    case Stability::unstable:
      return "unstable";
    case Stability::marginal:
      return "marginal";
  }
  return "?";
}

inline Matrix noise_gram(const Matrix& weights, double noise) {
  return weights.transpose() * weights + noise * Matrix::Identity(weights.cols(), weights.cols());
}

inline PpcaFit fit_mle(const DataMatrix& data, const EigenSpectrum& spectrum, Eigen::Index k) {
  const Eigen::Index n = data.cols();
  if (k < 1 || k >= n) throw ParameterError("fit_mle: need 1 <= k < n");
  if (spectrum.size() != n) throw ParameterError("fit_mle: spectrum does not match data dimension");
  const double noise = spectrum.eigenvalues.tail(n - k).sum() / static_cast<double>(n - k);
  if (!(noise > 0.0)) throw NumericError("fit_mle: discarded eigenvalues have no variance");

  PpcaFit fit{PpcaModel{Matrix::Zero(n, k), data.mean(), noise}, false};
  for (Eigen::Index j = 0; j < k; ++j) {
    const double excess = spectrum.eigenvalues(j) - noise;
    if (excess > 0.0) {
      fit.model.weights.col(j) = spectrum.eigenvectors.col(j) * std::sqrt(excess);
    } else {
      fit.zero_column_warning = true;
    }
  }
  return fit;
}

inline PpcaFit fit_mle(const DataMatrix& data, Eigen::Index k) {
  if (k < 1 || k >= data.cols()) throw ParameterError("fit_mle: need 1 <= k < n");
  return fit_mle(data, eigendecompose(data), k);
}

// Total log marginal likelihood sum_i log N(x_i; mu, W W^T + s2 I).
inline double log_marginal(const PpcaModel& model, const DataMatrix& data) {
  if (!(model.noise > 0.0)) throw ParameterError("log_marginal: noise variance must be > 0");
  if (model.ambient_dim() != data.cols()) throw ParameterError("log_marginal: dimension mismatch");
  const double n = static_cast<double>(data.cols());
  const double k = static_cast<double>(model.latent_dim());
  const Matrix moment = data.second_moment(model.mean);
  const Matrix gram = model.weights.transpose() * moment * model.weights;
  const Matrix m = noise_gram(model.weights, model.noise);
  const Eigen::LLT<Matrix> chol(m);
  const double quad = (moment.trace() - (chol.solve(gram)).trace()) / model.noise;
  const double log_det_c = (n - k) * std::log(model.noise) + log_det_spd(m);
  return -0.5 * data.count() * (n * std::log(2.0 * std::numbers::pi) + log_det_c + quad);
}

struct LogMarginalGradients {
  Matrix weights;
  Vector mean;
  double noise = 0.0;
};

// Gradient of the total log marginal likelihood:
//   dW  = N (C^{-1} S~ C^{-1} W - C^{-1} W)
//   ds2 = -(N/2) (tr C^{-1} - tr(S~ C^{-2}))
//   dmu = N C^{-1} (xbar - mu)
inline LogMarginalGradients log_marginal_gradients(const PpcaModel& model, const DataMatrix& data) {
  if (!(model.noise > 0.0)) throw ParameterError("log_marginal_gradients: noise variance must be > 0");
  const Matrix& w = model.weights;
  const double s2 = model.noise;
  const double count = data.count();
  const Eigen::Index n = w.rows();
  const Eigen::Index k = w.cols();
  const Matrix moment = data.second_moment(model.mean);
  const Matrix m_inv = noise_gram(w, s2).llt().solve(Matrix::Identity(k, k));
  const Matrix c_inv_w = w * m_inv;
  const auto apply_c_inv = [&](const Matrix& x) -> Matrix { return (x - w * (m_inv * (w.transpose() * x))) / s2; };

  LogMarginalGradients g;
  g.weights = count * (apply_c_inv(moment * c_inv_w) - c_inv_w);

  const Matrix gram_s = w.transpose() * moment * w;
  const Matrix gram_w = w.transpose() * w;
  const double tr_c_inv = static_cast<double>(n - k) / s2 + m_inv.trace();
  const double tr_sp2 =
      moment.trace() - 2.0 * (m_inv * gram_s).trace() + (m_inv * gram_w * m_inv * gram_s).trace();
  g.noise = -0.5 * count * (tr_c_inv - tr_sp2 / (s2 * s2));
  g.mean = count * apply_c_inv(data.mean() - model.mean);
  return g;
}

// Exact posterior p(z | x) = N(M^{-1} W^T (x - mu), s2 M^{-1}).
inline GaussianPosterior posterior(const PpcaModel& model, const Vector& x) {
  model.validate();
  if (x.size() != model.ambient_dim()) throw ParameterError("posterior: dimension mismatch");
  const Eigen::Index k = model.latent_dim();
  const Matrix m_inv = noise_gram(model.weights, model.noise).llt().solve(Matrix::Identity(k, k));
  return GaussianPosterior{m_inv * model.weights.transpose() * (x - model.mean),
                           symmetrized(model.noise * m_inv)};
}

namespace detail {

inline void validate_stationary_spec(const EigenSpectrum& spectrum, const StationarySpec& spec) {
  if (spec.latent_dim < 1) throw ParameterError("StationarySpec: latent_dim must be >= 1");
  if (!(spec.noise > 0.0)) throw ParameterError("StationarySpec: noise variance must be > 0");
  if (static_cast<Eigen::Index>(spec.retained.size()) > spec.latent_dim) {
    throw ParameterError("StationarySpec: more retained directions than latent dimensions");
  }
  for (std::size_t c = 0; c < spec.retained.size(); ++c) {
    const Eigen::Index j = spec.retained[c];
    if (j < 0 || j >= spectrum.size()) throw BoundsError("StationarySpec: retained index out of range");
    if (c > 0 && j <= spec.retained[c - 1]) {
      throw ParameterError("StationarySpec: retained indices must be sorted and distinct");
    }
  }
}

}  // namespace detail

// W = [u_j sqrt(lambda_j - s2) for retained j, then zero columns].
inline PpcaFit stationary_point(const EigenSpectrum& spectrum, const StationarySpec& spec, const Vector& mean) {
  detail::validate_stationary_spec(spectrum, spec);
  if (mean.size() != spectrum.size()) throw ParameterError("stationary_point: mean dimension mismatch");
  PpcaFit fit{PpcaModel{Matrix::Zero(spectrum.size(), spec.latent_dim), mean, spec.noise}, false};
  for (std::size_t c = 0; c < spec.retained.size(); ++c) {
    const Eigen::Index j = spec.retained[c];
    const double excess = spectrum.eigenvalues(j) - spec.noise;
    if (excess > 0.0) {
      fit.model.weights.col(static_cast<Eigen::Index>(c)) = spectrum.eigenvectors.col(j) * std::sqrt(excess);
    } else {
      fit.zero_column_warning = true;
    }
  }
  return fit;
}

// Effective eigenvalue k_i carried by a column: lambda of its retained
// direction when the column is nonzero, otherwise the noise variance.
inline double column_scale(const EigenSpectrum& spectrum, const StationarySpec& spec, Eigen::Index column) {
  if (column < static_cast<Eigen::Index>(spec.retained.size())) {
    const double lambda = spectrum.eigenvalues(spec.retained[static_cast<std::size_t>(column)]);
    if (lambda > spec.noise) return lambda;
  }
  return spec.noise;
}

// Sign of lambda_j / k_i - 1 for the perturbation w_i += eps u_j.
inline Stability stability(const EigenSpectrum& spectrum, const StationarySpec& spec, Eigen::Index column,
                           Eigen::Index direction) {
  detail::validate_stationary_spec(spectrum, spec);
  if (column < 0 || column >= spec.latent_dim) throw BoundsError("stability: column out of range");
  if (direction < 0 || direction >= spectrum.size()) throw BoundsError("stability: direction out of range");
  for (std::size_t c = 0; c < spec.retained.size(); ++c) {
    if (spec.retained[c] == direction && static_cast<Eigen::Index>(c) != column &&
        spectrum.eigenvalues(direction) > spec.noise) {
      throw ParameterError("stability: direction is already carried by another nonzero column");
    }
  }
  const double k_i = column_scale(spectrum, spec, column);
  const double lambda = spectrum.eigenvalues(direction);
  if (std::abs(lambda - k_i) <= 1e-12 * k_i) return Stability::marginal;
  return lambda > k_i ? Stability::unstable : Stability::stable;
}

}  // namespace lvae
