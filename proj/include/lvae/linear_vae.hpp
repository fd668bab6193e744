#pragma once

// Linear VAE
//   p(x | z) = N(W z + mu, s2 I),   q(z | x) = N(V (x - mu), diag(D)),   p(z) = N(0, I)
//
// All ELBO quantities are dataset totals. Sums of quadratic forms over the data
// go through the second moment about mu:  sum_i e_i^T A e_i = N tr(A S~).
//
// Gradients of F = -beta * B + C (beta = 1 gives the ELBO):
//   dD  = (N/2) (beta / D - beta - diag(W^T W) / s2)
//   dV  = (N/s2) (W^T - (W^T W + beta s2 I) V) S~
//   dW  = (N/s2) (S~ V^T - W diag(D) - W V S~ V^T)
//   ds2 = Q / (2 s2^2) - N n / (2 s2),
//         Q = N [sum_j D_j |w_j|^2 + tr(V^T W^T W V S~) - 2 tr(W V S~) + tr S~]
//   dmu = -N P (xbar - mu),
//         P = -beta V^T V + (W V + V^T W^T - V^T W^T W V - I) / s2

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"
#include "lvae/linalg.hpp"
#include "lvae/ppca.hpp"

namespace lvae {

struct LinearVae {
  Matrix decoder;    // W, n x k
  Matrix encoder;    // V, k x n
  Vector variances;  // D, k (diagonal of the global variational covariance)
  Vector mean;       // mu, n
  double noise = 1.0;

  Eigen::Index ambient_dim() const noexcept { return decoder.rows(); }
  Eigen::Index latent_dim() const noexcept { return decoder.cols(); }

  PpcaModel ppca() const { return PpcaModel{decoder, mean, noise}; }

  void validate() const {
    const Eigen::Index n = decoder.rows();
    const Eigen::Index k = decoder.cols();
    if (encoder.rows() != k || encoder.cols() != n || variances.size() != k || mean.size() != n) {
      throw ParameterError("LinearVae: inconsistent shapes");
    }
    if (!(noise > 0.0) || !std::isfinite(noise)) throw ParameterError("LinearVae: noise variance must be > 0");
    if (k > 0 && !(variances.minCoeff() > 0.0)) throw ParameterError("LinearVae: variational variances must be > 0");
    if (!decoder.allFinite() || !encoder.allFinite() || !variances.allFinite() || !mean.allFinite()) {
      throw ParameterError("LinearVae: entries must be finite");
    }
  }
};

struct ElboBreakdown {
  double term_a = 0.0;  // KL(q(z|x) || p(z|x)), posterior gap
  double term_b = 0.0;  // KL(q(z|x) || p(z))
  double term_c = 0.0;  // E_q[log p(x|z)]
  double elbo = 0.0;    // -B + C
  double log_marginal = 0.0;
};

struct VaeGradients {
  Matrix decoder;
  Matrix encoder;
  Vector variances;
  Vector mean;
  double noise = 0.0;
};

struct VariationalParams {
  Matrix encoder;
  Vector variances;
};

namespace detail {

struct ElboTerms {
  double term_b = 0.0;
  double term_c = 0.0;
};

inline void check_dims(const LinearVae& vae, const DataMatrix& data) {
  vae.validate();
  if (vae.ambient_dim() != data.cols()) throw ParameterError("linear VAE: data dimension mismatch");
}

inline ElboTerms elbo_terms(const LinearVae& vae, const Matrix& moment, double count) {
  const Matrix& w = vae.decoder;
  const Matrix& v = vae.encoder;
  const Vector& d = vae.variances;
  const double k = static_cast<double>(vae.latent_dim());
  const double n = static_cast<double>(vae.ambient_dim());
  const double s2 = vae.noise;

  const Matrix vs = v * moment;  // k x n
  const double tr_vtv_s = (vs.array() * v.array()).sum();
  ElboTerms t;
  t.term_b = 0.5 * count * (-d.array().log().sum() + tr_vtv_s + d.sum() - k);

  const Matrix wv = w * v;
  const double tr_dwtw = (w.colwise().squaredNorm().transpose().array() * d.array()).sum();
  const double tr_recon = ((wv * moment).array() * wv.array()).sum();  // tr(V^T W^T W V S~)
  const double tr_cross = (wv.array() * moment.array()).sum();         // tr(W V S~), S~ symmetric
  const double residual = tr_dwtw + tr_recon - 2.0 * tr_cross + moment.trace();
  t.term_c = -0.5 * count * residual / s2 - 0.5 * count * n * std::log(2.0 * std::numbers::pi * s2);
  return t;
}

}  // namespace detail

inline ElboBreakdown analytic_elbo(const LinearVae& vae, const DataMatrix& data) {
  detail::check_dims(vae, data);
  const auto t = detail::elbo_terms(vae, data.second_moment(vae.mean), data.count());
  ElboBreakdown out;
  out.term_b = t.term_b;
  out.term_c = t.term_c;
  out.elbo = -t.term_b + t.term_c;
  out.log_marginal = log_marginal(vae.ppca(), data);
  out.term_a = out.log_marginal - out.elbo;
  return out;
}

// -beta * B + C, the quantity training maximizes.
inline double weighted_objective(const LinearVae& vae, const DataMatrix& data, double beta) {
  detail::check_dims(vae, data);
  const auto t = detail::elbo_terms(vae, data.second_moment(vae.mean), data.count());
  return -beta * t.term_b + t.term_c;
}

inline VaeGradients analytic_gradients(const LinearVae& vae, const DataMatrix& data, bool learn_sigma,
                                       bool learn_mu, double beta = 1.0) {
  detail::check_dims(vae, data);
  const Matrix& w = vae.decoder;
  const Matrix& v = vae.encoder;
  const Vector& d = vae.variances;
  const double s2 = vae.noise;
  const double count = data.count();
  const Eigen::Index n = w.rows();
  const Eigen::Index k = w.cols();
  const Matrix moment = data.second_moment(vae.mean);

  const Matrix wtw = w.transpose() * w;
  const Matrix vs = v * moment;  // V S~
  VaeGradients g;
  g.variances = 0.5 * count * (beta * d.array().inverse() - beta - wtw.diagonal().array() / s2).matrix();
  g.encoder = (count / s2) * (w.transpose() * moment - (wtw + beta * s2 * Matrix::Identity(k, k)) * vs);
  g.decoder = (count / s2) * (vs.transpose() - w * d.asDiagonal() - w * (vs * v.transpose()));

  if (learn_sigma) {
    const Matrix wv = w * v;
    const double residual = (wtw.diagonal().array() * d.array()).sum() + ((wv * moment).array() * wv.array()).sum() -
                            2.0 * (wv.array() * moment.array()).sum() + moment.trace();
    g.noise = 0.5 * count * residual / (s2 * s2) - 0.5 * count * static_cast<double>(n) / s2;
  } else {
    g.noise = 0.0;
  }

  if (learn_mu) {
    const Matrix wv = w * v;
    const Matrix p = -beta * v.transpose() * v +
                     (wv + wv.transpose() - wv.transpose() * wv - Matrix::Identity(n, n)) / s2;
    g.mean = -count * p * (data.mean() - vae.mean);
  } else {
    g.mean = Vector::Zero(n);
  }
  return g;
}

namespace detail {

// Standard normal draws for one stochastic evaluation, ordered sample-major,
// then datum, then latent dimension.
inline std::vector<Matrix> draw_noise(std::mt19937_64& rng, Eigen::Index samples, Eigen::Index rows,
                                      Eigen::Index k) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> draws(static_cast<std::size_t>(samples), Matrix(rows, k));
  for (auto& eps : draws) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) eps(i, j) = normal(rng);
    }
  }
  return draws;
}

struct StochasticEstimate {
  double objective = 0.0;  // -beta * B + mean-over-samples reconstruction
  VaeGradients gradients;
};

// Reparameterized estimate z = V e + sqrt(D) * eps with the prior KL in closed
// form. Gradients are exact for the given noise draws.
inline StochasticEstimate stochastic_estimate(const LinearVae& vae, const DataMatrix& data,
                                              const std::vector<Matrix>& draws, double beta, bool learn_sigma,
                                              bool learn_mu, bool with_gradients) {
  const Matrix& w = vae.decoder;
  const Matrix& v = vae.encoder;
  const double s2 = vae.noise;
  const double count = data.count();
  const Eigen::Index n = w.rows();
  const Eigen::Index k = w.cols();
  const double samples = static_cast<double>(draws.size());
  const Matrix centered = data.values().rowwise() - vae.mean.transpose();  // N x n
  const Vector std_dev = vae.variances.array().sqrt().matrix();
  const Matrix moment = data.second_moment(vae.mean);

  const auto terms = elbo_terms(vae, moment, count);
  StochasticEstimate est;
  double squared_residual = 0.0;

  Matrix d_decoder = Matrix::Zero(n, k);
  Matrix d_encoder = Matrix::Zero(k, n);
  Vector d_std = Vector::Zero(k);
  Vector residual_sum = Vector::Zero(n);
  const Matrix mean_codes = centered * v.transpose();  // N x k
  for (const auto& eps : draws) {
    const Matrix z = mean_codes + eps * std_dev.asDiagonal();
    const Matrix r = centered - z * w.transpose();  // N x n
    squared_residual += r.squaredNorm();
    if (with_gradients) {
      const Matrix gz = r * w / s2;  // N x k
      d_decoder += r.transpose() * z / s2;
      d_encoder += gz.transpose() * centered;
      d_std += (gz.array() * eps.array()).colwise().sum().transpose().matrix();
      if (learn_mu) residual_sum += r.colwise().sum().transpose();
    }
  }
  const double recon =
      -0.5 * squared_residual / (s2 * samples) - 0.5 * count * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * s2);
  est.objective = -beta * terms.term_b + recon;
  if (!with_gradients) return est;

  auto& g = est.gradients;
  g.decoder = d_decoder / samples;
  g.encoder = d_encoder / samples - beta * count * v * moment;
  g.variances = ((d_std / samples).array() / (2.0 * std_dev.array()) +
                 0.5 * count * beta * (vae.variances.array().inverse() - 1.0))
                    .matrix();
  g.noise = learn_sigma ? 0.5 * squared_residual / (samples * s2 * s2) - 0.5 * count * static_cast<double>(n) / s2 : 0.0;
  if (learn_mu) {
    const Matrix wv = w * v;
    g.mean = (Matrix::Identity(n, n) - wv).transpose() * (residual_sum / samples) / s2 +
             beta * count * v.transpose() * v * (data.mean() - vae.mean);
  } else {
    g.mean = Vector::Zero(n);
  }
  return est;
}

}  // namespace detail

// Monte Carlo ELBO: closed-form prior KL plus the average over
// `samples_per_datum` reparameterized draws of log N(x; W z + mu, s2 I).
inline double stochastic_elbo(const LinearVae& vae, const DataMatrix& data, Eigen::Index samples_per_datum,
                              std::uint64_t seed) {
  detail::check_dims(vae, data);
  if (samples_per_datum < 1) throw ParameterError("stochastic_elbo: samples_per_datum must be >= 1");
  std::mt19937_64 rng(seed);
  const auto draws = detail::draw_noise(rng, samples_per_datum, data.rows(), vae.latent_dim());
  return detail::stochastic_estimate(vae, data, draws, 1.0, false, false, false).objective;
}

// Encoder-optimal variational parameters for a fixed decoder:
//   V* = (W^T W + s2 I)^{-1} W^T,   D*_j = s2 / (|w_j|^2 + s2).
inline VariationalParams optimal_variational(const Matrix& decoder, double noise) {
  if (!(noise > 0.0)) throw ParameterError("optimal_variational: noise variance must be > 0");
  const Matrix m = noise_gram(decoder, noise);
  VariationalParams out;
  out.encoder = m.llt().solve(decoder.transpose());
  out.variances = (noise / (decoder.colwise().squaredNorm().array() + noise)).transpose().matrix();
  return out;
}

inline LinearVae encoder_optimal_vae(const Matrix& decoder, const Vector& mean, double noise) {
  auto var = optimal_variational(decoder, noise);
  return LinearVae{decoder, std::move(var.encoder), std::move(var.variances), mean, noise};
}

// Per-datum KL(q || p(z|x)) at encoder-optimal (V*, D*):
//   (log det diag(M) - log det M) / 2,   M = W^T W + s2 I.
inline double posterior_gap_at_stationary(const Matrix& decoder, double noise) {
  if (!(noise > 0.0)) throw ParameterError("posterior_gap_at_stationary: noise variance must be > 0");
  const Matrix m = noise_gram(decoder, noise);
  return 0.5 * (m.diagonal().array().log().sum() - log_det_spd(m));
}

}  // namespace lvae
