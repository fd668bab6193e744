#pragma once

// Identifiability of the linear VAE: column-norm ordering of the decoder, the
// diagonal rescaling that leaves the decoder output distribution unchanged,
// and the rotation ascent that drives a non-orthogonal decoder toward
// orthogonal columns at constant log marginal likelihood.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"
#include "lvae/linalg.hpp"
#include "lvae/linear_vae.hpp"
#include "lvae/ppca.hpp"

namespace lvae {

struct ComponentEstimate {
  Eigen::Index column = 0;
  double singular_value = 0.0;  // |w_j|
};

// Decoder columns by descending squared norm; ties keep the original order.
inline std::vector<ComponentEstimate> recover_components(const LinearVae& vae) {
  const Vector norms = vae.decoder.colwise().squaredNorm().transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(norms.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });
  std::vector<ComponentEstimate> out;
  out.reserve(order.size());
  for (auto j : order) out.push_back({j, std::sqrt(norms(j))});
  return out;
}

// (W, V, D) <- (W A, A^{-1} V, A^{-1} D A^{-1}) with A = diag(scale).
inline LinearVae identifiability_transform(const LinearVae& vae, const Vector& scale) {
  if (scale.size() != vae.latent_dim()) throw ParameterError("identifiability_transform: scale has wrong length");
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (scale(j) == 0.0 || !std::isfinite(scale(j))) {
      throw ParameterError("identifiability_transform: scale entries must be nonzero");
    }
  }
  LinearVae out = vae;
  out.decoder = vae.decoder * scale.asDiagonal();
  out.encoder = scale.cwiseInverse().asDiagonal() * vae.encoder;
  out.variances = (vae.variances.array() / scale.array().square()).matrix();
  return out;
}

struct RotationStep {
  double elbo = 0.0;          // encoder-optimal ELBO (dataset total)
  double log_marginal = 0.0;  // dataset total
  double gap = 0.0;           // per-datum posterior gap
  bool fallback = false;      // step used the steepest-descent generator
};

namespace detail {

// Right singular vectors of W, column-permuted and sign-flipped to be as close
// to the identity as a greedy assignment allows, with det = +1.
inline Matrix orthogonalizing_rotation(const Matrix& w) {
  const Eigen::Index k = w.cols();
  Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeThinV);
  const Matrix& y = svd.matrixV();
  Matrix r = Matrix::Zero(k, k);
  std::vector<bool> row_used(static_cast<std::size_t>(k), false);
  std::vector<bool> col_used(static_cast<std::size_t>(k), false);
  for (Eigen::Index step = 0; step < k; ++step) {
    double best = -1.0;
    Eigen::Index bi = 0;
    Eigen::Index bj = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (row_used[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (col_used[static_cast<std::size_t>(j)]) continue;
        if (std::abs(y(i, j)) > best) {
          best = std::abs(y(i, j));
          bi = i;
          bj = j;
        }
      }
    }
    row_used[static_cast<std::size_t>(bi)] = true;
    col_used[static_cast<std::size_t>(bj)] = true;
    r.col(bi) = y(bi, bj) < 0.0 ? Vector(-y.col(bj)) : Vector(y.col(bj));
  }
  if (r.determinant() < 0.0) {
    Eigen::Index weakest = 0;
    r.diagonal().cwiseAbs().minCoeff(&weakest);
    r.col(weakest) = -r.col(weakest);
  }
  return r;
}

inline Eigen::Index power_of_two_divisor(double max_entry) {
  Eigen::Index divisor = 1;
  while (max_entry / static_cast<double>(divisor) >= 0.05) divisor *= 2;
  return divisor;
}

inline RotationStep rotation_record(const Matrix& w, double noise, const DataMatrix& data, bool fallback) {
  const auto vae = encoder_optimal_vae(w, data.mean(), noise);
  const auto b = analytic_elbo(vae, data);
  return RotationStep{b.elbo, b.log_marginal, posterior_gap_at_stationary(w, noise), fallback};
}

}  // namespace detail

// Applies W <- W R_eps repeatedly, R_eps = exp(L / n(eps)) where L = log R is
// the generator of the rotation that orthogonalizes the current decoder and
// n(eps) is the smallest power of two with max|L| / n(eps) < 0.05. A step that
// would not reduce the posterior gap is replaced by a rotation along the
// steepest-descent generator of the gap (same entry bound, halved until it
// helps). (V, D) are the encoder-optimal values at every step.
//
// The first record is the starting decoder. The trajectory is empty when the
// decoder already has orthogonal columns.
inline std::vector<RotationStep> rotation_ascent_check(const Matrix& decoder, double noise, const DataMatrix& data,
                                                       Eigen::Index steps) {
  if (!(noise > 0.0)) throw ParameterError("rotation_ascent_check: noise variance must be > 0");
  if (decoder.rows() != data.cols()) throw ParameterError("rotation_ascent_check: dimension mismatch");
  std::vector<RotationStep> trajectory;
  constexpr double kOrthogonal = 1e-10;
  if (posterior_gap_at_stationary(decoder, noise) <= kOrthogonal) return trajectory;

  Matrix w = decoder;
  trajectory.push_back(detail::rotation_record(w, noise, data, false));
  for (Eigen::Index s = 0; s < steps; ++s) {
    const double gap = posterior_gap_at_stationary(w, noise);
    if (gap <= 1e-12) break;

    const Matrix generator = rotation_log(detail::orthogonalizing_rotation(w));
    const double max_entry = generator.cwiseAbs().maxCoeff();
    Matrix candidate = w;
    bool accepted = false;
    if (max_entry > 0.0) {
      const auto divisor = detail::power_of_two_divisor(max_entry);
      candidate = w * expm(generator / static_cast<double>(divisor));
      accepted = posterior_gap_at_stationary(candidate, noise) < gap;
    }

    bool fallback = false;
    if (!accepted) {
      const Matrix gram = w.transpose() * w;
      const Vector diag = gram.diagonal().array() + noise;
      const Matrix h = diag.cwiseInverse().asDiagonal() * gram;
      Matrix descent = 0.5 * (h - h.transpose());
      const double scale = descent.cwiseAbs().maxCoeff();
      if (scale == 0.0) break;
      descent *= 0.05 / scale;
      for (int halving = 0; halving < 40 && !accepted; ++halving, descent *= 0.5) {
        candidate = w * expm(descent);
        accepted = posterior_gap_at_stationary(candidate, noise) < gap;
      }
      if (!accepted) break;
      fallback = true;
    }
    w = candidate;
    trajectory.push_back(detail::rotation_record(w, noise, data, fallback));
  }
  return trajectory;
}

}  // namespace lvae
