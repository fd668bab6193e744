#pragma once

// Two-dimensional slices of the pPCA objective around a model: two columns of
// W are perturbed along two eigenvectors of the sample covariance.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"
#include "lvae/linear_vae.hpp"
#include "lvae/parallel.hpp"
#include "lvae/ppca.hpp"

namespace lvae {

enum class LandscapeObjective { log_marginal, elbo };

inline const char* to_string(LandscapeObjective o) {
  return o == LandscapeObjective::log_marginal ? "log_marginal" : "elbo";
}

struct SliceAxis {
  Eigen::Index column = 0;     // perturbed column of W
  Eigen::Index direction = 0;  // eigenvector index (0-based, descending eigenvalues)
  double eps_min = 0.0;
  double eps_max = 0.0;
};

struct LandscapeSlice {
  Matrix grid;  // grid(a, b): axis1 offset a, axis2 offset b
  SliceAxis axis1;
  SliceAxis axis2;
  LandscapeObjective objective = LandscapeObjective::log_marginal;

  Eigen::Index resolution() const noexcept { return grid.rows(); }

  double offset(const SliceAxis& axis, Eigen::Index i) const {
    const auto g = static_cast<double>(grid.rows() - 1);
    return axis.eps_min + (axis.eps_max - axis.eps_min) * static_cast<double>(i) / g;
  }
};

constexpr Eigen::Index kDefaultResolution = 41;

// grid(a, b) = objective with w_col1 += eps_a u_dir1 and w_col2 += eps_b u_dir2,
// eps spanning [-extent, extent]. The "elbo" objective is the encoder-optimal
// ELBO, i.e. log marginal minus N times the posterior gap.
inline LandscapeSlice landscape_slice(const PpcaModel& model, const DataMatrix& data, const EigenSpectrum& spectrum,
                                      Eigen::Index col1, Eigen::Index dir1, Eigen::Index col2, Eigen::Index dir2,
                                      double extent, Eigen::Index resolution = kDefaultResolution,
                                      LandscapeObjective objective = LandscapeObjective::log_marginal) {
  model.validate();
  const Eigen::Index k = model.latent_dim();
  if (col1 < 0 || col1 >= k || col2 < 0 || col2 >= k) throw BoundsError("landscape_slice: column out of range");
  if (dir1 < 0 || dir1 >= spectrum.size() || dir2 < 0 || dir2 >= spectrum.size()) {
    throw BoundsError("landscape_slice: direction out of range");
  }
  if (col1 == col2) throw ParameterError("landscape_slice: columns must differ");
  if (dir1 == dir2) throw ParameterError("landscape_slice: directions must differ");
  if (resolution < 3) throw ParameterError("landscape_slice: resolution must be >= 3");
  if (!(extent >= 0.0)) throw ParameterError("landscape_slice: extent must be >= 0");

  LandscapeSlice slice;
  slice.axis1 = SliceAxis{col1, dir1, -extent, extent};
  slice.axis2 = SliceAxis{col2, dir2, -extent, extent};
  slice.objective = objective;
  slice.grid.resize(resolution, resolution);

  const Vector u1 = spectrum.eigenvectors.col(dir1);
  const Vector u2 = spectrum.eigenvectors.col(dir2);
  const auto cells = static_cast<std::size_t>(resolution * resolution);
  parallel_for(cells, [&](std::size_t cell) {
    const auto a = static_cast<Eigen::Index>(cell) / resolution;
    const auto b = static_cast<Eigen::Index>(cell) % resolution;
    PpcaModel perturbed = model;
    perturbed.weights.col(col1) += slice.offset(slice.axis1, a) * u1;
    perturbed.weights.col(col2) += slice.offset(slice.axis2, b) * u2;
    double value = log_marginal(perturbed, data);
    if (objective == LandscapeObjective::elbo) {
      value -= data.count() * posterior_gap_at_stationary(perturbed.weights, perturbed.noise);
    }
    slice.grid(a, b) = value;
  });
  return slice;
}

}  // namespace lvae
