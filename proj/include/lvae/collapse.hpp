#pragma once

// (epsilon, delta)-collapse: latent dimension i is collapsed when at least a
// (1 - delta) fraction of the data induce KL(q(z_i | x) || p(z_i)) < epsilon.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "lvae/dataset.hpp"
#include "lvae/errors.hpp"
#include "lvae/linear_vae.hpp"

namespace lvae {

inline const std::vector<double>& default_epsilons() {
  static const std::vector<double> eps{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  return eps;
}

constexpr double kDefaultDelta = 0.01;

struct CollapseReport {
  std::vector<double> epsilons;
  double delta = kDefaultDelta;
  Vector per_dim_quantiles;              // (1 - delta) order statistic of per-datum KL, per dimension
  std::vector<double> collapsed_fraction;  // one per epsilon
  Vector per_dim_mean_kl;
};

// 0.5 (m_i^2 + D_i - 1 - log D_i) with m = V (x - mu).
inline Vector per_dim_kl(const LinearVae& vae, const Vector& x) {
  if (x.size() != vae.ambient_dim()) throw ParameterError("per_dim_kl: dimension mismatch");
  if (vae.latent_dim() > 0 && !(vae.variances.minCoeff() > 0.0)) {
    throw ParameterError("per_dim_kl: variational variances must be > 0");
  }
  const Vector m = vae.encoder * (x - vae.mean);
  const auto& d = vae.variances.array();
  return (0.5 * (m.array().square() + d - 1.0 - d.log())).matrix();
}

inline CollapseReport collapse_report(const LinearVae& vae, const DataMatrix& data,
                                      const std::vector<double>& epsilons = default_epsilons(),
                                      double delta = kDefaultDelta) {
  if (epsilons.empty()) throw ParameterError("collapse_report: at least one epsilon is required");
  for (double e : epsilons) {
    if (!(e > 0.0)) throw ParameterError("collapse_report: epsilons must be positive");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("collapse_report: delta must lie in (0, 1)");
  vae.validate();
  if (vae.ambient_dim() != data.cols()) throw ParameterError("collapse_report: dimension mismatch");

  const Eigen::Index k = vae.latent_dim();
  const Eigen::Index count = data.rows();
  const Matrix codes = (data.values().rowwise() - vae.mean.transpose()) * vae.encoder.transpose();  // N x k
  const Eigen::ArrayXd variance_part = vae.variances.array() - 1.0 - vae.variances.array().log();

  auto threshold = static_cast<Eigen::Index>(std::ceil((1.0 - delta) * static_cast<double>(count)));
  threshold = std::clamp<Eigen::Index>(threshold, 1, count);

  CollapseReport report;
  report.epsilons = epsilons;
  report.delta = delta;
  report.per_dim_quantiles.resize(k);
  report.per_dim_mean_kl.resize(k);
  std::vector<double> kls(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < k; ++i) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < count; ++r) {
      const double kl = 0.5 * (codes(r, i) * codes(r, i) + variance_part(i));
      kls[static_cast<std::size_t>(r)] = kl;
      total += kl;
    }
    report.per_dim_mean_kl(i) = total / static_cast<double>(count);
    std::sort(kls.begin(), kls.end());
    report.per_dim_quantiles(i) = kls[static_cast<std::size_t>(threshold - 1)];
  }
  for (double e : epsilons) {
    Eigen::Index collapsed = 0;
    for (Eigen::Index i = 0; i < k; ++i) collapsed += report.per_dim_quantiles(i) < e ? 1 : 0;
    report.collapsed_fraction.push_back(k == 0 ? 0.0 : static_cast<double>(collapsed) / static_cast<double>(k));
  }
  return report;
}

}  // namespace lvae
